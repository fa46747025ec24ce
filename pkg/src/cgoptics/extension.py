"""Taylor extension of symbols to complex covectors and the extended mode algebra.

A smooth symbol f(xi) on real nonzero covectors extends to xi + i*eta by its
Taylor polynomial in the imaginary direction,

    f^(n)(xi + i eta) = sum_{|alpha| <= n} i^|alpha| / alpha! d^alpha f(xi) eta^alpha,

which for n = 2 reads f + i <df, eta> - (1/2) <eta, d2f eta>.  Products of
extensions reproduce the extension of the product up to O(|eta|^{n+1}), which
is what makes the extended projectors and eigenvalues of the symbol behave
like genuine spectral data near the real axis.  The construction downstream
only needs n = 2, but the operator is generic over the supplied jet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SeparationFailureError
from .systems import SystemSpec, eigen_decompose


@dataclass(frozen=True)
class ComplexCovector:
    """Covector xi + i*eta with nonzero real part."""

    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, dtype=float)))
        if self.xi.shape != self.eta.shape:
            raise ValueError("xi and eta must have the same shape")
        if np.linalg.norm(self.xi) == 0.0:
            raise ValueError("extension is defined only for nonzero real part")

    @classmethod
    def from_complex(cls, zeta) -> "ComplexCovector":
        zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
        return cls(xi=zeta.real, eta=zeta.imag)

    @property
    def as_complex(self) -> np.ndarray:
        return self.xi + 1j * self.eta


@dataclass(frozen=True)
class ExtendedMode:
    """Extended eigenvalue and projector of one mode at a complex covector."""

    index: int
    eigenvalue: complex
    projector: np.ndarray


def taylor_extend(jets, eta, order: int | None = None):
    """Evaluate the order-n imaginary-direction Taylor extension of a jet.

    ``jets`` is a sequence [f, df, d2f, ...] where df has shape (d, *S) and
    d2f has shape (d, d, *S) for a symbol with value shape S.  Returns a
    complex array of shape S.
    """
    eta = np.asarray(eta, dtype=float)
    if order is None:
        order = len(jets) - 1
    if order < 0 or order >= len(jets):
        raise ValueError("order must index into the supplied jets")
    out = np.asarray(jets[0], dtype=complex).copy()
    if order >= 1:
        out += 1j * np.tensordot(eta, np.asarray(jets[1], dtype=complex), axes=(0, 0))
    if order >= 2:
        hess = np.asarray(jets[2], dtype=complex)
        out -= 0.5 * np.einsum("i,j,ij...->...", eta, eta, hess)
    if order >= 3:
        raise NotImplementedError("jet extension implemented up to order 2")
    return out


def extend_scalar(value, grad, hess, eta) -> complex:
    """Order-2 extension of a scalar symbol: f + i<df,eta> - (1/2)<eta,d2f eta>."""
    return complex(taylor_extend([value, grad, hess], eta, order=2))


def extended_symbol(spec: SystemSpec, t: float, x, zeta: ComplexCovector) -> np.ndarray:
    """The symbol at a complex covector.

    The symbol is linear in the covector, so its extension at any order n >= 1
    is the entire function sum_j A_j zeta_j itself.
    """
    x = np.asarray(x, dtype=float).reshape(spec.d)
    out = np.zeros((spec.N, spec.N), dtype=complex)
    for j in range(spec.d):
        out += np.asarray(spec.coeff_A(t, x, j)).reshape(spec.N, spec.N) * zeta.as_complex[j]
    return out


def extended_modes(
    spec: SystemSpec, t: float, x, zeta: ComplexCovector, decomposition=None
) -> list[ExtendedMode]:
    """All extended modes (eigenvalue, projector) at xi + i*eta, order 2."""
    if decomposition is None:
        decomposition = eigen_decompose(spec, t, x, zeta.xi, order=2)
    out = []
    for l, mode in enumerate(decomposition.modes):
        lam = extend_scalar(mode.eigenvalue, mode.grad, mode.hessian, zeta.eta)
        proj = taylor_extend(
            [mode.projector, mode.proj_grad, mode.proj_hessian], zeta.eta, order=2
        )
        out.append(ExtendedMode(index=l, eigenvalue=lam, projector=proj))
    return out


def extended_mode(
    spec: SystemSpec, t: float, x, zeta: ComplexCovector, l: int, decomposition=None
) -> ExtendedMode:
    """Extended eigenvalue/projector of mode ``l`` at a complex covector."""
    return extended_modes(spec, t, x, zeta, decomposition)[l]


def eikonal_defect(spec: SystemSpec, l: int, dt_phi: complex, dx_phi, t: float, x) -> complex:
    """Residual dt_phi + extended_lambda_l(t, x, dx_phi) of the complex eikonal equation."""
    zeta = ComplexCovector.from_complex(dx_phi)
    mode = extended_mode(spec, t, x, zeta, l)
    return complex(dt_phi) + mode.eigenvalue


@dataclass(frozen=True)
class SeparationBound:
    """Sampled lower bound on |dt_phi + extended_lambda| for a competing mode."""

    mode: int
    bound: float
    s_radius: float


def mode_separation(
    spec: SystemSpec,
    bundle,
    jet,
    l: int,
    s_radius: float | None = None,
    n_s: int = 7,
    t_stride: int = 50,
    shrink: float = 0.7,
    max_shrink: int = 8,
) -> dict[int, SeparationBound]:
    """Lower-bound the eikonal defect of every competing mode inside the tube.

    Samples |s| <= s_radius on the beam chart, evaluates
    |dt_phi + extended_lambda_l'| for each mode l' != l, and shrinks the tube
    until the sampled minimum is positive.  Raises SeparationFailureError if
    no positive bound is found.
    """
    from .phase import eval_phase  # local import; phase builds on this module

    if s_radius is None:
        s_radius = bundle.chart_radius
    d2 = bundle.d2
    n_modes = len(
        eigen_decompose(spec, bundle.t[0], bundle.x[0, 0], bundle.xi[0, 0]).modes
    )
    competitors = [m for m in range(n_modes) if m != l]
    out: dict[int, SeparationBound] = {}
    if not competitors:
        return out

    t_indices = list(range(0, bundle.n_t, max(1, t_stride))) + [bundle.n_t - 1]
    offsets = np.linspace(-1.0, 1.0, n_s)
    if d2 == 1:
        s_dirs = offsets[:, None]
    else:
        grid = np.stack(np.meshgrid(*([offsets] * d2), indexing="ij"), axis=-1)
        s_dirs = grid.reshape(-1, d2)
        s_dirs = s_dirs[np.linalg.norm(s_dirs, axis=-1) <= 1.0]

    for lc in competitors:
        radius = float(s_radius)
        for _ in range(max_shrink):
            worst = np.inf
            for k in t_indices:
                for i in range(bundle.n_r):
                    s = radius * s_dirs
                    X = bundle.chart_points(k, i, s)
                    pv = eval_phase(jet, bundle, bundle.t[k], X)
                    for p in range(X.shape[0]):
                        if not pv.inside[p]:
                            continue
                        defect = eikonal_defect(
                            spec, lc, pv.dt[p], pv.dx[p], bundle.t[k], X[p]
                        )
                        worst = min(worst, abs(defect))
            if np.isfinite(worst) and worst > 0.0:
                out[lc] = SeparationBound(mode=lc, bound=float(worst), s_radius=radius)
                break
            radius *= shrink
        else:
            raise SeparationFailureError(
                f"no positive separation bound for competing mode {lc}"
            )
    return out
