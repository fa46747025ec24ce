"""Complex phase jets along the beam: linear data from rays, curvature from Riccati.

The second-order phase in chart coordinates is

    phi(t, r, s) = phi0(r) + <sigma(t,r), s> + (1/2) <s, Phi(t,r) s>,

where phi0 is the (real) initial phase on the manifold, (rho, sigma) are the
chart components of the ray covector, and the complex symmetric curvature
matrix Phi solves the matrix Riccati equation

    dPhi/dt = -(A + Phi B + B^T Phi + Phi C Phi)

with coefficients read off the chart jet of the mode Hamiltonian.  Im(Phi)
stays symmetric positive definite, which localizes the beam on the tube.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BlowUpError, ConfigError, PositivityLossError
from .numerics import central_time_derivative, grid_derivative
from .rays import RayBundle, SymbolJet, WaveComponent, pullback_jet_path
from .systems import SystemSpec

RICCATI_BLOWUP = 1e8
SYMMETRY_DRIFT_TOL = 1e-12


def riccati_coefficients(
    spec: SystemSpec,
    l: int,
    bundle: RayBundle,
    k: int,
    i: int,
    dsigma_dr: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Riccati coefficient matrices (A, B, C) at one path node.

    ``dsigma_dr`` is the r-derivative of the linear phase coefficients,
    shape (d2, d1); omitted (or zero) in the degenerate point-source case,
    where the coefficients reduce to the classic beam-tracing form
    A = Lambda_ss, B = Lambda_sigma_s, C = Lambda_sigma_sigma.
    """
    jets = pullback_jet_path(spec, l, bundle, i)
    return _coefficients_from_jet(jets[k], bundle, dsigma_dr)


def _coefficients_from_jet(jet: SymbolJet, bundle: RayBundle, dsigma_dr):
    d1, d2 = bundle.d1, bundle.d2
    lam_ss = jet.ss
    lam_s_sigma = jet.s_sigma          # (d2, d2): d2 Lambda / ds_i dsigma_j
    lam_sigma_sigma = jet.sigma_sigma
    if d1 == 0 or dsigma_dr is None or not dsigma_dr.size:
        a = lam_ss.copy()
        b = lam_s_sigma.T.copy()       # B_ij = d2 Lambda / dsigma_i ds_j
        c = lam_sigma_sigma.copy()
    else:
        w = dsigma_dr                   # (d2, d1)
        lam_s_rho = jet.s_rho           # (d2, d1)
        lam_rho_rho = jet.rho_rho       # (d1, d1)
        lam_rho_sigma = jet.rho_sigma   # (d1, d2)
        a = (
            lam_ss
            + lam_s_rho @ w.T
            + w @ lam_s_rho.T
            + w @ lam_rho_rho @ w.T
        )
        b = lam_s_sigma.T + (lam_rho_sigma.T @ w.T if d1 else 0.0)
        c = lam_sigma_sigma.copy()
    a = 0.5 * (a + a.T)
    c = 0.5 * (c + c.T)
    return a, b, c


def solve_riccati(
    coeffs: tuple[np.ndarray, np.ndarray, np.ndarray],
    phi0: np.ndarray,
    dt: float,
    positivity_tol: float = 1e-12,
) -> np.ndarray:
    """Integrate the matrix Riccati equation along one ray.

    ``coeffs`` are arrays (n_t, d2, d2) for A, B, C at the path nodes
    (midpoint values are averaged).  The solution is re-symmetrized every
    step and the positive definiteness of its imaginary part is monitored.
    """
    a_path, b_path, c_path = coeffs
    n_t = a_path.shape[0]
    d2 = phi0.shape[0]
    phi0 = np.asarray(phi0, dtype=complex).reshape(d2, d2)
    if np.max(np.abs(phi0 - phi0.T)) > 1e-12:
        raise ConfigError("initial curvature matrix must be symmetric")
    if np.min(np.linalg.eigvalsh(0.5j * (phi0.conj().T - phi0))) <= positivity_tol:
        raise PositivityLossError("Im(Phi(0)) must be positive definite")

    out = np.empty((n_t,) + phi0.shape, dtype=complex)
    out[0] = phi0

    def rhs(a, b, c, phi):
        return -(a + phi @ b + b.T @ phi + phi @ c @ phi)

    for k in range(n_t - 1):
        a0, b0, c0 = a_path[k], b_path[k], c_path[k]
        a1, b1, c1 = a_path[k + 1], b_path[k + 1], c_path[k + 1]
        ah, bh, ch = 0.5 * (a0 + a1), 0.5 * (b0 + b1), 0.5 * (c0 + c1)
        phi = out[k]
        k1 = rhs(a0, b0, c0, phi)
        k2 = rhs(ah, bh, ch, phi + 0.5 * dt * k1)
        k3 = rhs(ah, bh, ch, phi + 0.5 * dt * k2)
        k4 = rhs(a1, b1, c1, phi + dt * k3)
        nxt = phi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = np.max(np.abs(nxt - nxt.T))
        if drift > SYMMETRY_DRIFT_TOL * max(1.0, float(np.max(np.abs(nxt)))):
            raise BlowUpError(f"Riccati symmetry drift {drift:.2e}")
        nxt = 0.5 * (nxt + nxt.T)
        if np.max(np.abs(nxt)) > RICCATI_BLOWUP:
            raise BlowUpError("curvature matrix norm exceeded blow-up threshold")
        min_im = float(np.min(np.linalg.eigvalsh(nxt.imag)))
        if min_im <= positivity_tol:
            raise PositivityLossError(
                f"Im(Phi) lost positive definiteness at step {k + 1} "
                f"(min eigenvalue {min_im:.3e})"
            )
        out[k + 1] = nxt
    return out


@dataclass
class PhaseJet:
    """Second-order complex phase data on the beam manifold.

    ``axis_value`` is the constant-in-time real phase on each ray,
    ``sigma``/``rho`` the transverse/longitudinal covector components, and
    ``curvature`` the complex symmetric matrix Phi.  Time derivatives of the
    coefficients are stored for phase/time-derivative evaluation off the
    manifold.
    """

    axis_value: np.ndarray            # (n_r,)
    sigma: np.ndarray                 # (n_t, n_r, d2)
    rho: np.ndarray                   # (n_t, n_r, d1)
    curvature: np.ndarray             # (n_t, n_r, d2, d2) complex
    dt_sigma: np.ndarray              # (n_t, n_r, d2)
    dt_curvature: np.ndarray          # (n_t, n_r, d2, d2)
    riccati_min_imag: float = np.inf  # min over path of min eig Im(Phi)
    _r_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_t(self) -> int:
        return self.sigma.shape[0]

    @property
    def n_r(self) -> int:
        return self.sigma.shape[1]

    @property
    def d2(self) -> int:
        return self.sigma.shape[2]


def initial_curvature(bundle: RayBundle, comp: WaveComponent) -> np.ndarray:
    """Initial Phi(0, r): the chart Hessian of psi on the normal frame."""
    e0 = bundle.frames[0]                             # (n_r, d, d2)
    hess = np.asarray(comp.d2psi(comp.points))        # (n_r, d, d)
    phi0 = np.einsum("rdi,rde,rej->rij", e0, hess, e0)
    return phi0


def build_phase_jet(
    spec: SystemSpec,
    l: int,
    bundle: RayBundle,
    comp: WaveComponent,
    positivity_tol: float = 1e-12,
) -> PhaseJet:
    """Assemble the phase jet: initial data, ray covector components, Riccati flow."""
    if bundle.frames is None:
        raise ConfigError("bundle needs frames; call evolve_frame first")
    if bundle.d2 == 0:
        raise ConfigError("beam phases need at least one transverse direction")
    n_t, n_r = bundle.n_t, bundle.n_r
    d1, d2 = bundle.d1, bundle.d2

    axis_value = np.asarray(comp.psi(comp.points)).real.reshape(n_r)

    sigma = np.einsum("krdj,krd->krj", bundle.frames, bundle.xi)
    if d1:
        rho = np.einsum("krdj,krd->krj", bundle.tangents, bundle.xi)
    else:
        rho = np.zeros((n_t, n_r, 0))

    if d1:
        dr = float(bundle.r[1] - bundle.r[0])
        dsigma_dr = grid_derivative(sigma, dr, axis=1)[..., None]  # (n_t,n_r,d2,1)
    else:
        dsigma_dr = None

    phi0_all = initial_curvature(bundle, comp)
    curvature = np.empty((n_t, n_r, d2, d2), dtype=complex)
    min_imag = np.inf
    for i in range(n_r):
        jets = pullback_jet_path(spec, l, bundle, i)
        a_path = np.empty((n_t, d2, d2))
        b_path = np.empty((n_t, d2, d2))
        c_path = np.empty((n_t, d2, d2))
        for k in range(n_t):
            w = dsigma_dr[k, i] if d1 else None
            a_path[k], b_path[k], c_path[k] = _coefficients_from_jet(
                jets[k], bundle, w
            )
        curvature[:, i] = solve_riccati(
            (a_path, b_path, c_path), phi0_all[i], bundle.dt, positivity_tol
        )
        min_imag = min(
            min_imag,
            float(np.min(np.linalg.eigvalsh(curvature[:, i].imag))),
        )

    jet = PhaseJet(
        axis_value=axis_value,
        sigma=sigma,
        rho=rho,
        curvature=curvature,
        dt_sigma=central_time_derivative(sigma, bundle.dt),
        dt_curvature=central_time_derivative(curvature, bundle.dt),
        riccati_min_imag=min_imag,
    )
    _check_rho_consistency(jet, bundle)
    return jet


def _check_rho_consistency(jet: PhaseJet, bundle: RayBundle, tol: float = 1e-5):
    """rho(t, r) must equal d(phi0)/dr on the grid (covector consistency)."""
    if bundle.d1 == 0:
        return
    dr = float(bundle.r[1] - bundle.r[0])
    dphi0 = grid_derivative(jet.axis_value, dr, axis=0)
    dev = np.max(np.abs(jet.rho[..., 0] - dphi0[None, :]))
    if dev > tol:
        raise ConfigError(
            f"rho differs from d(phi0)/dr by {dev:.3e}; initial phase and "
            "manifold parametrization are inconsistent"
        )


@dataclass
class PhaseValues:
    """Phase and space-time gradient of the beam phase at stacked points."""

    phi: np.ndarray       # (m,) complex
    dt: np.ndarray        # (m,) complex time derivative at fixed x
    dx: np.ndarray        # (m, d) complex spatial gradient
    r: np.ndarray         # (m,) chart coordinate (zeros for point beams)
    s: np.ndarray         # (m, d2)
    inside: np.ndarray    # (m,) bool


def _jet_r_values(jet: PhaseJet, bundle: RayBundle, k: int, r: np.ndarray):
    """Jet coefficients at continuous r (cubic in r), plus their r-derivatives."""
    if bundle.d1 == 0:
        m = r.shape[0]
        rep = lambda a: np.broadcast_to(a[k, 0], (m,) + a.shape[2:])
        vals = {
            "phi0": np.full(m, jet.axis_value[0]),
            "dphi0": np.zeros((m, 0)),
            "sigma": rep(jet.sigma),
            "dsigma": np.zeros((m,) + jet.sigma.shape[2:] + (0,)),
            "curv": rep(jet.curvature),
            "dcurv": np.zeros((m,) + jet.curvature.shape[2:] + (0,)),
            "dt_sigma": rep(jet.dt_sigma),
            "dt_curv": rep(jet.dt_curvature),
        }
        return vals
    key = ("jetsp", k)
    if key not in jet._r_cache:
        rr = bundle.r
        jet._r_cache[key] = (
            CubicSpline(rr, jet.axis_value),
            CubicSpline(rr, jet.sigma[k], axis=0),
            CubicSpline(rr, jet.curvature[k], axis=0),
            CubicSpline(rr, jet.dt_sigma[k], axis=0),
            CubicSpline(rr, jet.dt_curvature[k], axis=0),
        )
    sp_phi0, sp_sigma, sp_curv, sp_dtsig, sp_dtcurv = jet._r_cache[key]
    return {
        "phi0": sp_phi0(r),
        "dphi0": sp_phi0.derivative()(r)[:, None],
        "sigma": sp_sigma(r),
        "dsigma": sp_sigma.derivative()(r)[..., None],
        "curv": sp_curv(r),
        "dcurv": sp_curv.derivative()(r)[..., None],
        "dt_sigma": sp_dtsig(r),
        "dt_curv": sp_dtcurv(r),
    }


def _chart_frames_at(bundle: RayBundle, k: int, r: np.ndarray, s: np.ndarray):
    """J(t,r,s), dX/dt(t,r,s) at continuous r for stacked points."""
    m = r.shape[0]
    d, d1, d2 = bundle.d, bundle.d1, bundle.d2
    if d1 == 0:
        e = bundle.frames[k, 0]
        J = np.broadcast_to(e, (m, d, d2)).copy()
        dXdt = bundle.v[k, 0][None, :] + s @ bundle.frame_rate[k, 0].T
        return J, dXdt
    x_sp, e_sp, dx_sp, de_sp = bundle._splines(k)
    e = e_sp(r)                                  # (m, d, d2)
    tang = dx_sp(r) + np.einsum("mdj,mj->md", de_sp(r), s)
    J = np.concatenate([tang[:, :, None], e], axis=2)
    # dX/dt at fixed (r, s): interpolate group velocity and frame rate over r
    v = bundle.interp_over_r(k, bundle.v[k], r)
    erate = bundle.interp_over_r(k, bundle.frame_rate[k], r)
    dXdt = v + np.einsum("mdj,mj->md", erate, s)
    return J, dXdt


def eval_phase_at_node(
    jet: PhaseJet, bundle: RayBundle, k: int, X: np.ndarray
) -> PhaseValues:
    """Evaluate the phase jet and its space-time gradient at one time node."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    d2 = bundle.d2
    r, s, inside = bundle.invert(k, X)
    # clamp the evaluation to charted points; outsiders get zeros
    r_eval = r.copy()
    if bundle.d1:
        r_eval = np.clip(r_eval, bundle.r[0], bundle.r[-1])
    vals = _jet_r_values(jet, bundle, k, r_eval)

    sigma, curv = vals["sigma"], vals["curv"]
    phi = (
        vals["phi0"]
        + np.einsum("mj,mj->m", sigma, s)
        + 0.5 * np.einsum("mi,mij,mj->m", s, curv, s)
    )
    ds_phi = sigma + np.einsum("mij,mj->mi", curv, s)
    if bundle.d1:
        dr_phi = (
            vals["dphi0"]
            + np.einsum("mji,mj->mi", vals["dsigma"], s)
            + 0.5 * np.einsum("mi,mijl,mj->ml", s, vals["dcurv"], s)
        )
        grad_chart = np.concatenate([dr_phi, ds_phi], axis=1)
    else:
        grad_chart = ds_phi
    J, dXdt = _chart_frames_at(bundle, k, r_eval, s)
    dx = np.linalg.solve(
        np.swapaxes(J, -1, -2).astype(complex), grad_chart[..., None]
    )[..., 0]
    dt_chart = (
        np.einsum("mj,mj->m", vals["dt_sigma"], s)
        + 0.5 * np.einsum("mi,mij,mj->m", s, vals["dt_curv"], s)
    )
    dt_phi = dt_chart - np.einsum("md,md->m", dx, dXdt.astype(complex))
    return PhaseValues(phi=phi, dt=dt_phi, dx=dx, r=r, s=s, inside=inside)


def eval_phase(jet: PhaseJet, bundle: RayBundle, t: float, X: np.ndarray) -> PhaseValues:
    """Evaluate the phase at an arbitrary traced time (linear in t between nodes)."""
    k0, k1, w = bundle.locate_time(t)
    p0 = eval_phase_at_node(jet, bundle, k0, X)
    if k1 == k0:
        return p0
    p1 = eval_phase_at_node(jet, bundle, k1, X)
    mix = lambda a, b: (1 - w) * a + w * b
    return PhaseValues(
        phi=mix(p0.phi, p1.phi),
        dt=mix(p0.dt, p1.dt),
        dx=mix(p0.dx, p1.dx),
        r=mix(p0.r, p1.r),
        s=mix(p0.s, p1.s),
        inside=p0.inside & p1.inside,
    )


def phase_csv_rows(jet: PhaseJet, bundle: RayBundle):
    """Rows (t, r, phi0, sigma..., Re Phi..., Im Phi...) for CSV export."""
    rows = []
    r_vals = bundle.r if bundle.d1 else np.zeros(1)
    for k in range(bundle.n_t):
        for i in range(bundle.n_r):
            row = [bundle.t[k], float(r_vals[i]), float(jet.axis_value[i])]
            row.extend(np.asarray(jet.sigma[k, i], dtype=float).ravel())
            row.extend(jet.curvature[k, i].real.ravel())
            row.extend(jet.curvature[k, i].imag.ravel())
            rows.append(row)
    return rows
