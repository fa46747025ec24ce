"""Bundled scenarios and the structured scenario configuration format.

A scenario configuration is a plain nested mapping (JSON on disk): the
system (builtin name or custom coefficient tables), one entry per wave
component (polynomial phase jet data plus a constant polarization vector
with an optional Gaussian envelope), numerical parameters, and the
acceptance thresholds checked by the sweep driver.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .beams import BeamParams, build_beam
from .errors import ConfigError
from .rays import InitialData, WaveComponent
from .systems import SystemSpec, load_system

SQRT1_2 = 1.0 / np.sqrt(2.0)


@dataclass
class ScenarioConfig:
    """Declarative description of one run: system, components, numerics."""

    name: str
    system: dict
    components: list
    eps_list: list
    chart_radius: float
    dt: float | None = None
    cutoff_scale: float = 0.9
    plateau: bool = True
    ext_stride: int | None = None
    corrector_stride: int | None = None
    reference: dict = dc_field(default_factory=dict)
    thresholds: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        for required in ("name", "system", "components", "eps_list", "chart_radius"):
            if required not in data:
                raise ConfigError(f"scenario config is missing required field {required!r}")
        return cls(**data)

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
        if "scenario" in data and len(data) <= 2:
            base = bundled_scenario(data["scenario"]).to_dict()
            base.update(data.get("overrides", {}))
            return cls.from_dict(base)
        return cls.from_dict(data)


def _component_from_config(cfg: dict, d: int) -> WaveComponent:
    try:
        mode = int(cfg["mode"])
        origin = np.asarray(cfg["origin"], dtype=float).reshape(d)
        phase = cfg["phase"]
        grad = np.asarray(phase["grad"], dtype=float).reshape(d)
    except KeyError as exc:
        raise ConfigError(f"component config is missing field {exc.args[0]!r}") from exc
    hess = np.asarray(phase.get("hess_re", np.zeros((d, d))), dtype=float).reshape(d, d)
    hess = hess + 1j * np.asarray(
        phase.get("hess_im", np.zeros((d, d))), dtype=float
    ).reshape(d, d)
    cubic = np.asarray(phase.get("cubic", np.zeros(d)), dtype=float).reshape(d)
    const = float(phase.get("constant", 0.0))

    amp_cfg = cfg.get("amplitude", {})
    vec = np.asarray(amp_cfg.get("re", [1.0]), dtype=complex)
    if "im" in amp_cfg:
        vec = vec + 1j * np.asarray(amp_cfg["im"], dtype=float)
    width = amp_cfg.get("envelope_width")
    env_axis = amp_cfg.get("envelope_axis")

    def psi(x):
        dx = np.asarray(x, dtype=float) - origin
        quad = 0.5 * np.einsum("...i,ij,...j->...", dx, hess, dx)
        cub = np.einsum("j,...j->...", cubic, dx**3)
        return const + dx @ grad + quad + cub

    def dpsi(x):
        dx = np.asarray(x, dtype=float) - origin
        return grad + np.einsum("ij,...j->...i", hess, dx) + 3.0 * cubic * dx**2

    def d2psi(x):
        dx = np.asarray(x, dtype=float) - origin
        out = np.broadcast_to(hess, dx.shape[:-1] + (d, d)).copy()
        diag = 6.0 * cubic * dx
        idx = np.arange(d)
        out[..., idx, idx] += diag
        return out

    def amplitude(x):
        x = np.asarray(x, dtype=float)
        base = np.broadcast_to(vec, x.shape[:-1] + (vec.size,)).copy()
        if width is not None:
            dx = x - origin
            if env_axis is None:
                arg = np.sum(dx * dx, axis=-1)
            else:
                arg = dx[..., int(env_axis)] ** 2
            base = base * np.exp(-arg / (2.0 * width * width))[..., None]
        return base

    if "tangent" in cfg:
        tangent = np.asarray(cfg["tangent"], dtype=float).reshape(d)
        lo, hi = cfg["r_range"]
        n_r = int(cfg["n_r"])
        r = np.linspace(float(lo), float(hi), n_r)
        points = origin[None, :] + r[:, None] * tangent[None, :]
    else:
        r = None
        points = origin[None, :]
    return WaveComponent(
        mode=mode, points=points, r=r, psi=psi, dpsi=dpsi, d2psi=d2psi,
        amplitude=amplitude, label=cfg.get("label", "component"),
    )


def scenario_system(cfg: ScenarioConfig) -> SystemSpec:
    return load_system(cfg.system)


def scenario_initial_data(cfg: ScenarioConfig, spec: SystemSpec) -> InitialData:
    comps = tuple(_component_from_config(c, spec.d) for c in cfg.components)
    if not comps:
        raise ConfigError("scenario has no wave components")
    return InitialData(components=comps)


def scenario_beam_params(cfg: ScenarioConfig, spec: SystemSpec) -> BeamParams:
    dt = cfg.dt if cfg.dt is not None else spec.domain.final_time / 2000.0
    return BeamParams(
        dt=dt,
        chart_radius=cfg.chart_radius,
        cutoff_scale=cfg.cutoff_scale,
        plateau=cfg.plateau,
        ext_stride=cfg.ext_stride,
        corrector_stride=cfg.corrector_stride,
    )


def build_scenario_beams(cfg: ScenarioConfig):
    """Build (spec, initial data, beams) for a scenario."""
    spec = scenario_system(cfg)
    initial = scenario_initial_data(cfg, spec)
    params = scenario_beam_params(cfg, spec)
    beams = [build_beam(spec, comp, params) for comp in initial.components]
    return spec, initial, beams


# ---------------------------------------------------------------------------
# bundled scenario library
# ---------------------------------------------------------------------------

EPS_DEFAULT = [0.1, 0.05, 0.025, 0.0125]


def _advection_exact() -> ScenarioConfig:
    return ScenarioConfig(
        name="advection_exact",
        system={"name": "advection", "radius": 5.0, "final_time": 0.5, "speed": 1.0},
        components=[
            {
                "mode": 0,
                "origin": [0.0],
                "phase": {"grad": [1.0], "hess_im": [[1.0]]},
                "amplitude": {"re": [1.0]},
                "label": "gaussian-pulse",
            }
        ],
        eps_list=list(EPS_DEFAULT),
        chart_radius=3.8,
        reference={"dx_factor": 40, "cfl": 0.8, "margin": 0.2, "n_times": 6},
        thresholds={"residual_max": 1e-8, "l2_factor": 2.0},
    )


def _advection_cubic_phase() -> ScenarioConfig:
    cfg = _advection_exact()
    cfg.name = "advection_cubic_phase"
    cfg.components[0]["phase"]["cubic"] = [0.2]
    cfg.thresholds = {"mismatch_slope_min": 0.45, "stderr_max": 0.1}
    return cfg


def _wave2x2_beam() -> ScenarioConfig:
    return ScenarioConfig(
        name="wave2x2_beam",
        system={"name": "wave2x2", "radius": 5.0, "final_time": 0.5, "speed": 1.0},
        components=[
            {
                "mode": 1,
                "origin": [0.0],
                "phase": {"grad": [1.0], "hess_im": [[1.0]]},
                "amplitude": {"re": [SQRT1_2, SQRT1_2]},
                "label": "right-mover",
            }
        ],
        eps_list=list(EPS_DEFAULT),
        chart_radius=3.8,
        reference={"dx_factor": 40, "cfl": 0.8, "margin": 0.2, "n_times": 6},
        thresholds={"residual_max": 1e-8, "polarization_max": 1e-6},
    )


def _acoustics3_beam() -> ScenarioConfig:
    return ScenarioConfig(
        name="acoustics3_beam",
        system={"name": "acoustics3", "radius": 3.0, "final_time": 1.0, "speed": 1.0},
        components=[
            {
                "mode": 2,
                "origin": [0.0, 0.0],
                "tangent": [1.0, 0.0],
                "r_range": [-0.8, 0.8],
                "n_r": 33,
                "phase": {"grad": [1.0, 0.0], "hess_im": [[0.0, 0.0], [0.0, 1.0]]},
                "amplitude": {
                    "re": [SQRT1_2, SQRT1_2, 0.0],
                    # envelope varies along the manifold only: the amplitude
                    # decays to ~5e-5 at the charted r edge, and its
                    # transverse profile stays flat on the beam-width scale
                    "envelope_width": 0.18,
                    "envelope_axis": 0,
                },
                "label": "acoustic-line-beam",
            }
        ],
        eps_list=list(EPS_DEFAULT),
        chart_radius=0.9,
        thresholds={"riccati_min_imag_min": 0.0, "polarization_max": 1e-6},
    )


def _variable_advection() -> ScenarioConfig:
    return ScenarioConfig(
        name="variable_advection",
        system={
            "name": "variable_advection",
            "radius": 5.5,
            "final_time": 0.5,
            "speed": 1.3,
        },
        components=[
            {
                "mode": 0,
                "origin": [0.0],
                "phase": {"grad": [1.0], "hess_im": [[1.0]]},
                "amplitude": {"re": [1.0]},
                "label": "gaussian-pulse",
            }
        ],
        eps_list=list(EPS_DEFAULT),
        chart_radius=3.5,
        reference={"dx_factor": 40, "cfl": 0.8, "margin": 0.2, "n_times": 6},
        thresholds={
            "residual_slope_min": 0.45,
            "l2_slope_min": 0.45,
            "stderr_max": 0.1,
        },
    )


_BUNDLED = {
    "advection_exact": _advection_exact,
    "advection_cubic_phase": _advection_cubic_phase,
    "wave2x2_beam": _wave2x2_beam,
    "acoustics3_beam": _acoustics3_beam,
    "variable_advection": _variable_advection,
}

BUNDLED_SCENARIOS = tuple(sorted(_BUNDLED))


def bundled_scenario(name: str) -> ScenarioConfig:
    if name not in _BUNDLED:
        raise ConfigError(
            f"unknown scenario {name!r}; bundled: {', '.join(BUNDLED_SCENARIOS)}"
        )
    return _BUNDLED[name]()
