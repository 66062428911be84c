"""Experiment configuration: a flat dotted-key mapping validated into typed parts.

Every key has a type and a default. Files handed to ``run`` must also carry
the keys listed in ``REQUIRED`` for their experiment kind; subcommands start
from the defaults and only override what they are given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

from .core import PRESETS, GridSpec, PhysicalParams, make_grid
from .errors import ConfigurationError
from .evolution import DispersionPair, EvolutionConfig
from .potentials import HarmonicParams, WaveguideParams

KINDS = ("ground", "evolve", "sweep-beta", "revival-table", "interfere", "oracle")
AUTO = "auto"

_FR = "0.125, 0.16666666666666666, 0.25, 0.5, 1.0"

# key -> (type tag, default)
SCHEMA: Dict[str, tuple] = {
    "experiment.kind": ("choice:" + "|".join(KINDS), "evolve"),
    "grid.preset": ("choice:" + "|".join(PRESETS), "paper"),
    "grid.nx": ("int?", None),
    "grid.ny": ("int?", None),
    "grid.dx": ("float?", None),
    "grid.dy": ("float?", None),
    "physical.atom_count": ("float", 1e4),
    "physical.atom_mass": ("float", 3.816e-26),
    "physical.omega_perp": ("float", 512.0),
    "physical.scattering_length": ("float", 2.75e-9),
    "physical.oscillator_length": ("float", 2.318e-6),
    "units.time_convention": ("choice:caption|tabulated", "caption"),
    "waveguide.depth": ("float", 20.0),
    "waveguide.gamma": ("float", math.sqrt(2.0)),
    "waveguide.semi_major": ("float", 10.0),
    "waveguide.eccentricity": ("float", 0.0),
    "dispersion.alpha": ("float", 1.0),
    "dispersion.beta": ("float|auto", 1.0),
    "coupling.g": ("float|physical", 2.0),
    "evolution.dt": ("float", 0.005),
    "evolution.n_steps": ("int|auto", AUTO),
    "evolution.record_stride": ("int", 10),
    "evolution.max_norm_drift": ("float", 1e-3),
    "evolution.workers": ("int", 1),
    "itp.dt": ("float", 0.01),
    "itp.n_steps": ("int", 200000),
    "itp.convergence_tol": ("float", 1e-10),
    "itp.probe_interval": ("int", 50),
    "ground.trap": ("choice:waveguide|harmonic", "waveguide"),
    "ground.harmonic_frequency": ("float", 1.0),
    "initial.kind": ("choice:binary_peaks|ring_ansatz|gaussian_packet", "binary_peaks"),
    "initial.azimuthal_width": ("float", 1.0),
    "initial.transverse_width": ("float|auto", AUTO),
    "initial.rotated": ("bool", False),
    "initial.center_x": ("float", 0.0),
    "initial.center_y": ("float", 0.0),
    "initial.width_x": ("float", 1.0),
    "initial.width_y": ("float", 1.0),
    "snapshots.fractions": ("floats", _FR),
    "revival.window_lo": ("float", 0.5),
    "revival.window_hi": ("float", 1.3),
    "revival.eccentricities": ("floats", "0, 0.25, 0.75, 0.9"),
    "sweep.eccentricities": ("floats", "0.5"),
    "sweep.beta_min": ("float|auto", AUTO),
    "sweep.beta_max": ("float|auto", AUTO),
    "sweep.n_points": ("int", 25),
    "sweep.refine_points": ("int", 5),
    "sweep.refine_levels": ("int", 4),
    "schedule.switch_time": ("float|measured|predicted", "measured"),
    "schedule.switch_fraction": ("float", 0.25),
    "schedule.harmonic_frequency": ("float", 0.5),
    "schedule.capture_time": ("float", 3.0),
    "schedule.release_dispersion": ("choice:isotropic|keep", "isotropic"),
    "output.dir": ("str", "out"),
    "output.heatmaps": ("bool", False),
}

_WG = ("waveguide.depth", "waveguide.gamma", "waveguide.semi_major", "waveguide.eccentricity")
REQUIRED = {
    "ground": ("experiment.kind",),
    "evolve": ("experiment.kind",) + _WG,
    "sweep-beta": ("experiment.kind", "waveguide.depth", "waveguide.gamma", "waveguide.semi_major"),
    "revival-table": ("experiment.kind", "waveguide.depth", "waveguide.gamma", "waveguide.semi_major"),
    "interfere": ("experiment.kind",) + _WG,
    "oracle": ("experiment.kind",),
}


def defaults(kind: Optional[str] = None) -> Dict[str, object]:
    out = {k: v for k, (_, v) in SCHEMA.items() if v is not None}
    if kind is not None:
        out["experiment.kind"] = kind
    if kind == "interfere":
        out["waveguide.eccentricity"] = 0.9
        out["dispersion.beta"] = AUTO
    return out


def _coerce(key, tag, value):
    """Return the coerced value or raise ValueError."""
    if tag.startswith("choice:"):
        if str(value) not in tag[7:].split("|"):
            raise ValueError(f"must be one of {tag[7:]}")
        return str(value)
    if tag == "floats":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value),)
        if isinstance(value, (list, tuple)):
            return tuple(float(v) for v in value)
        return tuple(float(p) for p in str(value).split(",") if p.strip())
    if tag == "bool":
        if isinstance(value, bool):
            return value
        s = str(value).lower()
        if s in ("true", "1", "yes", "on"):
            return True
        if s in ("false", "0", "no", "off"):
            return False
        raise ValueError("must be true or false")
    if tag == "str":
        return str(value)
    base, _, keyword = tag.partition("|")
    if base.endswith("?"):
        base = base[:-1]
        if value is None:
            return None
    if keyword and str(value) in keyword.split("|"):
        return str(value)
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if base == "int":
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, int):
            return value
        return int(str(value))
    if isinstance(value, (int, float)):
        return float(value)
    return float(str(value))


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the flat mapping it came from."""

    raw: Dict[str, object]
    kind: str
    grid: GridSpec
    physical: PhysicalParams
    waveguide: WaveguideParams
    alpha: float
    beta: object
    g: float
    time_convention: str

    def get(self, key):
        return self.raw[key]

    def dispersion(self, eccentricity: Optional[float] = None) -> DispersionPair:
        """Resolve ``dispersion.beta = auto`` to alpha*(1 - eps^2)."""
        eps = self.waveguide.eccentricity if eccentricity is None else eccentricity
        if self.beta == AUTO:
            return DispersionPair.managed(eps, self.alpha)
        return DispersionPair(self.alpha, float(self.beta))

    def waveguide_at(self, eccentricity: float) -> WaveguideParams:
        w = self.waveguide
        return WaveguideParams(w.depth, w.gamma, w.semi_major, eccentricity)

    def itp_config(self) -> EvolutionConfig:
        r = self.raw
        return EvolutionConfig(
            dt=r["itp.dt"], n_steps=r["itp.n_steps"], mode="imaginary", g=self.g,
            convergence_tol=r["itp.convergence_tol"], probe_interval=r["itp.probe_interval"],
            workers=r["evolution.workers"],
        )

    def real_config(self, n_steps: int, snapshot_times=()) -> EvolutionConfig:
        r = self.raw
        return EvolutionConfig(
            dt=r["evolution.dt"], n_steps=n_steps, mode="real", g=self.g,
            record_stride=r["evolution.record_stride"], snapshot_times=tuple(snapshot_times),
            workers=r["evolution.workers"], max_norm_drift=r["evolution.max_norm_drift"],
        )

    def harmonic(self) -> HarmonicParams:
        return HarmonicParams(self.raw["schedule.harmonic_frequency"])


def build_config(values: Mapping[str, object], strict: bool = False,
                 overrides: Optional[Mapping[str, object]] = None) -> ExperimentConfig:
    """Validate ``values`` (plus ``overrides``) against the schema.

    With ``strict`` every key in ``REQUIRED[kind]`` must appear in ``values``.
    All problems are collected and reported together; the raised
    ConfigurationError lists the offending keys in ``.fields``.
    """
    given = dict(values)
    if overrides:
        given.update(overrides)
    problems = []
    bad = []

    unknown = sorted(k for k in given if k not in SCHEMA)
    for k in unknown:
        problems.append(f"{k}: unknown key")
        bad.append(k)

    kind = given.get("experiment.kind", SCHEMA["experiment.kind"][1])
    if strict and kind in REQUIRED:
        for k in REQUIRED[kind]:
            if k not in values and not (overrides and k in overrides):
                problems.append(f"{k}: required for experiment kind {kind!r}")
                bad.append(k)

    raw = {}
    for key, (tag, default) in SCHEMA.items():
        v = given.get(key, default)
        try:
            raw[key] = _coerce(key, tag, v)
        except (TypeError, ValueError) as e:
            problems.append(f"{key}: {v!r} {e}")
            bad.append(key)

    # range checks on what coerced cleanly
    def need(key, ok, msg):
        if key in raw and key not in bad and not ok(raw[key]):
            problems.append(f"{key}: {msg}")
            bad.append(key)

    positive = lambda v: isinstance(v, (int, float)) and v > 0
    for key in ("waveguide.depth", "waveguide.gamma", "waveguide.semi_major", "dispersion.alpha",
                "evolution.dt", "itp.dt", "itp.convergence_tol", "physical.atom_mass",
                "physical.omega_perp", "physical.oscillator_length", "schedule.harmonic_frequency",
                "ground.harmonic_frequency", "initial.azimuthal_width", "initial.width_x",
                "initial.width_y", "evolution.max_norm_drift"):
        need(key, positive, "must be positive")
    for key in ("evolution.record_stride", "itp.n_steps", "itp.probe_interval", "evolution.workers"):
        need(key, lambda v: v >= 1, "must be at least 1")
    need("sweep.n_points", lambda v: v >= 3, "must be at least 3")
    need("sweep.refine_points", lambda v: v >= 0, "must be nonnegative")
    need("sweep.refine_levels", lambda v: v >= 0, "must be nonnegative")
    need("schedule.capture_time", lambda v: v >= 0, "must be nonnegative")
    need("schedule.switch_fraction", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    need("waveguide.eccentricity", lambda v: 0 <= v < 1, "must lie in [0, 1)")
    need("dispersion.beta", lambda v: v == AUTO or v > 0, "must be positive or auto")
    need("coupling.g", lambda v: v == "physical" or v >= 0, "must be nonnegative or physical")
    need("evolution.n_steps", lambda v: v == AUTO or v >= 1, "must be at least 1 or auto")
    need("initial.transverse_width", lambda v: v == AUTO or v > 0, "must be positive or auto")
    need("schedule.switch_time", lambda v: isinstance(v, str) or v > 0, "must be positive")
    for key in ("revival.eccentricities", "sweep.eccentricities"):
        need(key, lambda v: len(v) > 0 and all(0 <= e < 1 for e in v), "values must lie in [0, 1)")
    need("snapshots.fractions", lambda v: all(f >= 0 for f in v), "must be nonnegative")
    need("revival.window_hi", lambda v: v > raw.get("revival.window_lo", 0), "must exceed revival.window_lo")
    need("revival.window_lo", lambda v: v > 0, "must be positive")
    for key in ("grid.nx", "grid.ny"):
        need(key, lambda v: v is None or (v >= 2 and v & (v - 1) == 0), "must be a power of two >= 2")
    for key in ("grid.dx", "grid.dy"):
        need(key, lambda v: v is None or v > 0, "must be positive")

    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems), bad)

    nx, ny, dx, dy = PRESETS[raw["grid.preset"]]
    grid = make_grid(raw["grid.nx"] or nx, raw["grid.ny"] or ny, raw["grid.dx"] or dx, raw["grid.dy"] or dy)
    physical = PhysicalParams(
        atom_count=raw["physical.atom_count"], atom_mass=raw["physical.atom_mass"],
        omega_perp=raw["physical.omega_perp"], scattering_length=raw["physical.scattering_length"],
        oscillator_length=raw["physical.oscillator_length"],
    )
    g = physical.g if raw["coupling.g"] == "physical" else float(raw["coupling.g"])
    w = WaveguideParams(raw["waveguide.depth"], raw["waveguide.gamma"], raw["waveguide.semi_major"],
                        raw["waveguide.eccentricity"])
    return ExperimentConfig(raw, raw["experiment.kind"], grid, physical, w, raw["dispersion.alpha"],
                            raw["dispersion.beta"], g, raw["units.time_convention"])
