"""Elliptical ring waveguide, harmonic trap and switched trap schedules."""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GridSpec
from .errors import ConfigurationError, RangeError

__all__ = [
    "WaveguideParams",
    "HarmonicParams",
    "TrapSchedule",
    "elliptic_ring_potential",
    "elliptic_radius",
    "harmonic_potential",
    "potential_at",
]


@dataclass(frozen=True)
class WaveguideParams:
    """Gaussian ring waveguide. ``depth`` in hbar*omega_perp, lengths in a_perp."""

    depth: float = 20.0
    gamma: float = math.sqrt(2.0)
    semi_major: float = 10.0
    eccentricity: float = 0.0

    def __post_init__(self):
        bad = [
            f"waveguide.{k}"
            for k, ok in (
                ("depth", self.depth > 0),
                ("gamma", self.gamma > 0),
                ("semi_major", self.semi_major > 0),
                ("eccentricity", 0 <= self.eccentricity < 1),
            )
            if not ok
        ]
        if bad:
            raise ConfigurationError(f"invalid waveguide parameters: {', '.join(bad)}", bad)

    @property
    def sigma(self) -> float:
        """b/a = sqrt(1 - eps^2)."""
        return math.sqrt(1.0 - self.eccentricity ** 2)

    @property
    def semi_minor(self) -> float:
        return self.semi_major * self.sigma

    @property
    def managed_beta(self) -> float:
        """y-dispersion (with alpha=1) that maps the ellipse onto a circle."""
        return 1.0 - self.eccentricity ** 2


@dataclass(frozen=True)
class HarmonicParams:
    frequency: float = 0.5

    def __post_init__(self):
        if not self.frequency > 0:
            raise ConfigurationError("harmonic frequency must be positive", ["schedule.harmonic_frequency"])


def elliptic_radius(grid: GridSpec, eccentricity: float) -> np.ndarray:
    """sqrt(x^2 + y^2/(1-eps^2)) on the grid."""
    X, Y = grid.mesh()
    return np.sqrt(X ** 2 + Y ** 2 / (1.0 - eccentricity ** 2))


def elliptic_ring_potential(grid: GridSpec, w: WaveguideParams) -> np.ndarray:
    """V0 * (1 - exp(-(rho - a)^2 / gamma^2)) with rho the elliptic radius."""
    if min(grid.extent) <= 2 * w.semi_major:
        warnings.warn("grid extent does not exceed the ring diameter", RuntimeWarning, stacklevel=2)
    rho = elliptic_radius(grid, w.eccentricity)
    return w.depth * -np.expm1(-((rho - w.semi_major) ** 2) / w.gamma ** 2)


def harmonic_potential(grid: GridSpec, h: HarmonicParams) -> np.ndarray:
    X, Y = grid.mesh()
    return 0.5 * h.frequency ** 2 * (X ** 2 + Y ** 2)


class TrapSchedule:
    """Piecewise-constant potential: segment k is active on [t_k, t_{k+1})."""

    def __init__(self, segments: Sequence[tuple], t_final: float):
        if not segments:
            raise ConfigurationError("schedule needs at least one segment")
        times = [float(t) for t, _ in segments]
        if times[0] != 0.0:
            raise ConfigurationError("first switch time must be 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("switch times must be strictly increasing")
        if t_final < times[-1]:
            raise ConfigurationError("t_final precedes the last switch time")
        shape = np.shape(segments[0][1])
        for _, v in segments:
            if np.shape(v) != shape:
                raise ConfigurationError("all schedule potentials must share a grid")
        self.switch_times = times
        self.potentials = [np.asarray(v, dtype=float) for _, v in segments]
        self.t_final = float(t_final)

    @classmethod
    def constant(cls, potential, t_final: float) -> "TrapSchedule":
        return cls([(0.0, potential)], t_final)

    def segment_index(self, t: float) -> int:
        if t < 0 or t > self.t_final * (1 + 1e-12) + 1e-12:
            raise RangeError(f"t={t} outside schedule coverage [0, {self.t_final}]")
        return bisect.bisect_right(self.switch_times, t) - 1

    def __len__(self):
        return len(self.switch_times)


def potential_at(schedule: TrapSchedule, t: float) -> np.ndarray:
    """Potential of the last segment with switch time <= t."""
    return schedule.potentials[schedule.segment_index(t)]
