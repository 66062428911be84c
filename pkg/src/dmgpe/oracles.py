"""Closed-form references used to check the solver from the outside.

Free Gaussian spreading, the width laws for packets at the semi-major and
semi-minor edges, and the coordinate stretch y = sigma*Y that maps a
dispersion-managed ellipse onto a circular ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Field2D, GridSpec, make_grid
from .errors import ConfigurationError, RangeError

__all__ = [
    "FreeGaussianPacket",
    "free_width",
    "managed_width_ratio",
    "unmanaged_width_b",
    "stretched_grid",
    "rescaled_circular_reference",
    "inverse_rescale",
    "equivalent_circular_coupling",
]


def free_width(t, w0: float):
    """Squared RMS width of a free Gaussian: w0^2 + t^2 / (4 w0^2)."""
    if not w0 > 0:
        raise ConfigurationError("w0 must be positive")
    t = np.asarray(t, dtype=float)
    out = w0 ** 2 + t ** 2 / (4 * w0 ** 2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FreeGaussianPacket:
    """chi(s, 0) = (pi d^2)^(-1/4) exp(-(s - s0)^2 / (2 d^2)); RMS width d/sqrt(2)."""

    d: float
    s0: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise ConfigurationError("packet width parameter d must be positive")

    @property
    def w0(self) -> float:
        return self.d / math.sqrt(2.0)

    def width_sq(self, t):
        return free_width(t, self.w0)

    def amplitude(self, s, t: float = 0.0, kinetic_coefficient: float = 1.0):
        """Exact free evolution under -(c/2) d^2/ds^2 (c = kinetic_coefficient)."""
        D = 1.0 / (1.0 + 1j * kinetic_coefficient * t / self.d ** 2)
        s = np.asarray(s, dtype=float) - self.s0
        return np.sqrt(D / (math.sqrt(math.pi) * self.d)) * np.exp(-D * s ** 2 / (2 * self.d ** 2))

    def field(self, grid: GridSpec, t: float = 0.0, alpha: float = 1.0, beta: float = 1.0,
              other: Optional["FreeGaussianPacket"] = None) -> Field2D:
        """Product packet on a 2D grid: self along x, ``other`` (default self) along y."""
        other = self if other is None else other
        return Field2D(grid, np.outer(self.amplitude(grid.x, t, alpha), other.amplitude(grid.y, t, beta)), t=t)


def _check_ecc(eps):
    if not 0 <= eps < 1:
        raise ConfigurationError("eccentricity must lie in [0, 1)")


def managed_width_ratio(eps: float, t, w_a0: float):
    """(w_{a,t}^2, w_{b,t}^2) with y-dispersion reduced by 1 - eps^2.

    The semi-minor width obeys w_b^2 = [w_a0^2 + t^2/(4 w_a0^2)] / (1 - eps^2),
    and the semi-major one stays a factor 1 - eps^2 below it.
    """
    _check_ecc(eps)
    s2 = 1.0 - eps ** 2
    wb2 = free_width(t, w_a0) / s2
    return s2 * wb2, wb2


def unmanaged_width_b(eps: float, t, w_a0: float):
    """Semi-minor width^2 without management: [w_a0^2 + t^2 (1-eps^2)^2 / (4 w_a0^2)] / (1-eps^2)."""
    _check_ecc(eps)
    s2 = 1.0 - eps ** 2
    t = np.asarray(t, dtype=float)
    out = (w_a0 ** 2 + t ** 2 * s2 ** 2 / (4 * w_a0 ** 2)) / s2
    return float(out) if out.ndim == 0 else out


def equivalent_circular_coupling(g: float, eps: float) -> float:
    """Coupling of the circular problem equivalent to a managed ellipse with coupling g.

    Stretching y = sigma*Y rescales |psi|^2 by 1/sigma, so g becomes g/sigma.
    """
    _check_ecc(eps)
    return g / math.sqrt(1.0 - eps ** 2)


def stretched_grid(grid: GridSpec, eps: float) -> GridSpec:
    """Circular-frame grid whose Y nodes are exactly y_j / sigma."""
    _check_ecc(eps)
    return make_grid(grid.nx, grid.ny, grid.dx, grid.dy / math.sqrt(1.0 - eps ** 2))


def _aligned_index(src: np.ndarray, req: np.ndarray, h: float):
    idx = np.rint((req - src[0]) / h).astype(int)
    if idx.min() < 0 or idx.max() >= len(src):
        return None
    if np.max(np.abs(src[idx] - req)) > 1e-9 * h:
        return None
    return idx


def _resample(f: Field2D, target: GridSpec, xq: np.ndarray, yq: np.ndarray, scale: float) -> Field2D:
    g = f.grid
    ix = _aligned_index(g.x, xq, g.dx)
    iy = _aligned_index(g.y, yq, g.dy)
    if ix is not None and iy is not None:
        return Field2D(target, f.values[np.ix_(ix, iy)] * scale, t=f.t)
    if xq.min() < g.x[0] - 1e-12 or xq.max() > g.x[-1] + 1e-12 or yq.min() < g.y[0] - 1e-12 or yq.max() > g.y[-1] + 1e-12:
        raise RangeError("requested coordinates fall outside the source grid")
    interp = RegularGridInterpolator((g.x, g.y), f.values, method="linear", bounds_error=False, fill_value=None)
    Xq, Yq = np.meshgrid(xq, yq, indexing="ij")
    vals = interp(np.stack([Xq.ravel(), Yq.ravel()], axis=-1)).reshape(target.shape)
    return Field2D(target, vals * scale, t=f.t)


def rescaled_circular_reference(circ: Union[Field2D, Mapping[float, Field2D]], eps: float,
                                target: Optional[GridSpec] = None):
    """Map circular-ring fields psi_c(x, Y) to psi(x, y) = psi_c(x, y/sigma) / sqrt(sigma).

    With ``target`` omitted the output grid has y spacing sigma*dY, so every
    node maps onto a source node and the map is exact. Otherwise values are
    interpolated bilinearly. Accepts a single field or a {time: field} dict.
    """
    _check_ecc(eps)
    sigma = math.sqrt(1.0 - eps ** 2)
    if isinstance(circ, Mapping):
        return {t: rescaled_circular_reference(f, eps, target) for t, f in circ.items()}
    src = circ.grid
    if target is None:
        target = make_grid(src.nx, src.ny, src.dx, src.dy * sigma)
    return _resample(circ, target, target.x, target.y / sigma, 1.0 / math.sqrt(sigma))


def inverse_rescale(f: Field2D, eps: float, target: Optional[GridSpec] = None) -> Field2D:
    """Inverse of :func:`rescaled_circular_reference`: psi_c(x, Y) = sqrt(sigma) psi(x, sigma Y)."""
    _check_ecc(eps)
    sigma = math.sqrt(1.0 - eps ** 2)
    src = f.grid
    if target is None:
        target = make_grid(src.nx, src.ny, src.dx, src.dy / sigma)
    return _resample(f, target, target.x, target.y * sigma, math.sqrt(sigma))
