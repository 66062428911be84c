"""Units, grids and the complex field container.

Everything inside the solver is in oscillator units: lengths in a_perp,
times in 1/omega_perp, energies in hbar*omega_perp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.constants import hbar

from .errors import ConfigurationError, ContractError, DegenerateFieldError, PreconditionError

__all__ = [
    "PhysicalParams",
    "GridSpec",
    "Field2D",
    "make_grid",
    "coupling_from_params",
    "to_physical_time",
    "to_physical_length",
    "normalize",
    "norm_sq",
    "inner",
    "second_moment_width",
    "PRESETS",
]


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhysicalParams:
    """SI parameters of the condensate.

    ``omega_perp`` is an angular rate in s^-1, so ``1/omega_perp`` is the time
    unit (512 s^-1 gives 1.953 ms). ``oscillator_length`` is derived from
    hbar/(m*omega_perp) unless given explicitly; ``coupling`` likewise
    overrides ``2*sqrt(pi)*N*a_s/a_perp``.
    """

    atom_count: float = 10000.0
    atom_mass: float = 3.816e-26
    omega_perp: float = 512.0
    scattering_length: float = 2.75e-9
    oscillator_length: Optional[float] = 2.318e-6
    coupling: Optional[float] = None

    def __post_init__(self):
        for name in ("atom_mass", "omega_perp"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive", [f"physical.{name}"])
        if self.atom_count < 0 or self.scattering_length < 0:
            raise ConfigurationError("atom_count and scattering_length must be nonnegative")
        if self.oscillator_length is not None and not self.oscillator_length > 0:
            raise ConfigurationError("oscillator_length must be positive", ["physical.oscillator_length"])

    @property
    def a_perp(self) -> float:
        if self.oscillator_length is not None:
            return self.oscillator_length
        return math.sqrt(hbar / (self.atom_mass * self.omega_perp))

    @property
    def time_unit_ms(self) -> float:
        return 1e3 / self.omega_perp

    @property
    def g(self) -> float:
        if self.coupling is not None:
            return self.coupling
        return coupling_from_params(self)


def coupling_from_params(p: PhysicalParams) -> float:
    """Dimensionless 2D coupling 2*sqrt(pi)*N*a_s/a_perp."""
    a_perp = p.a_perp
    if p.atom_count < 0 or p.scattering_length < 0 or a_perp <= 0:
        raise ConfigurationError("coupling needs nonnegative N, a_s and positive a_perp")
    return 2.0 * math.sqrt(math.pi) * p.atom_count * p.scattering_length / a_perp


def to_physical_time(t, params: PhysicalParams = PhysicalParams(), convention: str = "caption"):
    """Convert dimensionless time to milliseconds.

    ``caption`` multiplies by 1/omega_perp (t=1 -> 1.953 ms). ``tabulated``
    divides by it instead, which is the relation the published revival table
    and snapshot instants obey (T_r = 100*pi reported as 161.1 ms).
    """
    if convention == "caption":
        return np.asarray(t) * params.time_unit_ms if np.ndim(t) else float(t) * params.time_unit_ms
    if convention == "tabulated":
        return np.asarray(t) / params.time_unit_ms if np.ndim(t) else float(t) / params.time_unit_ms
    raise ConfigurationError(f"unknown time convention {convention!r}", ["units.time_convention"])


def from_physical_time(t_ms, params: PhysicalParams = PhysicalParams(), convention: str = "caption"):
    if convention == "caption":
        return t_ms / params.time_unit_ms
    if convention == "tabulated":
        return t_ms * params.time_unit_ms
    raise ConfigurationError(f"unknown time convention {convention!r}", ["units.time_convention"])


def to_physical_length(x, params: PhysicalParams = PhysicalParams()):
    """Dimensionless length to micrometres."""
    return x * params.a_perp * 1e6


@dataclass(frozen=True, eq=False)
class GridSpec:
    nx: int
    ny: int
    dx: float
    dy: float
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    kx: np.ndarray = field(repr=False)
    ky: np.ndarray = field(repr=False)

    @property
    def x0(self) -> float:
        return -self.nx * self.dx / 2

    @property
    def y0(self) -> float:
        return -self.ny * self.dy / 2

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def extent(self):
        return (self.nx * self.dx, self.ny * self.dy)

    def mesh(self):
        """Coordinate arrays X, Y of shape (nx, ny), x varying along axis 0."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def kmesh(self):
        return np.meshgrid(self.kx, self.ky, indexing="ij")

    def same_as(self, other: "GridSpec") -> bool:
        return (
            self is other
            or (self.nx, self.ny) == (other.nx, other.ny)
            and self.dx == other.dx
            and self.dy == other.dy
        )

    def __eq__(self, other):
        return isinstance(other, GridSpec) and self.same_as(other)

    def __hash__(self):
        return hash((self.nx, self.ny, self.dx, self.dy))


def make_grid(nx: int, ny: int, dx: float, dy: float) -> GridSpec:
    """Centered uniform grid with DFT-ordered angular wavenumbers."""
    bad = []
    if not _is_pow2(int(nx)) or int(nx) != nx:
        bad.append("grid.nx")
    if not _is_pow2(int(ny)) or int(ny) != ny:
        bad.append("grid.ny")
    if not dx > 0:
        bad.append("grid.dx")
    if not dy > 0:
        bad.append("grid.dy")
    if bad:
        raise ConfigurationError(
            f"grid needs power-of-two sizes and positive spacings (got nx={nx}, ny={ny}, dx={dx}, dy={dy})",
            bad,
        )
    nx, ny, dx, dy = int(nx), int(ny), float(dx), float(dy)
    x = (np.arange(nx) - nx // 2) * dx
    y = (np.arange(ny) - ny // 2) * dy
    kx = 2 * np.pi * np.fft.fftfreq(nx, dx)
    ky = 2 * np.pi * np.fft.fftfreq(ny, dy)
    for a in (x, y, kx, ky):
        a.setflags(write=False)
    return GridSpec(nx, ny, dx, dy, x, y, kx, ky)


# name -> (nx, ny, dx, dy)
PRESETS = {
    "paper": (512, 512, 0.1, 0.1),
    "ci": (256, 256, 0.2, 0.2),
    # half the extent of "paper" at full resolution; still clears a ring of radius 10
    "compact": (256, 256, 0.1, 0.1),
}


@dataclass(frozen=True, eq=False)
class Field2D:
    """Wavefunction samples psi[i, j] = psi(x_i, y_j) on a grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ContractError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def density(self) -> np.ndarray:
        return self.values.real ** 2 + self.values.imag ** 2

    @property
    def norm_sq(self) -> float:
        return norm_sq(self)

    def with_values(self, values, t=None) -> "Field2D":
        return Field2D(self.grid, values, self.t if t is None else t)


def norm_sq(f: Field2D) -> float:
    return float(np.sum(f.density) * f.grid.cell_area)


def inner(f: Field2D, g: Field2D) -> complex:
    """<f|g> with the grid quadrature weight."""
    if not f.grid.same_as(g.grid):
        raise ContractError("fields live on different grids")
    return complex(np.vdot(f.values, g.values) * f.grid.cell_area)


def normalize(f: Field2D) -> Field2D:
    n2 = norm_sq(f)
    if not n2 > 0 or not np.isfinite(n2):
        raise DegenerateFieldError("cannot normalize a zero (or non-finite) field")
    return f.with_values(f.values / math.sqrt(n2))


def second_moment_width(f: Field2D, axis: str = "x", tol: float = 1e-6) -> float:
    """RMS width sqrt(<(q - <q>)^2>) of the density along ``axis``."""
    n2 = norm_sq(f)
    if abs(n2 - 1.0) > tol:
        raise PreconditionError(f"field must be unit norm (norm^2 = {n2})")
    rho = f.density * f.grid.cell_area
    if axis == "x":
        q, p = f.grid.x, rho.sum(axis=1)
    elif axis == "y":
        q, p = f.grid.y, rho.sum(axis=0)
    else:
        raise ValueError(f"axis must be 'x' or 'y', not {axis!r}")
    p = p / p.sum()
    mean = np.dot(p, q)
    return float(math.sqrt(np.dot(p, (q - mean) ** 2)))
