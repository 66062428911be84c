"""Split-step Fourier propagation of the dispersion-managed 2D GPE.

    i dpsi/dt = [-(alpha/2) d_xx - (beta/2) d_yy + g|psi|^2 + V] psi

Real time and imaginary time share one Strang-splitting propagator: half a
coordinate-space step with V + g|psi|^2, a full kinetic step in k-space, and
another coordinate half step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numba
import numpy as np
import scipy.fft as sfft

from .core import Field2D, GridSpec, normalize, norm_sq
from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateFieldError,
    NumericalBlowupError,
)
from .potentials import TrapSchedule, WaveguideParams, elliptic_radius

log = logging.getLogger(__name__)

__all__ = [
    "DispersionPair",
    "EvolutionConfig",
    "TimeSeries",
    "GroundState",
    "Propagator",
    "split_step",
    "ground_state_itp",
    "evolve_with_schedule",
    "make_initial_state",
    "binary_peaks",
    "ring_ansatz",
    "gaussian_packet",
    "channel_width",
]


@dataclass(frozen=True)
class DispersionPair:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigurationError("dispersion coefficients must be positive", ["dispersion.alpha", "dispersion.beta"])

    @classmethod
    def managed(cls, eccentricity: float, alpha: float = 1.0) -> "DispersionPair":
        """(alpha, alpha*(1 - eps^2)): the pair that turns the ellipse into a circle."""
        return cls(alpha, alpha * (1.0 - eccentricity ** 2))


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 0.005
    n_steps: int = 1
    mode: str = "real"
    g: float = 2.0
    record_stride: int = 1
    snapshot_times: tuple = ()
    convergence_tol: float = 1e-10
    probe_interval: int = 50
    workers: int = 1
    max_norm_drift: float = 1e-3

    def __post_init__(self):
        bad = []
        if not self.dt > 0:
            bad.append("evolution.dt")
        # a zero-step real run just records the initial observables
        if int(self.n_steps) < (0 if self.mode == "real" else 1):
            bad.append("evolution.n_steps")
        if int(self.record_stride) < 1:
            bad.append("evolution.record_stride")
        if self.mode not in ("real", "imaginary"):
            bad.append("evolution.mode")
        if self.mode == "imaginary" and not self.convergence_tol > 0:
            bad.append("evolution.convergence_tol")
        if bad:
            raise ConfigurationError(f"invalid evolution config: {', '.join(bad)}", bad)
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))


@dataclass
class TimeSeries:
    times: np.ndarray
    survival: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    width_x: np.ndarray
    width_y: np.ndarray
    chemical_potential: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.times)

    def window(self, t_lo: float, t_hi: float) -> "TimeSeries":
        m = (self.times >= t_lo) & (self.times <= t_hi)
        return TimeSeries(
            self.times[m], self.survival[m], self.norm[m], self.energy[m],
            self.width_x[m], self.width_y[m],
            self.chemical_potential[m] if len(self.chemical_potential) else self.chemical_potential,
        )


@dataclass
class GroundState:
    field: Field2D
    chemical_potential: float
    energy: float
    steps: int
    energies: np.ndarray

    def __iter__(self):
        # allows ``psi, mu = ground_state_itp(...)``
        return iter((self.field, self.chemical_potential))


@numba.njit(cache=True)
def _phase_kick(psi, V, g, h):
    nx, ny = psi.shape
    for i in range(nx):
        for j in range(ny):
            p = psi[i, j]
            th = (V[i, j] + g * (p.real * p.real + p.imag * p.imag)) * h
            psi[i, j] = p * complex(math.cos(th), -math.sin(th))


@numba.njit(cache=True)
def _decay_kick(psi, V, g, h):
    nx, ny = psi.shape
    for i in range(nx):
        for j in range(ny):
            p = psi[i, j]
            psi[i, j] = p * math.exp(-(V[i, j] + g * (p.real * p.real + p.imag * p.imag)) * h)


class Propagator:
    """Precomputed split-step factors for one grid, dispersion pair and dt.

    Holds scratch-free state only (factor arrays), but is not meant to be
    shared between threads that change its potential.
    """

    def __init__(self, grid: GridSpec, disp: DispersionPair, g: float, dt: float,
                 mode: str = "real", workers: int = 1):
        if mode not in ("real", "imaginary"):
            raise ConfigurationError(f"unknown mode {mode!r}", ["evolution.mode"])
        if dt == 0:
            raise ConfigurationError("dt must be nonzero", ["evolution.dt"])
        self.grid = grid
        self.disp = disp
        self.g = float(g)
        self.dt = float(dt)
        self.mode = mode
        self.workers = int(workers)
        KX, KY = grid.kmesh()
        self.kinetic = 0.5 * (disp.alpha * KX ** 2 + disp.beta * KY ** 2)
        if mode == "real":
            self.kin_factor = np.exp(-1j * self.kinetic * self.dt)
        else:
            self.kin_factor = np.exp(-self.kinetic * self.dt).astype(np.complex128)
        self.V = None

    def set_potential(self, V: np.ndarray):
        V = np.ascontiguousarray(V, dtype=np.float64)
        if V.shape != self.grid.shape:
            raise ContractError(f"potential shape {V.shape} does not match grid {self.grid.shape}")
        self.V = V
        return self

    def _kick(self, psi, h):
        if self.mode == "real":
            _phase_kick(psi, self.V, self.g, h)
        else:
            _decay_kick(psi, self.V, self.g, h)

    def _kinetic(self, psi):
        w = self.workers
        psi_k = sfft.fft2(psi, workers=w, overwrite_x=True)
        psi_k *= self.kin_factor
        return sfft.ifft2(psi_k, workers=w, overwrite_x=True)

    def advance(self, psi: np.ndarray, n: int) -> np.ndarray:
        """Apply ``n`` Strang steps to a raw array (in place where possible).

        In real time the trailing half kick of one step and the leading half
        kick of the next commute (|psi| is unchanged by a phase), so they are
        fused into one full kick. Imaginary time renormalizes after every step.
        """
        if self.V is None:
            raise ContractError("no potential set")
        psi = np.array(psi, dtype=np.complex128, order="C", copy=True)
        if n <= 0:
            return psi
        h = 0.5 * self.dt
        if self.mode == "real":
            self._kick(psi, h)
            for k in range(n):
                psi = self._kinetic(psi)
                self._kick(psi, h if k == n - 1 else self.dt)
        else:
            area = self.grid.cell_area
            for _ in range(n):
                self._kick(psi, h)
                psi = self._kinetic(psi)
                self._kick(psi, h)
                nrm = math.sqrt(np.sum(psi.real ** 2 + psi.imag ** 2) * area)
                if not nrm > 0 or not math.isfinite(nrm):
                    raise NumericalBlowupError("field vanished or diverged during imaginary-time step")
                psi /= nrm
        return psi

    def energy_terms(self, psi: np.ndarray, V: Optional[np.ndarray] = None):
        """(kinetic, potential, interaction) expectation values for ``psi``.

        The interaction term is (g/2) int |psi|^4; the energy is the sum of all
        three and the chemical potential doubles the interaction term.
        """
        V = self.V if V is None else V
        area = self.grid.cell_area
        psi_k = sfft.fft2(psi, workers=self.workers)
        n = psi.size
        rho = psi.real ** 2 + psi.imag ** 2
        nrm = np.sum(rho) * area
        kin = np.sum(self.kinetic * (psi_k.real ** 2 + psi_k.imag ** 2)) * area / n / nrm
        pot = np.sum(V * rho) * area / nrm
        inter = 0.5 * self.g * np.sum(rho ** 2) * area / nrm ** 2
        return float(kin), float(pot), float(inter)

    def energy(self, psi: np.ndarray, V=None) -> float:
        return sum(self.energy_terms(psi, V))

    def chemical_potential(self, psi: np.ndarray, V=None) -> float:
        kin, pot, inter = self.energy_terms(psi, V)
        return kin + pot + 2 * inter


def _check_grid(f: Field2D, V: np.ndarray):
    if np.shape(V) != f.grid.shape:
        raise ContractError(f"potential shape {np.shape(V)} does not match field grid {f.grid.shape}")


def split_step(f: Field2D, V: np.ndarray, disp: DispersionPair, g: float, dt: float,
               mode: str = "real") -> Field2D:
    """One Strang step. Imaginary mode returns a unit-norm field."""
    _check_grid(f, V)
    prop = Propagator(f.grid, disp, g, dt, mode).set_potential(V)
    psi = prop.advance(f.values, 1)
    if not np.all(np.isfinite(psi)):
        raise NumericalBlowupError("non-finite values after step 1", step=1, last_good=f)
    t_new = f.t + dt if mode == "real" else f.t
    return f.with_values(psi, t=t_new)


def ground_state_itp(V: np.ndarray, disp: DispersionPair, g: float, cfg: EvolutionConfig,
                     seed_field: Field2D) -> GroundState:
    """Imaginary-time relaxation to the lowest state of the DM-GPE.

    Stops once the relative change of the chemical potential between probes
    (every ``cfg.probe_interval`` steps) drops below ``cfg.convergence_tol``.
    """
    _check_grid(seed_field, V)
    if not norm_sq(seed_field) > 0:
        raise DegenerateFieldError("ITP seed has zero norm")
    prop = Propagator(seed_field.grid, disp, g, cfg.dt, "imaginary", cfg.workers).set_potential(V)
    psi = normalize(seed_field).values
    mu_old = prop.chemical_potential(psi)
    energies = [prop.energy(psi)]
    done = 0
    probe = max(1, int(cfg.probe_interval))
    residual = math.inf
    while done < cfg.n_steps:
        n = min(probe, cfg.n_steps - done)
        psi = prop.advance(psi, n)
        done += n
        mu = prop.chemical_potential(psi)
        energies.append(prop.energy(psi))
        residual = abs(mu - mu_old) / max(abs(mu_old), 1e-300)
        mu_old = mu
        if residual < cfg.convergence_tol:
            break
    else:
        raise ConvergenceError(
            f"ITP did not converge in {cfg.n_steps} steps (relative mu change {residual:.3e})",
            residual=residual,
        )
    log.debug("ITP converged after %d steps, mu=%.12g", done, mu_old)
    return GroundState(
        Field2D(seed_field.grid, psi),
        chemical_potential=mu_old,
        energy=energies[-1],
        steps=done,
        energies=np.array(energies),
    )


def _widths(rho, grid):
    px = rho.sum(axis=1)
    py = rho.sum(axis=0)
    tot = px.sum()
    mx = np.dot(px, grid.x) / tot
    my = np.dot(py, grid.y) / tot
    wx = math.sqrt(max(np.dot(px, (grid.x - mx) ** 2) / tot, 0.0))
    wy = math.sqrt(max(np.dot(py, (grid.y - my) ** 2) / tot, 0.0))
    return wx, wy


def evolve_with_schedule(f0: Field2D, schedule: TrapSchedule, disp: DispersionPair, g: float,
                         cfg: EvolutionConfig, reference: Optional[Field2D] = None):
    """Real-time propagation through a piecewise-constant trap schedule.

    Returns ``(TimeSeries, snapshots)`` where ``snapshots`` maps each requested
    time to the field at the nearest step. Observables are recorded at step 0
    and every ``cfg.record_stride`` steps; potentials switch at the first step
    whose start time reaches the switch time.

    Schedule and snapshot times count from the start of this call, while
    recorded times and snapshot ``t`` are offset by ``f0.t`` so that runs can
    be chained. Survival is measured against ``reference`` (default ``f0``).
    """
    grid = f0.grid
    dt = cfg.dt
    n_total = int(cfg.n_steps)
    if schedule.t_final < n_total * dt * (1 - 1e-12):
        raise ContractError(f"schedule covers [0, {schedule.t_final}] but run needs {n_total * dt}")
    for V in schedule.potentials:
        _check_grid(f0, V)

    area = grid.cell_area
    psi0 = (f0 if reference is None else reference).values.copy()
    t0 = float(f0.t)
    prop = Propagator(grid, disp, g, dt, "real", cfg.workers)

    switch_steps = [int(math.ceil(ts / dt - 1e-9)) for ts in schedule.switch_times]
    snap_steps = {}
    for ts in cfg.snapshot_times:
        k = int(round(ts / dt))
        if 0 <= k <= n_total:
            snap_steps.setdefault(k, []).append(ts)
    record_steps = set(range(0, n_total + 1, cfg.record_stride))
    events = sorted(record_steps | set(snap_steps) | {s for s in switch_steps if s <= n_total} | {n_total})

    rows = []
    snapshots: Dict[float, Field2D] = {}
    psi = f0.values.copy()
    last_good = (0, psi.copy())
    seg = -1
    k = 0

    def set_segment(step):
        nonlocal seg
        idx = max(i for i, s in enumerate(switch_steps) if s <= step)
        if idx != seg:
            seg = idx
            prop.set_potential(schedule.potentials[idx])

    set_segment(0)
    for ev in events:
        while k < ev:
            nxt = min([s for s in switch_steps if s > k] + [ev])
            psi = prop.advance(psi, nxt - k)
            k = nxt
            set_segment(k)
        rho = psi.real ** 2 + psi.imag ** 2
        nrm = float(np.sum(rho) * area)
        if not math.isfinite(nrm) or not np.all(np.isfinite(psi)):
            raise NumericalBlowupError(f"non-finite field at step {k}", step=k,
                                       last_good=Field2D(grid, last_good[1], t=t0 + last_good[0] * dt))
        if abs(nrm - 1.0) > cfg.max_norm_drift:
            raise NumericalBlowupError(f"norm drift {abs(nrm - 1):.3e} at step {k}", step=k,
                                       last_good=Field2D(grid, last_good[1], t=t0 + last_good[0] * dt))
        if k in record_steps:
            a = complex(np.vdot(psi0, psi) * area)
            wx, wy = _widths(rho, grid)
            rows.append((t0 + k * dt, abs(a) ** 2, nrm, prop.energy(psi), wx, wy))
            last_good = (k, psi.copy())
        for ts in snap_steps.get(k, ()):
            snapshots[ts] = Field2D(grid, psi.copy(), t=t0 + k * dt)
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    ts = TimeSeries(*(arr[:, i].copy() for i in range(6)))
    return ts, snapshots


# ---------------------------------------------------------------- initial states

def channel_width(w: WaveguideParams) -> float:
    """Gaussian parameter s of the ring-ansatz cross-section exp(-u^2/(2 s^2))."""
    return (w.gamma ** 2 / w.depth) ** 0.25


def gaussian_packet(grid: GridSpec, center=(0.0, 0.0), widths=(1.0, 1.0), momentum=(0.0, 0.0)) -> Field2D:
    """Normalized exp(-(x-cx)^2/(2 sx^2) - (y-cy)^2/(2 sy^2)) * exp(i k.r).

    The density RMS width along each axis is s/sqrt(2).
    """
    cx, cy = center
    sx, sy = widths
    _check_center(grid, cx, cy)
    _check_resolved(grid, sx, sy)
    X, Y = grid.mesh()
    psi = np.exp(-((X - cx) ** 2) / (2 * sx ** 2) - ((Y - cy) ** 2) / (2 * sy ** 2))
    if momentum != (0.0, 0.0):
        psi = psi * np.exp(1j * (momentum[0] * X + momentum[1] * Y))
    return normalize(Field2D(grid, psi))


def binary_peaks(grid: GridSpec, separation: float, transverse_width: float,
                 azimuthal_width: float = 1.0, rotated: bool = False) -> Field2D:
    """Two identical Gaussians at (+-separation, 0), or (0, +-separation) if rotated.

    The transverse (cross-channel) width lies along the line joining the peaks.
    """
    if rotated:
        c, widths = (0.0, separation), (azimuthal_width, transverse_width)
    else:
        c, widths = (separation, 0.0), (transverse_width, azimuthal_width)
    _check_center(grid, *c)
    _check_center(grid, -c[0], -c[1])
    _check_resolved(grid, *widths)
    X, Y = grid.mesh()
    sx, sy = widths
    psi = sum(
        np.exp(-((X - s * c[0]) ** 2) / (2 * sx ** 2) - ((Y - s * c[1]) ** 2) / (2 * sy ** 2))
        for s in (1.0, -1.0)
    )
    return normalize(Field2D(grid, psi))


def ring_ansatz(grid: GridSpec, w: WaveguideParams) -> Field2D:
    """Gaussian ring exp(-sqrt(V0) (rho - a)^2 / (2 gamma)), rho the elliptic radius."""
    rho = elliptic_radius(grid, w.eccentricity)
    psi = np.exp(-math.sqrt(w.depth) * (rho - w.semi_major) ** 2 / (2 * w.gamma))
    return normalize(Field2D(grid, psi))


def make_initial_state(kind: str, grid: GridSpec, **params) -> Field2D:
    """Dispatch on ``kind`` in {binary_peaks, ring_ansatz, gaussian_packet}."""
    if kind == "binary_peaks":
        w = params.pop("waveguide", None)
        if w is not None:
            rotated = params.get("rotated", False)
            params.setdefault("separation", w.semi_minor if rotated else w.semi_major)
            params.setdefault("transverse_width", channel_width(w) * (w.sigma if rotated else 1.0))
        return binary_peaks(grid, **params)
    if kind == "ring_ansatz":
        return ring_ansatz(grid, params["waveguide"])
    if kind == "gaussian_packet":
        return gaussian_packet(grid, **params)
    raise ConfigurationError(f"unknown initial state {kind!r}", ["initial.kind"])


def _check_center(grid, cx, cy):
    xmax = grid.x[-1]
    ymax = grid.y[-1]
    if not (grid.x[0] <= cx <= xmax and grid.y[0] <= cy <= ymax):
        raise ConfigurationError(f"packet center ({cx}, {cy}) lies outside the grid", ["initial"])


def _check_resolved(grid, sx, sy):
    if sx < 3 * grid.dx or sy < 3 * grid.dy:
        log.warning("initial widths (%.3g, %.3g) are below 3 grid spacings", sx, sy)
