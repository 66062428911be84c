"""Diagnostics: overlaps, survival, cross sections, revival times, lobes, fringes."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.ndimage import gaussian_filter1d

from .core import Field2D, GridSpec, inner
from .errors import ConfigurationError, ContractError, DegenerateFieldError, DetectionError
from .evolution import DispersionPair, EvolutionConfig, TimeSeries, ground_state_itp, ring_ansatz
from .potentials import WaveguideParams, elliptic_ring_potential

__all__ = [
    "FRFraction",
    "InterferencePattern",
    "BetaSweepResult",
    "autocorrelation",
    "survival",
    "overlap_lambda",
    "expected_uniform_state",
    "default_beta_range",
    "beta_sweep",
    "cross_section_density",
    "ellipse_circumference",
    "revival_time_predict",
    "fr_times",
    "measure_revival_time",
    "angular_profile",
    "count_fr_lobes",
    "fringe_periods",
]


# ---------------------------------------------------------------- overlaps

def autocorrelation(f0: Field2D, ft: Field2D) -> complex:
    """A(t) = sum psi0* psi_t dx dy."""
    return inner(f0, ft)


def survival(f0: Field2D, ft: Field2D) -> float:
    return abs(autocorrelation(f0, ft)) ** 2


def overlap_lambda(expected: Field2D, actual: Field2D) -> float:
    """Normalized density-density overlap; 1 iff the densities are proportional."""
    if not expected.grid.same_as(actual.grid):
        raise ContractError("fields live on different grids")
    re, ra = expected.density, actual.density
    den = np.sum(re ** 2) * np.sum(ra ** 2)
    if not den > 0:
        raise DegenerateFieldError("overlap of a zero field")
    return float(np.sum(re * ra) ** 2 / den)


def expected_uniform_state(grid: GridSpec, w: WaveguideParams) -> Field2D:
    """Elliptic Gaussian ring: uniform density along rho = a."""
    return ring_ansatz(grid, w)


# ---------------------------------------------------------------- beta sweep

@dataclass
class BetaSweepResult:
    eccentricity: float
    betas: np.ndarray
    lambdas: np.ndarray
    beta_c: float
    itp_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def lambda_max(self) -> float:
        return float(self.lambdas.max())


def default_beta_range(eccentricity: float, half_width: float = 0.15):
    centre = 1.0 - eccentricity ** 2
    return max(0.05, centre - half_width), centre + half_width


def _sweep_point(args):
    grid, w, beta, g, cfg = args
    V = elliptic_ring_potential(grid, w)
    expected = expected_uniform_state(grid, w)
    gs = ground_state_itp(V, DispersionPair(1.0, beta), g, cfg, expected)
    return overlap_lambda(expected, gs.field), gs.steps


def _run_points(grid, w, betas, g, cfg, jobs):
    tasks = [(grid, w, float(b), g, cfg) for b in betas]
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_sweep_point, tasks))
    else:
        out = [_sweep_point(t) for t in tasks]
    return [o[0] for o in out], [o[1] for o in out]


def beta_sweep(waveguide: WaveguideParams, grid: GridSpec, itp_cfg: EvolutionConfig,
               beta_min: Optional[float] = None, beta_max: Optional[float] = None,
               n_points: int = 25, g: Optional[float] = None, refine_points: int = 5,
               jobs: int = 1, refine_levels: int = 4) -> BetaSweepResult:
    """Scan beta (alpha = 1), relaxing the ground state at each point.

    Lambda is measured against the uniform elliptic ring. After the uniform
    scan, each of ``refine_levels`` passes places ``refine_points`` extra
    points within one current spacing of the best beta and shrinks the
    spacing accordingly; ``beta_c`` is the best sampled point overall.
    Lambda peaks sharply at high eccentricity, so one pass is not enough.
    """
    lo_d, hi_d = default_beta_range(waveguide.eccentricity)
    beta_min = lo_d if beta_min is None else beta_min
    beta_max = hi_d if beta_max is None else beta_max
    if not (0 < beta_min < beta_max) or n_points < 3:
        raise ConfigurationError("beta range must be positive and increasing with n_points >= 3",
                                 ["sweep.beta_min", "sweep.beta_max", "sweep.n_points"])
    g = itp_cfg.g if g is None else g
    betas = np.linspace(beta_min, beta_max, n_points)
    lams, steps = _run_points(grid, waveguide, betas, g, itp_cfg, jobs)
    h = betas[1] - betas[0]
    for _ in range(refine_levels if refine_points > 0 else 0):
        best = betas[int(np.argmax(lams))]
        fine = np.linspace(best - h, best + h, refine_points + 2)[1:-1]
        fine = np.array([b for b in fine if b > 0 and not np.any(np.isclose(b, betas, rtol=0, atol=1e-12))])
        if len(fine):
            fl, fs = _run_points(grid, waveguide, fine, g, itp_cfg, jobs)
            betas = np.concatenate([betas, fine])
            lams = list(lams) + list(fl)
            steps = list(steps) + list(fs)
        h = 2 * h / (refine_points + 1)
    order = np.argsort(betas)
    betas = betas[order]
    lams = np.asarray(lams)[order]
    steps = np.asarray(steps)[order]
    return BetaSweepResult(waveguide.eccentricity, betas, lams, float(betas[np.argmax(lams)]), steps)


# ---------------------------------------------------------------- profiles

def cross_section_density(f: Field2D, axis: str = "x") -> np.ndarray:
    """|psi(x, 0)|^2 (axis='x') or |psi(0, y)|^2 (axis='y').

    On even grids the line at index n/2 is used, which is exactly x=0 / y=0.
    """
    rho = f.density
    if axis == "x":
        return rho[:, f.grid.ny // 2].copy()
    if axis == "y":
        return rho[f.grid.nx // 2, :].copy()
    raise ValueError(f"axis must be 'x' or 'y', not {axis!r}")


# ---------------------------------------------------------------- revival times

def ellipse_circumference(a: float, eccentricity: float) -> float:
    """a * int_0^{2pi} sqrt(1 - eps^2 sin^2 phi) dphi by adaptive quadrature."""
    if not 0 <= eccentricity < 1:
        raise ConfigurationError("eccentricity must lie in [0, 1)", ["waveguide.eccentricity"])
    e2 = eccentricity ** 2
    # four identical quarter arcs; the quarter integrand is smooth on [0, pi/2]
    val, _ = integrate.quad(lambda p: math.sqrt(1.0 - e2 * math.sin(p) ** 2), 0.0, math.pi / 2,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 4.0 * a * val


def revival_time_predict(circumference: float) -> float:
    """T_r = C^2 / (4 pi) for two counter-placed clouds."""
    if not circumference > 0:
        raise ConfigurationError("circumference must be positive")
    return circumference ** 2 / (4 * math.pi)


@dataclass(frozen=True)
class FRFraction:
    p: int
    q: int

    def __post_init__(self):
        p, q = int(self.p), int(self.q)
        if q <= 0 or p <= 0 or p > q:
            raise ConfigurationError(f"fraction {p}/{q} must satisfy 0 < p/q <= 1")
        d = math.gcd(p, q)
        if d > 1:
            warnings.warn(f"fraction {p}/{q} reduced to {p // d}/{q // d}", stacklevel=3)
            p, q = p // d, q // d
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __float__(self):
        return self.p / self.q


def fr_times(T_r: float, fractions: Sequence) -> list:
    out = []
    for fr in fractions:
        if not isinstance(fr, FRFraction):
            fr = FRFraction(*fr)
        out.append(T_r * fr.p / fr.q)
    return out


def measure_revival_time(ts: TimeSeries, window) -> float:
    """Time of the highest interior local maximum of S(t) inside ``window``.

    The peak is refined with a parabola through the three samples around it.
    """
    lo, hi = window
    if lo <= 0:
        raise ConfigurationError("revival window must exclude t = 0")
    m = np.flatnonzero((ts.times >= lo) & (ts.times <= hi))
    if len(m) < 3:
        raise DetectionError(f"revival window [{lo}, {hi}] holds fewer than three samples")
    t = ts.times[m]
    s = ts.survival[m]
    interior = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1
    if len(interior) == 0:
        raise DetectionError(f"S(t) has no local maximum inside [{lo}, {hi}]")
    i = interior[np.argmax(s[interior])]
    y0, y1, y2 = s[i - 1], s[i], s[i + 1]
    den = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    h = 0.5 * (t[i + 1] - t[i - 1])
    return float(t[i] + np.clip(shift, -0.5, 0.5) * h)


# ---------------------------------------------------------------- lobes

def angular_profile(f: Field2D, w: WaveguideParams, n_bins: int = 256, annulus: float = 0.3) -> np.ndarray:
    """Density summed in elliptic-angle bins over |r_e - 1| < annulus.

    Elliptic coordinates: x = r_e a cos(phi), y = r_e b sin(phi).
    """
    X, Y = f.grid.mesh()
    u = X / w.semi_major
    v = Y / w.semi_minor
    r = np.hypot(u, v)
    phi = np.arctan2(v, u)
    mask = np.abs(r - 1.0) < annulus
    idx = ((phi[mask] + np.pi) / (2 * np.pi) * n_bins).astype(int) % n_bins
    return np.bincount(idx, weights=f.density[mask], minlength=n_bins)


def count_fr_lobes(f: Field2D, w: WaveguideParams, threshold: float = 0.2, n_bins: int = 256,
                   annulus: float = 0.3, smoothing: float = 2.0) -> int:
    """Number of angular density maxima above ``threshold`` times the largest.

    The binned profile is smoothed periodically with a Gaussian of ``smoothing``
    bins first; grid cells fall unevenly into narrow bins and the raw profile
    ripples.
    """
    rho = angular_profile(f, w, n_bins, annulus)
    if smoothing > 0:
        rho = gaussian_filter1d(rho, smoothing, mode="wrap")
    top = rho.max()
    if not top > 0:
        return 0
    left = np.roll(rho, 1)
    right = np.roll(rho, -1)
    peaks = (rho > left) & (rho >= right) & (rho >= threshold * top)
    return int(np.count_nonzero(peaks))


# ---------------------------------------------------------------- fringes

@dataclass
class InterferencePattern:
    density: np.ndarray
    period_u: float
    period_v: float
    grid: Optional[GridSpec] = None

    def __post_init__(self):
        if not (self.period_u > 0 and self.period_v > 0):
            raise DetectionError("fringe periods must be positive")

    @property
    def ratio(self) -> float:
        return self.period_v / self.period_u


def _dominant_period(profile: np.ndarray, d: float, pad: int = 16, floor: float = 1e-3) -> float:
    n = len(profile)
    win = np.hanning(n)
    spec = np.abs(np.fft.rfft(profile * win, n * pad))
    k = 2 * np.pi * np.fft.rfftfreq(n * pad, d)
    # skip the envelope lobe around k = 0: walk down to its first minimum
    i = 1
    while i < len(spec) - 1 and spec[i] <= spec[i - 1]:
        i += 1
    if i >= len(spec) - 2:
        raise DetectionError("no spectral peak beyond the envelope")
    j = i + int(np.argmax(spec[i:-1]))
    if spec[j] < floor * spec[0] or j >= len(spec) - 1:
        raise DetectionError("spectral peak below noise floor")
    y0, y1, y2 = np.log(spec[j - 1:j + 2] + 1e-300)
    den = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    kstar = k[j] + shift * (k[1] - k[0])
    return 2 * np.pi / kstar


def fringe_periods(density: np.ndarray, grid: GridSpec, **kw) -> InterferencePattern:
    """Dominant fringe periods of a 2D density along x (u) and y (v).

    The density is integrated over the transverse axis first; the peak of the
    windowed, zero-padded spectrum beyond the envelope lobe is refined by
    Gaussian (log-parabolic) interpolation.
    """
    density = np.asarray(density, dtype=float)
    if density.shape != grid.shape:
        raise ContractError("density shape does not match grid")
    u = _dominant_period(density.sum(axis=1) * grid.dy, grid.dx, **kw)
    v = _dominant_period(density.sum(axis=0) * grid.dx, grid.dy, **kw)
    return InterferencePattern(density, u, v, grid)
