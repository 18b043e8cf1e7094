"""Crossing diagnostics for det(Phi_n) along Im(u) or Im(w).

When b is real the adjusted covariance h Sigma~_n is symmetric PSD with
eigenvalues lambda_k, and

    det Phi_n = prod_k (x_k + i y_k),  x_k = 1 - 2 Re(a) lambda_k,  y_k = -2 Im(a) lambda_k,

so its continuous argument is theta = sum_k arctan(y_k / x_k). A crossing of
the negative real axis happens whenever theta passes an odd multiple of pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ._parallel import parallel_map
from .cmatrix import sym_eigen
from .errors import ConfigError, DomainError
from .kernelops import ModelParams
from .operators import ArgPoint, build_sigma_tilde
from .transform import GridLike, _det_parts, accumulate_k, get_kernel_matrices


@dataclass(frozen=True)
class CrossingScan:
    """Scan of arg det(Phi_n) over [0, upper] with spacing ``step``."""

    axis: str
    fixed_real: float
    upper: float
    step: float
    other: complex = 0j

    def __post_init__(self):
        if self.axis not in ("u", "w"):
            raise ConfigError(f"scan axis must be 'u' or 'w', got {self.axis!r}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ConfigError(f"scan step must be positive, got {self.step}")
        if not self.upper >= 0:
            raise ConfigError(f"scan upper bound must be nonnegative, got {self.upper}")

    def point(self, x: float) -> ArgPoint:
        z = complex(self.fixed_real, x)
        return ArgPoint(z, self.other) if self.axis == "u" else ArgPoint(self.other, z)

    def abscissae(self) -> np.ndarray:
        N = int(math.ceil(self.upper / self.step - 1e-12)) if self.upper > 0 else 0
        xs = np.arange(N + 1, dtype=float) * self.step
        if N > 0:
            xs[-1] = self.upper
        return xs


@dataclass
class Crossing:
    lo: float
    hi: float
    direction: int

    @property
    def location(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass
class CrossingReport:
    axis: str
    fixed_real: float
    grid: np.ndarray
    arg_det: np.ndarray
    k_profile: np.ndarray
    crossings: List[Crossing]
    spectrum: np.ndarray
    bounds: Dict[float, Optional[float]] = field(default_factory=dict)

    @property
    def first_crossing(self) -> Optional[float]:
        return self.crossings[0].location if self.crossings else None


# ---------------------------------------------------------------------------
# Spectrum and angle
# ---------------------------------------------------------------------------

def spectrum(params: ModelParams, grid: GridLike, b_real: float = 0.0) -> np.ndarray:
    """Descending eigenvalues of h Sigma~_n for a real b (symmetric case)."""
    if isinstance(b_real, complex):
        if b_real.imag != 0:
            raise DomainError("spectrum requires a real b; use the rho = 0 operator otherwise")
        b_real = b_real.real
    kmats = get_kernel_matrices(params, grid)
    st = kmats.h * build_sigma_tilde(kmats, float(b_real), 0)
    lam = sym_eigen(st).eigenvalues
    scale = max(lam[0], 0.0) if lam.size else 0.0
    if lam.size and lam[-1] < -1e-12 * max(scale, 1e-300) and lam[-1] < -1e-12:
        raise DomainError(f"adjusted covariance has a negative eigenvalue {lam[-1]:.3e}")
    return np.clip(lam, 0.0, None)


def crossing_spectrum(params: ModelParams, grid: GridLike, point: ArgPoint) -> np.ndarray:
    """Spectrum used by the bounds: the true one when b is real, else the rho = 0 one."""
    if params.rho * point.u.imag != 0:
        return spectrum(params.replace(rho=0.0), grid, 0.0)
    b = params.rho * params.nu * point.u.real
    return spectrum(params, grid, b)


def theta_from_spectrum(spec: np.ndarray, a: complex) -> float:
    """Continuous argument sum_k arctan(y_k / x_k) of prod_k (1 - 2 a lambda_k)."""
    a = complex(a)
    lam = np.asarray(spec, dtype=float)
    x = 1.0 - 2.0 * a.real * lam
    if np.any(x <= 0):
        raise DomainError("theta_from_spectrum requires Re(a) <= 0")
    y = -2.0 * a.imag * lam
    return float(np.sum(np.arctan(y / x)))


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------

def _arg_at(kmats, scan: CrossingScan, x: float) -> float:
    return _det_parts(kmats, scan.point(x))[0].arg


def _wrap_jump(d: float) -> int:
    return 1 if d > math.pi else -1 if d < -math.pi else 0


def scan_crossings(
    params: ModelParams,
    grid: GridLike,
    scan: CrossingScan,
    *,
    bounds_r: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> CrossingReport:
    """Tabulate arg det(Phi_n), accumulate k, and bisect every wrap."""
    kmats = get_kernel_matrices(params, grid)
    xs = scan.abscissae()
    args = np.array(parallel_map(lambda x: _arg_at(kmats, scan, x), xs, workers))
    k = accumulate_k(args)
    crossings: List[Crossing] = []
    width = scan.step / 100.0
    for i in np.flatnonzero(np.diff(k)):
        lo, hi = float(xs[i]), float(xs[i + 1])
        a_lo = float(args[i])
        direction = int(k[i + 1] - k[i])
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            a_mid = _arg_at(kmats, scan, mid)
            if _wrap_jump(a_mid - a_lo) != 0:
                hi = mid
            else:
                lo, a_lo = mid, a_mid
        crossings.append(Crossing(lo, hi, direction))

    ref_point = scan.point(0.0)
    spec = crossing_spectrum(params, kmats.grid, ref_point)
    report = CrossingReport(scan.axis, scan.fixed_real, xs, args, k, crossings, spec)
    if bounds_r is None:
        bounds_r = default_r_grid(spec)
    for r in bounds_r:
        if scan.axis == "w":
            report.bounds[float(r)] = bound_first_crossing_intvar(spec, r, scan.fixed_real)
        else:
            report.bounds[float(r)] = bound_first_crossing_logprice(spec, r, scan.fixed_real)
    return report


def default_r_grid(spec: np.ndarray, count: int = 10) -> np.ndarray:
    """Log grid of thresholds r from lambda_1 / 1e4 up to just below lambda_3."""
    spec = np.asarray(spec)
    if spec.size < 3 or spec[2] <= 0:
        return np.array([])
    return np.geomspace(spec[0] * 1e-4, spec[2] * (1 - 1e-9), count)


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

def _count_above(spec: np.ndarray, r: float) -> int:
    return int(np.count_nonzero(np.asarray(spec) > r))


def bound_first_crossing_intvar(spec: np.ndarray, r: float, re_w: float) -> Optional[float]:
    """tan(pi / N_r) (1 / (2r) - Re w), or None when N_r < 3."""
    if r <= 0:
        raise ConfigError(f"r must be positive, got {r}")
    if re_w > 0:
        raise DomainError(f"Re(w) must be <= 0, got {re_w}")
    nr = _count_above(spec, r)
    if nr < 3:
        return None
    return math.tan(math.pi / nr) * (1.0 / (2.0 * r) - re_w)


def bound_first_crossing_logprice(spec: np.ndarray, r: float, re_u: float, tight: bool = False) -> Optional[float]:
    """Log-price first-crossing bound (rho = 0 spectrum).

    With A = |1 - 2s| / (2 tan(pi / N_r)) and C = 1/r + s(1 - s), the default
    returns A - sqrt(A^2 - 4C). Solving arctan(...) >= pi / N_r for every
    eigenvalue above r gives the sharper A - sqrt(A^2 - C), available with
    ``tight=True``; the default is weaker but remains a valid upper bound.
    """
    if r <= 0:
        raise ConfigError(f"r must be positive, got {r}")
    if not (0.0 <= re_u <= 1.0):
        raise DomainError(f"Re(u) must lie in [0, 1], got {re_u}")
    nr = _count_above(spec, r)
    if nr < 3 or re_u == 0.5:
        return None
    tan = math.tan(math.pi / nr)
    A = abs(1.0 - 2.0 * re_u) / (2.0 * tan)
    C = 1.0 / r + re_u * (1.0 - re_u)
    radicand = A * A - (C if tight else 4.0 * C)
    if radicand < 0:
        return None
    return A - math.sqrt(radicand)


def lipschitz_bound_intvar(spec: np.ndarray, re_w: float) -> float:
    """L = 2 sum arctan(lambda / (1 - 2 Re(w) lambda)).

    This controls |theta(w1) - theta(w2)| for separations |Im w1 - Im w2| >= 1,
    which covers the Algorithm-2 step pi / L whenever L <= pi. For shorter
    separations use :func:`lipschitz_bound_intvar_strict`.
    """
    if re_w > 0:
        raise DomainError(f"Re(w) must be <= 0, got {re_w}")
    lam = np.asarray(spec, dtype=float)
    return float(2.0 * np.sum(np.arctan(lam / (1.0 - 2.0 * re_w * lam))))


def lipschitz_bound_intvar_strict(spec: np.ndarray, re_w: float) -> float:
    """Global Lipschitz constant sup |theta'| = 2 sum lambda / (1 - 2 Re(w) lambda)."""
    if re_w > 0:
        raise DomainError(f"Re(w) must be <= 0, got {re_w}")
    lam = np.asarray(spec, dtype=float)
    return float(2.0 * np.sum(lam / (1.0 - 2.0 * re_w * lam)))


def lipschitz_estimate_empirical(
    params: ModelParams,
    grid: GridLike,
    scan: CrossingScan,
    probe_count: int = 64,
    safety: float = 1.5,
    seed: int = 0,
) -> float:
    """Estimate the Lipschitz constant of the continuous arg det along a scan.

    One short random pair is drawn in each of ``probe_count`` strata of
    [0, upper]; the slope is the wrapped principal-argument difference over
    the pair separation. The best stratum is then refined with a local dense
    probe, and the maximum slope is multiplied by ``safety``.
    """
    if probe_count < 16:
        raise ConfigError(f"probe_count must be >= 16, got {probe_count}")
    if safety < 1:
        raise ConfigError(f"safety must be >= 1, got {safety}")
    if params.nu == 0 or scan.upper <= 0:
        return 0.0
    kmats = get_kernel_matrices(params, grid)
    rng = np.random.default_rng(seed)
    width = scan.upper / probe_count
    eps = width / 16.0

    def slope(x: float, d: float) -> float:
        da = _arg_at(kmats, scan, x + d) - _arg_at(kmats, scan, x)
        da = math.remainder(da, 2.0 * math.pi)
        return abs(da) / d

    starts = (np.arange(probe_count) + rng.random(probe_count)) * width
    starts = np.minimum(starts, scan.upper - eps)
    slopes = np.array(parallel_map(lambda x: slope(float(x), eps), starts))
    best = int(np.argmax(slopes))
    lo = max(0.0, starts[best] - width)
    hi = min(scan.upper - eps / 4, starts[best] + width)
    local = np.linspace(lo, hi, probe_count // 2 + 1)
    refined = max(slope(float(x), eps / 4) for x in local)
    return float(safety * max(float(slopes.max()), refined))


def theta_scan_intvar(spec: np.ndarray, re_w: float, im_w: np.ndarray) -> np.ndarray:
    """theta(w) along Im(w) for the integrated-variance case (a = w)."""
    return np.array([theta_from_spectrum(spec, complex(re_w, v)) for v in np.atleast_1d(im_w)])
