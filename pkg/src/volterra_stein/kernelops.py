"""Discretized (u, w)-independent objects: K_n, Sigma_{n,i}, SigmaDot_{n,i}, g_n.

Indexing is zero-based throughout: row j of every matrix refers to the knot
t_j = j h with h = T / n, so the one-based entry (j, k) of the textbook
formulas, which uses t_{j-1} and t_{k-1}, is row j-1 and column k-1 here.

The fractional (Riemann-Liouville) kernel has closed forms for every entry.
Any other Volterra kernel can be supplied through :class:`NumericKernel`,
whose entries are computed by adaptive quadrature.
"""
from __future__ import annotations

import dataclasses
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .specfun import gamma_fn, hyp2f1_special


@dataclass(frozen=True)
class ModelParams:
    """Volterra Stein-Stein parameters with fractional kernel and kappa = 0.

    The input curve is g0(t) = x0 + theta * t^alpha / Gamma(1 + alpha) with
    alpha = hurst + 1/2.
    """

    nu: float
    theta: float
    rho: float
    x0: float
    hurst: float
    s0: float = 1.0
    maturity: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        for name in ("nu", "theta", "rho", "x0", "hurst", "s0", "maturity", "kappa"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(float(value)):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.kappa != 0.0:
            raise ConfigError("only kappa = 0 is supported; absorb mean reversion into the kernel first")
        if not (0.0 < self.hurst < 1.0):
            raise ConfigError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.nu < 0.0:
            raise ConfigError(f"nu must be nonnegative, got {self.nu}")
        if abs(self.rho) > 1.0:
            raise ConfigError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.s0 <= 0.0:
            raise ConfigError(f"s0 must be positive, got {self.s0}")
        if self.maturity <= 0.0:
            raise ConfigError(f"maturity must be positive, got {self.maturity}")

    @property
    def alpha(self) -> float:
        return self.hurst + 0.5

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# nu = 0 is allowed so that degenerate Black-Scholes and "no crossing" checks
# can be expressed with the same type; every formula stays well defined.


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i T / n, i = 0..n."""

    n: int
    T: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or int(self.n) < 1:
            raise ConfigError(f"grid size n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"grid horizon T must be positive, got {self.T!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def knots(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @classmethod
    def for_params(cls, params: ModelParams, n: int) -> "TimeGrid":
        return cls(n, params.maturity)


# ---------------------------------------------------------------------------
# Fractional kernel closed forms
# ---------------------------------------------------------------------------

def fractional_kernel(hurst: float) -> Callable[[float, float], float]:
    """Pointwise K(t, s) = (t - s)^(H - 1/2) / Gamma(H + 1/2) for s < t, else 0."""
    alpha = hurst + 0.5
    norm = gamma_fn(alpha)

    def kernel(t: float, s: float) -> float:
        return (t - s) ** (alpha - 1.0) / norm if s < t else 0.0

    return kernel


def build_K_n(params: ModelParams, grid: TimeGrid) -> np.ndarray:
    """Integrated-kernel matrix, strictly lower triangular and Toeplitz."""
    n, h, alpha = grid.n, grid.h, params.alpha
    lags = np.arange(n, dtype=float)
    # weight for lag m >= 1: h^alpha (m^alpha - (m-1)^alpha) / Gamma(1+alpha)
    col = np.zeros(n)
    col[1:] = h**alpha * (lags[1:] ** alpha - lags[:-1] ** alpha) / gamma_fn(1.0 + alpha)
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    return np.where(idx > 0, col[np.clip(idx, 0, None)], 0.0)


def _sigma_base(params: ModelParams, grid: TimeGrid) -> np.ndarray:
    """Sigma_{n,0}; the family is shift invariant, Sigma_{n,i}[j,k] = Sigma_{n,0}[j-i,k-i]."""
    n, h, alpha, nu = grid.n, grid.h, params.alpha, params.nu
    idx = np.arange(n)
    lo = np.minimum.outer(idx, idx).astype(float)
    hi = np.maximum.outer(idx, idx).astype(float)
    out = np.zeros((n, n))
    mask = lo > 0
    if alpha == 1.0:
        out[mask] = nu**2 * lo[mask] * h
        return out
    ratio = lo[mask] / hi[mask]
    pref = nu**2 / (gamma_fn(alpha) * gamma_fn(1.0 + alpha))
    out[mask] = pref * (lo[mask] * h) ** alpha / (hi[mask] * h) ** (1.0 - alpha) * hyp2f1_special(alpha, ratio)
    return 0.5 * (out + out.T)


def build_Sigma_n(params: ModelParams, grid: TimeGrid, i: int = 0) -> np.ndarray:
    """Covariance matrix Sigma_{n,i}; entries vanish unless i < min(j, k)."""
    _check_index(grid, i)
    base = _sigma_base(params, grid)
    return _shift(base, i)


def _shift(base: np.ndarray, i: int) -> np.ndarray:
    if i == 0:
        return base
    n = base.shape[0]
    out = np.zeros_like(base)
    out[i:, i:] = base[: n - i, : n - i]
    return out


def sigma_dot_factors(params: ModelParams, grid: TimeGrid, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rank-one factors (f, c) with SigmaDot_{n,i} = -nu^2 f c^T.

    f_j = K(t_j, t_i) for j > i and c_k = integral of K(s, t_i) over [t_k, t_{k+1}]
    for k >= i. At j = i the pointwise kernel is singular (H < 1/2) or zero
    (H > 1/2); we use its cell average h^(alpha-1) / Gamma(1+alpha), which is
    the value 1 at H = 1/2.
    """
    _check_index(grid, i)
    n, h, alpha = grid.n, grid.h, params.alpha
    steps = np.arange(n - i, dtype=float)
    f = np.zeros(n)
    c = np.zeros(n)
    with np.errstate(divide="ignore"):
        f[i + 1 :] = (steps[1:] * h) ** (alpha - 1.0) / gamma_fn(alpha)
    f[i] = h ** (alpha - 1.0) / gamma_fn(1.0 + alpha)
    c[i:] = (((steps + 1.0) * h) ** alpha - (steps * h) ** alpha) / gamma_fn(1.0 + alpha)
    return f, c


def build_SigmaDot_n(params: ModelParams, grid: TimeGrid, i: int) -> np.ndarray:
    """SigmaDot_{n,i} as a dense matrix (nonpositive, supported on i <= min(j,k))."""
    f, c = sigma_dot_factors(params, grid, i)
    return -params.nu**2 * np.outer(f, c)


def build_g_n(params: ModelParams, grid: TimeGrid) -> np.ndarray:
    """Input curve g0 at the left knots t_0..t_{n-1}."""
    t = grid.knots[:-1]
    return params.x0 + params.theta * t**params.alpha / gamma_fn(1.0 + params.alpha)


def _check_index(grid: TimeGrid, i: int):
    if int(i) != i or not (0 <= i < grid.n):
        raise ConfigError(f"index i must lie in 0..{grid.n - 1}, got {i!r}")


# ---------------------------------------------------------------------------
# Generic numeric kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericKernel:
    """User-supplied Volterra kernel K(t, s), zero for s >= t.

    Entries are integrals of the kernel over grid cells, computed with
    adaptive Gauss-Kronrod quadrature. ``g0`` is the input curve; when absent,
    g0(t) = x0 + theta * integral_0^t K(t, s) ds.
    """

    kernel: Callable[[float, float], float]
    g0: Optional[Callable[[float], float]] = None
    tol: float = 1e-10

    def _quad(self, func, a, b):
        if b <= a:
            return 0.0
        val, _ = integrate.quad(func, a, b, epsabs=self.tol * 1e-3, epsrel=self.tol, limit=200)
        return val

    def K_n(self, grid: TimeGrid) -> np.ndarray:
        knots, n = grid.knots, grid.n
        out = np.zeros((n, n))
        for j in range(1, n):
            for k in range(j):
                out[j, k] = self._quad(lambda s: self.kernel(knots[j], s), knots[k], knots[k + 1])
        return out

    def Sigma_n(self, params: ModelParams, grid: TimeGrid, i: int = 0) -> np.ndarray:
        knots, n = grid.knots, grid.n
        out = np.zeros((n, n))
        for j in range(i + 1, n):
            for k in range(i + 1, j + 1):
                val = params.nu**2 * self._quad(
                    lambda s: self.kernel(knots[j], s) * self.kernel(knots[k], s), knots[i], knots[k]
                )
                out[j, k] = out[k, j] = val
        return out

    def sigma_dot_factors(self, grid: TimeGrid, i: int) -> Tuple[np.ndarray, np.ndarray]:
        knots, n, h = grid.knots, grid.n, grid.h
        f = np.zeros(n)
        c = np.zeros(n)
        for j in range(i + 1, n):
            f[j] = self.kernel(knots[j], knots[i])
        f[i] = self._quad(lambda s: self.kernel(s, knots[i]), knots[i], knots[i + 1]) / h
        for k in range(i, n):
            c[k] = self._quad(lambda s: self.kernel(s, knots[i]), knots[k], knots[k + 1])
        return f, c

    def g_n(self, params: ModelParams, grid: TimeGrid) -> np.ndarray:
        t = grid.knots[:-1]
        if self.g0 is not None:
            return np.array([self.g0(tj) for tj in t], dtype=float)
        return np.array(
            [params.x0 + params.theta * self._quad(lambda s: self.kernel(tj, s), 0.0, tj) for tj in t]
        )


# ---------------------------------------------------------------------------
# Container
# ---------------------------------------------------------------------------

class KernelMatrices:
    """All (u, w)-independent discretized objects for one (params, grid).

    ``Sigma(i)`` and ``sigma_dot(i)`` are filled lazily and cached; concurrent
    fills are idempotent and guarded by a lock. Arrays handed out are
    read-only.
    """

    def __init__(self, params: ModelParams, grid: TimeGrid, kernel: Optional[NumericKernel] = None):
        self.params = params
        self.grid = grid
        self.kernel = kernel
        if kernel is None:
            self.K_n = build_K_n(params, grid)
            self._sigma0 = _sigma_base(params, grid)
            self.g_n = build_g_n(params, grid)
        else:
            self.K_n = kernel.K_n(grid)
            self._sigma0 = kernel.Sigma_n(params, grid, 0)
            self.g_n = kernel.g_n(params, grid)
        self.KKt = self.K_n @ self.K_n.T
        self.KpKt = self.K_n + self.K_n.T
        for arr in (self.K_n, self._sigma0, self.g_n, self.KKt, self.KpKt):
            arr.setflags(write=False)
        self._sigma_cache: Dict[int, np.ndarray] = {0: self._sigma0}
        self._dot_cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def Sigma_n(self) -> np.ndarray:
        return self._sigma0

    def Sigma(self, i: int) -> np.ndarray:
        _check_index(self.grid, i)
        cached = self._sigma_cache.get(i)
        if cached is not None:
            return cached
        if self.kernel is None:
            mat = _shift(self._sigma0, i)
        else:
            mat = self.kernel.Sigma_n(self.params, self.grid, i)
        mat.setflags(write=False)
        with self._lock:
            return self._sigma_cache.setdefault(i, mat)

    def sigma_dot_factors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        cached = self._dot_cache.get(i)
        if cached is not None:
            return cached
        if self.kernel is None:
            f, c = sigma_dot_factors(self.params, self.grid, i)
        else:
            f, c = self.kernel.sigma_dot_factors(self.grid, i)
        f.setflags(write=False)
        c.setflags(write=False)
        with self._lock:
            return self._dot_cache.setdefault(i, (f, c))

    def SigmaDot(self, i: int) -> np.ndarray:
        f, c = self.sigma_dot_factors(i)
        return -self.params.nu**2 * np.outer(f, c)


@lru_cache(maxsize=16)
def kernel_matrices(params: ModelParams, n: int) -> KernelMatrices:
    """Cached fractional-kernel matrices for (params, n) on [0, params.maturity]."""
    return KernelMatrices(params, TimeGrid(n, params.maturity))
