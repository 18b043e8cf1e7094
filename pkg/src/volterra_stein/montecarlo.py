"""Monte Carlo oracle for the Volterra Stein-Stein model.

The volatility on the left knots t_j = j dt is the discrete convolution

    X_j = g0(t_j) + nu * sum_{k<j} (K_n)_{jk} / dt * dW_k

with exactly the integrated-kernel weights of ``build_K_n``, so its covariance
is nu^2 K_n K_n^T / dt. The log-price follows an Euler step with the Ito
correction and the integrated variance is the left-point Riemann sum.

Randomness comes from Philox with one SeedSequence substream per fixed-size
block of paths, so results do not depend on the worker count. Normals are
drawn by inverse CDF from uniforms on the open interval (0, 1), which makes
the antithetic mirror exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtri

from ._parallel import parallel_map
from .errors import ConfigError, DomainError
from .kernelops import ModelParams, TimeGrid, build_K_n, build_g_n

MAX_CELLS = 2 * 10**10  # paths x steps ceiling


@dataclass(frozen=True)
class McConfig:
    """Path count, time steps, seed and antithetic flag."""

    paths: int
    steps: int
    seed: int = 0
    antithetic: bool = True
    block_size: int = 4096

    def __post_init__(self):
        for name in ("paths", "steps", "block_size"):
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.paths < 2:
            raise ConfigError(f"paths must be >= 2, got {self.paths}")
        if self.steps < 2:
            raise ConfigError(f"steps must be >= 2, got {self.steps}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.antithetic and (self.paths % 2 or self.block_size % 2):
            raise ConfigError("antithetic sampling needs an even path count and block size")
        if self.block_size < 2:
            raise ConfigError(f"block_size must be >= 2, got {self.block_size}")
        if self.paths * self.steps > MAX_CELLS:
            raise ConfigError(f"paths x steps = {self.paths * self.steps:.3g} exceeds the limit {MAX_CELLS:.1g}")


@dataclass
class McResult:
    """Sample mean with standard error and symmetric 95% interval."""

    price: float
    stderr: float
    ci95: Tuple[float, float]
    samples: int

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "McResult":
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        return cls(mean, se, (mean - 1.96 * se, mean + 1.96 * se), int(x.size))

    def contains(self, value: float) -> bool:
        return self.ci95[0] <= value <= self.ci95[1]


@dataclass
class McComplexResult:
    """Componentwise mean and standard errors of a complex sample."""

    real: McResult
    imag: McResult

    @property
    def mean(self) -> complex:
        return complex(self.real.price, self.imag.price)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _open_uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniforms (k + 1/2) 2^-53 with k a 53-bit integer: strictly inside (0, 1)."""
    raw = gen.bit_generator.random_raw(int(np.prod(shape))).reshape(shape)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _block_normals(config: McConfig, block: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    seq = np.random.SeedSequence(int(config.seed), spawn_key=(block,))
    gen = np.random.Generator(np.random.Philox(seq))
    fresh = size // 2 if config.antithetic else size
    z = ndtri(_open_uniforms(gen, (2, fresh, config.steps)))
    if config.antithetic:
        # rows 2m and 2m+1 are mirror images
        z = np.stack([z, -z], axis=2).reshape(2, size, config.steps)
    return z[0], z[1]


def _blocks(config: McConfig) -> List[Tuple[int, int]]:
    out = []
    start, b = 0, 0
    while start < config.paths:
        size = min(config.block_size, config.paths - start)
        out.append((b, size))
        start += size
        b += 1
    return out


class _Scheme:
    """Per-(params, steps) convolution weights and input curve."""

    def __init__(self, params: ModelParams, steps: int):
        self.params = params
        grid = TimeGrid(steps, params.maturity)
        self.dt = grid.h
        K = build_K_n(params, grid)
        # lag weights (K_n)_{j, j-m} / dt for m = 1..steps-1, zero at lag 0
        self.lag = np.concatenate([[0.0], K[1:, 0]]) / self.dt
        self.g0 = build_g_n(params, grid)

    def vol(self, dW: np.ndarray) -> np.ndarray:
        conv = fftconvolve(dW, self.lag[None, :], axes=1)[:, : dW.shape[1]]
        return self.g0[None, :] + self.params.nu * conv


def _simulate_block(scheme: _Scheme, config: McConfig, block: int, size: int, want_vol: bool):
    p = scheme.params
    z_w, z_perp = _block_normals(config, block, size)
    sq = math.sqrt(scheme.dt)
    dW = sq * z_w
    X = scheme.vol(dW)
    dB = p.rho * dW + math.sqrt(max(1.0 - p.rho * p.rho, 0.0)) * sq * z_perp
    var_step = X * X * scheme.dt
    log_s = math.log(p.s0) + np.sum(X * dB - 0.5 * var_step, axis=1)
    int_var = np.sum(var_step, axis=1)
    return log_s, int_var, (X if want_vol else None)


def _run(params: ModelParams, config: McConfig, want_vol: bool, workers: Optional[int]):
    if params.maturity <= 0:
        raise ConfigError("maturity must be positive")
    scheme = _Scheme(params, config.steps)
    parts = parallel_map(lambda item: _simulate_block(scheme, config, item[0], item[1], want_vol), _blocks(config), workers)
    log_s = np.concatenate([x[0] for x in parts])
    int_var = np.concatenate([x[1] for x in parts])
    vol = np.concatenate([x[2] for x in parts]) if want_vol else None
    return log_s, int_var, vol


def simulate_terminals(
    params: ModelParams, config: McConfig, workers: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-path log S_T and left-point integrated variance."""
    log_s, int_var, _ = _run(params, config, False, workers)
    return log_s, int_var


def simulate_vol_paths(params: ModelParams, config: McConfig, workers: Optional[int] = None) -> np.ndarray:
    """Volatility at the left knots, shape (paths, steps)."""
    return _run(params, config, True, workers)[2]


def discrete_vol_covariance(params: ModelParams, steps: int) -> np.ndarray:
    """Exact covariance of the simulated X: nu^2 K_n K_n^T / dt."""
    grid = TimeGrid(steps, params.maturity)
    K = build_K_n(params, grid)
    return params.nu**2 * (K @ K.T) / grid.h


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _pair_average(x: np.ndarray, config: McConfig) -> np.ndarray:
    """Antithetic pairs are averaged so the standard error uses independent samples."""
    if config.antithetic:
        return 0.5 * (x[0::2] + x[1::2])
    return x


def mc_estimate(
    params: ModelParams, config: McConfig, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], workers=None
) -> McResult:
    """Mean of fn(log S_T, integrated variance) over simulated paths."""
    log_s, int_var = simulate_terminals(params, config, workers)
    return McResult.from_samples(_pair_average(np.asarray(fn(log_s, int_var), dtype=float), config))


def _check_payoff(strike: float, payoff: str):
    if not strike > 0:
        raise ConfigError(f"strike must be positive, got {strike}")
    if payoff not in ("call", "put"):
        raise ConfigError(f"payoff must be 'call' or 'put', got {payoff!r}")


def price_from_terminals(log_s: np.ndarray, config: McConfig, strike: float, payoff: str = "call") -> McResult:
    """Payoff statistics from simulated log S_T; lets several strikes share one simulation."""
    _check_payoff(strike, payoff)
    sign = 1.0 if payoff == "call" else -1.0
    values = np.maximum(sign * (np.exp(log_s) - strike), 0.0)
    return McResult.from_samples(_pair_average(values, config))


def mc_price(
    params: ModelParams, config: McConfig, strike: float, payoff: str = "call", workers: Optional[int] = None
) -> McResult:
    """Zero-rate European call or put price."""
    _check_payoff(strike, payoff)
    log_s, _ = simulate_terminals(params, config, workers)
    return price_from_terminals(log_s, config, strike, payoff)


def mc_integrated_variance_transform(
    params: ModelParams, config: McConfig, w: complex, workers: Optional[int] = None
) -> McComplexResult:
    """Sample mean of exp(w int_0^T X^2 ds) for purely imaginary w."""
    w = complex(w)
    if w.real > 0:
        raise DomainError(f"Re(w) must be <= 0, got {w.real}")
    if w.real != 0:
        raise DomainError("w must be purely imaginary")
    _, int_var = simulate_terminals(params, config, workers)
    vals = np.exp(w * int_var)
    re = McResult.from_samples(_pair_average(vals.real, config))
    im = McResult.from_samples(_pair_average(vals.imag, config))
    return McComplexResult(re, im)
