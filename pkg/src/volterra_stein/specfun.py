"""Special functions and Gauss-Laguerre quadrature.

Gamma and the hypergeometric function are thin, validated wrappers around
``math.gamma`` and ``scipy.special.hyp2f1``. Gauss-Laguerre nodes come from
the Golub-Welsch eigenproblem; weights are kept in log form so that the
``w * exp(x)`` combination used by Fourier pricing never overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import hyp2f1

from .errors import ConfigError, DomainError

MAX_LAGUERRE_DEGREE = 256


def gamma_fn(x: float) -> float:
    """Gamma function for positive real arguments."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"gamma_fn requires a finite positive argument, got {x!r}")
    return math.gamma(x)


def hyp2f1_special(alpha: float, x):
    """Evaluate 2F1(1, 1 - alpha; 1 + alpha; x) for alpha in (1/2, 3/2), x in [0, 1].

    Accepts a scalar or an array for ``x``. Since c - a - b = 2 alpha - 1 > 0
    the series converges at x = 1, where the Gauss value is returned exactly.
    """
    alpha = float(alpha)
    if not (0.5 < alpha < 1.5):
        raise DomainError(f"alpha must lie in (1/2, 3/2), got {alpha}")
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0.0) or np.any(xa > 1.0):
        raise DomainError("hyp2f1_special requires 0 <= x <= 1")
    if alpha == 1.0:
        out = np.ones_like(xa)
    else:
        out = hyp2f1(1.0, 1.0 - alpha, 1.0 + alpha, xa)
        at_one = xa == 1.0
        if np.any(at_one):
            out = np.where(at_one, _gauss_value(alpha), out)
    return float(out) if np.ndim(out) == 0 else out


def _gauss_value(alpha: float) -> float:
    # 2F1(a,b;c;1) = G(c)G(c-a-b) / (G(c-a)G(c-b))
    return math.gamma(1 + alpha) * math.gamma(2 * alpha - 1) / (math.gamma(2 * alpha) * math.gamma(alpha))


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Laguerre rule for the weight exp(-x) on [0, inf).

    ``log_weights`` is the primary storage; ``weights`` may underflow to zero
    for the largest nodes of high-degree rules.
    """

    degree: int
    nodes: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def damped_weights(self) -> np.ndarray:
        """Weights times exp(node), for integrands without the exp(-x) factor."""
        return np.exp(self.log_weights + self.nodes)

    def integrate(self, f) -> float:
        """Approximate the integral of f(x) exp(-x) over [0, inf)."""
        return float(np.sum(self.weights * f(self.nodes)))


_RESCALE = 1e-100
_LOG_RESCALE = 100.0 * math.log(10.0)


def _laguerre_pair(m: int, x: np.ndarray):
    """Return (L_m(x), L_{m-1}(x)) up to a common positive scale factor."""
    p_prev = np.ones_like(x)
    p = 1.0 - x
    for k in range(1, m):
        p_next = ((2 * k + 1 - x) * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
        big = np.abs(p) > 1e100
        if np.any(big):
            p = np.where(big, p * _RESCALE, p)
            p_prev = np.where(big, p_prev * _RESCALE, p_prev)
    return p, p_prev


def _christoffel_log_weights(m: int, x: np.ndarray) -> np.ndarray:
    """log w_j = -log sum_{k<m} L_k(x_j)^2 (the L_k are orthonormal for exp(-x)).

    The sum of squares has no cancellation, so this is far less sensitive to
    node perturbations than the classical L_{m+1} formula.
    """
    p_prev = np.ones_like(x)
    total = p_prev.copy()
    log_scale = np.zeros_like(x)
    if m == 1:
        return -np.log(total)
    p = 1.0 - x
    total = total + p * p
    for k in range(1, m - 1):
        p_next = ((2 * k + 1 - x) * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
        total = total + p * p
        big = np.abs(p) > 1e100
        if np.any(big):
            p = np.where(big, p * _RESCALE, p)
            p_prev = np.where(big, p_prev * _RESCALE, p_prev)
            total = np.where(big, total * _RESCALE**2, total)
            log_scale = log_scale + np.where(big, 2.0 * _LOG_RESCALE, 0.0)
    return -(np.log(total) + log_scale)


@lru_cache(maxsize=64)
def _gauss_laguerre_cached(degree: int):
    if degree == 1:
        nodes = np.array([1.0])
    else:
        k = np.arange(degree, dtype=float)
        nodes = eigh_tridiagonal(2.0 * k + 1.0, np.arange(1, degree, dtype=float), eigvals_only=True)
        # Newton polishing on L_m; the ratio L_m / L_m' is scale-free.
        for _ in range(2):
            lm, lm1 = _laguerre_pair(degree, nodes)
            nodes = nodes - lm / (degree * (lm - lm1) / nodes)
    log_w = _christoffel_log_weights(degree, nodes)
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    return nodes, log_w


def gauss_laguerre(degree: int) -> QuadratureRule:
    """Gauss-Laguerre rule of the given degree (1 <= degree <= 256)."""
    if isinstance(degree, bool) or int(degree) != degree:
        raise ConfigError(f"quadrature degree must be an integer, got {degree!r}")
    degree = int(degree)
    if degree < 1 or degree > MAX_LAGUERRE_DEGREE:
        raise ConfigError(f"quadrature degree must lie in [1, {MAX_LAGUERRE_DEGREE}], got {degree}")
    nodes, log_w = _gauss_laguerre_cached(degree)
    return QuadratureRule(degree=degree, nodes=nodes, log_weights=log_w)
