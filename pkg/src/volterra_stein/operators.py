"""(u, w)-dependent operator matrices.

With A = I - b K_n the adjusted covariance is Sigma~ = A^{-1} Sigma A^{-T}
and Phi_n = I - 2 a h Sigma~. Conjugating by A gives

    Phi~_n = A Phi_n A^T = I - b (K + K^T) + b^2 K K^T - 2 a h Sigma_n,

which has the same determinant (A is unit lower triangular) and avoids the
resolvent entirely. Transposes never conjugate: K_n is real and the model's
formulas are bilinear, not sesquilinear, in the complex parameters.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .cmatrix import LUFactor, lu_factor
from .errors import DefinitenessError, DomainError, SingularMatrixError
from .kernelops import KernelMatrices, ModelParams


@dataclass(frozen=True)
class ArgPoint:
    """Transform argument (u, w) with 0 <= Re u <= 1 and Re w <= 0."""

    u: complex
    w: complex = 0j

    def __post_init__(self):
        u, w = complex(self.u), complex(self.w)
        if not (cmath.isfinite(u) and cmath.isfinite(w)):
            raise DomainError("transform arguments must be finite")
        if not (-1e-14 <= u.real <= 1.0 + 1e-14):
            raise DomainError(f"Re(u) must lie in [0, 1], got {u.real}")
        if w.real > 1e-14:
            raise DomainError(f"Re(w) must be <= 0, got {w.real}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)

    def conjugate(self) -> "ArgPoint":
        return ArgPoint(self.u.conjugate(), self.w.conjugate())


def build_ab(point: ArgPoint, params: ModelParams):
    """a = w + (u^2 - u) / 2 and b = kappa + rho nu u (kappa = 0)."""
    u = point.u
    a = point.w + 0.5 * (u * u - u)
    b = params.kappa + params.rho * params.nu * u
    return complex(a), complex(b)


def _resolvent_factor(kmats: KernelMatrices, b: complex) -> np.ndarray:
    return np.eye(kmats.n) - b * kmats.K_n


def build_sigma_tilde(kmats: KernelMatrices, b: complex, i: int = 0) -> np.ndarray:
    """A^{-1} Sigma_{n,i} A^{-T} with A = I - b K_n (unit lower triangular)."""
    sigma = kmats.Sigma(i)
    if b == 0:
        return np.array(sigma, dtype=float)
    A = _resolvent_factor(kmats, b)
    X = sla.solve_triangular(A, sigma, lower=True, unit_diagonal=True)
    # Sigma symmetric => (A^{-1} Sigma A^{-T})^T = A^{-1} X^T
    return sla.solve_triangular(A, X.T, lower=True, unit_diagonal=True).T


def build_Phi_n(sigma_tilde: np.ndarray, a: complex, h: float) -> np.ndarray:
    """Phi_n = I - 2 a h Sigma~_n."""
    n = sigma_tilde.shape[0]
    return np.eye(n) - 2.0 * a * h * sigma_tilde


def _AAt(kmats: KernelMatrices, b: complex) -> np.ndarray:
    return np.eye(kmats.n) - b * kmats.KpKt + b * b * kmats.KKt


def build_Phi_tilde_n(kmats: KernelMatrices, a: complex, b: complex, i: int = 0) -> np.ndarray:
    """Phi~_{n,i} = I - b (K + K^T) + b^2 K K^T - 2 a h Sigma_{n,i}."""
    out = _AAt(kmats, b) - 2.0 * a * kmats.h * kmats.Sigma(i)
    return out.astype(complex, copy=False)


def build_Psi_n_i(kmats: KernelMatrices, a: complex, b: complex, i: int = 0) -> np.ndarray:
    """Psi_{n,i} = a A^{-T} (I - 2 a h Sigma~_{n,i})^{-1} A^{-1} = a (Phi~_{n,i})^{-1}."""
    n = kmats.n
    if a == 0:
        return np.zeros((n, n), dtype=complex)
    fac = lu_factor(build_Phi_tilde_n(kmats, a, b, i))
    zero = np.flatnonzero(np.diag(fac.lu) == 0)
    if zero.size:
        raise SingularMatrixError("I - 2ah Sigma~ is singular; point outside the admissible set", int(zero[0]))
    return a * fac.solve(np.eye(n, dtype=complex))


def check_re_positive_definite(phi_tilde: np.ndarray) -> float:
    """Return the smallest eigenvalue of Re(Phi~); raise if not positive."""
    R = phi_tilde.real
    asym = np.max(np.abs(R - R.T))
    if asym > 1e-12 * max(1.0, np.max(np.abs(R))):
        raise DomainError(f"Re(Phi~) is not symmetric (max asymmetry {asym:.3e})")
    smallest = float(np.linalg.eigvalsh(0.5 * (R + R.T))[0])
    if smallest <= 0.0:
        raise DefinitenessError("Re(Phi~) is not positive definite", smallest)
    return smallest


class OperatorSet:
    """Operators at one (u, w) point. Matrices are built on first access."""

    def __init__(self, kmats: KernelMatrices, point: ArgPoint):
        self.kmats = kmats
        self.point = point
        self.a, self.b = build_ab(point, kmats.params)

    @cached_property
    def SigmaTilde_n(self) -> np.ndarray:
        return build_sigma_tilde(self.kmats, self.b, 0)

    @cached_property
    def Phi_n(self) -> np.ndarray:
        return build_Phi_n(self.SigmaTilde_n, self.a, self.kmats.h)

    @cached_property
    def PhiTilde_n(self) -> np.ndarray:
        return build_Phi_tilde_n(self.kmats, self.a, self.b, 0)

    @cached_property
    def PhiTilde_lu(self) -> LUFactor:
        fac = lu_factor(self.PhiTilde_n)
        zero = np.flatnonzero(np.diag(fac.lu) == 0)
        if zero.size:
            raise SingularMatrixError("Phi~_n is singular; point outside the admissible set", int(zero[0]))
        return fac

    @cached_property
    def Psi_n(self) -> np.ndarray:
        if self.a == 0:
            return np.zeros((self.kmats.n, self.kmats.n), dtype=complex)
        return self.a * self.PhiTilde_lu.solve(np.eye(self.kmats.n, dtype=complex))

    def inner_term(self) -> complex:
        """h * g^T Psi_{n,0} g, computed with one solve instead of an inverse."""
        if self.a == 0:
            return 0j
        g = self.kmats.g_n
        return complex(self.a * self.kmats.h * (g @ self.PhiTilde_lu.solve(g.astype(complex))))
