"""Dense linear-algebra helpers: LU inverse and log-polar determinant,
symmetric eigendecomposition, and SPD matrix square roots.

LAPACK (through scipy/numpy) does the factorizations; this module adds the
error semantics and the overflow-safe determinant representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DefinitenessError, DomainError, NumericalError, SingularMatrixError


@dataclass(frozen=True)
class LogDet:
    """Determinant as log|det| and principal argument in (-pi, pi].

    ``value`` is the reconstructed complex number; it may be 0 or inf when the
    modulus under- or overflows, while ``log_abs`` and ``arg`` remain exact.
    """

    log_abs: float
    arg: float

    @property
    def value(self) -> complex:
        if self.log_abs == -math.inf:
            return 0j
        return complex(np.exp(self.log_abs) * np.exp(1j * self.arg))

    def sqrt_principal(self) -> complex:
        """Principal square root of the determinant."""
        return complex(np.exp(0.5 * self.log_abs + 0.5j * self.arg))


@dataclass(frozen=True)
class LUFactor:
    """LU factorization with partial pivoting, reusable for solves."""

    lu: np.ndarray
    piv: np.ndarray

    def solve(self, rhs: np.ndarray, trans: int = 0) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), rhs, trans=trans, check_finite=False)

    def logdet(self) -> LogDet:
        diag = np.diag(self.lu)
        if np.any(diag == 0):
            return LogDet(-math.inf, 0.0)
        swaps = int(np.count_nonzero(self.piv != np.arange(len(self.piv))))
        log_abs = float(np.sum(np.log(np.abs(diag))))
        # Accumulate the angle of each pivot and reduce once at the end.
        arg = float(np.sum(np.angle(diag))) + math.pi * (swaps % 2)
        return LogDet(log_abs, _wrap(arg))


def _wrap(angle: float) -> float:
    """Reduce an angle to (-pi, pi]."""
    out = math.remainder(angle, 2.0 * math.pi)
    if out <= -math.pi:
        out += 2.0 * math.pi
    return out


def _check_square(A: np.ndarray, name: str = "matrix"):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")


def lu_factor(A: np.ndarray) -> LUFactor:
    """Partial-pivoting LU factorization of a square (real or complex) matrix."""
    A = np.asarray(A)
    _check_square(A)
    lu, piv = sla.lu_factor(A, check_finite=False)
    return LUFactor(lu, piv)


def lu_invert(A: np.ndarray) -> np.ndarray:
    """Inverse via LU; raises SingularMatrixError on an exactly zero pivot."""
    fac = lu_factor(A)
    zero = np.flatnonzero(np.diag(fac.lu) == 0)
    if zero.size:
        raise SingularMatrixError("matrix is singular", int(zero[0]))
    return fac.solve(np.eye(A.shape[0], dtype=fac.lu.dtype))


def lu_det(A: np.ndarray) -> LogDet:
    """Determinant in log-polar form from the LU pivots and permutation sign."""
    return lu_factor(A).logdet()


@dataclass(frozen=True)
class SymEigen:
    """Eigen-decomposition of a real symmetric matrix, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigen(S: np.ndarray) -> SymEigen:
    """Symmetric eigendecomposition (LAPACK syevd), sorted descending."""
    S = np.asarray(S, dtype=float)
    _check_square(S)
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > 1e-12 * scale:
        raise DomainError("sym_eigen requires a symmetric matrix")
    try:
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver did not converge: {exc}") from exc
    return SymEigen(vals[::-1].copy(), vecs[:, ::-1].copy())


def spd_power(S: np.ndarray, p: float) -> np.ndarray:
    """S^p for symmetric positive definite S and p in {-1/2, 1/2}."""
    if p not in (0.5, -0.5):
        raise DomainError(f"spd_power supports p = +/-1/2, got {p}")
    eig = sym_eigen(S)
    lam = eig.eigenvalues
    scale = np.max(np.abs(lam)) if lam.size else 1.0
    if lam.size and lam[-1] <= 1e-12 * scale:
        raise DefinitenessError("matrix is not positive definite", float(lam[-1]))
    Q = eig.eigenvectors
    return (Q * lam**p) @ Q.T
