"""Fourier-Laplace transform E[exp(u log(S_T/S_0) + w int_0^T X_s^2 ds)].

Five evaluators share the inner term h g^T Psi_{n,0} g:

* ``trace``          exp(phi_n + inner) with phi_n from the trace formula;
* ``det_raw``        exp(inner) / sqrt(det Phi_n), principal root (may be off by -1);
* ``hybrid``         det_raw with its sign fixed against a coarse trace value;
* ``lipschitz``      det_raw times exp(i pi k), k accumulated along a scan grid;
* ``prefactor_free`` exp(inner) / det(sqrt Phi_n) built from a continuous root.

The rotation count k satisfies pi k = arg(det Phi_n) / 2 + Im(phi), so that
exp(phi) = exp(i pi k) / sqrt(det Phi_n) with the principal root. A principal
argument jump of more than +pi along a scan therefore increases k by one.
"""
from __future__ import annotations

import cmath
import logging
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from .cmatrix import LogDet
from .errors import ConfigError, DefinitenessError, DomainError, InconsistencyError, NumericalError
from .kernelops import KernelMatrices, ModelParams, TimeGrid
from .operators import ArgPoint, OperatorSet, _AAt, build_ab

log = logging.getLogger(__name__)

METHODS = ("trace", "det_raw", "hybrid", "lipschitz", "prefactor_free")
CORRECTED_METHODS = ("hybrid", "lipschitz", "prefactor_free")


@dataclass
class TransformValue:
    """A transform value with its rotation count and diagnostics."""

    value: complex
    method: str
    n_used: int
    k: Optional[int] = None
    log_abs_det: float = float("nan")
    arg_det: float = float("nan")
    inner: complex = 0j
    diagnostics: Dict[str, object] = field(default_factory=dict)


GridLike = Union[TimeGrid, int]


@lru_cache(maxsize=32)
def _cached_kmats(params: ModelParams, grid: TimeGrid) -> KernelMatrices:
    return KernelMatrices(params, grid)


def get_kernel_matrices(params: ModelParams, grid: GridLike) -> KernelMatrices:
    """Cached KernelMatrices; an integer grid means n steps over [0, maturity]."""
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid, params.maturity)
    return _cached_kmats(params, grid)


def _as_point(point) -> ArgPoint:
    if isinstance(point, ArgPoint):
        return point
    if isinstance(point, tuple):
        return ArgPoint(*point)
    return ArgPoint(point)


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _det_parts(kmats: KernelMatrices, point: ArgPoint) -> Tuple[LogDet, complex, OperatorSet]:
    ops = OperatorSet(kmats, point)
    if ops.a == 0 and ops.b == 0:
        return LogDet(0.0, 0.0), 0j, ops
    logdet = ops.PhiTilde_lu.logdet()
    if logdet.log_abs == -math.inf:
        raise DomainError(f"det(Phi_n) = 0 at u={point.u}, w={point.w}")
    return logdet, ops.inner_term(), ops


def _det_raw_value(logdet: LogDet, inner: complex) -> complex:
    return cmath.exp(inner - 0.5 * logdet.log_abs - 0.5j * logdet.arg)


def trace_phi(kmats: KernelMatrices, point: ArgPoint) -> complex:
    """phi_n = -h sum_i Tr(Psi_{n,i} SigmaDot_{n,i}).

    SigmaDot_{n,i} = -nu^2 f c^T is rank one, so each trace reduces to
    -nu^2 a c^T (Phi~_{n,i})^{-1} f: one LU and one solve per i.
    """
    a, b = build_ab(point, kmats.params)
    if a == 0 or kmats.params.nu == 0:
        return 0j
    nu2 = kmats.params.nu ** 2
    h = kmats.h
    base = _AAt(kmats, b).astype(complex)
    total = 0j
    for i in range(kmats.n):
        f, c = kmats.sigma_dot_factors(i)
        mat = base - (2.0 * a * h) * kmats.Sigma(i)
        x = sla.solve(mat, f.astype(complex), check_finite=False)
        total += c @ x
    return complex(nu2 * a * h * total)


# ---------------------------------------------------------------------------
# Evaluators
# ---------------------------------------------------------------------------

def eval_trace(params: ModelParams, grid: GridLike, point) -> TransformValue:
    """Trace-formula evaluator; O(n^4) and free of branch issues."""
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    ops = OperatorSet(kmats, point)
    inner = ops.inner_term()
    phi = trace_phi(kmats, point)
    return TransformValue(
        value=cmath.exp(phi + inner), method="trace", n_used=kmats.n, inner=inner, diagnostics={"phi": phi}
    )


def eval_det_raw(params: ModelParams, grid: GridLike, point) -> TransformValue:
    """exp(inner) / sqrt(det Phi_n) with the principal square root."""
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    logdet, inner, _ = _det_parts(kmats, point)
    return TransformValue(
        value=_det_raw_value(logdet, inner),
        method="det_raw",
        n_used=kmats.n,
        log_abs_det=logdet.log_abs,
        arg_det=logdet.arg,
        inner=inner,
    )


def eval_hybrid(
    params: ModelParams, grid: GridLike, point, n_coarse: int = 40, floor: float = 1e-12
) -> TransformValue:
    """Fix the det_raw sign against a coarse trace-formula value.

    The sign flips only when both the real and imaginary products are
    negative. If exactly one is negative and the coarse value is below
    ``floor`` in modulus the comparison is uninformative; this is logged and
    flagged in ``diagnostics['ambiguous']``.
    """
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    n_coarse = int(n_coarse)
    if not (2 <= n_coarse <= kmats.n):
        raise ConfigError(f"n_coarse must lie in [2, n={kmats.n}], got {n_coarse}")
    raw = eval_det_raw(params, kmats.grid, point)
    coarse = eval_trace(params, TimeGrid(n_coarse, kmats.grid.T), point).value
    re_prod = raw.value.real * coarse.real
    im_prod = raw.value.imag * coarse.imag
    flip = re_prod < 0 and im_prod < 0
    ambiguous = (re_prod < 0) != (im_prod < 0) and abs(coarse) < floor
    if ambiguous:
        log.warning("hybrid sign test ambiguous at u=%s w=%s (|coarse|=%.3e)", point.u, point.w, abs(coarse))
    k = 1 if flip else 0
    return TransformValue(
        value=-raw.value if flip else raw.value,
        method="hybrid",
        n_used=kmats.n,
        k=k,
        log_abs_det=raw.log_abs_det,
        arg_det=raw.arg_det,
        inner=raw.inner,
        diagnostics={
            "coarse": coarse,
            "n_coarse": n_coarse,
            "one_sided": (re_prod < 0) != (im_prod < 0),
            "ambiguous": ambiguous,
        },
    )


def continuous_log_det_sqrt(phi_tilde: np.ndarray) -> Tuple[complex, np.ndarray]:
    """log det(sqrt Phi) = 1/2 log det R + 1/2 sum Log(1 + i lambda_k).

    R = Re(Phi~) is SPD and lambda_k are the eigenvalues of
    R^{-1/2} Im(Phi~) R^{-1/2}, obtained through the Cholesky factor of R
    (a similar matrix, so the spectrum is identical).
    """
    R = phi_tilde.real
    J = phi_tilde.imag
    try:
        L = np.linalg.cholesky(0.5 * (R + R.T))
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(0.5 * (R + R.T))[0])
        raise DefinitenessError("Re(Phi~) is not positive definite", smallest) from exc
    half_logdet_R = float(np.sum(np.log(np.diag(L))))
    X = sla.solve_triangular(L, 0.5 * (J + J.T), lower=True, check_finite=False)
    M = sla.solve_triangular(L, X.T, lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    return half_logdet_R + 0.5 * np.sum(np.log1p(1j * lam)), lam


def eval_prefactor_free(params: ModelParams, grid: GridLike, point) -> TransformValue:
    """exp(inner) / det(sqrt Phi_n); no rotation count is needed."""
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    ops = OperatorSet(kmats, point)
    if ops.a == 0 and ops.b == 0:
        return TransformValue(1.0 + 0j, "prefactor_free", kmats.n, k=0, log_abs_det=0.0, arg_det=0.0)
    log_sqrt, lam = continuous_log_det_sqrt(ops.PhiTilde_n)
    inner = ops.inner_term()
    arg_det = math.remainder(2.0 * log_sqrt.imag, 2 * math.pi)
    # exp(i pi k) = value / det_raw value
    k = round((0.5 * arg_det - log_sqrt.imag) / math.pi)
    return TransformValue(
        value=cmath.exp(inner - log_sqrt),
        method="prefactor_free",
        n_used=kmats.n,
        k=int(k),
        log_abs_det=2.0 * log_sqrt.real,
        arg_det=arg_det,
        inner=inner,
        diagnostics={"continuous_half_arg": log_sqrt.imag, "lambda_max": float(np.max(np.abs(lam), initial=0.0))},
    )


# ---------------------------------------------------------------------------
# phi~ and the rotation count
# ---------------------------------------------------------------------------

def phi_tilde_n(params: ModelParams, grid: GridLike, point, s_quad_tol: float = 1e-10) -> complex:
    """phi~_n = h int_0^1 a Tr((A A^T - 2 s a h Sigma_n)^{-1} Sigma_n) ds.

    Satisfies exp(-2 phi~_n) = det(Phi_n). The s-integrand is analytic, so
    adaptive Gauss-Kronrod converges in a handful of panels.
    """
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    a, b = build_ab(point, params)
    if a == 0:
        return 0j
    h = kmats.h
    sigma = kmats.Sigma_n
    base = _AAt(kmats, b).astype(complex)

    def integrand(s: float) -> complex:
        sol = sla.solve(base - (2.0 * s * a * h) * sigma, sigma, check_finite=False)
        return complex(a * h * np.trace(sol))

    scale = abs(integrand(0.0)) + abs(integrand(1.0)) + 1e-300
    val, err = integrate.quad(
        integrand, 0.0, 1.0, complex_func=True, epsabs=s_quad_tol * scale, epsrel=s_quad_tol, limit=200
    )
    if not np.isfinite(val):
        raise NumericalError("phi~ quadrature produced a non-finite value")
    return complex(val)


def random_admissible_points(
    rng: np.random.Generator, count: int, im_u_max: float = 10.0, re_w_min: float = -1.0, im_w_max: float = 10.0
) -> list:
    """Uniform draws with 0 <= Re u <= 1, Re w <= 0 and bounded imaginary parts.

    Every such point has Re a <= 0, so Re(Phi~) stays positive definite.
    """
    if count < 0:
        raise ConfigError(f"count must be nonnegative, got {count}")
    out = []
    for _ in range(int(count)):
        u = complex(rng.uniform(0.0, 1.0), rng.uniform(-im_u_max, im_u_max))
        w = complex(rng.uniform(re_w_min, 0.0), rng.uniform(-im_w_max, im_w_max))
        out.append(ArgPoint(u, w))
    return out


def rotation_count(det_value: LogDet, phi: complex, tol: float = 1e-6) -> int:
    """k with pi k = arg(det)/2 + Im(phi); gated on |det| = exp(-2 Re phi)."""
    mod_gap = abs(det_value.log_abs + 2.0 * phi.real)
    if mod_gap > tol * max(1.0, abs(det_value.log_abs)):
        raise InconsistencyError(f"|det| and exp(-2 Re phi) disagree (log gap {mod_gap:.3e})")
    x = (0.5 * det_value.arg + phi.imag) / math.pi
    k = round(x)
    if abs(x - k) > tol:
        raise InconsistencyError(f"rotation count {x:.9f} is not an integer")
    return int(k)


def rotation_count_at(params: ModelParams, grid: GridLike, point, s_quad_tol: float = 1e-10) -> int:
    """Rotation count at one point via phi~_n (independent of any scan)."""
    point = _as_point(point)
    kmats = get_kernel_matrices(params, grid)
    logdet, _, _ = _det_parts(kmats, point)
    return rotation_count(logdet, phi_tilde_n(params, kmats.grid, point, s_quad_tol))


# ---------------------------------------------------------------------------
# Lipschitz scan (precomputed rotation table)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanSpec:
    """A scan along Im(u) (axis 'u') or Im(w) (axis 'w') over [0, upper].

    ``other`` is the value of the argument not being scanned.
    """

    axis: str
    fixed_real: float
    upper: float
    L_theta: float
    other: complex = 0j

    def __post_init__(self):
        if self.axis not in ("u", "w"):
            raise ConfigError(f"scan axis must be 'u' or 'w', got {self.axis!r}")
        if not (self.L_theta > 0 and math.isfinite(self.L_theta)):
            raise ConfigError(f"L_theta must be positive and finite, got {self.L_theta}")
        if not self.upper >= 0:
            raise ConfigError(f"scan upper bound must be nonnegative, got {self.upper}")

    def point(self, x: float) -> ArgPoint:
        z = complex(self.fixed_real, x)
        if self.axis == "u":
            return ArgPoint(z, self.other)
        return ArgPoint(self.other, z)


@dataclass(frozen=True)
class RotationTable:
    """Principal arguments and rotation counts on the Algorithm-2 grid."""

    scan: ScanSpec
    abscissae: np.ndarray
    arg_det: np.ndarray
    k: np.ndarray

    @property
    def step(self) -> float:
        return math.pi / self.scan.L_theta


def accumulate_k(args: np.ndarray) -> np.ndarray:
    """k profile from a sequence of principal arguments (jump > pi => +1)."""
    k = np.zeros(len(args), dtype=int)
    for i in range(1, len(args)):
        d = args[i] - args[i - 1]
        k[i] = k[i - 1] + (1 if d > math.pi else -1 if d < -math.pi else 0)
    return k


def _lip_grid(scan: ScanSpec) -> np.ndarray:
    step = math.pi / scan.L_theta
    N = math.ceil(scan.upper / step) if scan.upper > 0 else 0
    pts = np.arange(N + 1, dtype=float) * step
    if N > 0:
        pts[N] = scan.upper
    return pts


def build_rotation_table(params: ModelParams, grid: GridLike, scan: ScanSpec) -> RotationTable:
    kmats = get_kernel_matrices(params, grid)
    xs = _lip_grid(scan)
    from ._parallel import parallel_map

    args = np.array(parallel_map(lambda x: _det_parts(kmats, scan.point(x))[0].arg, xs))
    return RotationTable(scan, xs, args, accumulate_k(args))


_TABLES: Dict[tuple, RotationTable] = {}
_TABLES_LOCK = threading.Lock()


def rotation_table(params: ModelParams, grid: GridLike, scan: ScanSpec) -> RotationTable:
    """Cached per (params, grid, scan); built once, then read-only."""
    kmats = get_kernel_matrices(params, grid)
    key = (params, kmats.grid, scan)
    with _TABLES_LOCK:
        table = _TABLES.get(key)
        if table is None:
            table = build_rotation_table(params, kmats.grid, scan)
            if len(_TABLES) > 64:
                _TABLES.clear()
            _TABLES[key] = table
    return table


def eval_lipschitz(params: ModelParams, grid: GridLike, scan: ScanSpec, node: float) -> TransformValue:
    """det_raw times exp(i pi k), k from the cached table plus one local step."""
    node = float(node)
    if node < 0 or node > scan.upper * (1 + 1e-12) + 1e-300:
        raise DomainError(f"node {node} outside the scan range [0, {scan.upper}]")
    kmats = get_kernel_matrices(params, grid)
    table = rotation_table(params, kmats.grid, scan)
    raw = eval_det_raw(params, kmats.grid, scan.point(node))
    i = min(int(math.floor(node / table.step)), len(table.abscissae) - 1)
    if i > 0 and table.abscissae[i] > node:
        i -= 1
    d = raw.arg_det - table.arg_det[i]
    k = int(table.k[i]) + (1 if d > math.pi else -1 if d < -math.pi else 0)
    sign = -1.0 if k % 2 else 1.0
    return TransformValue(
        value=sign * raw.value,
        method="lipschitz",
        n_used=kmats.n,
        k=k,
        log_abs_det=raw.log_abs_det,
        arg_det=raw.arg_det,
        inner=raw.inner,
        diagnostics={"table_index": i, "table_size": len(table.abscissae)},
    )


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

def evaluate(
    method: str,
    params: ModelParams,
    grid: GridLike,
    point,
    *,
    n_coarse: int = 40,
    scan: Optional[ScanSpec] = None,
) -> TransformValue:
    """Evaluate with a method tag. ``lipschitz`` needs a scan spec; the node is
    read from the scanned coordinate of ``point``."""
    point = _as_point(point)
    if method == "trace":
        return eval_trace(params, grid, point)
    if method == "det_raw":
        return eval_det_raw(params, grid, point)
    if method == "hybrid":
        return eval_hybrid(params, grid, point, n_coarse)
    if method == "prefactor_free":
        return eval_prefactor_free(params, grid, point)
    if method == "lipschitz":
        if scan is None:
            raise ConfigError("method 'lipschitz' requires a scan specification")
        node = point.u.imag if scan.axis == "u" else point.w.imag
        return eval_lipschitz(params, grid, scan, node)
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
