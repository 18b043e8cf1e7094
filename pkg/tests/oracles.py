"""Independent reference computations used by the tests."""
import itertools

import mpmath as mp
import numpy as np

from volterra_stein.kernelops import TimeGrid, build_g_n


def eigen_product_transform(params, n, w):
    """E[exp(w int X^2)] at u = 0 from the spectrum of h Sigma_n.

    Per-factor principal roots of (1 - 2 w lam_k) and the inner term
    a sum_k p_k / (1 - 2 w lam_k) with p_k = h (q_k . g)^2.
    """
    from volterra_stein.kernelops import build_Sigma_n

    grid = TimeGrid(n, params.maturity)
    h = grid.h
    lam, Q = np.linalg.eigh(h * build_Sigma_n(params, grid, 0))
    lam = np.clip(lam, 0.0, None)
    proj = h * (Q.T @ build_g_n(params, grid)) ** 2
    fac = 1.0 - 2.0 * w * lam
    inner = w * np.sum(proj / fac)
    return complex(np.exp(inner) * np.prod(1.0 / np.sqrt(fac.astype(complex))))


def eigen_product_angle(params, n, w):
    """Continuous argument sum_k arg(1 - 2 w lam_k) for Re w <= 0."""
    from volterra_stein.kernelops import build_Sigma_n

    grid = TimeGrid(n, params.maturity)
    lam = np.clip(np.linalg.eigvalsh(grid.h * build_Sigma_n(params, grid, 0)), 0.0, None)
    return float(np.sum(np.angle(1.0 - 2.0 * w * lam)))


def mp_fractional_kernel(hurst):
    alpha = mp.mpf(hurst) + mp.mpf(1) / 2

    def K(t, s):
        t, s = mp.mpf(t), mp.mpf(s)
        return (t - s) ** (alpha - 1) / mp.gamma(alpha) if t > s else mp.mpf(0)

    return K


def mp_sigma_entry(params, grid, j, k):
    """nu^2 int_0^{min(t_j, t_k)} K(t_j, s) K(t_k, s) ds with mpmath.

    With s = top - r^q the kernel arguments t - s = (t - top) + r^q are formed
    without cancellation, and q removes the endpoint singularity.
    """
    if min(j, k) == 0:
        return 0.0
    with mp.workdps(30):
        alpha = mp.mpf(params.hurst) + mp.mpf(1) / 2
        h = mp.mpf(grid.T) / grid.n
        tj, tk = j * h, k * h
        top = min(tj, tk)
        dj, dk = tj - top, tk - top
        q = 1 / (2 * alpha - 1) if j == k else 1 / alpha
        g = mp.gamma(alpha)

        def f(r):
            rq = r**q
            return (dj + rq) ** (alpha - 1) * (dk + rq) ** (alpha - 1) * q * r ** (q - 1) / g**2

        val = mp.quad(f, [0, top ** (1 / q)])
    return float(params.nu**2 * val)


def mp_kernel_cell(params, t, a, b):
    """int_a^b K(t, s) ds with mpmath."""
    K = mp_fractional_kernel(params.hurst)
    with mp.workdps(30):
        return float(mp.quad(lambda s: K(t, s), [a, b]))


def mp_kernel_cell_first(params, t_i, a, b):
    """int_a^b K(s, t_i) ds with mpmath (integration over the first argument)."""
    K = mp_fractional_kernel(params.hurst)
    with mp.workdps(30):
        return float(mp.quad(lambda s: K(s, t_i), [a, b]))


def leibniz_det(A):
    n = A.shape[0]
    total = 0
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = (-1) ** inversions
        for i in range(n):
            term = term * A[i, perm[i]]
        total += term
    return total


def cofactor_inverse(A):
    n = A.shape[0]
    adj = np.zeros_like(A, dtype=complex)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(A, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * leibniz_det(minor)
    return adj / leibniz_det(A)


def bs_put_mp(s0, K, v):
    s0, K, v = mp.mpf(s0), mp.mpf(K), mp.mpf(v)
    sd = mp.sqrt(v)
    d1 = (mp.log(s0 / K) + v / 2) / sd
    d2 = d1 - sd
    return float(K * mp.ncdf(-d2) - s0 * mp.ncdf(-d1))


def continuous_arg_steps(values):
    return np.unwrap(np.angle(values))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def sign_flips(xs, ys):
    """Indices i where ys changes sign between i and i + 1."""
    ys = np.asarray(ys)
    return [i for i in range(len(ys) - 1) if ys[i] * ys[i + 1] < 0]


def max_jump_ratio(ys):
    d = np.abs(np.diff(np.asarray(ys)))
    return float(d.max() / max(np.median(d), 1e-300))


__all__ = [name for name in dir() if not name.startswith("_") and name not in ("itertools", "mp", "np")]
