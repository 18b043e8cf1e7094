import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sets import FIG1
from volterra_stein.cmatrix import lu_det
from volterra_stein.errors import DomainError
from volterra_stein.kernelops import TimeGrid, kernel_matrices
from volterra_stein.operators import (
    ArgPoint,
    OperatorSet,
    build_ab,
    build_Phi_n,
    build_Phi_tilde_n,
    build_Psi_n_i,
    build_sigma_tilde,
    check_re_positive_definite,
)


@pytest.mark.parametrize("u,w", [(1.2, 0), (-0.1, 0), (0.5, 0.1), (0.5, complex(0.01, 3))])
def test_arg_point_domain(u, w):
    with pytest.raises(DomainError):
        ArgPoint(u, w)


def test_ab_formulas():
    p = FIG1
    pt = ArgPoint(complex(0.5, 2.0), complex(-0.1, 0.3))
    a, b = build_ab(pt, p)
    u = pt.u
    assert a == pytest.approx(pt.w + 0.5 * (u * u - u))
    assert b == pytest.approx(p.rho * p.nu * u)


def test_sigma_tilde_neumann_series_n3():
    km = kernel_matrices(FIG1, 3)
    b = 0.1j
    K, S = km.K_n, km.Sigma_n
    # K is nilpotent of order 3 at n = 3, so the resolvent series terminates
    A = np.eye(3) + b * K + b**2 * K @ K
    expected = A @ S @ A.T
    np.testing.assert_allclose(build_sigma_tilde(km, b), expected, rtol=1e-13, atol=1e-16)


def test_phi_tilde_same_determinant_as_phi():
    km = kernel_matrices(FIG1, 40)
    pt = ArgPoint(complex(0.5, 7.0))
    a, b = build_ab(pt, FIG1)
    phi = build_Phi_n(build_sigma_tilde(km, b), a, km.h)
    phit = build_Phi_tilde_n(km, a, b)
    d1, d2 = lu_det(phi), lu_det(phit)
    assert d1.log_abs == pytest.approx(d2.log_abs, abs=1e-11)
    assert abs(np.remainder(d1.arg - d2.arg + np.pi, 2 * np.pi) - np.pi) < 1e-11


def test_triangular_factor_determinant_is_one():
    km = kernel_matrices(FIG1, 30)
    A = np.eye(30) - (0.3 + 2j) * km.K_n
    d = lu_det(A)
    assert d.log_abs == pytest.approx(0.0, abs=1e-13) and abs(d.arg) < 1e-13


def test_psi_matches_triple_product():
    km = kernel_matrices(FIG1, 25)
    pt = ArgPoint(complex(0.3, 4.0), complex(-0.2, 1.0))
    a, b = build_ab(pt, FIG1)
    A = np.eye(25) - b * km.K_n
    inner = np.linalg.inv(np.eye(25) - 2 * a * km.h * build_sigma_tilde(km, b, 3))
    expected = a * np.linalg.inv(A.T) @ inner @ np.linalg.inv(A)
    np.testing.assert_allclose(build_Psi_n_i(km, a, b, 3), expected, rtol=1e-10, atol=1e-13)


def test_operator_set_caches_and_inner_term():
    km = kernel_matrices(FIG1, 30)
    ops = OperatorSet(km, ArgPoint(complex(0.5, 3.0)))
    assert ops.PhiTilde_n is ops.PhiTilde_n
    g = km.g_n
    assert ops.inner_term() == pytest.approx(km.h * g @ ops.Psi_n @ g, rel=1e-12)


def test_zero_point_is_identity():
    km = kernel_matrices(FIG1, 10)
    ops = OperatorSet(km, ArgPoint(0j, 0j))
    np.testing.assert_array_equal(ops.PhiTilde_n, np.eye(10))
    assert ops.inner_term() == 0


points = st.builds(
    lambda x, y, rw, iw: ArgPoint(complex(x, y), complex(rw, iw)),
    st.floats(0, 1), st.floats(-30, 30), st.floats(-2, 0), st.floats(-30, 30),
)


@given(points, st.sampled_from([0.1, 0.3, 0.5]), st.floats(-1, 1))
@settings(max_examples=60, deadline=None)
def test_re_phi_tilde_positive_definite(pt, hurst, rho):
    p = FIG1.replace(hurst=hurst, rho=rho)
    km = kernel_matrices(p, 20)
    a, b = build_ab(pt, p)
    phit = build_Phi_tilde_n(km, a, b)
    assert check_re_positive_definite(phit) > 0
    np.testing.assert_allclose(phit.imag, phit.imag.T, atol=1e-14)


def test_grid_mismatch_is_independent_of_cache():
    assert kernel_matrices(FIG1, 12).grid == TimeGrid(12, 1.0)
