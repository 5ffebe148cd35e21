from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from annbif.errors import DomainError
from annbif.harmonics import (
    build_harmonic,
    chebyshev_points,
    count_roots,
    count_sign_changes,
    eval_harmonic,
    harmonic_report,
    interlaces,
    isolate_roots,
    jacobi_ode_residual,
    poly_eval_exact,
    sup_norm,
    theta_derivative_sign_profile,
)
from annbif.spectral import mu

NS = (3, 4, 5, 7)
Z = chebyshev_points(1001)


@pytest.mark.parametrize("N", NS)
def test_phi1_closed_form(N):
    h = build_harmonic(1, N)
    assert h.coeffs == (Fraction(0), Fraction(N - 1, 2))


@pytest.mark.parametrize("N", NS + (6, 9))
def test_phi3_closed_form(N):
    c = Fraction((N + 3) * (N + 1), 48)
    assert build_harmonic(3, N).coeffs == (0, -3 * c, 0, (N + 2) * c)


def test_phi2_legendre_at_n3():
    assert build_harmonic(2, 3).coeffs == (Fraction(-1, 2), 0, Fraction(3, 2))


@pytest.mark.parametrize("N", NS + (6, 8))
def test_phi2_rodrigues_prefactor(N):
    # (N+1)/8 (N z^2 - 1)
    c = Fraction(N + 1, 8)
    assert build_harmonic(2, N).coeffs == (-c, 0, N * c)


@pytest.mark.parametrize("N", NS)
def test_phi2_zero_location(N):
    assert abs(eval_harmonic(build_harmonic(2, N), 1 / np.sqrt(N))) < 1e-14


@pytest.mark.parametrize("k", range(11))
@pytest.mark.parametrize("N", NS)
def test_ode_residual(k, N):
    h = build_harmonic(k, N)
    assert jacobi_ode_residual(h, Z) < 1e-10 * sup_norm(h)


@pytest.mark.parametrize("N", NS)
def test_low_degree_residuals_vanish(N):
    assert jacobi_ode_residual(build_harmonic(0, N), Z) == 0.0
    assert jacobi_ode_residual(build_harmonic(1, N), Z) == 0.0


@pytest.mark.parametrize("k", range(11))
@pytest.mark.parametrize("N", NS)
def test_sign_changes_and_degree(k, N):
    h = build_harmonic(k, N)
    assert h.degree == k
    assert count_sign_changes(h) == k
    assert h.mu_k == mu(k, N)


@pytest.mark.parametrize("N", NS)
def test_interlacing(N):
    for k in range(1, 10):
        assert interlaces(build_harmonic(k, N), build_harmonic(k + 1, N))


@given(k=st.integers(0, 10), N=st.integers(3, 9), z=st.floats(-1, 1))
def test_parity(k, N, z):
    h = build_harmonic(k, N)
    assert all(c == 0 for c in h.coeffs[(k + 1) % 2::2])
    assert abs(eval_harmonic(h, -z) - (-1) ** k * eval_harmonic(h, z)) <= 1e-12 * sup_norm(h)


@given(k=st.integers(0, 8), N=st.integers(3, 9), num=st.integers(-50, 50))
def test_exact_ode_at_rationals(k, N, num):
    # (1-z²)Φ'' - (N-1)zΦ' + μΦ vanishes identically in exact arithmetic
    from annbif.harmonics import poly_deriv

    h = build_harmonic(k, N)
    z = Fraction(num, 50)
    d1 = poly_deriv(h.coeffs)
    d2 = poly_deriv(d1)
    val = (1 - z * z) * poly_eval_exact(d2, z) - (N - 1) * z * poly_eval_exact(d1, z) + h.mu_k * poly_eval_exact(h.coeffs, z)
    assert val == 0


def test_domain_error():
    h = build_harmonic(2, 3)
    with pytest.raises(DomainError):
        eval_harmonic(h, 1.01)
    assert np.isfinite(eval_harmonic(h, 1.0 + 1e-13))


def test_theta_profiles():
    p1 = theta_derivative_sign_profile(build_harmonic(1, 3))
    assert p1["nonpositive"] and not p1["changes_sign"]
    p2 = theta_derivative_sign_profile(build_harmonic(2, 3))
    assert p2["changes_sign"] and p2["exact_sign_changes"] == 1
    p3 = theta_derivative_sign_profile(build_harmonic(3, 3))
    assert p3["exact_sign_changes"] >= 2 and p3["grid_sign_changes"] >= 2


@pytest.mark.parametrize("k", range(7))
def test_n2_trig(k):
    h = build_harmonic(k, 2)
    assert h.kind == "trig" and h.mu_k == k * k == mu(k, 2)
    th = np.linspace(0, np.pi, 37)
    assert np.allclose(h.of_theta(th), np.cos(k * th), atol=1e-14)
    assert np.allclose(eval_harmonic(h, np.cos(th)), np.cos(k * th), atol=1e-12)


def test_root_isolation():
    h = build_harmonic(5, 4)
    iv = isolate_roots(h.coeffs)
    assert len(iv) == 5
    assert all(count_roots(h.coeffs, a, b) == 1 for a, b in iv)


def test_report_notes_prefactor():
    rep = harmonic_report(3, (3,))
    assert "phi2_prefactor" in rep["notes"]
    assert len(rep["harmonics"]) == 4
    assert rep["harmonics"][2]["coeffs_exact"] == ["-1/2", "0", "3/2"]


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_harmonic(-1, 3)
    with pytest.raises(ValueError):
        build_harmonic(1, 1)
