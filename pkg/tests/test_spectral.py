import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import eigh_tridiagonal

from annbif.radial import solve_radial
from annbif.spectral import (
    DegeneracyPoint,
    alpha1,
    alpha1_at,
    harmonic_multiplicity,
    morse_change,
    morse_index,
    mu,
    parity_report,
    scan_alpha1,
    smallest_eigenvalue,
    sturm_count,
)

from conftest import P1_N2, P1_N3, P2_N2, P2_N3, P3_N3


@pytest.mark.parametrize("k,N,val", [(1, 3, 2), (0, 5, 0), (2, 4, 8), (3, 2, 9)])
def test_mu(k, N, val):
    assert mu(k, N) == val


@pytest.mark.parametrize("j,N,val", [(0, 3, 1), (0, 7, 1), (1, 3, 3), (2, 3, 5), (1, 5, 5), (2, 4, 9), (3, 2, 2)])
def test_multiplicity(j, N, val):
    assert harmonic_multiplicity(j, N) == val


def test_multiplicity_is_exact_for_huge_arguments():
    m = harmonic_multiplicity(400, 60)
    assert isinstance(m, int) and m.bit_length() > 64


def test_multiplicity_rejects_floats():
    with pytest.raises(TypeError):
        harmonic_multiplicity(1.0, 3)


@given(j=st.integers(0, 40), N=st.integers(3, 12))
def test_multiplicity_matches_dimension_difference(j, N):
    # harmonics of degree j = polynomials of degree j minus those of degree j-2
    def polys(d):
        return math.comb(d + N - 1, N - 1) if d >= 0 else 0

    assert harmonic_multiplicity(j, N) == polys(j) - polys(j - 2)


@given(N=st.integers(3, 8))
def test_multiplicity_n3_pattern(N):
    assert [harmonic_multiplicity(j, 3) for j in range(6)] == [2 * j + 1 for j in range(6)]


@pytest.mark.parametrize("a,N,m", [(-1.0, 3, 1), (-3.0, 3, 4), (-2.0, 3, 1), (-6.0, 3, 4), (-6.5, 3, 9)])
def test_morse_index_examples(a, N, m):
    assert morse_index(a, N) == m


def test_morse_index_rejects_nonnegative():
    with pytest.raises(ValueError):
        morse_index(0.0, 3)


@given(N=st.integers(2, 9), a=st.floats(-500, -1e-6), b=st.floats(-500, -1e-6))
def test_morse_index_monotone(N, a, b):
    lo, hi = min(a, b), max(a, b)
    assert morse_index(lo, N) >= morse_index(hi, N)


@given(N=st.integers(2, 9), a=st.floats(-500, -1e-6))
def test_morse_index_closed_form(N, a):
    bound = (2 - N) / 2 + 0.5 * math.sqrt((N - 2) ** 2 - 4 * a)
    expect = sum(harmonic_multiplicity(j, N) for j in range(int(math.ceil(bound)) + 1) if j < bound)
    assert morse_index(a, N) == expect


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.data())
def test_sturm_count_matches_lapack(d, data):
    d = np.array(d)
    e = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=d.size - 1, max_size=d.size - 1)))
    vals = eigh_tridiagonal(d, e, eigvals_only=True)
    x = data.draw(st.floats(-12, 12))
    if np.min(np.abs(vals - x)) > 1e-9:
        assert sturm_count(d, e, x) == int(np.sum(vals < x))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.data())
def test_smallest_eigenvalue_matches_lapack(d, data):
    d = np.array(d)
    e = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=d.size - 1, max_size=d.size - 1)))
    lo, hi = smallest_eigenvalue(d, e)
    ref = eigh_tridiagonal(d, e, eigvals_only=True)[0]
    assert lo - 1e-12 <= ref <= hi + 1e-12


@pytest.fixture(scope="module")
def pair(cfg):
    return alpha1(solve_radial(cfg))


def test_pair_invariants(pair):
    assert pair.alpha1 < 0
    w = pair.w1
    assert w[0] == 0.0 and w[-1] == 0.0
    assert np.all(w[1:-1] > 0) and np.max(w) == 1.0


def test_weak_form(pair):
    assert pair.weak_form_residual() < 1e-10


def test_matches_lapack_on_pencil(pair):
    from annbif.spectral import pencil

    kd, ke, bd = pencil(pair.profile)
    s = 1 / np.sqrt(bd)
    ref = eigh_tridiagonal(kd * s * s, ke * s[:-1] * s[1:], eigvals_only=True, select="i", select_range=(0, 0))[0]
    assert abs(ref - pair.alpha1) < 1e-9 * abs(ref)


def test_second_order(cfg):
    a = [alpha1_at(cfg, n=n).alpha1 for n in (129, 257, 513)]
    assert 3.5 <= (a[0] - a[1]) / (a[1] - a[2]) <= 4.5


def test_scan_negative_and_rejects_bad_grid(cfg):
    rows = scan_alpha1(cfg, [1.1, 2.0, 7.0])
    assert all(a < 0 for _, a in rows)
    with pytest.raises(ValueError):
        scan_alpha1(cfg, [2.0, 1.5])
    with pytest.raises(ValueError):
        scan_alpha1(cfg, [0.9, 2.0])


def test_sign_asymptotics(cfg):
    assert alpha1_at(cfg, 1.05).alpha1 + mu(1, 3) > 0
    assert alpha1_at(cfg, 30.0).alpha1 + mu(1, 3) < 0


# -- degeneracies ------------------------------------------------------------


def test_frozen_degeneracies(degeneracies):
    for k, ref in ((1, P1_N3), (2, P2_N3), (3, P3_N3)):
        pts = degeneracies[k]
        assert len(pts) == 1
        assert abs(pts[0].p_star - ref) < 1e-9


@pytest.mark.parametrize("k,jump", [(1, 3), (2, 5), (3, 7)])
def test_morse_jump(degeneracies, k, jump):
    d = degeneracies[k][0]
    assert d.is_morse_change
    assert d.morse_after - d.morse_before == jump == harmonic_multiplicity(k, 3)
    assert d.defect < 1e-9 * d.mu_k


def test_sign_products_negative(cfg, degeneracies):
    for k in (1, 2):
        d = degeneracies[k][0]
        d0 = cfg.delta_rel * d.p_star
        for delta in (d0, d0 / 2, d0 / 4):
            assert morse_change(cfg, k, d.p_star, delta)[2] < 0


def test_n2_degeneracies(degeneracies_n2):
    (d1,), (d2,) = degeneracies_n2[1], degeneracies_n2[2]
    assert abs(d1.p_star - P1_N2) < 1e-9 and abs(d2.p_star - P2_N2) < 1e-9
    assert (d1.morse_before, d1.morse_after) == (1, 3)
    assert (d2.morse_before, d2.morse_after) == (3, 5)


def test_parity_reports(degeneracies):
    assert parity_report([]) == {"k": None, "count": 0, "parity": "even", "odd": False, "p_stars": []}
    assert parity_report(degeneracies[1])["odd"]
    fake = [DegeneracyPoint(p, 1, 2, 1, 4, True) for p in (1.1, 1.4)]
    assert parity_report(fake)["parity"] == "even"
    with pytest.raises(ValueError):
        parity_report([fake[0], DegeneracyPoint(1.3, 2, 6, 4, 9, True)])


def test_record_schema(degeneracies):
    rec = degeneracies[1][0].to_record()
    assert set(rec) == {"p_star", "k", "mu_k", "morse_before", "morse_after", "is_morse_change"}
