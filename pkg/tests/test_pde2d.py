import json

import numpy as np
import pytest

from annbif.config import ProblemConfig
from annbif.errors import GridMismatch
from annbif.harmonics import build_harmonic
from annbif.pde2d import (
    Field2D,
    Operator2D,
    angular_weights,
    apply_T,
    linearized_eigenpairs,
    radial_embed,
    residual_S,
    separable_field,
    sup_distance_up_to_sign,
)
from annbif.radial import solve_radial
from annbif.spectral import alpha1
from annbif.verify import manufactured_errors

from conftest import P1_N3, P2_N3


def test_stencil_signs(op3, op2):
    for op in (op3, op2):
        d = op.stencil_diagnostics()
        assert d["m_matrix_signs"] and d["max_offdiagonal"] < 0


@pytest.mark.parametrize("N", [3, 4, 5, 7])
def test_angular_weights_integrate_sphere(N):
    th = np.linspace(0, np.pi, 129)
    V = angular_weights(th, N)
    from math import gamma, pi, sqrt

    exact = sqrt(pi) * gamma((N - 1) / 2) / gamma(N / 2)  # ∫ sin^{N-2}
    assert abs(V.sum() - exact) < 1e-12


def test_zero_maps_to_zero(op3):
    z = op3.zeros()
    assert np.all(apply_T(3.0, z, op3).values == 0)
    assert np.all(residual_S(3.0, z, op3).values == 0)


def test_radial_data_radial_output(op3, rng):
    g = op3.field(np.repeat(rng.random(op3.n_rho)[:, None], op3.n_theta, axis=1))
    g.values[[0, -1]] = 0
    w = apply_T(2.0, g, op3)
    assert w.nonradial_measure() < 1e-12 * w.sup


def test_even_data_even_output(op3, rng):
    v = rng.random(op3.shape)
    v = v + v[:, ::-1]
    v[[0, -1]] = 0
    w = apply_T(3.0, op3.field(v), op3)
    assert np.max(np.abs(w.values - w.values[:, ::-1])) < 1e-12 * w.sup


def test_maximum_principle(op3, rng):
    for _ in range(20):
        g = rng.random(op3.shape)
        g[[0, -1]] = 0
        w = apply_T(2.0, op3.field(g), op3)
        assert w.values.min() >= -1e-12 * w.sup


@pytest.mark.parametrize("N", [2, 3, 4, 5, 7])
def test_manufactured_second_order(N):
    e = manufactured_errors(ProblemConfig(N=N, lam=-1.5))
    for a, b in zip(e, e[1:]):
        assert 3.5 <= a / b <= 4.5


def test_residual_of_embedded_radial(cfg, op3):
    u = radial_embed(solve_radial(cfg), op3)
    assert u.nonradial_measure() == 0.0
    S = residual_S(cfg.p, u, op3)
    h = op3.h
    assert S.sup < 5 * h * h * u.sup


def test_embed_zero_profile(cfg, op3):
    prof = solve_radial(cfg, n=op3.n_rho)
    zero = type(prof)(prof.config, prof.r_grid, 0 * prof.values, prof.slope_a, prof.kappa, method="fd")
    assert radial_embed(zero, op3).sup == 0.0


def test_grid_mismatch(op3, op2):
    with pytest.raises(GridMismatch):
        apply_T(2.0, op2.zeros(), op3)


def test_field_serialization(op3, tmp_path):
    f = separable_field(op3, np.sin(np.linspace(0, np.pi, op3.n_rho)), np.cos(op3.theta))
    f.to_json(tmp_path / "f.json")
    back = Field2D.from_record(json.loads((tmp_path / "f.json").read_text()))
    assert np.array_equal(back.values, f.values)
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "rho,theta,value" and len(lines) == f.values.size + 1
    # ρ-major ordering
    assert lines[2].split(",")[0] == lines[1].split(",")[0]


def test_reflections(op3, op2, rng):
    for op in (op3, op2):
        f = op.field(rng.random(op.shape))
        assert np.array_equal(f.reflect().reflect().values, f.values)
    f2 = op2.field(np.outer(np.ones(op2.n_rho), np.sin(op2.theta)))
    assert np.allclose(f2.reflect().values, -f2.values, atol=1e-14)


@pytest.fixture(scope="module")
def spectra(cfg, op3):
    out = {}
    for k, p in ((1, P1_N3), (2, P2_N3)):
        prof = solve_radial(cfg.with_p(p))
        out[k] = (prof, linearized_eigenpairs(p, prof, 5, op3))
    return out


@pytest.mark.parametrize("k", [1, 2])
def test_zero_eigenvalue_at_degeneracy(spectra, k, op3):
    prof, sp = spectra[k]
    i, rel = sp.nearest_zero()
    assert rel < 1e-3
    w1 = alpha1(prof).w1
    from annbif.radial import resample_profile

    w1 = alpha1(resample_profile(prof, op3.rho)).w1
    sep = separable_field(op3, w1, build_harmonic(k, 3).of_theta(op3.theta))
    assert sup_distance_up_to_sign(sp.vectors[i], sep) < 1e-3


def test_no_zero_eigenvalue_between(cfg, op3):
    p = 0.5 * (P1_N3 + P2_N3)
    prof = solve_radial(cfg.with_p(p))
    sp = linearized_eigenpairs(p, prof, 5, op3)
    _, rel = sp.nearest_zero()
    assert rel > 1e-2
