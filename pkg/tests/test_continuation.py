import numpy as np
import pytest

from annbif.cones import is_in_K2, tangent_membership
from annbif.continuation import (
    TERMINATIONS,
    BranchTracer,
    StepControls,
    branch_summary,
    branches_to_diagram,
    continue_branch,
    discrete_mu,
    initial_tangent,
    local_model_check,
)
from annbif.errors import CorrectorFailure
from annbif.pde2d import residual_S
from annbif.spectral import DegeneracyPoint, mu

# the ±1 branches of k = 1 are mirror images; the pairing equation fixes p
# with sensitivity ~1/ε and d log u/dp is O(10²) near p = 1, so roundoff in
# the corrector shows up amplified by ~1e5 in the mirror comparison
MIRROR_TOL = 1e-7


def test_tangent_cones(dp1, dp2, cfg, op3):
    t1 = initial_tangent(dp1, cfg, op3)
    t2 = initial_tangent(dp2, cfg, op3)
    assert t1.sup == pytest.approx(1.0) and t2.sup == pytest.approx(1.0)
    assert tangent_membership(t1, "K1").member and not tangent_membership(t1, "K2").member
    assert tangent_membership(t2, "K2").member and not tangent_membership(t2, "K1").member


@pytest.mark.parametrize("which", ["dp1", "dp2"])
def test_tangent_orthogonal_to_radial(which, request, cfg, op3):
    t = initial_tangent(request.getfixturevalue(which), cfg, op3)
    x = t.values[1:-1]
    ang = x @ op3.V
    assert np.max(np.abs(ang)) < 1e-4 * np.max(np.abs(x) @ op3.V)


def test_discrete_angular_eigenvalues(op3, op2):
    for k in (1, 2, 3):
        assert abs(discrete_mu(op3, k) / mu(k, 3) - 1) < 2e-3
        assert abs(discrete_mu(op2, k) / mu(k, 2) - 1) < 5e-3


def test_discrete_degeneracy_close(tracer1, tracer2, dp1, dp2):
    assert abs(tracer1.p_discrete - dp1.p_star) < 1e-4
    assert abs(tracer2.p_discrete - dp2.p_star) < 1e-4


def test_branch_k1_in_K1(branches1):
    for b in branches1.values():
        assert b.termination == "step_budget"
        assert len(b.points) == 21
        assert all(pt.flag("K1") for pt in b.points)
        assert not b.points[1].flag("K2")


def test_branch_k2_in_K2(branch2):
    assert all(pt.flag("K2") for pt in branch2.points)
    assert not branch2.points[1].flag("K1")


def test_nonradial_growth(branches1, branch2):
    for b in (*branches1.values(), branch2):
        nr = [pt.nonradial_measure for pt in b.points[:6]]
        assert nr[0] == 0.0 and nr[1] > 0
        assert all(a < c for a, c in zip(nr[1:], nr[2:]))


def test_corrector_residuals(branches1, branch2, op3):
    for b in (*branches1.values(), branch2):
        assert all(pt.corrector_residual < 1e-10 for pt in b.points)
    pt = branch2.points[-1]
    S = residual_S(pt.p, pt.field, op3)
    assert S.sup < 1e-9 * pt.field.sup


def test_positivity_along_branch(branches1, branch2):
    for b in (*branches1.values(), branch2):
        assert all(pt.field.values.min() >= -1e-12 * pt.sup_norm for pt in b.points)


def test_mirror_symmetry(branches1):
    plus, minus = branches1[1].points, branches1[-1].points
    for a, b in zip(plus, minus):
        assert abs(a.p - b.p) < 1e-9
        d = np.max(np.abs(a.field.reflect().values - b.field.values))
        assert d < MIRROR_TOL * a.sup_norm
        assert b.corrector_residual < 1e-10


def test_k2_other_direction_leaves_cone(tracer2):
    # -Φ₂ is not a symmetry image of Φ₂: the reversed branch is increasing on [0, π/2]
    b = tracer2.continue_branch(-1, 2)
    assert not is_in_K2(b.points[1].field).member


def test_local_model(tracer1):
    rep = local_model_check(tracer1, 1)
    assert len(rep["ratios"]) == 3
    assert all(r < 0.75 for r in rep["ratios"])
    alphas = [row["alpha"] for row in rep["rows"]]
    assert all(abs(a / b - 2) < 1e-6 for a, b in zip(alphas, alphas[1:]))


def test_zero_steps(tracer1):
    b = tracer1.continue_branch(1, 0)
    assert len(b.points) == 1 and b.termination == "step_budget"
    assert b.points[0].nonradial_measure == 0.0


def test_summary_and_csv(branches1, tmp_path):
    b = branches1[1]
    rows = branch_summary(b)
    assert len(rows) == len(b.points)
    assert all((r["p"], r["sup_norm"]) != (s["p"], s["sup_norm"]) for r, s in zip(rows, rows[1:]))
    b.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "step,p,sup_norm,nonradial_measure,in_K1,in_K2,corrector_residual"
    assert len(lines) == len(b.points) + 1
    branches_to_diagram(list(branches1.values()), tmp_path / "d.csv")
    d = (tmp_path / "d.csv").read_text().splitlines()
    assert len(d) == 1 + sum(len(x.points) for x in branches1.values())
    m = b.manifest()
    assert m["termination"] in TERMINATIONS and m["origin"]["k"] == 1


def test_bad_inputs(tracer1, cfg, dp1):
    with pytest.raises(ValueError):
        tracer1.continue_branch(0, 3)
    with pytest.raises(ValueError):
        tracer1.continue_branch(1, -1)
    flat = DegeneracyPoint(dp1.p_star, 1, 2, 1, 1, False)
    with pytest.raises(ValueError):
        continue_branch(flat, 1, 3, cfg)


def test_strict_corrector_failure(cfg, dp1, op3):
    tr = BranchTracer(cfg, dp1, op3, StepControls(tol=1e-30, max_iter=2, strict=True))
    with pytest.raises(CorrectorFailure):
        tr.continue_branch(1, 3)
    tr = BranchTracer(cfg, dp1, op3, StepControls(tol=1e-30, max_iter=2))
    b = tr.continue_branch(1, 3)
    assert b.termination == "corrector_failure" and b.message


def test_n2_branches_reach_common_p(n2_solutions):
    for n, (tr, b, pt) in n2_solutions.items():
        assert b.termination == "target_reached"
        assert all(q.flag(f"Kn({n})") for q in b.points)
        assert pt is not None and pt.p == pytest.approx(1.2, abs=1e-14)
        assert pt.corrector_residual < 1e-10
