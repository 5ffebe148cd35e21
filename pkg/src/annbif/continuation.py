"""Pseudo-arclength continuation of nonradial branches of S(p, v) = 0.

Fields are written v = κ^{1/(p-1)} y and the unknowns are (y, κ, p) with

    G(y, κ, p) = L y - κ |y|^{p-1} y = 0

plus a normalization row on y.  Near p = 1 sup v is astronomically large
and changes like exp(c/(p-1)); in these variables every unknown stays
O(1).  The relative fixed-point residual sup|S(p, v)| / sup|v| equals
sup|L⁻¹G| / sup|y|, which is what the corrector drives below tolerance.

The first point leaves the radial branch through the pairing constraint
<y, t>_W / <t, t>_W = ±ε, where t is the bifurcation tangent with its
θ-mean removed, so the pairing ignores every radial function.  Later
points use a secant predictor and the arclength equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .cones import is_in_K1, is_in_K2, is_in_Kn
from .config import ProblemConfig
from .errors import CorrectorFailure, GridMismatch, PositivityLoss, SolverError
from .harmonics import build_harmonic
from .pde2d import Field2D, Operator2D, separable_field
from .radial import RadialProfile, fd_shape, fmt, resample_profile, solve_radial
from .spectral import DegeneracyPoint, alpha1

TERMINATIONS = (
    "step_budget",
    "positivity_loss",
    "corrector_failure",
    "fold_count",
    "returned_to_radial",
    "target_reached",
)


@dataclass(frozen=True)
class StepControls:
    steps: int = 200
    eps_rel: float = 1e-3
    tol: float = 1e-10
    max_iter: int = 12
    easy_iter: int = 3
    grow: float = 1.3
    min_step: float = 1e-8
    max_step: float = 0.05
    max_folds: int = 4
    radial_threshold: float = 1e-8
    p_target: float | None = None
    strict: bool = False

    @property
    def cone_tol(self) -> float:
        return 10 * self.tol


@dataclass(frozen=True, eq=False)
class BranchPoint:
    step: int
    p: float
    field: Field2D
    sup_norm: float
    nonradial_measure: float
    cone_flags: dict
    corrector_residual: float
    iterations: int = 0
    alpha: float = 0.0
    state: np.ndarray | None = None

    def flag(self, name: str) -> bool:
        rep = self.cone_flags.get(name)
        return bool(rep.member) if rep is not None else False


@dataclass(eq=False)
class Branch:
    origin: DegeneracyPoint
    direction: int
    points: list = field(default_factory=list)
    termination: str = ""
    message: str = ""
    folds: int = 0
    p_discrete: float = math.nan
    tangent: Field2D | None = None

    @property
    def cone_names(self) -> list:
        if self.origin.N == 2:
            return [f"Kn({self.origin.k})"]
        return ["K1", "K2"]

    def to_csv(self, path):
        names = self.cone_names
        head = ["step", "p", "sup_norm", "nonradial_measure"]
        head += ["in_Kn"] if self.origin.N == 2 else ["in_K1", "in_K2"]
        head.append("corrector_residual")
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(head) + "\n")
            for pt in self.points:
                flags = [str(int(pt.flag(n))) for n in names]
                row = [str(pt.step), fmt(pt.p), fmt(pt.sup_norm), fmt(pt.nonradial_measure)]
                fh.write(",".join(row + flags + [fmt(pt.corrector_residual)]) + "\n")

    def manifest(self) -> dict:
        return {
            "origin": self.origin.to_record(),
            "direction": self.direction,
            "p_discrete": self.p_discrete,
            "termination": self.termination,
            "message": self.message,
            "folds": self.folds,
            "points": len(self.points),
        }


def branch_summary(b: Branch) -> list[dict]:
    """Diagram rows (p, sup_norm, nonradial_measure, cone flags), one per point."""
    if not b.points:
        raise ValueError("empty branch")
    rows = []
    for pt in b.points:
        row = {"p": pt.p, "sup_norm": pt.sup_norm, "nonradial_measure": pt.nonradial_measure}
        if b.origin.N == 2:
            row["in_Kn"] = pt.flag(f"Kn({b.origin.k})")
        else:
            row["in_K1"] = pt.flag("K1")
            row["in_K2"] = pt.flag("K2")
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# discrete ingredients


def discrete_radial(config: ProblemConfig, p: float, op: Operator2D):
    """Radial solution of the 2D scheme at p as (y, κ, φ) on interior ρ nodes.

    θ-constant fields see only the radial block of the operator, so this is
    the conservative one-dimensional scheme on the ρ-grid.
    """
    return fd_shape(config.with_p(p), op.rho)[:3]


def angular_modes(op: Operator2D):
    """Eigenvalues and eigenvectors of the discrete angular operator, ascending."""
    B = op.B.toarray()
    sv = np.sqrt(op.V)
    S = sv[:, None] * B / sv[None, :]
    vals, vecs = eigh((S + S.T) / 2)
    return vals, vecs / sv[:, None]


def discrete_mu(op: Operator2D, k: int) -> float:
    """The k-th distinct angular eigenvalue of the scheme (≈ k(N-2+k))."""
    if op.config.N == 2:
        dt = 2 * np.pi / op.n_theta
        return 4.0 / dt**2 * math.sin(k * dt / 2) ** 2
    vals, _ = angular_modes(op)
    return float(vals[k])


def _fd_alpha1(config, p, op):
    y, kappa, _ = discrete_radial(config, p, op)
    u = np.zeros(op.n_rho)
    u[1:-1] = kappa ** (1.0 / (p - 1.0)) * y
    prof = RadialProfile(config.with_p(p), op.rho, u, slope_a=math.nan, kappa=kappa, method="fd")
    return alpha1(prof).alpha1


def discrete_degeneracy(config: ProblemConfig, k: int, p_guess: float, op: Operator2D) -> float:
    """p where the scheme's radial linearization has a kernel in the k-th angular mode."""
    mk = discrete_mu(op, k)

    def f(p):
        return _fd_alpha1(config, p, op) + mk

    lo, hi = 1 + (p_guess - 1) * 0.99, p_guess * 1.002
    for _ in range(30):
        if f(lo) * f(hi) < 0:
            break
        lo, hi = 1 + (lo - 1) * 0.9, hi * 1.01
    else:
        raise SolverError(f"no discrete degeneracy for k={k} near p={p_guess}")
    return float(brentq(f, lo, hi, xtol=1e-14, rtol=1e-13))


def initial_tangent(dp: DegeneracyPoint, config: ProblemConfig, op: Operator2D | None = None) -> Field2D:
    """Sup-normalized w₁(ρ) Φ_k(cos θ) at the degeneracy (cos kθ for N = 2)."""
    op = Operator2D(config) if op is None else op
    prof = solve_radial(config.with_p(dp.p_star))
    w1 = alpha1(resample_profile(prof, op.rho)).w1
    h = build_harmonic(dp.k, config.N)
    return separable_field(op, w1, h.of_theta(op.theta))


# ---------------------------------------------------------------------------
# the tracer


class BranchTracer:
    """Newton machinery for one configuration and bifurcation point.

    The state is z = (y, κ, p) with v = κ^{1/(p-1)} y and
    G(y, κ, p) = L y - κ |y|^{p-1} y.  The amplitude, which varies like
    exp(c/(p-1)), is carried by κ, so every unknown stays O(1) along the
    branch.  A normalization row n·y = n·y₀ fixes the split between y and
    κ; radial solutions of the scheme satisfy it with the same (y, κ) as the
    one-dimensional solver.  For N = 2 a phase condition against the
    sin(kθ) mode removes the rotation invariance.
    """

    def __init__(self, config: ProblemConfig, dp: DegeneracyPoint, op: Operator2D | None = None,
                 ctrl: StepControls | None = None):
        if config.N != dp.N:
            raise ValueError(f"degeneracy computed for N={dp.N}, config has N={config.N}")
        self.config = config
        self.dp = dp
        self.op = Operator2D(config) if op is None else op
        self.ctrl = StepControls() if ctrl is None else ctrl
        op = self.op
        if config.N == 2 and (op.n_theta % (2 * dp.k)):
            raise GridMismatch(f"n_theta={op.n_theta} must be divisible by 2k={2 * dp.k}")
        self.n = (op.n_rho - 2) * op.n_theta
        self.p_discrete = discrete_degeneracy(config, dp.k, dp.p_star, op)
        y0, k0, phi = discrete_radial(config, self.p_discrete, op)
        self.norm_row = np.kron(phi, op.V / op.V.sum())
        self.z_origin = np.concatenate([np.repeat(y0, op.n_theta), [k0, self.p_discrete]])
        self.norm_value = float(self.norm_row @ self.z_origin[: self.n])
        self.kappa0 = k0
        self.tangent = initial_tangent(dp, config, op)
        t = self.tangent.interior()
        self.t_nr = t - op.theta_mean(t)
        self.t_norm2 = op.weighted_dot(self.t_nr, self.t_nr)
        self.w_sum = float(op.W.sum())
        self.phase = None
        if config.N == 2:
            w1 = self.tangent.values[:, 0] / np.max(np.abs(self.tangent.values[:, 0]))
            s = np.outer(w1, np.sin(dp.k * op.theta))[1:-1].ravel()
            self.phase = op.W * s

    # -- pieces of z ------------------------------------------------------

    def split(self, z):
        return z[: self.n], float(z[self.n]), float(z[self.n + 1])

    def amplitude(self, kappa, p) -> float:
        return kappa ** (1.0 / (p - 1.0))

    def to_field(self, z) -> Field2D:
        y, kappa, p = self.split(z)
        return self.op.field(self.op.embed(self.amplitude(kappa, p) * y))

    # -- residuals --------------------------------------------------------

    def G(self, z):
        y, kappa, p = self.split(z)
        return self.op.L @ y - kappa * np.abs(y) ** (p - 1) * y

    def rel_residual(self, z) -> float:
        """sup|S(p, v)| / sup|v|; S scales exactly like L⁻¹G."""
        y = z[: self.n]
        sy = float(np.max(np.abs(y)))
        return float(np.max(np.abs(self.op.solve(self.G(z))))) / (sy if sy > 0 else 1.0)

    def pairing(self, z) -> float:
        return self.op.weighted_dot(z[: self.n], self.t_nr) / self.t_norm2

    def _blocks(self, z):
        y, kappa, p = self.split(z)
        ay = np.abs(y)
        pw = ay ** (p - 1)
        Gy = self.op.L - sparse.diags(p * kappa * pw)
        with np.errstate(divide="ignore", invalid="ignore"):
            ly = np.where(ay > 0, np.log(ay), 0.0)
        Gk = -pw * y
        Gp = -kappa * pw * y * ly
        return Gy, Gk, Gp

    def newton(self, z, c, d):
        """Solve G = 0, n·y = n·y₀ and c·z = d (plus the phase condition for N = 2).

        Once the relative residual is below tolerance one more step is
        taken, which by quadratic convergence lands at roundoff level and
        keeps symmetric pairs of branches symmetric to that level.
        Returns (z, iterations, residual) or None; the iteration count
        excludes the polishing step.
        """
        ctrl = self.ctrl
        done = None
        for it in range(1, ctrl.max_iter + 1):
            zn = self._newton_step(z, c, d)
            if zn is None:
                return done
            res = self.rel_residual(zn)
            if done is not None:
                return (zn, done[1], res) if res < done[2] else done
            z = zn
            if res < ctrl.tol:
                done = (z, it, res)
        return done

    def _newton_step(self, z, c, d):
        n = self.n
        Gy, Gk, Gp = self._blocks(z)
        rows = [
            [Gy, sparse.csc_matrix(np.column_stack([Gk, Gp]))],
            [sparse.csr_matrix(np.vstack([np.r_[self.norm_row], c[:n]])),
             sparse.csr_matrix(np.array([[0.0, 0.0], [c[n], c[n + 1]]]))],
        ]
        rhs = [self.G(z), [self.norm_row @ z[:n] - self.norm_value, c @ z - d]]
        if self.phase is not None:
            # multiplier column along the rotation mode keeps the system square
            rows[0].append(sparse.csc_matrix(self.phase.reshape(n, 1) / self.op.W.reshape(n, 1)))
            rows[1].append(None)
            rows.append([sparse.csr_matrix(self.phase.reshape(1, n)), None, sparse.csr_matrix((1, 1))])
            rhs.append([self.phase @ z[:n]])
        M = sparse.bmat(rows, format="csc")
        try:
            delta = splu(M).solve(-np.concatenate(rhs))
        except RuntimeError:
            return None
        zn = z + delta[: n + 2]
        if not np.all(np.isfinite(zn)) or not zn[n + 1] > 1 or not zn[n] > 0:
            return None
        return zn

    # -- points -----------------------------------------------------------

    def oriented(self, f: Field2D, direction: int) -> Field2D:
        """Flip the nonradial part to the +1 orientation when a symmetry allows it."""
        if direction > 0:
            return f
        if self.config.N == 2:
            return f.rotate(self.op.n_theta // (2 * self.dp.k))
        if self.dp.k % 2:
            return f.reflect()
        return f

    def make_point(self, step, z, it, res, direction) -> BranchPoint:
        v = self.to_field(z)
        o = self.oriented(v, direction)
        tol = self.ctrl.cone_tol
        if self.config.N == 2:
            flags = {f"Kn({self.dp.k})": is_in_Kn(o, self.dp.k, tol)}
        else:
            flags = {"K1": is_in_K1(o, tol), "K2": is_in_K2(o, tol)}
        return BranchPoint(
            step=step, p=self.split(z)[2], field=v, sup_norm=v.sup,
            nonradial_measure=v.nonradial_measure(), cone_flags=flags,
            corrector_residual=res, iterations=it, alpha=self.pairing(z), state=z,
        )

    def bootstrap(self, direction: int, eps: float | None = None):
        """First nonradial point: pairing coefficient fixed to direction·ε."""
        eps = self.ctrl.eps_rel if eps is None else eps
        c = np.zeros(self.n + 2)
        c[: self.n] = self.op.W * self.t_nr / self.t_norm2
        z0 = self.z_origin.copy()
        z0[: self.n] += direction * eps * self.t_nr
        return self.newton(z0, c, direction * eps)

    def solve_at_p(self, z, p_target):
        """Newton at fixed p from a nearby guess; returns (z, iterations, residual)."""
        c = np.zeros(self.n + 2)
        c[-1] = 1.0
        z = z.copy()
        z[-1] = p_target
        out = self.newton(z, c, p_target)
        if out is None:
            raise CorrectorFailure(f"no convergence at fixed p={p_target}")
        return out

    def radial_field(self, p: float) -> Field2D:
        """The scheme's radial solution at p as a θ-constant field."""
        yr, kr, _ = discrete_radial(self.config, p, self.op)
        u = self.amplitude(kr, p) * np.repeat(yr, self.op.n_theta)
        return self.op.field(self.op.embed(u))

    def remainder(self, z) -> tuple[float, float]:
        """(α, sup|v - u_p - α t| / c) with c = κ^{1/(p-1)} the branch amplitude.

        Both v and u_p are expressed in the branch's amplitude so the
        remainder is on the same O(1) scale as the tangent.
        """
        y, kappa, p = self.split(z)
        yr, kr, _ = discrete_radial(self.config, p, self.op)
        a = self.pairing(z)
        ratio = (kr / kappa) ** (1.0 / (p - 1.0))
        r = y - ratio * np.repeat(yr, self.op.n_theta) - a * self.tangent.interior()
        return a, float(np.max(np.abs(r)))

    # -- arclength --------------------------------------------------------

    def _weights(self):
        w = np.empty(self.n + 2)
        w[: self.n] = self.op.W / self.w_sum
        w[self.n] = 1.0 / self.kappa0**2
        w[self.n + 1] = 1.0
        return w

    def continue_branch(self, direction: int, steps: int | None = None) -> Branch:
        if direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {direction}")
        ctrl = self.ctrl
        steps = ctrl.steps if steps is None else steps
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 0:
            raise ValueError(f"steps must be an integer >= 0, got {steps!r}")
        br = Branch(origin=self.dp, direction=direction, p_discrete=self.p_discrete,
                    tangent=self.tangent)
        z_prev = self.z_origin
        br.points.append(self.make_point(0, z_prev, 0, self.rel_residual(z_prev), direction))

        def finish(reason, msg=""):
            br.termination = reason
            br.message = msg
            if ctrl.strict and reason == "corrector_failure":
                raise CorrectorFailure(msg)
            if ctrl.strict and reason == "positivity_loss":
                raise PositivityLoss(msg)
            return br

        if steps == 0:
            return finish("step_budget")
        out = self.bootstrap(direction)
        if out is None:
            return finish("corrector_failure", "bootstrap corrector did not converge")
        z, it, res = out
        wts = self._weights()

        def anorm(dz):
            return math.sqrt(float(np.sum(wts * dz * dz)))

        s = anorm(z - z_prev)
        easy = 0
        for step in range(1, steps + 1):
            if step > 1:
                tz = (z - z_prev) / anorm(z - z_prev)
                c = wts * tz
                while True:
                    out = self.newton(z + s * tz, c, s + c @ z)
                    if out is not None:
                        break
                    s /= 2
                    easy = 0
                    if s < ctrl.min_step:
                        return finish("corrector_failure", f"step fell below {ctrl.min_step} at p={z[-1]}")
                dp_old = z[-1] - z_prev[-1]
                z_prev, (z, it, res) = z, out
                if (z[-1] - z_prev[-1]) * dp_old < 0:
                    br.folds += 1
                easy = easy + 1 if it <= ctrl.easy_iter else 0
                if easy >= 2:
                    s = min(s * ctrl.grow, ctrl.max_step)
                    easy = 0
            pt = self.make_point(step, z, it, res, direction)
            br.points.append(pt)
            y = z[: self.n]
            if np.min(y) < -ctrl.cone_tol * np.max(np.abs(y)):
                return finish("positivity_loss", f"min v / sup v = {np.min(y) / np.max(np.abs(y)):.3e} at p={pt.p}")
            if step >= 2 and pt.nonradial_measure < ctrl.radial_threshold * pt.sup_norm:
                return finish("returned_to_radial", f"nonradial measure vanished at p={pt.p}")
            if br.folds > ctrl.max_folds:
                return finish("fold_count", f"{br.folds} folds")
            if ctrl.p_target is not None and (z[-1] - ctrl.p_target) * (z_prev[-1] - ctrl.p_target) <= 0:
                return finish("target_reached", f"crossed p={ctrl.p_target}")
        return finish("step_budget")

    def point_at(self, branch: Branch, p_target: float) -> BranchPoint:
        """Branch point at exactly p_target, from the first bracketing pair of points."""
        pts = branch.points
        for a, b in zip(pts, pts[1:]):
            if (a.p - p_target) * (b.p - p_target) <= 0 and a.p != b.p:
                w = (p_target - a.p) / (b.p - a.p)
                z, it, res = self.solve_at_p((1 - w) * a.state + w * b.state, p_target)
                return self.make_point(-1, z, it, res, branch.direction)
        raise ValueError(f"branch does not reach p={p_target}")


def continue_branch(dp: DegeneracyPoint, direction: int, steps: int, config: ProblemConfig,
                    ctrl: StepControls | None = None, op: Operator2D | None = None) -> Branch:
    if not dp.is_morse_change:
        raise ValueError("continuation starts only at Morse-index-changing points")
    tr = BranchTracer(config, dp, op, ctrl)
    return tr.continue_branch(direction, steps)


def local_model_check(tracer: BranchTracer, direction: int = 1, eps=None, halvings: int = 3) -> dict:
    """Remainders of the first branch point for ε, ε/2, ... and successive ratios."""
    eps = tracer.ctrl.eps_rel if eps is None else eps
    rows = []
    for i in range(halvings + 1):
        e = eps / 2**i
        out = tracer.bootstrap(direction, e)
        if out is None:
            raise CorrectorFailure(f"bootstrap failed at eps={e}")
        z = out[0]
        a, r = tracer.remainder(z)
        rows.append({"eps": e, "p": float(z[-1]), "alpha": a, "remainder": r})
    ratios = [rows[i + 1]["remainder"] / rows[i]["remainder"] for i in range(halvings)]
    return {"rows": rows, "ratios": ratios}


def branches_to_diagram(branches, path):
    """Combined diagram CSV, one row per branch point."""
    with open(path, "w", newline="\n") as fh:
        fh.write("k,direction,step,p,sup_norm,nonradial_measure\n")
        for b in branches:
            for pt in b.points:
                fh.write(f"{b.origin.k},{b.direction},{pt.step},{fmt(pt.p)},{fmt(pt.sup_norm)},"
                         f"{fmt(pt.nonradial_measure)}\n")
