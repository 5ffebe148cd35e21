"""Positive radial solution of -u'' - (N-1)/r u' = u^p + λu, u(a) = u(b) = 0.

Both solvers work with the scaled shape w = u / κ^{1/(p-1)}, which solves

    -w'' - (N-1)/r w' = κ |w|^{p-1} w + λ w,    w(a) = 0, w'(a) = 1,

so the unknown is the scalar κ = u'(a)^{p-1} rather than the slope itself.
The slope grows like λ₁^{1/(p-1)} as p → 1 (about 1e20 at p = 1.05 on the
default annulus) while κ stays of order λ₁ there; for large p κ grows
instead, and the geometric bracket scan covers both regimes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .config import ProblemConfig
from .errors import NonConvergence, NoPositiveSolution

KAPPA_CAP = 2.0**600
KAPPA_FLOOR = 2.0**-600
BISECTION_CAP = 200
NEWTON_CAP = 100
METHODS = ("shooting", "fd", "fd-richardson")


@dataclass(frozen=True, eq=False)
class RadialProfile:
    config: ProblemConfig
    r_grid: np.ndarray
    values: np.ndarray
    slope_a: float
    kappa: float
    method: str = "shooting"
    info: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def h(self) -> float:
        return float(self.r_grid[1] - self.r_grid[0])

    def potential(self) -> np.ndarray:
        """p u^{p-1} + λ evaluated through the scaled shape (overflow safe)."""
        c = self.config
        w = np.abs(self.values) / self.kappa ** (1.0 / (c.p - 1.0))
        return c.p * self.kappa * w ** (c.p - 1.0) + c.lam

    def to_csv(self, path):
        write_columns_csv(path, ("r", "u"), (self.r_grid, self.values))

    def to_record(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "method": self.method,
            "slope_a": self.slope_a,
            "kappa": self.kappa,
            "r": [float(x) for x in self.r_grid],
            "u": [float(x) for x in self.values],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_record(cls, rec: dict) -> "RadialProfile":
        return cls(
            config=ProblemConfig.from_dict(rec["config"]),
            r_grid=np.asarray(rec["r"], dtype=float),
            values=np.asarray(rec["u"], dtype=float),
            slope_a=float(rec["slope_a"]),
            kappa=float(rec["kappa"]),
            method=rec.get("method", "shooting"),
        )


def fmt(x) -> str:
    return f"{float(x):.16e}"


def write_columns_csv(path, header, columns):
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(x) for x in row) + "\n")


def radial_grid(config: ProblemConfig, n: int | None = None) -> np.ndarray:
    return np.linspace(config.a, config.b, config.n_r if n is None else n)


# ---------------------------------------------------------------------------
# shooting


def _rhs(N, lam, p, kappa):
    def f(r, y):
        w, dw = y
        return (dw, -(N - 1) / r * dw - kappa * abs(w) ** (p - 1) * w - lam * w)

    return f


def shooting_function(config: ProblemConfig, kappa: float) -> float:
    """Signed miss distance at r = b for the scaled shot with parameter κ.

    Positive when w stays positive on (a, b]; when w first vanishes at
    r₀ < b the value w'(r₀)(b - r₀) < 0 is returned, which is continuous in
    κ across the root.
    """
    c = config

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    # huge trial κ overflow harmlessly; the integrator then reports failure
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            _rhs(c.N, c.lam, c.p, kappa),
            (c.a, c.b),
            (0.0, 1.0),
            method="DOP853",
            rtol=1e-13,
            atol=1e-16,
            events=hit_zero,
        )
    if sol.status == -1:
        raise NonConvergence(f"integration failed for kappa={kappa}: {sol.message}")
    if sol.t_events[0].size and sol.t_events[0][0] < c.b:
        r0 = sol.t_events[0][0]
        return float(sol.y_events[0][0][1] * (c.b - r0))
    return float(sol.y[0, -1])


def bracket_kappa(config: ProblemConfig, start: float = 1.0) -> tuple[float, float]:
    """Geometric scan for κ with a sign change of the shooting function."""
    k = start
    if shooting_function(config, k) > 0:
        while True:
            k *= 2.0
            if k > KAPPA_CAP:
                raise NoPositiveSolution(
                    f"no sign change of the shooting map up to kappa={KAPPA_CAP:g} (p={config.p})"
                )
            if shooting_function(config, k) <= 0:
                return k / 2.0, k
    while True:
        k /= 2.0
        if k < KAPPA_FLOOR:
            raise NoPositiveSolution(f"no positive shot down to kappa={KAPPA_FLOOR:g}")
        if shooting_function(config, k) > 0:
            return k, 2.0 * k


def find_kappa(config: ProblemConfig, bracket: tuple[float, float] | None = None) -> float:
    lo, hi = bracket_kappa(config) if bracket is None else bracket
    flo, fhi = shooting_function(config, lo), shooting_function(config, hi)
    if flo <= 0 or fhi > 0:
        raise NoPositiveSolution(f"bracket [{lo}, {hi}] does not straddle the positive solution")
    try:
        return brentq(
            lambda k: shooting_function(config, k),
            lo,
            hi,
            xtol=1e-300,
            rtol=4 * np.finfo(float).eps,
            maxiter=BISECTION_CAP,
        )
    except RuntimeError as exc:
        raise NonConvergence(f"shooting root search: {exc}") from None


def find_slope(config: ProblemConfig, slope_bracket: tuple[float, float] | None = None) -> float:
    """Initial slope u'(a) of the positive solution, optionally from a slope bracket."""
    q = config.p - 1.0
    kb = None if slope_bracket is None else (slope_bracket[0] ** q, slope_bracket[1] ** q)
    return _slope_from_kappa(find_kappa(config, kb), config.p)


def _slope_from_kappa(kappa, p):
    try:
        s = kappa ** (1.0 / (p - 1.0))
    except OverflowError:
        s = math.inf
    if not math.isfinite(s):
        raise NoPositiveSolution(f"slope u'(a) overflows double precision at p={p}")
    return s


def _sample_rk4(config: ProblemConfig, kappa: float, r: np.ndarray):
    """Fixed-substep classical RK4 landing exactly on the nodes.

    Landing on nodes (rather than interpolating a dense output) keeps the
    global error a smooth function of r, so finite differences of the
    sampled profile do not amplify interpolation noise.  The substep count
    adapts to the local stiffness sqrt(max potential).
    """
    c = config
    h = r[1] - r[0]
    pilot = solve_ivp(_rhs(c.N, c.lam, c.p, kappa), (c.a, c.b), (0.0, 1.0), method="DOP853", rtol=1e-8)
    wmax = float(np.max(np.abs(pilot.y[0])))
    omega = math.sqrt(c.p * kappa * wmax ** (c.p - 1) + abs(c.lam) + 1.0)
    sub = max(4, math.ceil(h * omega / 0.004))
    H = h / sub
    N1, lam, p = c.N - 1, c.lam, c.p

    def f(t, w, dw):
        return dw, -N1 / t * dw - kappa * abs(w) ** (p - 1) * w - lam * w

    out = np.empty((r.size, 2))
    w, dw = 0.0, 1.0
    out[0] = w, dw
    for i in range(r.size - 1):
        t0 = r[i]
        for j in range(sub):
            t = t0 + j * H
            k1w, k1d = f(t, w, dw)
            k2w, k2d = f(t + H / 2, w + H / 2 * k1w, dw + H / 2 * k1d)
            k3w, k3d = f(t + H / 2, w + H / 2 * k2w, dw + H / 2 * k2d)
            k4w, k4d = f(t + H, w + H * k3w, dw + H * k3d)
            w += H / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
            dw += H / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        out[i + 1] = w, dw
    return out, sub


def _shooting_profile(config: ProblemConfig, r: np.ndarray, kappa: float | None = None):
    if kappa is None:
        kappa = find_kappa(config)
    slope = _slope_from_kappa(kappa, config.p)
    ys, sub = _sample_rk4(config, kappa, r)
    w = ys[:, 0].copy()
    w[0] = w[-1] = 0.0
    if np.any(w[1:-1] <= 0):
        raise NoPositiveSolution("sampled shooting profile is not positive inside (a, b)")
    return RadialProfile(
        config=config,
        r_grid=r,
        values=slope * w,
        slope_a=slope,
        kappa=float(kappa),
        method="shooting",
        info={"rk4_substeps": sub},
    )


# ---------------------------------------------------------------------------
# finite differences


def radial_stencil(r: np.ndarray, N: int):
    """Conservative 3-point stencil of -(1/r^{N-1})(r^{N-1} u')' on interior nodes.

    Returns the (lower, diag, upper) diagonals of the (n-2)×(n-2) matrix
    acting on interior values with homogeneous Dirichlet data.  Multiplying
    row i by r_i^{N-1} h makes the matrix symmetric.
    """
    h = r[1] - r[0]
    flux = ((r[:-1] + r[1:]) / 2) ** (N - 1) / h**2
    ri = r[1:-1] ** (N - 1)
    diag = (flux[:-1] + flux[1:]) / ri
    lower = -flux[1:-1] / ri[1:]
    upper = -flux[1:-1] / ri[:-1]
    return lower, diag, upper


def radial_matrix(r: np.ndarray, N: int) -> sparse.csr_matrix:
    lower, diag, upper = radial_stencil(r, N)
    return sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def fd_shape(config: ProblemConfig, r: np.ndarray):
    """Finite-difference solution in the form u = κ^{1/(p-1)} y on interior nodes.

    Newton on (y, κ) with the side condition φ·y = φ·φ, where φ is the
    sup-normalized first Dirichlet eigenvector of the stencil; p is
    continued from the linear problem at p = 1.  Each accepted step must
    keep y > 0 at interior nodes (positivity continuation); a rejected step
    is halved.  Returns (y, κ, φ, continuation steps).
    """
    c = config
    A = radial_matrix(r, c.N)
    n = A.shape[0]
    sym = r[1:-1] ** (c.N - 1)
    lower, diag, upper = radial_stencil(r, c.N)
    # symmetric similarity transform for the p = 1 eigenproblem
    s = np.sqrt(sym)
    d = diag - c.lam
    e = upper[:] * s[:-1] / s[1:]
    lam0, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    phi = vec[:, 0] / s
    phi /= phi[np.argmax(np.abs(phi))]
    norm2 = phi @ phi
    kappa = float(lam0[0])
    y = phi.copy()
    I = sparse.identity(n, format="csr")
    border_col_shape = (n, 1)

    def newton(p, y, kappa):
        for it in range(NEWTON_CAP):
            ay = np.abs(y)
            F = A @ y - kappa * ay ** (p - 1) * y - c.lam * y
            g = phi @ y - norm2
            J = A - sparse.diags(kappa * p * ay ** (p - 1)) - c.lam * I
            col = sparse.csr_matrix((-(ay ** (p - 1)) * y).reshape(border_col_shape))
            row = sparse.csr_matrix(phi.reshape(1, n))
            M = sparse.bmat([[J, col], [row, None]], format="csc")
            delta = spsolve(M, -np.concatenate([F, [g]]))
            if not np.all(np.isfinite(delta)):
                return None
            y = y + delta[:-1]
            kappa = kappa + delta[-1]
            # the bordered solve has a roundoff floor near 1e-12 relative
            if np.max(np.abs(delta[:-1])) <= 1e-11 * np.max(np.abs(y)) and abs(delta[-1]) <= 1e-11 * abs(kappa):
                return y, kappa, it + 1
        return None

    p_cur, dp = 1.0, 0.1
    steps = 0
    while p_cur < c.p:
        p_try = min(c.p, p_cur + dp)
        res = newton(p_try, y, kappa)
        if res is None or np.any(res[0] <= 0) or res[1] <= 0:
            dp /= 2
            if dp < 1e-6:
                raise NonConvergence(f"finite-difference continuation stalled at p={p_cur}")
            continue
        y, kappa, _ = res
        p_cur = p_try
        dp = min(0.5, dp * 1.5)
        steps += 1
    return y, kappa, phi, steps


def _fd_profile(config: ProblemConfig, r: np.ndarray) -> RadialProfile:
    y, kappa, _, steps = fd_shape(config, r)
    scale = _slope_from_kappa(kappa, config.p)
    u = np.zeros(r.size)
    u[1:-1] = scale * y
    h = r[1] - r[0]
    slope = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    return RadialProfile(
        config=config, r_grid=r, values=u, slope_a=float(slope), kappa=float(kappa),
        method="fd", info={"continuation_steps": steps},
    )


def solve_radial(config: ProblemConfig, method: str = "shooting", n: int | None = None) -> RadialProfile:
    """Positive radial solution on a uniform grid of ``n`` (default ``n_r``) nodes.

    ``method`` selects the shooting solver, the second-order finite-difference
    Newton solver, or the latter with one Richardson extrapolation step
    (solve on n and 2n-1 nodes, combine at the shared nodes).
    """
    r = radial_grid(config, n)
    if method == "shooting":
        return _shooting_profile(config, r)
    if method == "fd":
        return _fd_profile(config, r)
    if method == "fd-richardson":
        coarse = _fd_profile(config, r)
        fine = _fd_profile(config, radial_grid(config, 2 * r.size - 1))
        u = (4 * fine.values[::2] - coarse.values) / 3
        return RadialProfile(
            config=config, r_grid=r, values=u, slope_a=(4 * fine.slope_a - coarse.slope_a) / 3,
            kappa=(4 * fine.kappa - coarse.kappa) / 3, method=method,
        )
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def refine_profile(profile: RadialProfile, factor: int) -> RadialProfile:
    """Same solution, same method, on a grid with ``factor`` times more intervals."""
    if isinstance(factor, bool) or not isinstance(factor, int) or factor < 2:
        raise ValueError(f"refinement factor must be an integer >= 2, got {factor!r}")
    n = (profile.r_grid.size - 1) * factor + 1
    r = radial_grid(profile.config, n)
    if profile.method == "shooting":
        return _shooting_profile(profile.config, r, kappa=profile.kappa)
    return solve_radial(profile.config, profile.method, n=n)


def resample_profile(profile: RadialProfile, r: np.ndarray) -> RadialProfile:
    """The same solution sampled on another uniform grid over [a, b].

    Shooting profiles are re-integrated with their κ, so the samples carry
    no interpolation error; other methods are re-solved on the new grid.
    """
    r = np.asarray(r, dtype=float)
    c = profile.config
    if r[0] != c.a or r[-1] != c.b:
        raise ValueError("resampling grid must span [a, b]")
    if profile.method == "shooting":
        return _shooting_profile(c, r, kappa=profile.kappa)
    return solve_radial(c, profile.method, n=r.size)


# ---------------------------------------------------------------------------
# residuals


_D2 = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]),
    6: np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]),
}
_D1 = {
    2: np.array([-0.5, 0.0, 0.5]),
    4: np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]),
    6: np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]),
}


def ode_residual(profile: RadialProfile, order: int = 6) -> np.ndarray:
    """Pointwise residual -u'' - (N-1)/r u' - |u|^{p-1}u - λu with centred differences.

    Returned on the nodes where the ``order``-th order stencil fits; for
    ``order == 2`` that is every interior node.
    """
    c = profile.config
    u, r, h = profile.values, profile.r_grid, profile.h
    half = order // 2
    d2 = np.correlate(u, _D2[order], mode="valid") / h**2
    d1 = np.correlate(u, _D1[order], mode="valid") / h
    rr = r[half:-half]
    uu = u[half:-half]
    return -d2 - (c.N - 1) / rr * d1 - np.abs(uu) ** (c.p - 1) * uu - c.lam * uu


def discrete_residual(profile: RadialProfile) -> float:
    """Relative residual in the scheme's own terms.

    The conservative second-order stencil for finite-difference profiles,
    sixth-order centred differences for shooting profiles.
    """
    c = profile.config
    if profile.method == "fd":
        A = radial_matrix(profile.r_grid, c.N)
        u = profile.values[1:-1]
        res = A @ u - np.abs(u) ** (c.p - 1) * u - c.lam * u
    else:
        res = ode_residual(profile, order=6)
    return float(np.max(np.abs(res)) / profile.sup)


def check_profile(profile: RadialProfile) -> None:
    """Raise if the profile violates its invariants."""
    u = profile.values
    if u[0] != 0.0 or u[-1] != 0.0:
        raise NoPositiveSolution("boundary values are not exactly zero")
    if np.any(u[1:-1] <= 0):
        raise NoPositiveSolution("profile is not positive at interior nodes")
    if profile.method in ("shooting", "fd"):
        res = discrete_residual(profile)
        if res > profile.config.tol_newton:
            raise NonConvergence(f"discrete residual {res:.3e} exceeds tol_newton")
