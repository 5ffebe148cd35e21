"""First eigenvalue of the radial linearization and the resulting Morse data.

The weighted problem

    -v'' - (N-1)/r v' - (p u^{p-1} + λ) v = (α / r²) v,   v(a) = v(b) = 0

is multiplied by r^{N-1} to obtain the self-adjoint pencil

    -(r^{N-1} v')' - r^{N-1} (p u^{p-1} + λ) v = α r^{N-3} v,

whose conservative 3-point discretization K v = α B v has K symmetric
tridiagonal and B diagonal.  The pencil is reduced to the symmetric
tridiagonal T = B^{-1/2} K B^{-1/2}; its smallest eigenvalue is bracketed by
Sturm-sequence bisection and the eigenvector follows by inverse iteration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .config import ProblemConfig
from .errors import EigenSolveFailure, NonConvergence, SolverError
from .radial import RadialProfile, solve_radial

STURM_CAP = 200
INVERSE_ITER_CAP = 20
SCAN_POINTS = 400


def mu(k: int, N: int) -> int:
    """Laplace-Beltrami eigenvalue k(N-2+k) on the unit sphere in R^N."""
    if k < 0 or N < 2:
        raise ValueError(f"need k >= 0 and N >= 2, got k={k}, N={N}")
    return k * (N - 2 + k)


def harmonic_multiplicity(j: int, N: int) -> int:
    """Dimension of the degree-j spherical harmonics on S^{N-1}.

    Evaluates (N+2j-2)(N+j-3)! / ((N-2)! j!) in exact integer arithmetic, so
    no size of j can overflow.  N = 2 is the circle: 1 for j = 0 and 2
    otherwise (the factorial form is undefined at N = 2, j = 0).
    """
    for name, val in (("j", j), ("N", N)):
        if isinstance(val, bool) or not isinstance(val, (int, np.integer)):
            raise TypeError(f"{name} must be an integer, got {val!r}")
    j, N = int(j), int(N)
    if j < 0 or N < 2:
        raise ValueError(f"need j >= 0 and N >= 2, got j={j}, N={N}")
    if N == 2:
        return 1 if j == 0 else 2
    num = (N + 2 * j - 2) * math.factorial(N + j - 3)
    den = math.factorial(N - 2) * math.factorial(j)
    q, rem = divmod(num, den)
    if rem:
        raise ArithmeticError(f"multiplicity is not an integer for j={j}, N={N}")
    return q


def morse_index(alpha1: float, N: int) -> int:
    """Sum of multiplicities over j >= 0 with μ_j + α₁ < 0 (strict).

    μ_j < -α₁ is equivalent to j < (2-N)/2 + sqrt((N-2)² - 4α₁)/2; the
    integer form avoids rounding at exact thresholds.
    """
    if not alpha1 < 0:
        raise ValueError(f"alpha1 must be negative, got {alpha1}")
    total, j = 0, 0
    while mu(j, N) + alpha1 < 0:
        total += harmonic_multiplicity(j, N)
        j += 1
    return total


# ---------------------------------------------------------------------------
# symmetric tridiagonal eigen-solver


def sturm_count(d, e, x: float) -> int:
    """Number of eigenvalues of tridiag(e, d, e) strictly below x."""
    return _sturm_count(list(map(float, d)), [float(t) * float(t) for t in e], x)


def _sturm_count(d, e2, x):
    count = 0
    q = 1.0
    for i in range(len(d)):
        q = d[i] - x - (e2[i - 1] / q if i else 0.0)
        if q == 0.0:
            q = -1e-300
        if q < 0:
            count += 1
    return count


def smallest_eigenvalue(d: np.ndarray, e: np.ndarray) -> tuple[float, float]:
    """Bracket [lo, hi] of width ~ machine precision around the lowest eigenvalue."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    ae = np.abs(e)
    rad = np.zeros_like(d)
    rad[:-1] += ae
    rad[1:] += ae
    lo = float(np.min(d - rad))
    hi = float(np.min(d + rad))
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise EigenSolveFailure("non-finite matrix entries")
    dl, e2l = d.tolist(), (e * e).tolist()
    eps = np.finfo(float).eps
    # absolute floor from the Gershgorin norm handles an eigenvalue at 0
    floor = eps * float(np.max(np.abs(d) + rad))
    for _ in range(STURM_CAP):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 4 * eps * max(abs(lo), abs(hi)) + floor or mid <= lo or mid >= hi:
            return lo, hi
        if _sturm_count(dl, e2l, mid) >= 1:
            hi = mid
        else:
            lo = mid
    raise EigenSolveFailure("Sturm bisection did not converge")


def inverse_iteration(d: np.ndarray, e: np.ndarray, shift: float) -> np.ndarray:
    n = d.size
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[1] = d - shift
    ab[2, :-1] = e
    x = np.ones(n) / math.sqrt(n)
    for _ in range(INVERSE_ITER_CAP):
        y = solve_banded((1, 1), ab, x)
        if not np.all(np.isfinite(y)):
            raise EigenSolveFailure("inverse iteration produced non-finite values")
        y /= np.linalg.norm(y)
        if y @ x < 0:
            y = -y
        done = np.linalg.norm(y - x) < 1e-14
        x = y
        if done:
            return x
    # convergence is one step when the shift is this close; accept the last iterate
    return x


# ---------------------------------------------------------------------------
# the radial linearization


def pencil(profile: RadialProfile):
    """Diagonals of K and the diagonal of B on interior nodes."""
    c = profile.config
    r = profile.r_grid
    h = profile.h
    flux = ((r[:-1] + r[1:]) / 2) ** (c.N - 1) / h**2
    ri = r[1:-1]
    q = profile.potential()[1:-1]
    kd = flux[:-1] + flux[1:] - ri ** (c.N - 1) * q
    ke = -flux[1:-1]
    bd = ri ** (c.N - 3)
    return kd, ke, bd


@dataclass(frozen=True, eq=False)
class SpectralPair:
    alpha1: float
    w1: np.ndarray
    profile: RadialProfile
    bracket: tuple = (None, None)

    @property
    def r_grid(self) -> np.ndarray:
        return self.profile.r_grid

    def weak_form_residual(self) -> float:
        """max|K w - α B w| relative to max|K| max|w|."""
        kd, ke, bd = pencil(self.profile)
        w = self.w1[1:-1]
        Kw = kd * w
        Kw[:-1] += ke * w[1:]
        Kw[1:] += ke * w[:-1]
        res = Kw - self.alpha1 * bd * w
        return float(np.max(np.abs(res)) / (np.max(np.abs(kd)) * np.max(np.abs(w))))


def alpha1(profile: RadialProfile) -> SpectralPair:
    """Smallest eigenvalue of the radial linearization and its positive eigenfunction."""
    kd, ke, bd = pencil(profile)
    s = 1.0 / np.sqrt(bd)
    d = kd * s * s
    e = ke * s[:-1] * s[1:]
    lo, hi = smallest_eigenvalue(d, e)
    val = 0.5 * (lo + hi)
    # shift just below the bracket so the shifted matrix is nonsingular
    gap = max(hi - lo, 1e-12 * max(1.0, abs(val)))
    x = inverse_iteration(d, e, lo - gap)
    v = x * s
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    v /= np.max(v)
    w = np.zeros(profile.r_grid.size)
    w[1:-1] = v
    if not val < 0:
        raise EigenSolveFailure(f"first eigenvalue {val} is not negative (p={profile.config.p})")
    if np.any(v <= 0):
        raise EigenSolveFailure("first eigenfunction changes sign")
    return SpectralPair(alpha1=float(val), w1=w, profile=profile, bracket=(lo, hi))


def alpha1_at(config: ProblemConfig, p: float | None = None, n: int | None = None) -> SpectralPair:
    cfg = config if p is None else config.with_p(p)
    return alpha1(solve_radial(cfg, n=n))


def alpha1_richardson(config: ProblemConfig, n: int | None = None) -> tuple[float, float, float]:
    """(α₁ on n nodes, α₁ on 2n-1 nodes, second-order extrapolation)."""
    n = config.n_r if n is None else n
    a = alpha1_at(config, n=n).alpha1
    b = alpha1_at(config, n=2 * n - 1).alpha1
    return a, b, (4 * b - a) / 3


def scan_alpha1(config: ProblemConfig, p_grid) -> list[tuple[float, float]]:
    """(p, α₁(p)) over a strictly increasing grid of exponents."""
    ps = [float(p) for p in p_grid]
    if any(p <= 1 for p in ps) or any(q <= p for p, q in zip(ps, ps[1:])):
        raise ValueError("p_grid must be strictly increasing with every p > 1")
    out = []
    for p in ps:
        try:
            out.append((p, alpha1_at(config, p).alpha1))
        except SolverError as exc:
            exc.p = p
            raise
    return out


# ---------------------------------------------------------------------------
# degeneracies


@dataclass(frozen=True)
class DegeneracyPoint:
    p_star: float
    k: int
    mu_k: int
    morse_before: int
    morse_after: int
    is_morse_change: bool
    alpha1: float = math.nan
    N: int = 3

    @property
    def defect(self) -> float:
        return abs(self.alpha1 + self.mu_k)

    def to_record(self) -> dict:
        return {
            "p_star": self.p_star,
            "k": self.k,
            "mu_k": self.mu_k,
            "morse_before": self.morse_before,
            "morse_after": self.morse_after,
            "is_morse_change": self.is_morse_change,
        }


def _scan(config, p_range, n_scan):
    lo, hi = p_range
    if not 1 < lo < hi:
        raise ValueError(f"p_range must satisfy 1 < lo < hi, got {p_range}")
    grid = np.geomspace(lo, hi, n_scan)
    vals = np.empty(n_scan)
    for i, p in enumerate(grid):
        try:
            vals[i] = alpha1_at(config, float(p)).alpha1
        except SolverError:
            vals[i] = np.nan
    return grid, vals


def refine_degeneracy(config: ProblemConfig, k: int, lo: float, hi: float) -> tuple[float, float]:
    """Root of α₁(p) + μ_k inside [lo, hi]; returns (p*, α₁(p*))."""
    m = mu(k, config.N)
    cache = {}

    def f(p):
        if p not in cache:
            cache[p] = alpha1_at(config, p).alpha1
        return cache[p] + m

    try:
        brentq(f, lo, hi, xtol=1e-15, rtol=1e-13, maxiter=200)
    except RuntimeError as exc:
        raise NonConvergence(f"degeneracy k={k}: {exc}") from None
    # brentq stops on bracket width, so keep the evaluated point with least defect
    p = min(cache, key=lambda q: abs(cache[q] + m))
    a = cache[p]
    if not abs(a + m) < config.tol_root * m:
        raise NonConvergence(
            f"degeneracy k={k} near p={p}: |alpha1+mu| = {abs(a + m):.3e} above tol_root*mu"
        )
    return float(p), float(a)


def morse_change(config: ProblemConfig, k: int, p_star: float, delta: float | None = None):
    """(morse_before, morse_after, sign-product) at p* ∓ δ."""
    if delta is None:
        delta = config.delta_rel * p_star
    a_lo = alpha1_at(config, p_star - delta).alpha1
    a_hi = alpha1_at(config, p_star + delta).alpha1
    m = mu(k, config.N)
    return morse_index(a_lo, config.N), morse_index(a_hi, config.N), (a_lo + m) * (a_hi + m)


def find_degeneracies(
    config: ProblemConfig,
    k: int,
    p_range: tuple[float, float],
    n_scan: int = SCAN_POINTS,
    scan: tuple[np.ndarray, np.ndarray] | None = None,
) -> list[DegeneracyPoint]:
    """All sign changes of α₁(p) + μ_k visible on a log-spaced scan, refined.

    A precomputed ``scan`` (grid, α₁ values) may be shared between several k.
    """
    if k < 1:
        raise ValueError(f"harmonic index must be >= 1, got {k}")
    grid, vals = _scan(config, p_range, n_scan) if scan is None else scan
    m = mu(k, config.N)
    g = vals + m
    out = []
    for i in range(grid.size - 1):
        if np.isnan(g[i]) or np.isnan(g[i + 1]):
            continue
        if g[i] == 0.0 or g[i] * g[i + 1] > 0:
            continue
        p_star, a = refine_degeneracy(config, k, float(grid[i]), float(grid[i + 1]))
        before, after, _ = morse_change(config, k, p_star)
        out.append(
            DegeneracyPoint(
                p_star=p_star, k=k, mu_k=m, morse_before=before, morse_after=after,
                is_morse_change=before != after, alpha1=a, N=config.N,
            )
        )
    # a failed scan point between two valid samples of opposite sign hides a crossing
    finite = np.flatnonzero(~np.isnan(g))
    for i, j in zip(finite, finite[1:]):
        if j > i + 1 and g[i] * g[j] < 0:
            warnings.warn(
                f"sign change of alpha1+mu_{k} between p={grid[i]:.6g} and p={grid[j]:.6g} "
                "straddles a solver failure",
                RuntimeWarning,
                stacklevel=2,
            )
    return sorted(out, key=lambda d: d.p_star)


def find_all_degeneracies(config: ProblemConfig, ks, p_range, n_scan: int = SCAN_POINTS):
    """Degeneracies for several k from one shared α₁ scan."""
    ks = list(ks)
    if not ks:
        return {}
    scan = _scan(config, p_range, n_scan)
    return {k: find_degeneracies(config, k, p_range, scan=scan) for k in ks}


def parity_report(points: list[DegeneracyPoint]) -> dict:
    """Counts Morse-index-changing points and flags the parity of the count."""
    ks = {d.k for d in points}
    if len(ks) > 1:
        raise ValueError(f"points mix harmonic indices {sorted(ks)}")
    count = sum(1 for d in points if d.is_morse_change)
    return {
        "k": ks.pop() if ks else None,
        "count": count,
        "parity": "odd" if count % 2 else "even",
        "odd": bool(count % 2),
        "p_stars": [d.p_star for d in points if d.is_morse_change],
    }
