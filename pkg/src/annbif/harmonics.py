"""O(N-1)-invariant spherical harmonics as exact polynomials in z = cos θ.

For N >= 3 the degree-k harmonic is the Jacobi polynomial P_k^{(m,m)} with
m = (N-3)/2, expanded from the Rodrigues formula

    P_k^{(m,m)}(z) = (-1)^k / (2^k k!) (1-z²)^{-m} d^k/dz^k (1-z²)^{k+m}.

Terms are tracked as c z^i (1-z²)^e with rational e, so half-integer m
(even N) needs no special handling: after k derivatives every exponent is
at least m and the prefactor leaves integer powers only.  For N = 2 the
harmonics are cos(kθ); the coefficients stored are those of the Chebyshev
polynomial T_k, and evaluation uses the θ-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError

DOMAIN_SLACK = 1e-12


# ---------------------------------------------------------------------------
# exact polynomial helpers (ascending coefficient tuples of Fractions)


def _trim(c):
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c) if c else (Fraction(0),)


def poly_deriv(c):
    if len(c) == 1:
        return (Fraction(0),)
    return _trim(Fraction(i) * c[i] for i in range(1, len(c)))


def poly_eval_exact(c, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for coef in reversed(c):
        acc = acc * x + coef
    return acc


def poly_rem(num, den):
    num = list(num)
    den = _trim(den)
    if den == (Fraction(0),):
        raise ZeroDivisionError("polynomial division by zero")
    dl = len(den) - 1
    lead = den[-1]
    while len(num) - 1 >= dl and any(num):
        shift = len(num) - 1 - dl
        f = num[-1] / lead
        for i, d in enumerate(den):
            num[shift + i] -= f * d
        num.pop()
    return _trim(num) if num else (Fraction(0),)


def _is_zero(c):
    return all(x == 0 for x in c)


def sturm_chain(c):
    chain = [_trim(c), poly_deriv(_trim(c))]
    while not _is_zero(chain[-1]) and len(chain[-1]) > 1:
        r = poly_rem(chain[-2], chain[-1])
        if _is_zero(r):
            break
        chain.append(tuple(-x for x in r))
    return chain


def _variations(chain, x):
    signs = [s for s in (poly_eval_exact(c, x) for c in chain) if s != 0]
    return sum(1 for u, v in zip(signs, signs[1:]) if (u > 0) != (v > 0))


def count_roots(c, lo, hi) -> int:
    """Distinct real roots of c in (lo, hi] (exact Sturm count)."""
    if _is_zero(c):
        raise ValueError("zero polynomial has infinitely many roots")
    chain = sturm_chain(c)
    return _variations(chain, Fraction(lo)) - _variations(chain, Fraction(hi))


def isolate_roots(c, lo=-1, hi=1, width=None):
    """Disjoint rational intervals (l, r) each holding exactly one distinct root in (lo, hi).

    Endpoints are never roots.  With ``width`` the intervals are refined
    until shorter than it.
    """
    if _is_zero(c) or len(_trim(c)) == 1:
        return []
    chain = sturm_chain(c)
    lo, hi = Fraction(lo), Fraction(hi)

    def nudge(x, toward):
        # move off an exact root toward a neighbouring point
        step = (toward - x) / 1024
        while poly_eval_exact(c, x) == 0:
            x += step
            step /= 2
        return x

    # roots exactly at the open-interval ends are excluded
    if poly_eval_exact(c, lo) == 0:
        lo = nudge(lo, hi)
    if poly_eval_exact(c, hi) == 0:
        hi = nudge(hi, lo)
    out = []
    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        n = _variations(chain, a) - _variations(chain, b)
        if n == 0:
            continue
        if n == 1 and (width is None or b - a < width):
            out.append((a, b))
            continue
        mid = (a + b) / 2
        k = 2
        while poly_eval_exact(c, mid) == 0:
            mid = a + (b - a) * Fraction(k, 2 * k + 1)
            k += 1
        stack.append((a, mid))
        stack.append((mid, b))
    return sorted(out)


def sign_changes_exact(c, lo=-1, hi=1) -> int:
    """Number of roots in (lo, hi) at which c changes sign."""
    return sum(
        1 for a, b in isolate_roots(c, lo, hi)
        if (poly_eval_exact(c, a) > 0) != (poly_eval_exact(c, b) > 0)
    )


# ---------------------------------------------------------------------------
# construction


def _binom_expand(e: int):
    """(1 - z²)^e as ascending coefficients."""
    c = [Fraction(0)] * (2 * e + 1)
    for j in range(e + 1):
        c[2 * j] = Fraction((-1) ** j * math.comb(e, j))
    return c


def rodrigues(k: int, m: Fraction):
    """Exact coefficients of P_k^{(m,m)} for m > -1 (m integer or half-integer)."""
    terms = {(0, Fraction(k) + m): Fraction(1)}
    for _ in range(k):
        nxt = {}
        for (i, e), c in terms.items():
            if i:
                key = (i - 1, e)
                nxt[key] = nxt.get(key, 0) + c * i
            if e:
                key = (i + 1, e - 1)
                nxt[key] = nxt.get(key, 0) - 2 * e * c
        terms = {key: v for key, v in nxt.items() if v != 0}
    out = [Fraction(0)] * (k + 1)
    for (i, e), c in terms.items():
        q = e - m
        if q.denominator != 1 or q < 0:
            raise ArithmeticError(f"non-polynomial remainder (1-z²)^{q}")
        for j, b in enumerate(_binom_expand(int(q))):
            if b:
                out[i + j] += c * b
    scale = Fraction((-1) ** k, 2**k * math.factorial(k))
    return _trim(x * scale for x in out)


def chebyshev_t(k: int):
    """Exact coefficients of T_k."""
    t0, t1 = (Fraction(1),), (Fraction(0), Fraction(1))
    if k == 0:
        return t0
    for _ in range(k - 1):
        nxt = [Fraction(0)] * (len(t1) + 1)
        for i, c in enumerate(t1):
            nxt[i + 1] += 2 * c
        for i, c in enumerate(t0):
            nxt[i] -= c
        t0, t1 = t1, _trim(nxt)
    return t1


@dataclass(frozen=True)
class HarmonicPoly:
    k: int
    N: int
    coeffs: tuple
    mu_k: int
    kind: str = "jacobi"

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def float_coeffs(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    def __call__(self, z):
        return eval_harmonic(self, z)

    def derivative(self):
        return poly_deriv(self.coeffs)

    def of_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "trig":
            return np.cos(self.k * theta)
        return horner(self.float_coeffs, np.cos(theta))

    def to_record(self) -> dict:
        return {
            "k": self.k,
            "N": self.N,
            "kind": "cos(k theta)" if self.kind == "trig" else "jacobi",
            "mu_k": self.mu_k,
            "coeffs_exact": [str(c) for c in self.coeffs],
            "coeffs": [float(c) for c in self.coeffs],
        }


def build_harmonic(k: int, N: int) -> HarmonicPoly:
    if isinstance(k, bool) or not isinstance(k, int) or k < 0:
        raise ValueError(f"k must be an integer >= 0, got {k!r}")
    if isinstance(N, bool) or not isinstance(N, int) or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")
    mu_k = k * (N - 2 + k)
    if N == 2:
        return HarmonicPoly(k=k, N=2, coeffs=chebyshev_t(k), mu_k=mu_k, kind="trig")
    return HarmonicPoly(k=k, N=N, coeffs=rodrigues(k, Fraction(N - 3, 2)), mu_k=mu_k)


# ---------------------------------------------------------------------------
# evaluation and checks


def horner(c, z):
    z = np.asarray(z, dtype=float)
    acc = np.zeros_like(z)
    for coef in reversed(list(c)):
        acc = acc * z + coef
    return acc


def _check_domain(z):
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1 + DOMAIN_SLACK) or np.any(np.isnan(z)):
        raise DomainError(f"z must lie in [-1, 1]; got max |z| = {np.max(np.abs(z))}")
    return z


def eval_harmonic(h: HarmonicPoly, z):
    z = _check_domain(z)
    if h.kind == "trig":
        out = np.cos(h.k * np.arccos(np.clip(z, -1.0, 1.0)))
    else:
        out = horner(h.float_coeffs, z)
    return float(out) if out.ndim == 0 else out


def chebyshev_points(n: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [-1, 1], endpoints included."""
    return np.cos(np.pi * np.arange(n) / (n - 1))[::-1]


def jacobi_ode_residual(h: HarmonicPoly, z_grid) -> float:
    """max |(1-z²)Φ'' - (N-1)zΦ' + μ_k Φ| over the grid (absolute)."""
    if h.N < 3:
        raise ValueError("the Jacobi form applies to N >= 3")
    z = _check_domain(z_grid)
    d1 = poly_deriv(h.coeffs)
    d2 = poly_deriv(d1)
    f0 = horner([float(c) for c in h.coeffs], z)
    f1 = horner([float(c) for c in d1], z)
    f2 = horner([float(c) for c in d2], z)
    res = (1 - z * z) * f2 - (h.N - 1) * z * f1 + h.mu_k * f0
    return float(np.max(np.abs(res)))


def sup_norm(h: HarmonicPoly, n: int = 1001) -> float:
    """sup over [-1, 1]; for these polynomials it is attained at z = ±1."""
    z = np.concatenate([chebyshev_points(n), [-1.0, 1.0]])
    return float(np.max(np.abs(eval_harmonic(h, z))))


def count_sign_changes(h: HarmonicPoly) -> int:
    """Sign changes of Φ_k on (-1, 1) by exact Sturm root isolation."""
    if h.N < 3 and h.kind != "trig":
        raise ValueError("count_sign_changes needs a polynomial harmonic")
    return sign_changes_exact(h.coeffs)


def interlaces(lower: HarmonicPoly, upper: HarmonicPoly) -> bool:
    """True if a root of ``upper`` lies strictly between consecutive roots of ``lower``."""
    iv = isolate_roots(lower.coeffs)
    for _ in range(200):
        if all(count_roots(upper.coeffs, a, b) == 0 for a, b in iv):
            break
        width = min(b - a for a, b in iv) / 2
        iv = isolate_roots(lower.coeffs, width=width)
    else:
        return False
    for (_, r0), (l1, _) in zip(iv, iv[1:]):
        if count_roots(upper.coeffs, r0, l1) < 1:
            return False
    return True


def theta_derivative_sign_profile(h: HarmonicPoly, theta_grid=None) -> dict:
    """Sign behaviour of dΦ_k/dθ = -sin θ Φ_k'(cos θ) on [0, π].

    Grid samples with magnitude below 1e-12 of the maximum count as zero.
    ``exact_sign_changes`` counts the sign changes on (0, π) from the exact
    roots of Φ_k' in (-1, 1) (sin θ > 0 there).
    """
    if h.k < 1:
        raise ValueError("k must be >= 1")
    if theta_grid is None:
        theta_grid = np.linspace(0.0, np.pi, 2001)
    theta = np.asarray(theta_grid, dtype=float)
    if h.kind == "trig":
        vals = -h.k * np.sin(h.k * theta)
    else:
        vals = -np.sin(theta) * horner([float(c) for c in poly_deriv(h.coeffs)], np.cos(theta))
    scale = float(np.max(np.abs(vals))) or 1.0
    s = np.sign(np.where(np.abs(vals) > 1e-12 * scale, vals, 0.0))
    nz = s[s != 0]
    grid_changes = int(np.count_nonzero(nz[1:] != nz[:-1]))
    return {
        "k": h.k,
        "N": h.N,
        "nonpositive": bool(np.all(s <= 0)),
        "nonnegative": bool(np.all(s >= 0)),
        "changes_sign": grid_changes > 0,
        "grid_sign_changes": grid_changes,
        "exact_sign_changes": sign_changes_exact(poly_deriv(h.coeffs)),
        "min": float(np.min(vals)),
        "max": float(np.max(vals)),
    }


def harmonic_report(k_max: int, Ns, n_points: int = 1001) -> dict:
    """Coefficients, residuals and zero counts for k = 0..k_max and each N."""
    z = chebyshev_points(n_points)
    rows = []
    for N in Ns:
        for k in range(k_max + 1):
            h = build_harmonic(k, N)
            rec = h.to_record()
            rec["sign_changes"] = count_sign_changes(h)
            if N >= 3:
                rec["ode_residual_rel"] = jacobi_ode_residual(h, z) / sup_norm(h)
            if k >= 1:
                prof = theta_derivative_sign_profile(h)
                rec["dtheta_nonpositive"] = prof["nonpositive"]
                rec["dtheta_sign_changes"] = prof["exact_sign_changes"]
            rows.append(rec)
    notes = {
        "normalization": "Rodrigues normalization of P_k^((N-3)/2,(N-3)/2); harmonics are defined up to a constant",
        "phi2_prefactor": {
            "rodrigues": "(N+1)/8 * (N z^2 - 1)",
            "alternative": "(N-1)/8 * (N z^2 - 1)",
            "comment": "the (N-1)/8 prefactor does not reduce to the Legendre P_2 = (3z^2-1)/2 at N = 3; "
            "only the shape (N z^2 - 1) is normalization independent",
        },
    }
    return {"harmonics": rows, "notes": notes}
