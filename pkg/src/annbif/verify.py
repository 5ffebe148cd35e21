"""Invariant suites: cone invariance of T, maximum principle, harmonic
residuals and manufactured-solution convergence.

Every suite returns a list of check records
``{"suite", "name", "passed", "worst", "bound", "count"}``; a run passes
iff every check passes.  Random samples come from a single seeded
generator so reports are reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .cones import is_in_K1, is_in_K2, is_in_Kn
from .config import ProblemConfig
from .harmonics import build_harmonic, chebyshev_points, count_sign_changes, jacobi_ode_residual, sup_norm
from .pde2d import Operator2D, apply_T

SUITES = ("cones", "maxprinciple", "harmonics", "manufactured")
CONE_PS = (2.0, 3.0, 5.0)
MAXP_TOL = 1e-12


def _check(suite, name, worst, bound, count=1, passed=None):
    worst = float(worst)
    ok = bool(worst <= bound) if passed is None else bool(passed)
    return {"suite": suite, "name": name, "passed": ok, "worst": worst, "bound": float(bound), "count": int(count)}


# -- random cone members ------------------------------------------------------


def _radial_factor(rng, rho):
    """Random nonnegative ρ-profile vanishing at both ends."""
    x = (rho - rho[0]) / (rho[-1] - rho[0])
    c = rng.random(4)
    s = np.sin(np.pi * x) * (c[0] + c[1] * x + c[2] * x**2 + c[3] * np.sin(3 * np.pi * x) ** 2)
    s[[0, -1]] = 0.0
    return s


def _decreasing(rng, n):
    return np.sort(rng.random(n))[::-1] * rng.uniform(0.5, 2.0)


def sample_K1(rng, op: Operator2D, terms: int = 3) -> np.ndarray:
    """Sum of products s(ρ)·m(θ) with s >= 0 and m nonincreasing on [0, π]."""
    v = np.zeros(op.shape)
    for _ in range(terms):
        v += np.outer(_radial_factor(rng, op.rho), _decreasing(rng, op.n_theta))
    return v


def _even_decreasing(rng, n):
    half = _decreasing(rng, (n + 1) // 2)
    return np.r_[half, half[: n // 2][::-1]]


def sample_K2(rng, op: Operator2D, terms: int = 3) -> np.ndarray:
    """Sum of products with m even about π/2 and nonincreasing on [0, π/2]."""
    v = np.zeros(op.shape)
    for _ in range(terms):
        v += np.outer(_radial_factor(rng, op.rho), _even_decreasing(rng, op.n_theta))
    return v


def sample_Kn(rng, op: Operator2D, n: int, terms: int = 3) -> np.ndarray:
    """Sum of products with m even, 2π/n-periodic and nonincreasing on [0, π/n]."""
    m = op.n_theta // n
    i = np.arange(op.n_theta) % m
    dist = np.minimum(i, m - i)  # grid distance to the nearest multiple of 2π/n
    v = np.zeros(op.shape)
    for _ in range(terms):
        prof = _decreasing(rng, m // 2 + 1)
        v += np.outer(_radial_factor(rng, op.rho), prof[dist])
    return v


def _noisy(rng, v, noise):
    if noise <= 0:
        return v
    out = v + noise * np.max(np.abs(v)) * rng.standard_normal(v.shape)
    out[[0, -1]] = 0.0
    return out


# -- suites -----------------------------------------------------------------


def suite_cones(config: ProblemConfig, rng, samples: int = 200, noise: float = 0.0, op=None) -> list:
    """T maps each cone into itself: sample g in the cone, test g and T(p, g)."""
    op = Operator2D(config) if op is None else op
    tol = config.tol_cone
    out = []
    if config.N == 2:
        kinds = [(f"Kn({n})", lambda r, n=n: sample_Kn(r, op, n), lambda f, n=n: is_in_Kn(f, n, tol))
                 for n in (1, 2) if op.n_theta % (2 * n) == 0]
    else:
        kinds = [("K1", lambda r: sample_K1(r, op), lambda f: is_in_K1(f, tol)),
                 ("K2", lambda r: sample_K2(r, op), lambda f: is_in_K2(f, tol))]
    for name, sample, test in kinds:
        for p in CONE_PS:
            worst_in = worst_out = 0.0
            for _ in range(samples):
                g = op.field(_noisy(rng, sample(rng), noise))
                worst_in = max(worst_in, test(g).worst_violation)
                worst_out = max(worst_out, test(apply_T(p, g, op)).worst_violation)
            out.append(_check("cones", f"{name} sample p={p:g}", worst_in, tol, samples))
            out.append(_check("cones", f"{name} T-invariance p={p:g}", worst_out, tol, samples))
    return out


def suite_maxprinciple(config: ProblemConfig, rng, samples: int = 200, noise: float = 0.0, op=None) -> list:
    """g >= 0 gives (-Δ - λ)⁻¹ g >= -1e-12 sup|w|; the stencil has M-matrix signs."""
    op = Operator2D(config) if op is None else op
    diag = op.stencil_diagnostics()
    out = [_check("maxprinciple", "m_matrix_signs", 0.0 if diag["m_matrix_signs"] else 1.0, 0.0)]
    worst = 0.0
    for _ in range(samples):
        g = rng.random(op.shape) ** 3
        g[[0, -1]] = 0.0
        g = _noisy(rng, g, noise)
        w = op.solve(g[1:-1].ravel())
        worst = max(worst, float(-w.min() / np.max(np.abs(w))))
    out.append(_check("maxprinciple", "nonnegative solution", worst, MAXP_TOL, samples))
    return out


def suite_harmonics(config: ProblemConfig, rng=None, k_max: int = 10, Ns=(3, 4, 5, 7), **_) -> list:
    z = chebyshev_points(1001)
    res = 0.0
    zero_defect = 0
    for N in Ns:
        for k in range(1, k_max + 1):
            h = build_harmonic(k, N)
            res = max(res, jacobi_ode_residual(h, z) / sup_norm(h))
            zero_defect = max(zero_defect, abs(count_sign_changes(h) - k))
    return [
        _check("harmonics", "ode residual / sup", res, 1e-10, k_max * len(Ns)),
        _check("harmonics", "sign changes minus k", zero_defect, 0, k_max * len(Ns)),
    ]


# -- manufactured solution -----------------------------------------------------


def manufactured(config: ProblemConfig):
    """w*(ρ, θ) = sin(π(ρ-a)/(b-a)) e^{cos θ} and f = (-Δ - λ) w*."""
    a, b, N, lam = config.a, config.b, config.N, config.lam
    c = math.pi / (b - a)

    def w(rho, theta):
        return np.outer(np.sin(c * (rho - a)), np.exp(np.cos(theta)))

    def f(rho, theta):
        S = np.sin(c * (rho - a))
        dS = c * np.cos(c * (rho - a))
        d2S = -c * c * S
        E = np.exp(np.cos(theta))
        ang = (np.sin(theta) ** 2 - (N - 1) * np.cos(theta)) * E
        lap = np.outer(d2S + (N - 1) / rho * dS, E) + np.outer(S / rho**2, ang)
        return -lap - lam * w(rho, theta)

    return w, f


def manufactured_errors(config: ProblemConfig, levels=(33, 65, 129)) -> list:
    """Sup errors of the discrete solve on successively halved grids."""
    w, f = manufactured(config)
    errs = []
    for n in levels:
        nt = n - 1 if config.N == 2 else n
        op = Operator2D(config.replace(n_rho=n, n_theta=nt))
        rhs = f(op.rho[1:-1], op.theta).ravel()
        u = op.embed(op.solve(rhs))
        errs.append(float(np.max(np.abs(u - w(op.rho, op.theta)))))
    return errs


def suite_manufactured(config: ProblemConfig, rng=None, **_) -> list:
    errs = manufactured_errors(config)
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    out = [_check("manufactured", f"error level {i}", e, 1e-2) for i, e in enumerate(errs)]
    for i, r in enumerate(ratios):
        out.append(_check("manufactured", f"richardson ratio {i}", abs(r - 4.0), 0.5,
                          passed=3.5 <= r <= 4.5))
    return out


_RUNNERS = {
    "cones": suite_cones,
    "maxprinciple": suite_maxprinciple,
    "harmonics": suite_harmonics,
    "manufactured": suite_manufactured,
}


def run_verify(config: ProblemConfig, suite: str = "all", seed: int = 42, samples: int = 200,
               noise: float = 0.0) -> dict:
    """Run one suite or all of them; ``noise`` perturbs random samples (forced-failure path)."""
    names = SUITES if suite == "all" else (suite,)
    for s in names:
        if s not in _RUNNERS:
            raise ValueError(f"unknown suite {s!r}; expected one of {', '.join(SUITES)} or 'all'")
    rng = np.random.default_rng(seed)
    op = Operator2D(config) if {"cones", "maxprinciple"} & set(names) else None
    checks = []
    for s in names:
        if s in ("cones", "maxprinciple"):
            checks += _RUNNERS[s](config, rng, samples=samples, noise=noise, op=op)
        else:
            checks += _RUNNERS[s](config, rng)
    return {
        "seed": seed,
        "suites": list(names),
        "passed": all(c["passed"] for c in checks),
        "violations": sum(not c["passed"] for c in checks),
        "checks": checks,
    }
