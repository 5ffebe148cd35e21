"""The reduced problem in (ρ, θ) for O(N-1)-invariant functions.

On functions of ρ = |x| and the polar angle θ the operator -Δ - λ reads

    -w_ρρ - (N-1)/ρ w_ρ - (1/ρ²)(w_θθ + (N-2) cot θ w_θ) - λ w.

Both parts are discretized in flux form,

    -(1/ρ^{N-1}) (ρ^{N-1} w_ρ)_ρ   and   -(1/sin^{N-2}θ) (sin^{N-2}θ w_θ)_θ,

with ρ-faces at midpoints and θ-faces at half-nodes.  At the poles the
flux form with the half-cell volume sin^{N-2}(Δθ/2) Δθ / (2(N-1)) gives the
row 2(N-1)(w₀ - w₁)/Δθ², the even-reflection closure of the cot θ term.
The resulting matrix is an M-matrix on every grid and becomes symmetric
under the diagonal weight W = ρ^{N-1} h ⊗ V_θ.

For N = 2 the angular grid is the full circle θ_j = 2πj/n, j < n, with
periodic differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, cg, eigsh, splu

from .config import ProblemConfig
from .errors import EigenSolveFailure, GridMismatch, LinearSolveFailure
from .radial import RadialProfile, fmt, radial_grid, radial_matrix, radial_stencil, resample_profile
from .spectral import smallest_eigenvalue

GAUSS_POINTS = 12
CG_RTOL = 1e-12


def theta_grid(config: ProblemConfig, n: int | None = None) -> np.ndarray:
    n = config.n_theta if n is None else n
    if config.N == 2:
        return 2 * np.pi * np.arange(n) / n
    return np.linspace(0.0, np.pi, n)


def rho_grid(config: ProblemConfig, n: int | None = None) -> np.ndarray:
    return radial_grid(config, config.n_rho if n is None else n)


@dataclass(frozen=True, eq=False)
class Field2D:
    """Values on the (ρ, θ) grid, ρ-major: ``values[i, j]`` at (rho[i], theta[j])."""

    config: ProblemConfig
    rho: np.ndarray
    theta: np.ndarray
    values: np.ndarray

    @property
    def periodic(self) -> bool:
        return self.config.N == 2

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values) -> "Field2D":
        return Field2D(self.config, self.rho, self.theta, np.asarray(values, dtype=float))

    def interior(self) -> np.ndarray:
        return self.values[1:-1].ravel()

    def nonradial_measure(self) -> float:
        v = self.values
        return float(np.max(np.max(v, axis=1) - np.min(v, axis=1)))

    def reflect(self) -> "Field2D":
        """θ ↦ π - θ (N >= 3) or θ ↦ -θ (N = 2)."""
        if self.periodic:
            return self.with_values(np.roll(self.values[:, ::-1], 1, axis=1))
        return self.with_values(self.values[:, ::-1])

    def rotate(self, shift: int) -> "Field2D":
        """Cyclic shift by ``shift`` angular cells (N = 2 only)."""
        if not self.periodic:
            raise GridMismatch("rotation needs the full-circle grid")
        return self.with_values(np.roll(self.values, -shift, axis=1))

    def check(self, tol: float = 0.0) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")
        if self.values.shape != (self.rho.size, self.theta.size):
            raise GridMismatch(f"values shape {self.values.shape} does not match the grid")
        if np.any(np.abs(self.values[[0, -1]]) > tol * max(self.sup, 1.0)):
            raise ValueError("field does not vanish at rho = a and rho = b")

    def to_csv(self, path):
        R, T = np.meshgrid(self.rho, self.theta, indexing="ij")
        with open(path, "w", newline="\n") as fh:
            fh.write("rho,theta,value\n")
            for r, t, v in zip(R.ravel(), T.ravel(), self.values.ravel()):
                fh.write(f"{fmt(r)},{fmt(t)},{fmt(v)}\n")

    def to_record(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rho": [float(x) for x in self.rho],
            "theta": [float(x) for x in self.theta],
            "values": [[float(x) for x in row] for row in self.values],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh)
            fh.write("\n")

    @classmethod
    def from_record(cls, rec: dict) -> "Field2D":
        cfg = ProblemConfig.from_dict(rec["config"])
        f = cls(cfg, np.asarray(rec["rho"], float), np.asarray(rec["theta"], float),
                np.asarray(rec["values"], float))
        f.check(tol=0.0)
        return f


def angular_weights(theta: np.ndarray, N: int) -> np.ndarray:
    """Cell volumes V_j = ∫ sin^{N-2} over [θ_j - dθ/2, θ_j + dθ/2] ∩ [0, π].

    Exact cell integrals (rather than sin^{N-2}(θ_j) dθ) keep the scheme
    second order next to the poles for every N.
    """
    n = theta.size
    if N == 2:
        return np.full(n, 2 * np.pi / n)
    dt = theta[1] - theta[0]
    lo = np.clip(theta - dt / 2, 0.0, np.pi)
    hi = np.clip(theta + dt / 2, 0.0, np.pi)
    x, wq = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    return (np.sin(mid[:, None] + half[:, None] * x) ** (N - 2) @ wq) * half


def angular_matrix(theta: np.ndarray, N: int) -> sparse.csr_matrix:
    """Discrete -(1/sin^{N-2})(sin^{N-2} w_θ)_θ, or -w_θθ on the circle for N = 2."""
    n = theta.size
    if N == 2:
        dt = 2 * np.pi / n
        main = np.full(n, 2.0 / dt**2)
        off = np.full(n - 1, -1.0 / dt**2)
        M = sparse.diags([off, main, off], [-1, 0, 1], format="lil")
        M[0, n - 1] = M[n - 1, 0] = -1.0 / dt**2
        return M.tocsr()
    dt = theta[1] - theta[0]
    s = np.sin((theta[:-1] + theta[1:]) / 2) ** (N - 2) / dt
    V = angular_weights(theta, N)
    diag = (np.r_[s, 0.0] + np.r_[0.0, s]) / V
    lower = -s / V[1:]
    upper = -s / V[:-1]
    return sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")


class Operator2D:
    """-Δ - λ on interior ρ rows × all θ columns, plus its factorization.

    The factorization is computed on construction and reused by every solve;
    it depends on the grid and λ only, not on p.
    """

    def __init__(self, config: ProblemConfig):
        self.config = config
        self.rho = rho_grid(config)
        self.theta = theta_grid(config)
        self.n_rho = self.rho.size
        self.n_theta = self.theta.size
        self.h = float(self.rho[1] - self.rho[0])
        self.A = radial_matrix(self.rho, config.N)
        self.B = angular_matrix(self.theta, config.N)
        self.V = angular_weights(self.theta, config.N)
        ri = self.rho[1:-1]
        It = sparse.identity(self.n_theta, format="csr")
        self.L = (
            sparse.kron(self.A, It)
            + sparse.kron(sparse.diags(1.0 / ri**2), self.B)
            - config.lam * sparse.identity((self.n_rho - 2) * self.n_theta)
        ).tocsc()
        self.W = np.kron(ri ** (config.N - 1) * self.h, self.V)
        try:
            self._lu = splu(self.L)
        except RuntimeError:
            self._lu = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rho, self.n_theta)

    def field(self, values) -> Field2D:
        return Field2D(self.config, self.rho, self.theta, np.asarray(values, dtype=float))

    def zeros(self) -> Field2D:
        return self.field(np.zeros(self.shape))

    def embed(self, interior: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        out[1:-1] = np.asarray(interior).reshape(self.n_rho - 2, self.n_theta)
        return out

    def _compatible(self, f: Field2D):
        if f.values.shape != self.shape or f.rho.size != self.n_rho or not np.allclose(f.theta, self.theta):
            raise GridMismatch(
                f"field grid {f.values.shape} does not match operator grid {self.shape}"
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """L⁻¹ rhs on interior unknowns; conjugate gradients on W L if LU is unavailable."""
        x = None
        if self._lu is not None:
            x = self._lu.solve(rhs)
            if not np.all(np.isfinite(x)):
                x = None
        if x is None:
            # W L is symmetric positive definite for λ <= 0
            WL = sparse.diags(self.W) @ self.L
            scale = float(np.max(np.abs(rhs))) or 1.0
            x, info = cg(WL, self.W * rhs / scale, rtol=CG_RTOL, maxiter=20 * rhs.size)
            if info != 0:
                raise LinearSolveFailure(f"conjugate gradients failed (info={info})")
            x = x * scale
        return x

    def apply(self, f: Field2D) -> np.ndarray:
        """L applied to the interior of f (boundary rows assumed zero)."""
        self._compatible(f)
        return self.L @ f.interior()

    def weighted_dot(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(self.W * f * g))

    def theta_mean(self, interior: np.ndarray) -> np.ndarray:
        """Per-ρ weighted θ-average, broadcast back to the interior layout."""
        x = interior.reshape(self.n_rho - 2, self.n_theta)
        m = (x @ self.V) / self.V.sum()
        return np.repeat(m, self.n_theta)

    def stencil_diagnostics(self) -> dict:
        """Sign structure supporting the discrete maximum principle."""
        L = self.L.tocoo()
        off = L.data[L.row != L.col]
        diag = self.L.diagonal()
        rows = np.asarray(self.L.sum(axis=1)).ravel()
        return {
            "max_offdiagonal": float(off.max()) if off.size else 0.0,
            "min_diagonal": float(diag.min()),
            "min_row_sum": float(rows.min()),
            "m_matrix_signs": bool(off.size == 0 or off.max() <= 0) and bool(diag.min() > 0)
            and bool(rows.min() >= -1e-12 * diag.max()),
        }


def power(g: np.ndarray, p: float) -> np.ndarray:
    return np.abs(g) ** (p - 1) * g


def apply_T(p: float, g: Field2D, op: Operator2D | None = None) -> Field2D:
    """w = (-Δ - λ)⁻¹ (|g|^{p-1} g) with w = 0 at ρ = a, b."""
    op = Operator2D(g.config) if op is None else op
    op._compatible(g)
    w = op.solve(power(g.interior(), p))
    return op.field(op.embed(w))


def residual_S(p: float, v: Field2D, op: Operator2D | None = None) -> Field2D:
    t = apply_T(p, v, op)
    out = v.values - t.values
    out[[0, -1]] = 0.0
    return v.with_values(out)


def radial_embed(profile: RadialProfile, op: Operator2D | None = None) -> Field2D:
    """θ-constant field from a radial profile sampled on the ρ-grid."""
    c = profile.config
    op = Operator2D(c) if op is None else op
    if profile.r_grid.size != op.n_rho or not np.allclose(profile.r_grid, op.rho):
        profile = resample_profile(profile, op.rho)
    vals = np.repeat(profile.values[:, None], op.n_theta, axis=1)
    vals[[0, -1]] = 0.0
    return op.field(vals)


@dataclass(frozen=True, eq=False)
class LinearizedSpectrum:
    p: float
    values: np.ndarray
    vectors: list = field(default_factory=list)

    def nearest_zero(self) -> tuple[int, float]:
        """(index, |ν|/gap) for the eigenvalue closest to 0."""
        i = int(np.argmin(np.abs(self.values)))
        others = np.delete(self.values, i)
        gap = float(np.min(np.abs(others - self.values[i]))) if others.size else math.inf
        return i, abs(float(self.values[i])) / gap


def linearized_eigenpairs(p: float, profile: RadialProfile, count: int = 4,
                          op: Operator2D | None = None) -> LinearizedSpectrum:
    """Smallest eigenvalues of -Δ - p u^{p-1} - λ on the reduced grid.

    Shift-invert Lanczos on the W-symmetrized matrix, with the shift placed
    below the radial (θ-constant) ground state, which is the lowest mode.
    """
    c = profile.config
    op = Operator2D(c) if op is None else op
    if profile.r_grid.size != op.n_rho or not np.allclose(profile.r_grid, op.rho):
        profile = resample_profile(profile, op.rho)
    q = profile.potential()[1:-1] - c.lam
    J = op.L - sparse.diags(np.repeat(q, op.n_theta))
    sw = np.sqrt(op.W)
    S = sparse.diags(sw) @ J @ sparse.diags(1.0 / sw)
    S = ((S + S.T) / 2).tocsc()
    # θ-constant block: A - q - λ, symmetrized by ρ^{N-1}
    lower, diag, upper = radial_stencil(op.rho, c.N)
    s = np.sqrt(op.rho[1:-1] ** (c.N - 1))
    d0 = diag - q - c.lam
    e0 = upper * s[:-1] / s[1:]
    lo, _ = smallest_eigenvalue(d0, e0)
    sigma = lo - max(1.0, 0.1 * abs(lo))
    try:
        vals, vecs = eigsh(S, k=count, sigma=sigma, which="LM")
    except (ArpackError, ArpackNoConvergence) as exc:
        raise EigenSolveFailure(f"shift-invert Lanczos failed at p={p}: {exc}") from None
    order = np.argsort(vals)
    vals = vals[order]
    fields = []
    for i in order:
        x = vecs[:, i] / sw
        x = x / x[np.argmax(np.abs(x))]
        fields.append(op.field(op.embed(x)))
    return LinearizedSpectrum(p=float(p), values=vals, vectors=fields)


def linearized_smallest_eigs(p: float, profile: RadialProfile, count: int = 4,
                             op: Operator2D | None = None) -> list[float]:
    return [float(v) for v in linearized_eigenpairs(p, profile, count, op).values]


def separable_field(op: Operator2D, radial: np.ndarray, angular: np.ndarray) -> Field2D:
    """Sup-normalized outer product radial(ρ) · angular(θ)."""
    v = np.outer(radial, angular)
    v[[0, -1]] = 0.0
    return op.field(v / np.max(np.abs(v)))


def sup_distance_up_to_sign(f: Field2D, g: Field2D) -> float:
    """min over s = ±1 of sup|f/sup f - s g/sup g|."""
    a = f.values / f.sup
    b = g.values / g.sup
    return float(min(np.max(np.abs(a - b)), np.max(np.abs(a + b))))
