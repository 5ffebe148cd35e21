"""Membership tests for the symmetry cones K1, K2 (N >= 3) and Kn (N = 2).

All violations are measured relative to sup|v|, so every verdict is
invariant under v ↦ γv with γ > 0.  Monotonicity is tested on forward
differences in θ: a field is nonincreasing when every difference is at
most +tol·sup|v|.

N >= 3 fields live on θ ∈ [0, π]; evenness in θ about 0 and π is implied
by that storage.  N = 2 fields live on the full circle [0, 2π).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .pde2d import Field2D

_EDGE = 1e-12


@dataclass(frozen=True)
class ConeReport:
    cone: str
    member: bool
    worst_violation: float
    site: tuple
    checks: tuple = ()
    orientation: int = 0
    in_S: bool | None = None

    def to_record(self) -> dict:
        rec = {
            "cone": self.cone,
            "member": self.member,
            "worst_violation": self.worst_violation,
            "site": [float(self.site[0]), float(self.site[1])],
        }
        if self.in_S is not None:
            rec["in_S"] = self.in_S
            rec["orientation"] = self.orientation
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    def __bool__(self):
        return self.member


class _Worst:
    """Tracks the largest violation over named checks and where it occurred."""

    def __init__(self, v: Field2D):
        self.v = v
        self.value = 0.0
        self.site = (float(v.rho[0]), float(v.theta[0]))
        self.checks = []

    def add(self, name: str, viol: np.ndarray, cols=None):
        """``viol[i, j]`` already scaled; ``cols`` maps column j to θ index."""
        if viol.size == 0:
            self.checks.append((name, 0.0))
            return
        idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
        val = float(max(viol[idx], 0.0))
        self.checks.append((name, val))
        if val > self.value:
            self.value = val
            j = idx[1] if cols is None else int(np.asarray(cols)[idx[1]])
            self.site = (float(self.v.rho[idx[0]]), float(self.v.theta[j]))

    def report(self, cone: str, tol: float, **extra) -> ConeReport:
        return ConeReport(
            cone=cone,
            member=bool(self.value <= tol),
            worst_violation=self.value,
            site=self.site,
            checks=tuple(self.checks),
            **extra,
        )


def _scale(v: Field2D) -> float:
    s = v.sup
    return s if s > 0 else 1.0


def _half_grid(v: Field2D):
    t = v.theta
    if v.periodic or abs(t[0]) > _EDGE or abs(t[-1] - math.pi) > 1e-9 or np.any(np.diff(t) <= 0):
        raise GridMismatch("K1/K2 tests need a θ-grid spanning [0, π]")


def _circle_grid(v: Field2D, n: int):
    m = v.theta.size
    if not v.periodic:
        raise GridMismatch("Kn tests need an N = 2 field on the full circle")
    step = 2 * math.pi / m
    if abs(v.theta[0]) > _EDGE or not np.allclose(np.diff(v.theta), step, rtol=0, atol=1e-12):
        raise GridMismatch("θ-grid must be uniform on [0, 2π) starting at 0")
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if m % n:
        raise GridMismatch(f"n = {n} does not divide the θ-grid size {m}")


def _tol(v: Field2D, tol):
    return v.config.tol_cone if tol is None else tol


def _monotone_cols(theta, upper):
    """Indices j with θ_{j+1} <= upper: the forward differences to test."""
    return np.flatnonzero(theta[1:] <= upper + 1e-12)


def is_in_K1(v: Field2D, tol: float | None = None) -> ConeReport:
    _half_grid(v)
    s = _scale(v)
    x = v.values / s
    w = _Worst(v)
    w.add("nonnegative", -x)
    w.add("nonincreasing", np.diff(x, axis=1))
    return w.report("K1", _tol(v, tol))


def is_in_K2(v: Field2D, tol: float | None = None) -> ConeReport:
    _half_grid(v)
    s = _scale(v)
    x = v.values / s
    w = _Worst(v)
    w.add("nonnegative", -x)
    w.add("even_in_z", np.abs(x - x[:, ::-1]))
    cols = _monotone_cols(v.theta, math.pi / 2)
    w.add("nonincreasing_half", np.diff(x, axis=1)[:, cols], cols)
    return w.report("K2", _tol(v, tol))


def _even_defect(x):
    # v(θ) - v(-θ) on the circle: column j against column -j mod m
    m = x.shape[1]
    return np.abs(x - x[:, (-np.arange(m)) % m])


def is_in_Kn(v: Field2D, n: int, tol: float | None = None) -> ConeReport:
    _circle_grid(v, n)
    s = _scale(v)
    x = v.values / s
    m = x.shape[1]
    w = _Worst(v)
    w.add("nonnegative", -x)
    w.add("periodic", np.abs(np.roll(x, -(m // n), axis=1) - x))
    w.add("even", _even_defect(x))
    cols = _monotone_cols(v.theta, math.pi / n)
    w.add("nonincreasing_sector", np.diff(x, axis=1)[:, cols], cols)
    w.add("zero_boundary", np.abs(x[[0, -1]]))
    return w.report(f"Kn({n})", _tol(v, tol))


def _one_signed(w: _Worst, name: str, d: np.ndarray, cols):
    """Add the smaller of the two orientation defects; return the orientation kept."""
    down = np.max(d, initial=0.0)
    up = np.max(-d, initial=0.0)
    if down <= up:
        w.add(name, d, cols)
        return -1
    w.add(name, -d, cols)
    return 1


def tangent_membership(direction: Field2D, cone_id: str, n: int | None = None,
                       tol: float | None = None) -> ConeReport:
    """Tangent-set test at the radial solution: binding constraints only.

    Positivity is not binding at a positive θ-constant base point, so only
    the symmetry constraints and a one-signed θ-derivative are tested.
    Either orientation of the derivative is accepted; ``orientation`` is -1
    for nonincreasing and +1 for nondecreasing.  ``in_S`` reports whether
    the direction is θ-constant.
    """
    v = direction
    t = _tol(v, tol)
    s = _scale(v)
    x = v.values / s
    w = _Worst(v)
    in_S = bool(np.max(np.max(x, axis=1) - np.min(x, axis=1)) <= t)
    d = np.diff(x, axis=1)
    if cone_id == "K1":
        _half_grid(v)
        orient = _one_signed(w, "one_signed", d, None)
        label = "K1"
    elif cone_id == "K2":
        _half_grid(v)
        w.add("even_in_z", np.abs(x - x[:, ::-1]))
        cols = _monotone_cols(v.theta, math.pi / 2)
        orient = _one_signed(w, "one_signed_half", d[:, cols], cols)
        label = "K2"
    elif cone_id == "Kn":
        if n is None:
            raise ValueError("cone Kn needs n")
        _circle_grid(v, n)
        m = x.shape[1]
        w.add("periodic", np.abs(np.roll(x, -(m // n), axis=1) - x))
        w.add("even", _even_defect(x))
        cols = _monotone_cols(v.theta, math.pi / n)
        orient = _one_signed(w, "one_signed_sector", d[:, cols], cols)
        label = f"Kn({n})"
    else:
        raise ValueError(f"unknown cone {cone_id!r}; expected K1, K2 or Kn")
    return w.report(f"T{label}", t, orientation=0 if in_S else orient, in_S=in_S)


def cone_flags(v: Field2D, n: int | None = None, tol: float | None = None) -> dict:
    """Reports for every cone relevant to the field's dimension."""
    if v.periodic:
        if n is None:
            raise ValueError("N = 2 fields need the Dancer index n")
        return {f"Kn({n})": is_in_Kn(v, n, tol)}
    return {"K1": is_in_K1(v, tol), "K2": is_in_K2(v, tol)}
