"""Global decoding threshold via the fixed-point characterization.

A pair (x, y) in [0,1]^2 is a fixed point of the coupled update maps when
x = f(eps, x, y) and y = g(eps, x, y).  Decoding succeeds asymptotically
exactly when no fixed point with x > 0 exists, which yields a numerical
threshold formula built from the ratio functions

    q_L(x) = x * Lam_L(1 - rho_L(1 - x)) / lam_L(1 - rho_L(1 - x))
    q_J(y) = y * Lam_J(1 - rho_J(1 - y)) / lam_J(1 - rho_J(1 - y))

and the curve x = q(y), the largest solution of q_L(x) = q_J(y).  A separate
branch caps the threshold at eps_local / p0 when some variables have no
joint edges and the joint edge polynomial has no degree-one mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density_evolution import (
    _golden_min,
    compile_poly,
    local_threshold,
    make_maps,
    run_2d_de,
)
from .ensembles import JointEnsemble, LocalEnsemble, SubblockEnsemble

__all__ = [
    "FixedPoint",
    "ThresholdReport",
    "q_l",
    "q_j",
    "q_of_y",
    "global_threshold",
    "threshold_by_bisection",
    "find_fixed_points",
]

_X_GRID = 10**4
_Y_GRID = 10**4
# Resolution limits of the fixed-point finder: candidate tangent points are
# accepted when the residual stays below TANGENCY_TOL, and points closer
# than MERGE_RADIUS are reported as one.
TANGENCY_TOL = 1e-4
MERGE_RADIUS = 5e-3


@dataclass(frozen=True)
class FixedPoint:
    x: float
    y: float
    residual: float
    polished: bool = True

    def is_trivial(self, tol: float = 1e-9) -> bool:
        return self.x <= tol and self.y <= tol


@dataclass(frozen=True)
class ThresholdReport:
    eps_star: float
    branch: str  # 'q_formula' | 'p0_branch' | 'min_of_both'
    witness: Optional[FixedPoint] = None
    q_branch_value: float = math.nan
    p0_branch_value: float = math.nan


def _q_l_fn(local: LocalEnsemble):
    lam = compile_poly(local.lambda_)
    lam_node = compile_poly(local.lambda_node)
    rho = compile_poly(local.rho)

    def q(x):
        u = 1.0 - rho(1.0 - x)
        den = lam(u)
        if den <= 0.0:
            raise ZeroDivisionError(
                f"q_L undefined: lam_L(1 - rho_L(1 - x)) = 0 at x = {x!r}"
            )
        return x * lam_node(u) / den

    return q


def _q_j_fn(joint: JointEnsemble):
    lam = compile_poly(joint.lambda_)
    lam_node = compile_poly(joint.lambda_node)
    rho = compile_poly(joint.rho)

    def q(y):
        w = 1.0 - rho(1.0 - y)
        den = lam(w)
        num = y * lam_node(w)
        if den <= 0.0:
            return math.inf if num > 0.0 else math.inf
        return num / den

    return q


def q_l(x: float, local: LocalEnsemble) -> float:
    """Ratio function on the local side; tends to 0 as x -> 0 and equals 1 at 1."""
    if x == 0.0:
        return 0.0
    if not 0.0 < x <= 1.0:
        raise ValueError(f"x must lie in (0, 1], got {x!r}")
    return _q_l_fn(local)(x)


def q_j(y: float, joint: JointEnsemble) -> float:
    """Ratio function on the joint side; may exceed 1 or diverge as y -> 0."""
    if not 0.0 < y <= 1.0:
        raise ValueError(f"y must lie in (0, 1], got {y!r}")
    return _q_j_fn(joint)(y)


class _QlTable:
    """Descending-grid samples of q_L plus max-root lookup with bisection.

    The scan starts at x = 1 where q_L = 1 bounds every admissible target
    from above, so the first grid segment straddling the target is the
    first prefix-minimum passage below it; the prefix-minimum sequence is
    non-increasing, which turns the scan into a binary search.
    """

    def __init__(self, local: LocalEnsemble, grid: int = _X_GRID):
        self.fn = _q_l_fn(local)
        # Descending from 1, excluding 0 where q_L has its limit value 0.
        self.xs = np.linspace(1.0, 1.0 / grid, grid)
        lam, rho = local.lambda_, local.rho
        u = 1.0 - (1.0 - self.xs)[:, None] ** rho.exponents @ rho.masses
        lam_vals = u[:, None] ** lam.exponents @ lam.masses
        lam_node = local.lambda_node
        lam_node_vals = u[:, None] ** lam_node.exponents @ lam_node.masses
        with np.errstate(divide="ignore", invalid="ignore"):
            self.q = np.where(lam_vals > 0.0, self.xs * lam_node_vals / lam_vals, np.inf)
        self.prefix_min = np.minimum.accumulate(self.q)

    def _bracket(self, target: float) -> int:
        """Index of the first grid value at or below the target."""
        return int(np.searchsorted(-self.prefix_min, -target, side="left"))

    def max_root(self, target: float, refine: bool = True) -> float:
        """Largest x in (0, 1] with q_L(x) = target (target must be <= 1)."""
        k = self._bracket(target)
        if k == 0:
            return 1.0
        if k >= len(self.q):
            # q_L -> 0 at 0 guarantees a crossing unless target ~ 0.
            return 0.0
        hi, lo = float(self.xs[k - 1]), float(self.xs[k])
        fhi, flo = float(self.q[k - 1] - target), float(self.q[k] - target)
        if not refine:
            if fhi == flo:
                return hi
            return hi - fhi * (lo - hi) / (flo - fhi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = self.fn(mid) - target
            if fm == 0.0 or hi - lo < 1e-13:
                return mid
            # Keep the bracket that contains the crossing closest to 1.
            if fm * fhi <= 0.0:
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
        return 0.5 * (lo + hi)


def q_of_y(y: float, joint: JointEnsemble, local: LocalEnsemble) -> float:
    """The curve value q(y): the largest root of q_L(x) = q_J(y)."""
    t = q_j(y, joint)
    if t > 1.0 + 1e-12:
        raise ValueError(f"q_J(y) = {t!r} exceeds 1; q(y) undefined")
    return _QlTable(local).max_root(min(t, 1.0))


def _witness_point(e: SubblockEnsemble, eps: float) -> Optional[FixedPoint]:
    pts = [p for p in find_fixed_points(e, min(eps, 1.0)) if not p.is_trivial()]
    return max(pts, key=lambda p: p.y) if pts else None


def global_threshold(
    e: SubblockEnsemble,
    grid: int = _Y_GRID,
    with_witness: bool = False,
) -> ThresholdReport:
    """Threshold of global decoding from the fixed-point formula.

    The main branch minimizes y / g(1, q(y), y) over admissible y; when
    p0 > 0 and the joint edge polynomial vanishes at 0, the result is the
    minimum of that and eps_local / p0.
    """
    local, joint = e.local, e.joint
    eps_l = local_threshold(local)
    if joint.p0 == 1.0:
        report = ThresholdReport(eps_l, "p0_branch", p0_branch_value=eps_l)
        if with_witness:
            report = ThresholdReport(
                eps_l, "p0_branch", _witness_point(e, eps_l + 1e-3), math.nan, eps_l
            )
        return report

    table = _QlTable(local)
    qj = _q_j_fn(joint)
    _, g = make_maps(e)

    def objective(y: float) -> float:
        t = qj(y)
        if t > 1.0:
            return math.inf
        x = table.max_root(min(t, 1.0))
        gy = g(1.0, x, y)
        return y / gy if gy > 0.0 else math.inf

    # Linear grid plus a geometric tail so limits at y -> 0 are represented.
    ys = np.concatenate(
        [np.geomspace(1e-9, 1.0 / grid, 200, endpoint=False), np.linspace(1.0 / grid, 1.0, grid)]
    )
    qj_vals = _vector_q_j(joint, ys)
    admissible = qj_vals <= 1.0 + 1e-12
    best = math.inf
    best_y = None
    if np.any(admissible):
        targets = np.minimum(qj_vals[admissible], 1.0)
        ya = ys[admissible]
        roots = _vector_max_root(table, targets)
        gvals = _vector_g_one(e, roots, ya)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(gvals > 0.0, ya / gvals, np.inf)
        k = int(np.argmin(vals))
        best = float(vals[k])
        best_y = float(ya[k])
        lo = ya[max(k - 1, 0)]
        hi = ya[min(k + 1, len(ya) - 1)]
        _, refined = _golden_min(objective, lo, hi)
        best = min(best, refined)

    second_applies = joint.p0 > 0.0 and joint.lambda_.mass_at(0) == 0.0
    if second_applies:
        cap = eps_l / joint.p0
        if best is math.inf or best > 1.0e308:
            eps_star, branch = min(cap, 1.0), "p0_branch"
        else:
            eps_star, branch = min(best, cap), "min_of_both"
        report = ThresholdReport(
            min(eps_star, 1.0), branch, None, best, cap
        )
    else:
        report = ThresholdReport(min(best, 1.0), "q_formula", None, best, math.nan)
    if with_witness:
        report = ThresholdReport(
            report.eps_star,
            report.branch,
            _witness_point(e, report.eps_star + 1e-3),
            report.q_branch_value,
            report.p0_branch_value,
        )
    return report


def _vector_g_one(e: SubblockEnsemble, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """g(1, x, y) for aligned arrays of x and y."""
    rho_l, lam_node_l = e.local.rho, e.local.lambda_node
    rho_j, lam_j = e.joint.rho, e.joint.lambda_
    u = 1.0 - (1.0 - xs)[:, None] ** rho_l.exponents @ rho_l.masses
    w = 1.0 - (1.0 - ys)[:, None] ** rho_j.exponents @ rho_j.masses
    return (u[:, None] ** lam_node_l.exponents @ lam_node_l.masses) * (
        w[:, None] ** lam_j.exponents @ lam_j.masses
    )


def _vector_q_j(joint: JointEnsemble, ys: np.ndarray) -> np.ndarray:
    lam, rho = joint.lambda_, joint.rho
    lam_node = joint.lambda_node
    w = 1.0 - (1.0 - ys)[:, None] ** rho.exponents @ rho.masses
    den = w[:, None] ** lam.exponents @ lam.masses
    num = ys * (w[:, None] ** lam_node.exponents @ lam_node.masses)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0.0, num / den, np.inf)


def _vector_max_root(table: _QlTable, targets: np.ndarray) -> np.ndarray:
    """Interpolated max roots of q_L(x) = t for a batch of targets."""
    q, xs = table.q, table.xs
    k = np.searchsorted(-table.prefix_min, -targets, side="left")
    inside = (k > 0) & (k < len(q))
    kc = np.clip(k, 1, len(q) - 1)
    fhi = q[kc - 1] - targets
    flo = q[kc] - targets
    denom = np.where(flo != fhi, flo - fhi, 1.0)
    frac = np.where(flo != fhi, -fhi / denom, 0.0)
    root = xs[kc - 1] + frac * (xs[kc] - xs[kc - 1])
    return np.where(k == 0, 1.0, np.where(inside, root, 0.0))


def threshold_by_bisection(
    e: SubblockEnsemble,
    tol: float = 1e-4,
    max_iters: int = 10**6,
    halt_tol: float = 1e-9,
) -> float:
    """Brute-force threshold: bisect on whether density evolution converges."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        trace = run_2d_de(e, mid, max_iters=max_iters, halt_tol=halt_tol, record=False)
        if trace.converged:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_fixed_points(
    e: SubblockEnsemble,
    epsilon: float,
    grid: int = 2000,
    tangency_tol: float = TANGENCY_TOL,
    merge_radius: float = MERGE_RADIUS,
) -> list[FixedPoint]:
    """All fixed points of the update maps at a given channel erasure rate.

    Roots are located along the curve x = q(y) by sign scanning plus
    bisection; osculating (double) roots are caught as local minima of the
    residual below ``tangency_tol``.  When p0 > 0 and the joint edge
    polynomial has no degree-one mass, the y = 0 axis is scanned as well.
    The trivial point (0, 0) is always included.
    """
    if grid < 100:
        raise ValueError("grid must be >= 100")
    local, joint = e.local, e.joint
    f, g = make_maps(e)
    points: list[FixedPoint] = [FixedPoint(0.0, 0.0, 0.0)]

    if joint.p0 < 1.0:
        table = _QlTable(local)
        qj = _q_j_fn(joint)

        ys = np.concatenate(
            [np.geomspace(1e-9, 1.0 / grid, 100, endpoint=False), np.linspace(1.0 / grid, 1.0, grid)]
        )
        qj_vals = _vector_q_j(joint, ys)
        admissible = qj_vals <= 1.0 + 1e-12
        ya = ys[admissible]
        if len(ya):
            roots = _vector_max_root(table, np.minimum(qj_vals[admissible], 1.0))
            r = np.array([y - g(epsilon, x, y) for x, y in zip(roots, ya)])

            def r_exact(y):
                t = qj(y)
                if t > 1.0 + 1e-12:
                    return math.inf
                x = table.max_root(min(t, 1.0))
                return y - g(epsilon, x, y)

            def point_at(y):
                t = min(qj(y), 1.0)
                x = table.max_root(t)
                res = max(abs(x - f(epsilon, x, y)), abs(y - g(epsilon, x, y)))
                return x, y, res

            # Transversal crossings.
            for k in np.nonzero(r[:-1] * r[1:] < 0.0)[0]:
                lo, hi = float(ya[k]), float(ya[k + 1])
                flo = r_exact(lo)
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    fm = r_exact(mid)
                    if fm == 0.0 or hi - lo < 1e-13:
                        break
                    if (fm < 0.0) == (flo < 0.0):
                        lo, flo = mid, fm
                    else:
                        hi = mid
                x, y, res = point_at(0.5 * (lo + hi))
                points.append(FixedPoint(x, y, res))

            # Osculating roots: interior local minima of |r| that nearly touch 0.
            absr = np.abs(r)
            for k in range(1, len(ya) - 1):
                if absr[k] <= absr[k - 1] and absr[k] <= absr[k + 1] and absr[k] < 10 * tangency_tol:
                    yy, val = _golden_min(
                        lambda y: abs(r_exact(y)), float(ya[k - 1]), float(ya[k + 1]), tol=1e-11
                    )
                    if val <= tangency_tol:
                        x, y, res = point_at(yy)
                        points.append(FixedPoint(x, y, res, polished=False))

    if joint.p0 > 0.0 and joint.lambda_.mass_at(0) == 0.0:
        points.extend(
            FixedPoint(x, 0.0, res)
            for x, res in _axis_fixed_points(e, epsilon, grid, tangency_tol)
        )

    return _merge_points(points, merge_radius)


def _axis_fixed_points(e, epsilon, grid, tangency_tol):
    """Solutions of x = eps * p0 * lam_L(1 - rho_L(1 - x)) with x > 0."""
    local, joint = e.local, e.joint
    lam = compile_poly(local.lambda_)
    rho = compile_poly(local.rho)
    c = epsilon * joint.p0

    def s(x):
        return x - c * lam(1.0 - rho(1.0 - x))

    xs = np.linspace(1.0 / grid, 1.0, grid)
    vals = np.array([s(x) for x in xs])
    found = []
    for k in np.nonzero(vals[:-1] * vals[1:] < 0.0)[0]:
        lo, hi = float(xs[k]), float(xs[k + 1])
        flo = s(lo)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = s(mid)
            if fm == 0.0 or hi - lo < 1e-13:
                break
            if (fm < 0.0) == (flo < 0.0):
                lo, flo = mid, fm
            else:
                hi = mid
        x = 0.5 * (lo + hi)
        found.append((x, abs(s(x))))
    absv = np.abs(vals)
    for k in range(1, len(xs) - 1):
        if absv[k] <= absv[k - 1] and absv[k] <= absv[k + 1] and absv[k] < 10 * tangency_tol:
            xx, val = _golden_min(lambda x: abs(s(x)), float(xs[k - 1]), float(xs[k + 1]), tol=1e-11)
            if val <= tangency_tol:
                found.append((xx, val))
    return found


def _merge_points(points: list[FixedPoint], radius: float) -> list[FixedPoint]:
    out: list[FixedPoint] = []
    for p in sorted(points, key=lambda p: (p.residual, -p.y)):
        if all(math.hypot(p.x - q.x, p.y - q.y) > radius for q in out):
            out.append(p)
    out.sort(key=lambda p: p.y)
    return out
