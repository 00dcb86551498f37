"""Two-dimensional density evolution for sub-block structured ensembles.

Erasure messages on local and joint edges evolve as a coupled pair of
scalars under the update maps

    f(eps, x, y) = eps * lam_L(1 - rho_L(1 - x)) * Lam_J(1 - rho_J(1 - y))
    g(eps, x, y) = eps * Lam_L(1 - rho_L(1 - x)) * lam_J(1 - rho_J(1 - y))

starting from x = y = 1.  When all joint edges are absent (p0 == 1) the
joint message channel carries nothing and g is identically zero.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ensembles import (
    DegreePolynomial,
    LocalEnsemble,
    SubblockEnsemble,
    JointEnsemble,
    edge_to_node,
    monomial,
)

__all__ = [
    "DeTrace",
    "f_map",
    "g_map",
    "run_2d_de",
    "run_1d_de",
    "local_threshold",
    "epsilon_loc",
    "reduces_to_1d",
    "compile_poly",
    "make_maps",
]

DEFAULT_HALT_TOL = 1e-10
DEFAULT_MAX_ITERS = 10**6
_THRESHOLD_GRID = 10**4


def compile_poly(p: DegreePolynomial) -> Callable[[float], float]:
    """Build a fast scalar evaluator for a polynomial (no domain checks)."""
    terms = p.coeff_items()
    if len(terms) == 1:
        e, m = terms[0]
        if e == 0:
            return lambda x: m
        if m == 1.0:
            return lambda x: x**e
        return lambda x: m * x**e
    if len(terms) <= 8:
        tt = tuple(terms)

        def ev(x, _tt=tt):
            s = 0.0
            for e, m in _tt:
                s += m * x**e
            return s

        return ev
    exps = p.exponents.astype(np.float64)
    masses = p.masses

    def ev_np(x, _e=exps, _m=masses):
        return float(np.dot(_m, x**_e))

    return ev_np


def make_maps(e: SubblockEnsemble):
    """Compiled (f, g) update maps for an ensemble."""
    lam_l = compile_poly(e.local.lambda_)
    rho_l = compile_poly(e.local.rho)
    lam_node_l = compile_poly(e.local.lambda_node)
    rho_j = compile_poly(e.joint.rho)
    if e.joint.p0 == 1.0:
        fl = lambda eps, x, y: eps * lam_l(1.0 - rho_l(1.0 - x))
        gl = lambda eps, x, y: 0.0
        return fl, gl
    lam_j = compile_poly(e.joint.lambda_)
    lam_node_j = compile_poly(e.joint.lambda_node)

    def f(eps, x, y):
        return eps * lam_l(1.0 - rho_l(1.0 - x)) * lam_node_j(1.0 - rho_j(1.0 - y))

    def g(eps, x, y):
        return eps * lam_node_l(1.0 - rho_l(1.0 - x)) * lam_j(1.0 - rho_j(1.0 - y))

    return f, g


def f_map(epsilon: float, x: float, y: float, e: SubblockEnsemble) -> float:
    """Local-edge erasure update; value lies in [0, epsilon]."""
    _check_unit(epsilon, x, y)
    f, _ = make_maps(e)
    return f(epsilon, x, y)


def g_map(epsilon: float, x: float, y: float, e: SubblockEnsemble) -> float:
    """Joint-edge erasure update; value lies in [0, epsilon]."""
    _check_unit(epsilon, x, y)
    _, g = make_maps(e)
    return g(epsilon, x, y)


def _check_unit(*vals):
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"argument {v!r} outside [0, 1]")


@dataclass
class DeTrace:
    """Recorded density-evolution trajectory.

    ``iters``/``xs``/``ys`` start at the conventional initial point
    (-1, 1, 1).  ``ys`` is None for one-dimensional runs.  ``converged``
    means x fell below the halt tolerance; otherwise the recursion stalled
    at a nonzero point or ran out of iterations (``max_iters_reached``).
    """

    epsilon: float
    iters: np.ndarray
    xs: np.ndarray
    ys: Optional[np.ndarray]
    converged: bool
    x_limit: float
    y_limit: float
    max_iters_reached: bool = False

    @property
    def points(self):
        if self.ys is None:
            return list(zip(self.iters.tolist(), self.xs.tolist()))
        return list(zip(self.iters.tolist(), self.xs.tolist(), self.ys.tolist()))

    def num_iterations(self) -> int:
        return int(self.iters[-1]) if len(self.iters) else -1

    def to_csv(self, joint: Optional[JointEnsemble] = None) -> str:
        """CSV rows iter,x,y,eps_loc; eps_loc needs the joint ensemble."""
        buf = io.StringIO()
        buf.write("iter,x,y,eps_loc\n")
        ys = self.ys if self.ys is not None else self.xs
        for it, x, y in zip(self.iters, self.xs, ys):
            if joint is not None:
                el = epsilon_loc(self.epsilon, float(y), joint)
                buf.write(f"{int(it)},{x:.12g},{y:.12g},{el:.12g}\n")
            else:
                buf.write(f"{int(it)},{x:.12g},{y:.12g},\n")
        return buf.getvalue()


def run_2d_de(
    e: SubblockEnsemble,
    epsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    halt_tol: float = DEFAULT_HALT_TOL,
    record: bool = True,
) -> DeTrace:
    """Iterate the coupled updates from (1, 1) until convergence or stall.

    Convergence means x < halt_tol.  A stall is declared when both
    per-iteration decrements drop below halt_tol relative to the current
    values while x stays >= halt_tol.  (An absolute decrement test would
    misfire on geometric decay toward zero: with contraction ratio r the
    decrement x*(1-r) falls below the tolerance while x is still above it.)
    """
    _check_unit(epsilon)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    f, g = make_maps(e)
    x, y = 1.0, 1.0
    iters = [-1]
    xs = [1.0]
    ys = [1.0]
    converged = False
    exhausted = False
    for l in range(max_iters):
        xn = f(epsilon, x, y)
        yn = g(epsilon, x, y)
        dx, dy = x - xn, y - yn
        x, y = xn, yn
        if record:
            iters.append(l)
            xs.append(x)
            ys.append(y)
        if x < halt_tol:
            converged = True
            break
        if dx < halt_tol * max(x, halt_tol) and dy < halt_tol * max(y, halt_tol):
            break
    else:
        exhausted = True
    if not record:
        iters = [-1, l]
        xs = [1.0, x]
        ys = [1.0, y]
    return DeTrace(
        epsilon=epsilon,
        iters=np.asarray(iters),
        xs=np.asarray(xs),
        ys=np.asarray(ys),
        converged=converged,
        x_limit=0.0 if converged else x,
        y_limit=0.0 if converged else y,
        max_iters_reached=exhausted,
    )


def run_1d_de(
    lambda_: DegreePolynomial,
    rho: DegreePolynomial,
    epsilon: float,
    max_iters: int = DEFAULT_MAX_ITERS,
    halt_tol: float = DEFAULT_HALT_TOL,
    record: bool = True,
) -> DeTrace:
    """Scalar density evolution x <- eps * lam(1 - rho(1 - x)) from x = 1."""
    _check_unit(epsilon)
    lam = compile_poly(lambda_)
    rho_ = compile_poly(rho)
    x = 1.0
    iters = [-1]
    xs = [1.0]
    converged = False
    exhausted = False
    for l in range(max_iters):
        xn = epsilon * lam(1.0 - rho_(1.0 - x))
        dx = x - xn
        x = xn
        if record:
            iters.append(l)
            xs.append(x)
        if x < halt_tol:
            converged = True
            break
        if dx < halt_tol * max(x, halt_tol):
            break
    else:
        exhausted = True
    if not record:
        iters = [-1, l]
        xs = [1.0, x]
    return DeTrace(
        epsilon=epsilon,
        iters=np.asarray(iters),
        xs=np.asarray(xs),
        ys=None,
        converged=converged,
        x_limit=0.0 if converged else x,
        y_limit=0.0,
        max_iters_reached=exhausted,
    )


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-9) -> tuple[float, float]:
    """Golden-section minimization of a unimodal-ish scalar function."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (c, fc) if fc < fd else (d, fd)


def local_threshold(local: LocalEnsemble, grid: int = _THRESHOLD_GRID) -> float:
    """Largest channel erasure rate the local pair can correct.

    Computed as inf over (0, 1] of x / lam(1 - rho(1 - x)), evaluated on a
    uniform grid, refined by golden-section search, and combined with the
    analytic x -> 0 limit 1 / (lam'(0) * rho'(1)).
    """
    lam, rho = local.lambda_, local.rho
    xs = np.linspace(1.0 / grid, 1.0, grid)
    u = 1.0 - (1.0 - xs)[:, None] ** rho.exponents @ rho.masses
    denom = u[:, None] ** lam.exponents @ lam.masses
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0.0, xs / denom, np.inf)
    best = float(np.min(ratio))
    k = int(np.argmin(ratio))
    lam_c = compile_poly(lam)
    rho_c = compile_poly(rho)

    def fn(x):
        d = lam_c(1.0 - rho_c(1.0 - x))
        return x / d if d > 0.0 else math.inf

    lo = xs[max(k - 1, 0)]
    hi = xs[min(k + 1, grid - 1)]
    _, refined = _golden_min(fn, lo, hi)
    best = min(best, refined)
    # Behavior at the open endpoint x -> 0.
    if lam.mass_at(0) > 0.0:
        limit = 0.0
    else:
        slope = lam.mass_at(1) * rho.derivative_at_one()
        limit = 1.0 / slope if slope > 0.0 else math.inf
    best = min(best, limit)
    return min(best, 1.0)


def epsilon_loc(epsilon: float, y: float, joint: JointEnsemble) -> float:
    """Effective erasure rate seen by the local code when the joint side is at y."""
    _check_unit(epsilon, y)
    if joint.p0 == 1.0:
        return epsilon
    lam_node = compile_poly(joint.lambda_node)
    rho = compile_poly(joint.rho)
    return epsilon * lam_node(1.0 - rho(1.0 - y))


def reduces_to_1d(e: SubblockEnsemble):
    """Return the equivalent 1D pair when the 2D recursion collapses.

    This happens when both check distributions coincide, both variable
    distributions are monomials, and p0 == 0; the combined variable degree
    is then the sum of the local and joint degrees.
    """
    if e.joint.p0 != 0.0:
        return None
    if len(e.local.lambda_.exponents) != 1 or len(e.joint.lambda_.exponents) != 1:
        return None
    if not (
        np.array_equal(e.local.rho.exponents, e.joint.rho.exponents)
        and np.array_equal(e.local.rho.masses, e.joint.rho.masses)
    ):
        return None
    e_l = int(e.local.lambda_.exponents[0])
    e_j = int(e.joint.lambda_.exponents[0])
    return monomial(e_l + e_j + 1, "edge"), e.local.rho
