"""Construction of joint ensembles for target local/global thresholds.

Given a local pair with threshold eps_L and a global target eps_G, setting
p0 = eps_L / eps_G and picking any joint pair whose ordinary threshold is
eps_G * a_s(eps_G) makes the global threshold exactly eps_G.  Here
x_s(eps) is the local-edge erasure level where local-only decoding stalls
(the largest root of eps * lam_L(1 - rho_L(1 - x)) = x) and a_s is the
matching variable-node erasure level.

Tornado pairs provide the threshold-targetable joint family: the variable
side is the truncated harmonic series, the check side a Poisson profile,
giving an additive capacity gap of roughly eps / D at design rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .density_evolution import compile_poly, local_threshold
from .ensembles import (
    DegreePolynomial,
    JointEnsemble,
    LocalEnsemble,
    SubblockEnsemble,
    design_rate,
)
from .threshold_solver import global_threshold

__all__ = [
    "StuckPoint",
    "ConstructionResult",
    "h_eps",
    "stuck_point",
    "low_local_threshold",
    "low_local_closed_forms",
    "TornadoFamily",
    "RegularFamily",
    "tornado_pair",
    "construct_joint",
    "rate_bound",
    "optimize_rhat",
    "gap_bound",
    "capacity_sequence",
    "pair_threshold",
    "pair_rate",
    "pair_gap",
]

_SCAN_GRID = 10**4


@dataclass(frozen=True)
class StuckPoint:
    epsilon: float
    x_s: float
    a_s: float


@dataclass(frozen=True)
class ConstructionResult:
    ensemble: SubblockEnsemble
    target_eps_l: float
    target_eps_g: float
    eps_j_target: float
    achieved_eps_j: float
    rate: float
    gap_bound: float
    achieved_eps_g: float = math.nan

    @property
    def p0(self) -> float:
        return self.ensemble.joint.p0


def h_eps(local: LocalEnsemble, epsilon: float, x: float) -> float:
    """One-iteration erasure change eps * lam(1 - rho(1 - x)) - x."""
    lam = compile_poly(local.lambda_)
    rho = compile_poly(local.rho)
    return epsilon * lam(1.0 - rho(1.0 - x)) - x


def stuck_point(
    local: LocalEnsemble, epsilon: float, eps_local: Optional[float] = None
) -> StuckPoint:
    """Where local-only decoding stalls: the largest x with h_eps(x) >= 0.

    Located by a downward scan over a uniform grid plus bisection of the
    bracketing interval.  Requires epsilon above the local threshold.
    """
    if eps_local is None:
        eps_local = local_threshold(local)
    if epsilon <= eps_local:
        raise ValueError(
            f"epsilon {epsilon!r} is at or below the local threshold {eps_local!r}; "
            "the local decoder converges and no stuck point exists"
        )
    lam, rho = local.lambda_, local.rho
    xs = np.linspace(1.0, 0.0, _SCAN_GRID + 1)
    u = 1.0 - (1.0 - xs)[:, None] ** rho.exponents @ rho.masses
    h = epsilon * (u[:, None] ** lam.exponents @ lam.masses) - xs
    nonneg = np.nonzero(h >= 0.0)[0]
    lam_c = compile_poly(lam)
    rho_c = compile_poly(rho)

    def h_fn(x):
        return epsilon * lam_c(1.0 - rho_c(1.0 - x)) - x

    k = int(nonneg[0])
    if k == 0:
        x_s = 1.0
    else:
        lo, hi = float(xs[k]), float(xs[k - 1])  # h(lo) >= 0 > h(hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if h_fn(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        x_s = lo
    a_s = compile_poly(local.lambda_node)(1.0 - rho_c(1.0 - x_s))
    return StuckPoint(epsilon, x_s, a_s)


def low_local_threshold(rho3: float, rho4: float) -> float:
    """Threshold 1 / (1 + rho3 + 2*rho4) of the degree-2 local family."""
    _check_low_local(rho3, rho4)
    return 1.0 / (1.0 + rho3 + 2.0 * rho4)


def _check_low_local(rho3, rho4):
    if rho3 < 0.0 or rho4 < 0.0 or rho3 + rho4 > 1.0 + 1e-12:
        raise ValueError("need rho3, rho4 >= 0 with rho3 + rho4 <= 1")


def _x_s_low_local(rho3: float, rho4: float, epsilon: float) -> float:
    """Closed-form stuck point of the degree-2 family, clamped at zero."""
    if rho4 == 0.0:
        if rho3 == 0.0:
            return 0.0
        x = 1.0 - (1.0 / epsilon - 1.0) / rho3
    else:
        disc = (rho3 + rho4) ** 2 + 4.0 * rho4 * (1.0 / epsilon - 1.0)
        x = (rho3 + 3.0 * rho4 - math.sqrt(disc)) / (2.0 * rho4)
    return max(x, 0.0)


def low_local_closed_forms(rho3: float, rho4: float, epsilon: float):
    """(eps_L, x_s, a_s) for lam(x) = x, rho(x) = rho2 x + rho3 x^2 + rho4 x^3.

    x_s comes from the quadratic factor of h_eps; a_s = (x_s / eps)^2.
    Requires epsilon strictly between the family threshold and 1.
    """
    eps_l = low_local_threshold(rho3, rho4)
    if not eps_l < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in ({eps_l!r}, 1), got {epsilon!r}")
    x_s = _x_s_low_local(rho3, rho4, epsilon)
    return eps_l, x_s, (x_s / epsilon) ** 2


def low_local_ensemble(rho3: float, rho4: float) -> LocalEnsemble:
    """The degree-2 local family member with check masses (rho2, rho3, rho4)."""
    _check_low_local(rho3, rho4)
    rho2 = 1.0 - rho3 - rho4
    rho = DegreePolynomial(
        [(1, rho2), (2, rho3), (3, rho4)], "edge"
    )
    lam = DegreePolynomial([(1, 1.0)], "edge")
    return LocalEnsemble(lam, rho)


def pair_threshold(lambda_: DegreePolynomial, rho: DegreePolynomial) -> float:
    """Ordinary 1D threshold of an (edge-perspective) pair."""
    return local_threshold(LocalEnsemble(lambda_, rho, allow_degree_one=True))


def pair_rate(lambda_: DegreePolynomial, rho: DegreePolynomial) -> float:
    return 1.0 - rho.integral01() / lambda_.integral01()


def pair_gap(lambda_: DegreePolynomial, rho: DegreePolynomial) -> float:
    """Additive gap to capacity 1 - threshold - rate of an ordinary pair."""
    return 1.0 - pair_threshold(lambda_, rho) - pair_rate(lambda_, rho)


def _harmonic(d: int) -> float:
    return math.fsum(1.0 / i for i in range(1, d + 1))


def tornado_pair(
    d: int, eps: float, truncation_tol: float = 1e-12
) -> tuple[DegreePolynomial, DegreePolynomial]:
    """Tornado pair targeting threshold eps with gap roughly eps / d.

    Variable side: (1/H(d)) * sum_{i=1..d} x^i / i.  Check side: Poisson
    profile with alpha = H(d) / eps, truncated once the remaining tail mass
    drops below truncation_tol and renormalized to total mass one.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    if d < 1:
        raise ValueError("d must be >= 1")
    h = _harmonic(d)
    lam = DegreePolynomial([(i, 1.0 / (h * i)) for i in range(1, d + 1)], "edge")
    alpha = h / eps
    # Poisson masses in log domain; exponent i corresponds to degree i + 1.
    coeffs = []
    log_mass = -alpha  # log of e^-alpha * alpha^0 / 0!
    cum = 0.0
    i = 0
    while True:
        mass = math.exp(log_mass)
        coeffs.append((i, mass))
        cum += mass
        if 1.0 - cum < truncation_tol and i >= alpha:
            break
        i += 1
        log_mass += math.log(alpha) - math.log(i)
        if i > 100 * alpha + 1000:
            raise RuntimeError("tornado check-series truncation failed to converge")
    total = math.fsum(m for _, m in coeffs)
    rho = DegreePolynomial([(e, m / total) for e, m in coeffs], "edge")
    return lam, rho


class TornadoFamily:
    """Threshold-targetable joint generator backed by tornado pairs."""

    def __init__(self, d: int = 10, truncation_tol: float = 1e-12, tol: float = 1e-3):
        self.d = d
        self.truncation_tol = truncation_tol
        self.tol = tol

    def __call__(self, target: float):
        lam, rho = tornado_pair(self.d, target, self.truncation_tol)
        achieved = pair_threshold(lam, rho)
        if abs(achieved - target) > self.tol:
            raise RuntimeError(
                f"tornado family missed target {target!r}: achieved {achieved!r}"
            )
        return lam, rho, achieved


class RegularFamily:
    """Fallback generator picking the closest regular (l, r) pair.

    Regular pairs form a discrete set of thresholds, so most targets are
    unreachable; a miss beyond ``tol`` raises.
    """

    def __init__(self, l_max: int = 6, r_max: int = 40, tol: float = 1e-3):
        self.l_max = l_max
        self.r_max = r_max
        self.tol = tol

    def __call__(self, target: float):
        from .ensembles import monomial

        best = None
        for l in range(2, self.l_max + 1):
            for r in range(l + 1, self.r_max + 1):
                lam, rho = monomial(l - 1, "edge"), monomial(r - 1, "edge")
                th = pair_threshold(lam, rho)
                if best is None or abs(th - target) < abs(best[2] - target):
                    best = (lam, rho, th)
        if best is None or abs(best[2] - target) > self.tol:
            raise RuntimeError(f"no regular pair reaches threshold {target!r}")
        return best


def construct_joint(
    local: LocalEnsemble,
    eps_g: float,
    joint_family: Optional[Callable] = None,
    m_blocks: int = 4,
    n_sub: int = 1024,
    verify: bool = True,
) -> ConstructionResult:
    """Assemble an ensemble with global threshold eps_g around a local pair.

    Sets p0 = eps_L / eps_g and requests a joint pair with threshold
    eps_g * a_s(eps_g) from the family (tornado by default).  The achieved
    global threshold is re-verified numerically and reported.
    """
    eps_l = local_threshold(local)
    if not eps_l < eps_g < 1.0:
        raise ValueError(f"eps_g must lie in ({eps_l!r}, 1), got {eps_g!r}")
    if joint_family is None:
        joint_family = TornadoFamily()
    sp = stuck_point(local, eps_g, eps_local=eps_l)
    eps_j_target = eps_g * sp.a_s
    lam_j, rho_j, achieved_eps_j = joint_family(eps_j_target)
    p0 = eps_l / eps_g
    joint = JointEnsemble(lam_j, rho_j, p0=p0)
    ensemble = SubblockEnsemble(m_blocks, n_sub, local, joint)
    delta_l = 1.0 - eps_l - pair_rate(local.lambda_, local.rho)
    delta_j = 1.0 - achieved_eps_j - pair_rate(lam_j, rho_j)
    achieved_eps_g = math.nan
    if verify:
        achieved_eps_g = global_threshold(ensemble).eps_star
    return ConstructionResult(
        ensemble=ensemble,
        target_eps_l=eps_l,
        target_eps_g=eps_g,
        eps_j_target=eps_j_target,
        achieved_eps_j=achieved_eps_j,
        rate=design_rate(ensemble),
        gap_bound=delta_l + delta_j * (1.0 - p0),
        achieved_eps_g=achieved_eps_g,
    )


def rate_bound(local: LocalEnsemble, joint: JointEnsemble) -> float:
    """Capacity-side bound 1 - int(rho_L)/int(lam_L) - eps_J * (1 - p0)."""
    bound = 1.0 - local.rho.integral01() / local.lambda_.integral01()
    if joint.p0 < 1.0:
        eps_j = pair_threshold(joint.lambda_, joint.rho)
        bound -= eps_j * (1.0 - joint.p0)
    return bound


def rate_bound_targets(local: LocalEnsemble, eps_l: float, eps_g: float) -> float:
    """Rate bound of the construction at targets (eps_l, eps_g) for a local pair."""
    sp = stuck_point(local, eps_g)
    return (
        1.0
        - local.rho.integral01() / local.lambda_.integral01()
        - eps_g * sp.a_s * (1.0 - eps_l / eps_g)
    )


def optimize_rhat(eps_l: float, eps_g: float, step: float = 1e-3):
    """Maximize the closed-form rate bound over the degree-2 local family.

    The objective is rho3/3 + rho4/2 - x_s^2(rho3, rho4, eps_g)/eps_g *
    (1 - eps_l/eps_g) over the simplex {rho3, rho4 >= 0, rho3 + rho4 <= 1,
    rho3 + 2 rho4 <= 1/eps_l - 1}; solved by a dense grid plus local
    refinement.  Returns (rho3, rho4, rhat).
    """
    if not 0.0 < eps_l < eps_g < 1.0:
        raise ValueError("need 0 < eps_l < eps_g < 1")
    cap = 1.0 / eps_l - 1.0
    factor = (1.0 - eps_l / eps_g) / eps_g

    def rhat(r3, r4):
        if r4 == 0.0:
            if r3 == 0.0:
                xs = 0.0
            else:
                xs = max(1.0 - (1.0 / eps_g - 1.0) / r3, 0.0)
        else:
            disc = (r3 + r4) ** 2 + 4.0 * r4 * (1.0 / eps_g - 1.0)
            xs = max((r3 + 3.0 * r4 - math.sqrt(disc)) / (2.0 * r4), 0.0)
        return r3 / 3.0 + r4 / 2.0 - xs * xs * factor

    def rhat_grid(r3, r4):
        xs = np.zeros_like(r3)
        mask4 = r4 > 0.0
        disc = (r3 + r4) ** 2 + 4.0 * r4 * (1.0 / eps_g - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs4 = (r3 + 3.0 * r4 - np.sqrt(disc)) / (2.0 * r4)
        xs = np.where(mask4, xs4, 0.0)
        mask3 = (~mask4) & (r3 > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs3 = 1.0 - (1.0 / eps_g - 1.0) / r3
        xs = np.where(mask3, xs3, xs)
        xs = np.maximum(xs, 0.0)
        return r3 / 3.0 + r4 / 2.0 - xs * xs * factor

    n = int(round(1.0 / step)) + 1
    vals = np.linspace(0.0, 1.0, n)
    r3, r4 = np.meshgrid(vals, vals, indexing="ij")
    feasible = (r3 + r4 <= 1.0 + 1e-12) & (r3 + 2.0 * r4 <= cap + 1e-12)
    obj = np.where(feasible, rhat_grid(r3, r4), -np.inf)
    k = int(np.argmax(obj))
    best3, best4 = float(r3.flat[k]), float(r4.flat[k])
    best = float(obj.flat[k])
    # Shrinking local grid refinement inside the feasible set.
    width = step
    for _ in range(4):
        width /= 8.0
        g3 = np.clip(np.linspace(best3 - 8 * width, best3 + 8 * width, 17), 0.0, 1.0)
        g4 = np.clip(np.linspace(best4 - 8 * width, best4 + 8 * width, 17), 0.0, 1.0)
        for a in g3:
            for b in g4:
                if a + b > 1.0 or a + 2.0 * b > cap:
                    continue
                v = rhat(a, b)
                if v > best:
                    best, best3, best4 = v, float(a), float(b)
    return best3, best4, best


def gap_bound(result: ConstructionResult, check_tol: float = 1e-6) -> float:
    """Capacity-gap bound delta_L + delta_J * (1 - p0) of a construction.

    Also evaluates the measured gap 1 - eps_G - rate and checks that the
    bound dominates it (a proved property of the construction).
    """
    eps_g = result.achieved_eps_g
    if math.isnan(eps_g):
        eps_g = global_threshold(result.ensemble).eps_star
    true_gap = 1.0 - eps_g - result.rate
    if true_gap > result.gap_bound + check_tol:
        raise AssertionError(
            f"measured gap {true_gap!r} exceeds bound {result.gap_bound!r}"
        )
    return result.gap_bound


def capacity_sequence(
    eps_l: float,
    eps_g: float,
    schedule: Sequence[tuple[int, int]],
    truncation_tol: float = 1e-12,
    m_blocks: int = 4,
    n_sub: int = 1024,
    verify: bool = False,
) -> list[ConstructionResult]:
    """Tornado ladder approaching capacity at eps_g with local capability eps_l.

    Each (d_local, d_joint) entry pairs a local tornado at eps_l with a
    joint tornado at eps_g and p0 = eps_l / eps_g; rates approach 1 - eps_g
    as both depths grow.
    """
    if not 0.0 < eps_l < eps_g < 1.0:
        raise ValueError("need 0 < eps_l < eps_g < 1")
    p0 = eps_l / eps_g
    out = []
    for d_l, d_j in schedule:
        lam_l, rho_l = tornado_pair(d_l, eps_l, truncation_tol)
        lam_j, rho_j = tornado_pair(d_j, eps_g, truncation_tol)
        local = LocalEnsemble(lam_l, rho_l)
        joint = JointEnsemble(lam_j, rho_j, p0=p0)
        ensemble = SubblockEnsemble(m_blocks, n_sub, local, joint)
        ach_l = pair_threshold(lam_l, rho_l)
        ach_j = pair_threshold(lam_j, rho_j)
        delta_l = 1.0 - ach_l - pair_rate(lam_l, rho_l)
        delta_j = 1.0 - ach_j - pair_rate(lam_j, rho_j)
        achieved_eps_g = global_threshold(ensemble).eps_star if verify else math.nan
        out.append(
            ConstructionResult(
                ensemble=ensemble,
                target_eps_l=eps_l,
                target_eps_g=eps_g,
                eps_j_target=eps_g,
                achieved_eps_j=ach_j,
                rate=design_rate(ensemble),
                gap_bound=delta_l + delta_j * (1.0 - p0),
                achieved_eps_g=achieved_eps_g,
            )
        )
    return out
