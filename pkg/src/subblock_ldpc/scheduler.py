"""Joint-access scheduling over the coupled density-evolution dynamics.

A schedule decides at which iterations the joint side of the graph is
updated; local updates are free, joint updates are the cost metric N_JI.
The stall-driven policy (joint update only once local progress drops below
eta while the effective local erasure rate still exceeds the local
threshold) minimizes N_JI; its eta -> 0 idealization runs the stuck-point
recursion

    y_1 = 1, eps_1 = eps, x_1 = x_s(eps)
    y_{k+1} = g(eps, x_s(eps_k), y_k),  eps_{k+1} = eps_loc(y_{k+1})

until the effective erasure rate falls below the local threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .construction import stuck_point
from .density_evolution import (
    DEFAULT_HALT_TOL,
    DEFAULT_MAX_ITERS,
    compile_poly,
    local_threshold,
    make_maps,
)
from .ensembles import SubblockEnsemble

__all__ = [
    "SchedulePolicy",
    "ScheduleResult",
    "flooding_policy",
    "never_policy",
    "fixed_set_policy",
    "periodic_policy",
    "eta_policy",
    "run_schedule",
    "n_ji_ideal",
    "check_optimality",
]


@dataclass(frozen=True)
class SchedulePolicy:
    """Gate deciding whether iteration l updates the joint side.

    kind:
      'flooding'  every iteration
      'never'     no iteration
      'fixed'     iterations in a fixed set
      'periodic'  every k-th iteration (l = k-1, 2k-1, ...)
      'eta'       |x_{l-1} - x_l| <= eta and eps_loc(y_{l-1}) >= eps_L

    The eta gate looks at the newest local change (x_l is available before
    the joint decision since it only depends on the previous state); gating
    one step further back systematically overshoots the minimal joint count
    by a few updates on long schedules.
    """

    kind: str
    eta: float = 0.0
    period: int = 0
    iterations: frozenset = field(default_factory=frozenset)

    def wants_joint(self, l, x_prev, x_new, eps_loc_prev, eps_local) -> bool:
        if self.kind == "flooding":
            return True
        if self.kind == "never":
            return False
        if self.kind == "fixed":
            return l in self.iterations
        if self.kind == "periodic":
            return (l + 1) % self.period == 0
        if self.kind == "eta":
            return abs(x_prev - x_new) <= self.eta and eps_loc_prev >= eps_local
        raise ValueError(f"unknown policy kind {self.kind!r}")

    def next_fire_after(self, l) -> Optional[int]:
        """Next iteration > l that fires regardless of the trajectory."""
        if self.kind == "flooding":
            return l + 1
        if self.kind == "periodic":
            return l + self.period - (l + 1) % self.period
        if self.kind == "fixed":
            later = [i for i in self.iterations if i > l]
            return min(later) if later else None
        return None  # 'eta' is trajectory-dependent, 'never' never fires

    @property
    def fires_on_stall(self) -> bool:
        return self.kind in ("flooding", "eta")


def flooding_policy() -> SchedulePolicy:
    return SchedulePolicy("flooding")


def never_policy() -> SchedulePolicy:
    return SchedulePolicy("never")


def fixed_set_policy(iterations) -> SchedulePolicy:
    return SchedulePolicy("fixed", iterations=frozenset(int(i) for i in iterations))


def periodic_policy(k: int) -> SchedulePolicy:
    if k < 1:
        raise ValueError("period must be >= 1")
    return SchedulePolicy("periodic", period=k)


def eta_policy(eta: float) -> SchedulePolicy:
    """Stall-gated policy: joint update once local progress is within eta."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    return SchedulePolicy("eta", eta=eta)


@dataclass
class ScheduleResult:
    """Outcome of one scheduled run.

    phases record, per joint update, the effective erasure rate seen by the
    local code when the update was issued, the local erasure level at that
    moment, the joint-edge erasure level right after the update, and the
    number of local iterations spent since the previous update.
    """

    n_ji: int
    phases: list
    valid: bool
    total_local_iters: int
    x_limit: float = 0.0
    y_limit: float = 0.0

    def phase_csv(self) -> str:
        lines = ["phase,eps_k,x_s,y_after,n_ji_cum"]
        for k, (eps_k, x_stuck, y_after, _) in enumerate(self.phases, start=1):
            lines.append(f"{k},{eps_k:.12g},{x_stuck:.12g},{y_after:.12g},{k}")
        return "\n".join(lines) + "\n"


def run_schedule(
    e: SubblockEnsemble,
    epsilon: float,
    policy: SchedulePolicy,
    max_iters: int = DEFAULT_MAX_ITERS,
    halt_tol: float = DEFAULT_HALT_TOL,
) -> ScheduleResult:
    """Density evolution with joint updates gated by a schedule policy."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    f, g = make_maps(e)
    joint = e.joint
    if joint.p0 < 1.0:
        lam_node_j = compile_poly(joint.lambda_node)
        rho_j = compile_poly(joint.rho)
        eps_loc = lambda y: epsilon * lam_node_j(1.0 - rho_j(1.0 - y))
    else:
        eps_loc = lambda y: epsilon
    eps_local = local_threshold(e.local)

    x, y = 1.0, 1.0
    n_ji = 0
    phases = []
    local_since_update = 0
    last_y_change = math.inf
    stalls_without_fire = 0
    converged = False
    l = 0
    while l < max_iters:
        xn = f(epsilon, x, y)
        fire = policy.wants_joint(l, x, xn, eps_loc(y), eps_local)
        if fire:
            yn = g(epsilon, x, y)
            n_ji += 1
            phases.append((eps_loc(y), x, yn, local_since_update))
            last_y_change = y - yn
            local_since_update = 0
        else:
            yn = y
            local_since_update += 1
        dx = x - xn
        x, y = xn, yn
        l += 1
        if x < halt_tol:
            converged = True
            break
        stalled = dx < halt_tol * max(x, halt_tol)
        if stalled:
            if fire and last_y_change < halt_tol * max(y, halt_tol):
                break  # joint updates no longer help: a genuine fixed point
            if not fire:
                nxt = policy.next_fire_after(l - 1)
                if nxt is None and not policy.fires_on_stall:
                    stalls_without_fire += 1
                    if stalls_without_fire > 2:
                        break
        else:
            stalls_without_fire = 0
    return ScheduleResult(
        n_ji=n_ji,
        phases=phases,
        valid=converged,
        total_local_iters=l,
        x_limit=0.0 if converged else x,
        y_limit=0.0 if converged else y,
    )


def n_ji_ideal(
    e: SubblockEnsemble,
    epsilon: float,
    phase_cap: int = 10**5,
    tie_tol: float = 1e-12,
) -> ScheduleResult:
    """Joint-update count of the stall-driven schedule in its eta -> 0 limit.

    Per phase the local side is assumed to iterate for free all the way to
    its exact stuck point, so the recursion advances by one joint update at
    a time; it stops once the effective local erasure rate drops strictly
    below the local threshold (ties issue one more update).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    eps_local = local_threshold(e.local)
    joint = e.joint
    if joint.p0 < 1.0:
        lam_node_j = compile_poly(joint.lambda_node)
        rho_j = compile_poly(joint.rho)
        eps_loc = lambda y: epsilon * lam_node_j(1.0 - rho_j(1.0 - y))
    else:
        eps_loc = lambda y: epsilon
    _, g = make_maps(e)

    y = 1.0
    eps_k = epsilon
    phases = []
    if eps_k < eps_local - tie_tol:
        return ScheduleResult(0, [], True, 0)
    while len(phases) < phase_cap:
        sp = stuck_point(e.local, eps_k, eps_local=eps_local)
        y_next = g(epsilon, sp.x_s, y)
        eps_next = eps_loc(y_next)
        phases.append((eps_k, sp.x_s, y_next, 0))
        if eps_next >= eps_k - 1e-15:
            # No strict progress: the target erasure rate is not reachable.
            return ScheduleResult(len(phases), phases, False, 0, x_limit=sp.x_s, y_limit=y_next)
        y, eps_k = y_next, eps_next
        if eps_k < eps_local - tie_tol:
            return ScheduleResult(len(phases), phases, True, 0)
    return ScheduleResult(len(phases), phases, False, 0, x_limit=math.nan, y_limit=y)


def check_optimality(
    e: SubblockEnsemble,
    epsilon: float,
    policies: Sequence[SchedulePolicy],
    max_iters: int = DEFAULT_MAX_ITERS,
) -> dict:
    """Verify the stall-driven schedule needs the fewest joint updates.

    Runs every policy, asserts the ideal count is a lower bound, and checks
    per-update dominance of the joint-edge erasure levels (the ideal y after
    its k-th update never exceeds any valid schedule's).  Violations raise,
    since the dominance is a proved property.
    """
    ideal = n_ji_ideal(e, epsilon)
    report = {"ideal": ideal, "policies": {}}
    ideal_y = [p[2] for p in ideal.phases]
    for policy in policies:
        res = run_schedule(e, epsilon, policy, max_iters=max_iters)
        if not res.valid:
            report["policies"][policy.kind] = res
            continue
        if ideal.n_ji > res.n_ji:
            raise AssertionError(
                f"ideal schedule used {ideal.n_ji} joint updates, policy "
                f"{policy.kind!r} only {res.n_ji}"
            )
        other_y = [p[2] for p in res.phases]
        for k in range(min(len(ideal_y), len(other_y))):
            if ideal_y[k] > other_y[k] + 1e-9:
                raise AssertionError(
                    f"dominance violated at update {k}: ideal y {ideal_y[k]!r} "
                    f"exceeds {policy.kind!r} y {other_y[k]!r}"
                )
        report["policies"][policy.kind] = res
    return report
