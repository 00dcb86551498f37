"""Degree-distribution polynomial algebra and code-ensemble definitions.

A bipartite code graph is described by degree distributions, stored either
from the node perspective (Lam(x) = sum_i Lam_i x^i, fraction of nodes with
degree i) or from the edge perspective (lam(x) = sum_i lam_i x^(i-1),
fraction of edges attached to degree-i nodes).  A sub-block structured
ensemble carries two such pairs: a "local" pair confined to sub-blocks and a
"joint" pair spanning the whole block.  Variables may have joint degree
zero; the fraction of those is `p0` and enters the node-perspective joint
polynomial as its constant coefficient.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_TOL = 1e-12

__all__ = [
    "DegreePolynomial",
    "LocalEnsemble",
    "JointEnsemble",
    "SubblockEnsemble",
    "evaluate",
    "node_to_edge",
    "edge_to_node",
    "design_rate_regular",
    "design_rate",
    "monomial",
    "regular_ensemble",
    "ensemble_to_json",
    "ensemble_from_json",
]


class DegreePolynomial:
    """Sparse polynomial with nonnegative masses summing to one.

    Coefficients are kept as (exponent, mass) pairs with strictly increasing
    integer exponents.  Inputs whose mass sum is within ``NORMALIZATION_TOL``
    of one are renormalized exactly; anything further off is rejected.
    """

    __slots__ = ("exponents", "masses", "perspective")

    def __init__(self, coeffs, perspective):
        if perspective not in ("node", "edge"):
            raise ValueError(f"perspective must be 'node' or 'edge', got {perspective!r}")
        acc: dict[int, float] = {}
        for exponent, mass in coeffs:
            e = int(exponent)
            if e != exponent or e < 0:
                raise ValueError(f"exponents must be nonnegative integers, got {exponent!r}")
            m = float(mass)
            if m < -NORMALIZATION_TOL:
                raise ValueError(f"negative mass {m!r} at exponent {e}")
            acc[e] = acc.get(e, 0.0) + max(m, 0.0)
        items = sorted((e, m) for e, m in acc.items() if m > 0.0)
        if not items:
            raise ValueError("polynomial needs at least one positive mass")
        total = math.fsum(m for _, m in items)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"masses sum to {total!r}, outside tolerance of 1")
        self.exponents = np.array([e for e, _ in items], dtype=np.int64)
        self.masses = np.array([m / total for _, m in items], dtype=np.float64)
        self.perspective = perspective

    def __call__(self, x):
        return evaluate(self, x)

    def __eq__(self, other):
        if not isinstance(other, DegreePolynomial):
            return NotImplemented
        return (
            self.perspective == other.perspective
            and np.array_equal(self.exponents, other.exponents)
            and np.array_equal(self.masses, other.masses)
        )

    def __hash__(self):
        return hash((self.perspective, self.exponents.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        terms = " + ".join(f"{m:.6g}*x^{e}" for e, m in zip(self.exponents, self.masses))
        return f"DegreePolynomial({terms}, {self.perspective})"

    @property
    def max_exponent(self) -> int:
        return int(self.exponents[-1])

    def mass_at(self, exponent: int) -> float:
        idx = np.searchsorted(self.exponents, exponent)
        if idx < len(self.exponents) and self.exponents[idx] == exponent:
            return float(self.masses[idx])
        return 0.0

    def derivative_at_one(self) -> float:
        """Value of the first derivative at x = 1 (the mean exponent)."""
        return float(np.dot(self.masses, self.exponents))

    def integral01(self) -> float:
        """Integral of the polynomial over [0, 1]."""
        return float(np.sum(self.masses / (self.exponents + 1.0)))

    def coeff_items(self):
        return list(zip(self.exponents.tolist(), self.masses.tolist()))


def monomial(exponent: int, perspective: str) -> DegreePolynomial:
    return DegreePolynomial([(exponent, 1.0)], perspective)


def evaluate(p: DegreePolynomial, x):
    """Evaluate sum(mass * x^exponent); x must lie in [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"evaluation point {x!r} outside [0, 1]")
    val = (arr[..., None] ** p.exponents) @ p.masses
    if np.ndim(x) == 0:
        return float(val)
    return val


def node_to_edge(node_poly: DegreePolynomial) -> DegreePolynomial:
    """Edge-perspective polynomial Lam'(x)/Lam'(1) of a node-perspective one."""
    if node_poly.perspective != "node":
        raise ValueError("node_to_edge expects a node-perspective polynomial")
    mean = node_poly.derivative_at_one()
    if mean <= 0.0:
        raise ValueError("degenerate node polynomial: derivative at 1 is zero")
    coeffs = [
        (e - 1, e * m / mean)
        for e, m in zip(node_poly.exponents.tolist(), node_poly.masses.tolist())
        if e >= 1
    ]
    return DegreePolynomial(coeffs, "edge")


def edge_to_node(edge_poly: DegreePolynomial, p0: float = 0.0) -> DegreePolynomial:
    """Node-perspective polynomial of an edge-perspective one.

    ``p0`` is the fraction of degree-zero nodes; the connected part is the
    normalized integral of the edge polynomial scaled by (1 - p0).
    """
    if edge_poly.perspective != "edge":
        raise ValueError("edge_to_node expects an edge-perspective polynomial")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")
    if p0 == 1.0:
        return DegreePolynomial([(0, 1.0)], "node")
    integral = edge_poly.integral01()
    coeffs = [
        (e + 1, (1.0 - p0) * (m / (e + 1)) / integral)
        for e, m in zip(edge_poly.exponents.tolist(), edge_poly.masses.tolist())
    ]
    if p0 > 0.0:
        coeffs.append((0, p0))
    return DegreePolynomial(coeffs, "node")


@dataclass(frozen=True)
class LocalEnsemble:
    """Edge-perspective (lambda, rho) pair of the sub-block code.

    By default local variable degrees must be at least 2; degree-one local
    variables are admissible mathematically and can be enabled explicitly.
    """

    lambda_: DegreePolynomial
    rho: DegreePolynomial
    allow_degree_one: bool = False

    def __post_init__(self):
        if self.lambda_.perspective != "edge" or self.rho.perspective != "edge":
            raise ValueError("LocalEnsemble expects edge-perspective polynomials")
        if not self.allow_degree_one and self.lambda_.mass_at(0) > 0.0:
            raise ValueError(
                "degree-one local variables need allow_degree_one=True"
            )

    @property
    def lambda_node(self) -> DegreePolynomial:
        return edge_to_node(self.lambda_, 0.0)

    @property
    def rho_node(self) -> DegreePolynomial:
        return edge_to_node(self.rho, 0.0)


@dataclass(frozen=True)
class JointEnsemble:
    """Edge-perspective (lambda, rho) pair of the block-wide code plus p0.

    ``p0`` is the fraction of variables with no joint edge.  When p0 == 1
    the joint side is empty and lambda/rho are ignored by all consumers.
    """

    lambda_: DegreePolynomial
    rho: DegreePolynomial
    p0: float = 0.0

    def __post_init__(self):
        if self.lambda_.perspective != "edge" or self.rho.perspective != "edge":
            raise ValueError("JointEnsemble expects edge-perspective polynomials")
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0!r}")

    @property
    def lambda_node(self) -> DegreePolynomial:
        return edge_to_node(self.lambda_, self.p0)

    @property
    def rho_node(self) -> DegreePolynomial:
        return edge_to_node(self.rho, 0.0)


@dataclass(frozen=True)
class SubblockEnsemble:
    """A code family with m_blocks sub-blocks of n_sub variables each."""

    m_blocks: int
    n_sub: int
    local: LocalEnsemble
    joint: JointEnsemble

    def __post_init__(self):
        if self.m_blocks < 1 or self.n_sub < 1:
            raise ValueError("m_blocks and n_sub must be positive")
        rate = design_rate(self)
        if not -1.0 < rate < 1.0:
            raise ValueError(f"design rate {rate!r} outside (-1, 1)")
        if rate < 0.0:
            warnings.warn(f"design rate is negative ({rate:.4f})", stacklevel=2)

    @property
    def n_total(self) -> int:
        return self.m_blocks * self.n_sub


def design_rate_regular(l_l: int, r_l: int, l_j: int, r_j: int) -> float:
    """Design rate 1 - l_l/r_l - l_j/r_j of a fully regular ensemble."""
    if r_l < 1 or r_j < 1 or l_l < 0 or l_j < 0:
        raise ValueError("check degrees must be >= 1 and variable degrees >= 0")
    if r_l < l_l or r_j < l_j:
        raise ValueError("check degrees must be at least the variable degrees")
    return 1.0 - l_l / r_l - l_j / r_j


def design_rate(e: SubblockEnsemble) -> float:
    """Design rate 1 - int(rho_L)/int(lam_L) - int(rho_J)/int(lam_J) * (1 - p0)."""
    int_lam_l = e.local.lambda_.integral01()
    if int_lam_l <= 0.0:
        raise ValueError("degenerate local lambda: zero integral")
    rate = 1.0 - e.local.rho.integral01() / int_lam_l
    p0 = e.joint.p0
    if p0 < 1.0:
        int_lam_j = e.joint.lambda_.integral01()
        if int_lam_j <= 0.0:
            raise ValueError("degenerate joint lambda: zero integral")
        rate -= e.joint.rho.integral01() / int_lam_j * (1.0 - p0)
    return rate


def regular_ensemble(
    l_l: int, r_l: int, l_j: int, r_j: int, m_blocks: int = 4, n_sub: int = 1024
) -> SubblockEnsemble:
    """The (l_l, r_l, l_j, r_j)-regular ensemble as monomial polynomials."""
    local = LocalEnsemble(
        monomial(l_l - 1, "edge"), monomial(r_l - 1, "edge"), allow_degree_one=(l_l == 1)
    )
    if l_j == 0:
        joint = JointEnsemble(monomial(0, "edge"), monomial(r_j - 1, "edge"), p0=1.0)
    else:
        joint = JointEnsemble(monomial(l_j - 1, "edge"), monomial(r_j - 1, "edge"), p0=0.0)
    return SubblockEnsemble(m_blocks, n_sub, local, joint)


def _poly_to_json(p: DegreePolynomial):
    # JSON stores degrees (edge exponent + 1), not raw exponents.
    return [[e + 1, m] for e, m in p.coeff_items()]


def _poly_from_json(entries) -> DegreePolynomial:
    return DegreePolynomial([(int(d) - 1, m) for d, m in entries], "edge")


def ensemble_to_json(e: SubblockEnsemble) -> dict:
    return {
        "M": e.m_blocks,
        "n": e.n_sub,
        "local": {
            "lambda": _poly_to_json(e.local.lambda_),
            "rho": _poly_to_json(e.local.rho),
        },
        "joint": {
            "lambda": _poly_to_json(e.joint.lambda_),
            "rho": _poly_to_json(e.joint.rho),
            "p0": e.joint.p0,
        },
    }


def ensemble_from_json(obj) -> SubblockEnsemble:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    lam_l = _poly_from_json(obj["local"]["lambda"])
    local = LocalEnsemble(
        lam_l, _poly_from_json(obj["local"]["rho"]), allow_degree_one=lam_l.mass_at(0) > 0
    )
    joint = JointEnsemble(
        _poly_from_json(obj["joint"]["lambda"]),
        _poly_from_json(obj["joint"]["rho"]),
        p0=float(obj["joint"].get("p0", 0.0)),
    )
    return SubblockEnsemble(int(obj["M"]), int(obj["n"]), local, joint)
