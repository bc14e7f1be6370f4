"""Benchmark monotone inclusion instances with known structure.

Each constructor returns a ProblemInstance whose declared metadata
(solution set, error bound, smoothness constants) is exact, so metric and
lemma checks can be run against ground truth.  Constructors are seeded and
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .report import CheckReport

__all__ = [
    "SolutionSet",
    "ErrorBound",
    "ProblemInstance",
    "make_bilinear_saddle",
    "make_strongly_monotone_affine",
    "make_cubic_1d",
    "make_convex_gradient",
    "PROBLEM_BUILDERS",
    "build_problem",
    "validate_instance",
]


@dataclass(frozen=True)
class SolutionSet:
    """kind is SINGLETON (point), AFFINE (point + orthonormal basis), or UNKNOWN."""

    kind: str
    point: np.ndarray | None = None
    basis: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("SINGLETON", "AFFINE", "UNKNOWN"):
            raise ValueError(f"unknown solution-set kind {self.kind!r}")
        if self.kind != "UNKNOWN" and self.point is None:
            raise ValueError("solution set needs a point")
        if self.point is not None:
            p = np.asarray(self.point, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "point", p)
        if self.basis is not None:
            b = np.atleast_2d(np.asarray(self.basis, dtype=float))
            b.setflags(write=False)
            object.__setattr__(self, "basis", b)


@dataclass(frozen=True)
class ErrorBound:
    """dist(x, zer A) <= kappa * dist(0, Ax) whenever dist(0, Ax) <= delta."""

    kappa: float
    delta: float


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    operator: ops.OperatorSpec
    domain_bounded: bool
    solution_set: SolutionSet
    error_bound: ErrorBound | None
    lipschitz_L: float
    order_p: int

    @property
    def dim(self):
        return self.operator.dim


def make_bilinear_saddle(d=2, scale=1.0):
    """Skew coupling F(u, w) = (scale*w, -scale*u) over the unit box.

    d must be even; the unique solution is the origin.  The affine part is
    exactly reproduced by any order >= 2 surrogate, so lipschitz_L = 0 at
    order_p = 2; tensor runs supply their own effective constant.
    """
    if d < 2 or d % 2:
        raise ValueError("bilinear saddle needs even d >= 2")
    if not scale > 0:
        raise ValueError("scale must be positive")
    h = d // 2
    m = np.zeros((d, d))
    m[:h, h:] = scale * np.eye(h)
    m[h:, :h] = -scale * np.eye(h)
    cone = ops.BoxCone(-np.ones(d), np.ones(d))
    op = ops.OperatorSpec(dim=d, affine=ops.AffinePart(m, np.zeros(d)), cone=cone, smoothness=(2, 0.0))
    return ProblemInstance(
        name="bilinear_saddle",
        operator=op,
        domain_bounded=True,
        solution_set=SolutionSet("SINGLETON", np.zeros(d)),
        # Interior: res = scale*||x|| and dist = ||x||; every boundary point
        # of the unit box has res >= scale, so delta = scale/2 is safe.
        error_bound=ErrorBound(kappa=1.0 / scale, delta=scale / 2.0),
        lipschitz_L=0.0,
        order_p=2,
    )


def make_strongly_monotone_affine(d=2, mu=1.0, seed=0):
    """F = mu*I + S with a seeded random skew part; zero is the solution.

    ||F(x)|| >= mu*||x|| (the skew term is orthogonal to x), so the error
    bound holds globally with kappa = 1/mu.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d))
    m = mu * np.eye(d) + 0.5 * (g - g.T)
    op = ops.make_affine(m, smoothness=(2, 0.0))
    return ProblemInstance(
        name="strongly_monotone_affine",
        operator=op,
        domain_bounded=False,
        solution_set=SolutionSet("SINGLETON", np.zeros(d)),
        error_bound=ErrorBound(kappa=1.0 / mu, delta=np.inf),
        lipschitz_L=0.0,
        order_p=2,
    )


def make_cubic_1d():
    """Scalar F(u) = u^3 on R; D^2 F is 6-Lipschitz."""
    op = ops.make_poly([0.0, 0.0, 0.0, 1.0], dim=1, smoothness=(3, 6.0))
    return ProblemInstance(
        name="cubic_1d",
        operator=op,
        domain_bounded=False,
        solution_set=SolutionSet("SINGLETON", np.zeros(1)),
        error_bound=None,
        lipschitz_L=6.0,
        order_p=3,
    )


def make_convex_gradient(d=2):
    """Gradient field of Phi(x) = ||x||^4 / 4, i.e. F(x) = ||x||^2 x."""
    op = ops.OperatorSpec(dim=d, radial=ops.RadialPart(1.0), smoothness=(3, 6.0))
    return ProblemInstance(
        name="convex_gradient",
        operator=op,
        domain_bounded=False,
        solution_set=SolutionSet("SINGLETON", np.zeros(d)),
        error_bound=None,
        lipschitz_L=6.0,
        order_p=3,
    )


PROBLEM_BUILDERS = {
    "bilinear_saddle": make_bilinear_saddle,
    "strongly_monotone_affine": make_strongly_monotone_affine,
    "cubic_1d": make_cubic_1d,
    "convex_gradient": make_convex_gradient,
}


def build_problem(name, params=None):
    if name not in PROBLEM_BUILDERS:
        raise ValueError(f"unknown problem {name!r}; have {sorted(PROBLEM_BUILDERS)}")
    return PROBLEM_BUILDERS[name](**(params or {}))


def _solution_points(problem, rng, count):
    sol = problem.solution_set
    if sol.kind == "SINGLETON":
        return [np.array(sol.point)]
    if sol.kind == "AFFINE":
        pts = [np.array(sol.point)]
        for _ in range(count - 1):
            pts.append(sol.point + rng.standard_normal(sol.basis.shape[0]) @ sol.basis)
        return pts
    return []


def validate_instance(problem, seed=0, samples=32):
    """Ground-truth audit of the declared metadata; returns a CheckReport."""
    rng = np.random.default_rng(seed)
    op = problem.operator
    rep = CheckReport()

    worst = 0.0
    for z in _solution_points(problem, rng, 4):
        worst = max(worst, ops.min_norm_residual(op, z))
    rep.add("solution residue <= 1e-8", worst <= 1e-8, 1e-8 - worst)

    worst = np.inf
    for _ in range(samples):
        a = ops.domain_project(op, rng.standard_normal(op.dim) * 2.0)
        b = ops.domain_project(op, rng.standard_normal(op.dim) * 2.0)
        inner = float((ops.single_value(op, a) - ops.single_value(op, b)) @ (a - b))
        worst = min(worst, inner + 1e-10)
    rep.add("operator monotone on sampled pairs", worst >= 0.0, worst)

    if problem.error_bound is not None and problem.solution_set.kind != "UNKNOWN":
        eb = problem.error_bound
        worst = np.inf
        for _ in range(samples):
            z = _solution_points(problem, rng, 1)[0]
            x = ops.domain_project(op, z + rng.standard_normal(op.dim) * 0.05)
            res = ops.min_norm_residual(op, x)
            if not np.isfinite(res) or res > eb.delta:
                continue
            dist = _dist_to_declared(problem, x)
            worst = min(worst, eb.kappa * res - dist + 1e-8)
        rep.add("error bound on sampled near-solutions", worst >= 0.0, worst)
    return rep


def _dist_to_declared(problem, x):
    sol = problem.solution_set
    if sol.kind == "SINGLETON":
        return float(np.linalg.norm(x - sol.point))
    if sol.kind == "AFFINE":
        r = x - sol.point
        return float(np.linalg.norm(r - sol.basis.T @ (sol.basis @ r)))
    raise ValueError("no declared solution set")
