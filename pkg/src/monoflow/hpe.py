"""Large-step relative-error proximal iteration and its certificates.

Each iteration produces (lam, y, v, eps) with v an eps-enlarged value of
the operator at y, subject to the two machine-checked conditions

    ||lam*v + y - x||^2 + 2*lam*eps <= sigma^2 ||y - x||^2
    lam * ||y - x||^(p-1)          >= theta

followed by the update x+ = x - lam*v.  The exact oracle solves the
control law and a resolvent, which satisfies both with sigma = 0, eps = 0
and large-step equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import operators as ops
from .errors import CertificateViolation, MonoflowError, OracleFailure, StationaryPoint, UnknownSolutionSet
from .feedback import FeedbackParams, solve_lambda
from .report import CheckReport

__all__ = [
    "CERT_TOL",
    "HpeConfig",
    "StepCertificate",
    "IterateRecord",
    "RunResult",
    "verify_step",
    "exact_oracle",
    "ExactProxOracle",
    "run",
    "ergodic_iterate",
    "check_discrete_lemmas",
]

CERT_TOL = 1e-8


@dataclass(frozen=True)
class HpeConfig:
    sigma: float
    theta: float
    p: int
    max_iters: int
    stop_res: float = 1e-9
    cert_tol: float = CERT_TOL

    def __post_init__(self):
        if not 0.0 <= self.sigma < 1.0:
            raise ValueError("sigma must lie in [0, 1)")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("order p must be an integer >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.stop_res >= 0:
            raise ValueError("stop_res must be >= 0")
        object.__setattr__(self, "p", int(self.p))


@dataclass(frozen=True)
class StepCertificate:
    relative_error_ok: bool
    large_step_ok: bool
    enlargement_margin: float | None = None
    relative_error_slack: float = 0.0
    large_step_slack: float = 0.0

    @property
    def ok(self):
        return self.relative_error_ok and self.large_step_ok


@dataclass(frozen=True)
class IterateRecord:
    k: int
    x_prev: np.ndarray
    lam: float
    y: np.ndarray
    v: np.ndarray
    eps: float
    x_next: np.ndarray
    cert: StepCertificate


@dataclass(frozen=True)
class RunResult:
    records: list[IterateRecord]
    status: str  # SOLVED | MAX_ITERS

    def __iter__(self):
        return iter((self.records, self.status))


def verify_step(cfg, x_prev, lam, y, v, eps):
    """Machine-check the two step conditions with cert_tol relative slack.

    The slack scale max(1, ||y - x||^2) absorbs the resolvent tolerance of
    the exact oracle (residual <= 1e-10 * max(1, ||y - x||), squared).
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if not lam > 0:
        raise ValueError("lam must be positive")
    x_prev = np.asarray(x_prev, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    step = float(np.linalg.norm(y - x_prev))
    lhs = float(np.linalg.norm(lam * v + y - x_prev)) ** 2 + 2.0 * lam * eps
    rhs = cfg.sigma**2 * step**2
    rel_slack = rhs - lhs + cfg.cert_tol * max(1.0, step**2)
    ls_slack = lam * step ** (cfg.p - 1) - cfg.theta * (1.0 - cfg.cert_tol)
    return StepCertificate(
        relative_error_ok=rel_slack >= 0.0,
        large_step_ok=ls_slack >= 0.0,
        relative_error_slack=rel_slack,
        large_step_slack=ls_slack,
    )


def exact_oracle(problem, x, cfg, hint=None):
    """Resolvent oracle: lam solves the control law, then (y, v) = prox pair.

    Satisfies the step conditions with sigma = 0 and eps = 0.  The large-
    step inequality is enforced one-sidedly on the returned pair: a root
    accepted within the law's residual tolerance can land a hair below
    theta, so lam is nudged up until lam * ||y - x||^(p-1) >= theta holds
    for the exact pair handed back.  Scaling lam by f >= 1 scales the law
    value by at least f, so the loop terminates in a step or two and the
    overshoot stays within the solver's acceptance band.
    """
    op = problem.operator
    if cfg.p == 1:
        lam = cfg.theta
        r = ops.resolvent(op, lam, x)
        return lam, r.y, r.v, 0.0
    lam = solve_lambda(op, x, FeedbackParams(cfg.theta, cfg.p, relax_theta=True), hint=hint)
    r = ops.resolvent(op, lam, x)
    for _ in range(60):
        d = float(np.linalg.norm(np.asarray(r.y) - x))
        val = lam * d ** (cfg.p - 1)
        if val >= cfg.theta:
            break
        band = lam * ((d + r.residual) ** (cfg.p - 1) - max(d - r.residual, 0.0) ** (cfg.p - 1))
        lam *= max((cfg.theta + band) / max(val, 1e-300), 1.0 + 1e-12)
        r = ops.resolvent(op, lam, x)
    return lam, r.y, r.v, 0.0


class ExactProxOracle:
    """Stateful wrapper around exact_oracle that warm-starts the law solve."""

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        self.hint = None

    def __call__(self, x):
        lam, y, v, eps = exact_oracle(self.problem, x, self.cfg, hint=self.hint)
        self.hint = lam
        return lam, y, v, eps


def run(problem, oracle, cfg, x0, witness_count=0, seed=0):
    """Drive the iteration from x0 until solved or the budget is used.

    Parameters
    ----------
    problem : ProblemInstance
    oracle : callable x -> (lam, y, v, eps)
    cfg : HpeConfig (verification constants sigma, theta, p)
    x0 : array
    witness_count : sample size for the per-step enlargement audit
        (0 disables it; the audit is a necessary-condition spot check).
    seed : witness sampling seed.

    Returns RunResult; raises CertificateViolation / OracleFailure with the
    offending iteration index.
    """
    op = problem.operator
    x = np.asarray(x0, dtype=float).copy()
    records = []
    status = "MAX_ITERS"
    for k in range(1, cfg.max_iters + 1):
        if ops.min_norm_residual(op, x) <= cfg.stop_res:
            status = "SOLVED"
            break
        try:
            lam, y, v, eps = oracle(x)
        except StationaryPoint:
            status = "SOLVED"
            break
        except MonoflowError as exc:
            raise OracleFailure(f"oracle failed at k={k}: {exc}", k=k, records=records) from exc
        v = np.asarray(v, dtype=float)
        cert = verify_step(cfg, x, lam, y, v, eps)
        if witness_count:
            margin = ops.enlargement_check(op, y, v, eps, witness_count, seed + k)[1]
            cert = replace(cert, enlargement_margin=margin)
        if not cert.ok:
            raise CertificateViolation(
                f"step certificate failed at k={k}: "
                f"relative_error_slack={cert.relative_error_slack:.3e} "
                f"large_step_slack={cert.large_step_slack:.3e}",
                k=k,
                certificate=cert,
            )
        x_next = x - lam * v
        records.append(IterateRecord(k, x, lam, np.asarray(y, dtype=float), v, eps, x_next, cert))
        x = x_next
    else:
        if ops.min_norm_residual(op, x) <= cfg.stop_res:
            status = "SOLVED"
    return RunResult(records=records, status=status)


def ergodic_iterate(records, k=None):
    """Step-size weighted average of y_1..y_k."""
    if k is None:
        k = len(records)
    if k < 1 or not records:
        raise ValueError("ergodic iterate needs at least one record")
    num = np.zeros_like(records[0].y)
    den = 0.0
    for r in records[:k]:
        num += r.lam * r.y
        den += r.lam
    return num / den


def check_discrete_lemmas(records, problem, cfg):
    """Audit a run against the discrete descent, error and step-size lemmas.

    Uses the declared solution set as ground truth; raises
    UnknownSolutionSet when the problem does not carry one.  The step-size
    lower bound is the proof-side form

        sum lam_i >= theta ((1-sigma^2)/d0^2)^{(p-1)/2} k^{(p+1)/2}.
    """
    if problem.solution_set.kind == "UNKNOWN":
        raise UnknownSolutionSet("discrete lemma audit needs a declared solution set")
    rep = CheckReport()
    if not records:
        rep.add("run nonempty", False, -1.0)
        return rep

    from .metrics import dist_to_solutions

    sigma, theta, p = cfg.sigma, cfg.theta, cfg.p
    x_seq = [records[0].x_prev] + [r.x_next for r in records]
    d_seq = [dist_to_solutions(problem, x) for x in x_seq]
    d0 = d_seq[0]
    e_seq = [0.5 * d * d for d in d_seq]
    e0 = e_seq[0]
    scale = max(e0, 1e-300)

    worst = np.inf
    for a, b in zip(e_seq, e_seq[1:]):
        worst = min(worst, (a - b) / scale + 1e-9)
    rep.add("Lyapunov distance nonincreasing", worst >= 0.0, worst)

    worst = np.inf
    acc = 0.0
    for i, r in enumerate(records):
        acc += float(np.linalg.norm(r.x_prev - r.y) ** 2)
        bound = e0 - e_seq[i + 1]
        worst = min(worst, (bound - 0.5 * (1.0 - sigma**2) * acc) / scale + 1e-9)
    rep.add("descent sum <= E0 - Ek", worst >= 0.0, worst)

    cap = d0**2 / (1.0 - sigma**2)
    rep.add(
        "sum ||x_{i-1} - y_i||^2 <= d0^2/(1-sigma^2)",
        acc <= cap * (1.0 + 1e-8) + 1e-12,
        (cap - acc) / max(cap, 1e-300) + 1e-8,
    )

    worst = np.inf
    for i, r in enumerate(records):
        lhs = d_seq[i] ** 2 - d_seq[i + 1] ** 2 + 2.0 * r.lam * r.eps
        rhs = (1.0 - sigma**2) * float(np.linalg.norm(r.x_prev - r.y) ** 2)
        worst = min(worst, (lhs - rhs) / max(d0**2, 1e-300) + 1e-9)
    rep.add("per-step squared-distance drop", worst >= 0.0, worst)

    lam_sum = 0.0
    worst_err = np.inf
    worst_eps = np.inf
    best_vel = np.inf
    best_eps = np.inf
    err_fac = math.sqrt((1.0 + sigma) / (1.0 - sigma))
    eps_fac = sigma**2 / (2.0 * (1.0 - sigma**2))
    for r in records:
        lam_sum += r.lam
        best_vel = min(best_vel, math.sqrt(r.lam) * float(np.linalg.norm(r.v)))
        best_eps = min(best_eps, r.eps)
        cap_vel = err_fac * d0 / math.sqrt(lam_sum)
        cap_eps = eps_fac * d0**2 / lam_sum
        worst_err = min(worst_err, (cap_vel - best_vel) / max(cap_vel, 1e-300) + 1e-8)
        worst_eps = min(worst_eps, cap_eps - best_eps + 1e-12)
    rep.add("residual bound min sqrt(lam)||v||", worst_err >= 0.0, worst_err)
    rep.add("enlargement bound min eps", worst_eps >= 0.0, worst_eps)

    worst = np.inf
    lam_sum = 0.0
    coef = theta * ((1.0 - sigma**2) / max(d0**2, 1e-300)) ** ((p - 1) / 2.0)
    for i, r in enumerate(records):
        lam_sum += r.lam
        floor = coef * (i + 1.0) ** ((p + 1) / 2.0)
        worst = min(worst, (lam_sum - floor) / max(floor, 1e-300) + 1e-8)
    rep.add("sum lam_i >= theta ((1-s^2)/d0^2)^{(p-1)/2} k^{(p+1)/2}", worst >= 0.0, worst)

    if problem.domain_bounded:
        from .metrics import gap

        try:
            sup_sq = ops.domain_sup_dist_sq(problem.operator, records[0].x_prev)
            worst = np.inf
            lam_sum = 0.0
            for i in range(len(records)):
                lam_sum += records[i].lam
                g = gap(problem, ergodic_iterate(records, i + 1))
                cap_g = 0.5 * sup_sq / lam_sum
                worst = min(worst, (cap_g - g) / max(cap_g, 1e-300) + 1e-8)
            rep.add("ergodic gap <= sup ||z-x0||^2 / (2 sum lam)", worst >= 0.0, worst)
        except MonoflowError:
            pass
    return rep
