"""Randomized property suites behind the command-line check harness.

Every suite takes one integer seed, draws its own generator, and returns a
CheckReport with one outcome per invariant.  Suites share no state, so ALL
may run them in parallel; each is internally deterministic given its seed.
Margins are oriented so that larger is safer and negative means failed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import operators as ops
from .errors import MonoflowError, OracleFailure, StationaryPoint
from .feedback import FeedbackParams, scaled_displacement, solve_lambda, stationarity_gauge
from .flow import check_flow_invariants, integrate
from .hpe import ExactProxOracle, HpeConfig, check_discrete_lemmas, run, verify_step
from .metrics import dist_to_solutions, fit_rate, gap, gap_grid_oracle, residue
from .problems import (
    ProblemInstance,
    SolutionSet,
    make_bilinear_saddle,
    make_convex_gradient,
    make_cubic_1d,
    make_strongly_monotone_affine,
    validate_instance,
)
from .report import CheckReport
from .tensor import TensorConfig, tensor_oracle

__all__ = ["SUITE_NAMES", "SUITES", "run_suites"]


def _operator_pool():
    return [
        ("identity-1d", make_strongly_monotone_affine(1, 1.0, seed=0)),
        ("monotone-3d", make_strongly_monotone_affine(3, 0.5, seed=1)),
        ("saddle-2d", make_bilinear_saddle(2, 1.0)),
        ("cubic-1d", make_cubic_1d()),
        ("radial-2d", make_convex_gradient(2)),
    ]


def _nonstationary(rng, problem, scale=1.0, floor=1e-3):
    op = problem.operator
    for _ in range(64):
        x = scale * rng.standard_normal(op.dim)
        if ops.min_norm_residual(op, x) > floor:
            return x
    raise RuntimeError("could not sample a point away from the solution set")


def _merge(rep, sub, prefix):
    for o in sub.outcomes:
        rep.add(f"{prefix}: {o.name}", o.passed, o.margin, o.detail)


def feedback_suite(seed=0):
    rng = np.random.default_rng(seed)
    rep = CheckReport()
    pool = _operator_pool()

    worst, where = math.inf, ""
    for _ in range(100):
        tag, prob = pool[int(rng.integers(len(pool)))]
        p = int(rng.integers(2, 5))
        x = _nonstationary(rng, prob)
        lam1 = float(10.0 ** rng.uniform(-2.0, 0.5))
        ratio = float(10.0 ** rng.uniform(0.01, 1.2))
        ph1 = scaled_displacement(prob.operator, lam1, x, p)
        ph2 = scaled_displacement(prob.operator, lam1 * ratio, x, p)
        tol = 1e-8 * max(1.0, ph2)
        lo = ratio ** (1.0 / (p - 1)) * ph1
        hi = ratio ** (p / (p - 1.0)) * ph1
        m = min(ph2 - lo + tol, hi - ph2 + tol)
        if m < worst:
            worst, where = m, f"{tag} p={p}"
    rep.add("scaled displacement sandwich over step ratios", worst >= 0.0, worst, where)

    worst, where = math.inf, ""
    for _ in range(100):
        tag, prob = pool[int(rng.integers(len(pool)))]
        p = int(rng.integers(2, 5))
        lam = float(10.0 ** rng.uniform(-2.0, 0.5))
        x1 = _nonstationary(rng, prob)
        x2 = x1 + 0.7 * rng.standard_normal(x1.size)
        ph1 = scaled_displacement(prob.operator, lam, x1, p)
        ph2 = scaled_displacement(prob.operator, lam, x2, p)
        cap = lam ** (1.0 / (p - 1)) * float(np.linalg.norm(x1 - x2))
        m = cap - abs(ph1 - ph2) + 1e-9 * max(1.0, cap)
        if m < worst:
            worst, where = m, f"{tag} p={p}"
    rep.add("scaled displacement Lipschitz in the point", worst >= 0.0, worst, where)

    worst, where = math.inf, ""
    for _ in range(50):
        tag, prob = pool[int(rng.integers(len(pool)))]
        params = FeedbackParams(theta=float(rng.uniform(0.05, 0.9)), p=int(rng.integers(2, 4)))
        x = _nonstationary(rng, prob)
        lam = solve_lambda(prob.operator, x, params)
        r = ops.resolvent(prob.operator, lam, x)
        g = lam * float(np.linalg.norm(x - r.y)) ** (params.p - 1)
        m = 1e-8 * params.theta - abs(g - params.theta)
        if m < worst:
            worst, where = m, f"{tag} p={params.p}"
    rep.add("law root satisfies the control equation", worst >= 0.0, worst, where)

    worst, where = math.inf, ""
    for _ in range(1000):
        tag, prob = pool[int(rng.integers(len(pool)))]
        params = FeedbackParams(theta=float(rng.uniform(0.05, 0.9)), p=int(rng.integers(2, 4)))
        x1 = _nonstationary(rng, prob)
        x2 = x1 + float(10.0 ** rng.uniform(-2.0, 0.3)) * rng.standard_normal(x1.size)
        d = float(np.linalg.norm(x1 - x2))
        if d < 1e-9:
            continue
        g1 = stationarity_gauge(prob.operator, x1, params)
        g2 = stationarity_gauge(prob.operator, x2, params)
        cap = params.theta ** (-1.0 / (params.p - 1)) * (1.0 + 1e-6)
        m = cap - abs(g1 - g2) / d
        if m < worst:
            worst, where = m, f"{tag} p={params.p}"
    rep.add("stationarity gauge Lipschitz bound over 1000 pairs", worst >= 0.0, worst, where)

    worst, where = math.inf, ""
    worst_cert = math.inf
    for _ in range(100):
        tag, prob = pool[int(rng.integers(len(pool)))]
        lam = float(10.0 ** rng.uniform(-2.0, 1.0))
        x1 = rng.standard_normal(prob.dim)
        x2 = x1 + rng.standard_normal(prob.dim)
        r1 = ops.resolvent(prob.operator, lam, x1)
        r2 = ops.resolvent(prob.operator, lam, x2)
        m = float(np.linalg.norm(x1 - x2)) - float(np.linalg.norm(r1.y - r2.y)) + 1e-9
        if m < worst:
            worst, where = m, tag
        for xq, rq in ((x1, r1), (x2, r2)):
            cap = 2.0 * ops.RESOLVENT_TOL * max(1.0, float(np.linalg.norm(rq.y - xq)))
            worst_cert = min(worst_cert, cap - rq.residual + 1e-15 * (1.0 + float(np.linalg.norm(xq))))
    rep.add("resolvent nonexpansive on random pairs", worst >= 0.0, worst, where)
    rep.add("resolvent residual within its certificate", worst_cert >= 0.0, worst_cert)

    return rep


def flow_suite(seed=0):
    rng = np.random.default_rng(seed)
    rep = CheckReport()
    ident = make_strongly_monotone_affine(1, 1.0, seed=0)

    for theta in (1.0, 0.5):
        params = FeedbackParams(theta=theta, p=1, relax_theta=True)
        traj = integrate(ident, np.array([1.0]), params, T=1.0, h=1e-3)
        exact = math.exp(-theta / (1.0 + theta))
        err = abs(float(traj.states[-1].x[0]) - exact)
        rep.add(
            f"single-valued identity flow matches exp(-theta t/(1+theta)) at theta={theta}",
            err <= 1e-6,
            1e-6 - err,
        )

    worst, where = math.inf, ""
    pool = _operator_pool()
    for _ in range(25):
        tag, prob = pool[int(rng.integers(len(pool)))]
        params = FeedbackParams(theta=float(rng.uniform(0.1, 0.9)), p=int(rng.integers(2, 4)))
        x = _nonstationary(rng, prob)
        lam = solve_lambda(prob.operator, x, params)
        speed = float(np.linalg.norm(ops.resolvent(prob.operator, lam, x).y - x))
        m = 1e-8 * params.theta - abs(speed ** (params.p - 1) * lam - params.theta)
        if m < worst:
            worst, where = m, f"{tag} p={params.p}"
    rep.add("field norm ties to the control law", worst >= 0.0, worst, where)

    runs = [
        ("saddle p=1", make_bilinear_saddle(2, 1.0), FeedbackParams(0.5, 1), np.array([0.7, 0.4])),
        ("saddle p=2", make_bilinear_saddle(2, 1.0), FeedbackParams(0.1, 2), np.array([0.7, 0.4])),
        (
            "monotone p=2",
            make_strongly_monotone_affine(2, 1.0, seed=2),
            FeedbackParams(0.25, 2),
            np.array([1.0, -0.5]),
        ),
        ("cubic p=2", make_cubic_1d(), FeedbackParams(0.2, 2), np.array([1.5])),
        ("radial p=3", make_convex_gradient(2), FeedbackParams(0.2, 3), np.array([1.0, 0.8])),
    ]
    for tag, prob, params, x0 in runs:
        traj = integrate(prob, x0, params, T=5.0, h=0.01)
        _merge(rep, check_flow_invariants(traj, prob, params), tag)

    return rep


def hpe_suite(seed=0):
    rep = CheckReport()

    runs = [
        ("saddle p=1", make_bilinear_saddle(2, 1.0), HpeConfig(0.0, 0.5, 1, 300, stop_res=1e-12), np.array([0.7, 0.4])),
        ("saddle p=2", make_bilinear_saddle(2, 1.0), HpeConfig(0.0, 0.01, 2, 250, stop_res=1e-12), np.array([0.7, 0.4])),
        ("cubic p=2", make_cubic_1d(), HpeConfig(0.0, 0.2, 2, 80, stop_res=1e-12), np.array([1.5])),
        ("radial p=2", make_convex_gradient(2), HpeConfig(0.0, 0.2, 2, 80, stop_res=1e-12), np.array([1.0, 0.8])),
    ]
    for tag, prob, cfg, x0 in runs:
        result = run(prob, ExactProxOracle(prob, cfg), cfg, x0, witness_count=8, seed=seed)
        certs = min(
            min(r.cert.relative_error_slack, r.cert.large_step_slack) for r in result.records
        )
        rep.add(f"{tag}: every step certificate holds", certs >= 0.0, certs)
        _merge(rep, check_discrete_lemmas(result.records, prob, cfg), tag)

    mu, theta = 1.0, 0.7
    ident = make_strongly_monotone_affine(1, mu, seed=0)
    cfg = HpeConfig(0.0, theta, 1, 40, stop_res=0.0)
    result = run(ident, ExactProxOracle(ident, cfg), cfg, np.array([1.0]))
    factor = 1.0 / (1.0 + theta * mu)
    worst = math.inf
    for r in result.records:
        ratio = float(np.linalg.norm(r.x_next) / np.linalg.norm(r.x_prev))
        worst = min(worst, 1e-8 - abs(ratio - factor))
    rep.add("proximal contraction factor matches closed form", worst >= 0.0, worst)

    worst = math.inf
    for r in result.records:
        worst = min(
            worst,
            0.999 - dist_to_solutions(ident, r.x_next) / max(dist_to_solutions(ident, r.x_prev), 1e-300),
        )
    rep.add("strongly monotone run contracts the distance", worst >= 0.0, worst)

    return rep


def _tensor_step_audit(rep, tag, prob, tcfg, x0, iters, seed):
    """Replays the oracle step by step and audits each sub-certificate."""
    op = prob.operator
    hcfg = HpeConfig(
        sigma=tcfg.sigma, theta=tcfg.theta, p=tcfg.p, max_iters=iters, stop_res=1e-11
    )
    wlo, whi = tcfg.window
    x = np.asarray(x0, dtype=float).copy()
    hint = None
    warm = None
    m_cert = m_win = m_hat = m_taylor = m_member = math.inf
    steps = 0
    for _ in range(iters):
        if ops.min_norm_residual(op, x) <= hcfg.stop_res:
            break
        try:
            lam, y, v, eps = tensor_oracle(prob, x, tcfg, hint=hint, warm=warm)
        except (StationaryPoint, MonoflowError):
            break
        steps += 1
        hint = lam
        cert = verify_step(hcfg, x, lam, y, v, eps)
        m_cert = min(m_cert, cert.relative_error_slack, cert.large_step_slack)

        s = lam * float(np.linalg.norm(y - x)) ** (tcfg.p - 1)
        if tcfg.p >= 2:
            m_win = min(m_win, s - wlo + 1e-12, whi - s + 1e-12)

        anchor = ops.domain_project(op, x)
        u = v - ops.single_value(op, y) + ops.taylor_value(op, anchor, tcfg.p, y)
        step_norm = float(np.linalg.norm(y - x))
        floor = 1e-13 * (1.0 + float(np.linalg.norm(x)))
        m_hat = min(
            m_hat,
            tcfg.sigma_hat * step_norm + floor - float(np.linalg.norm(lam * u + y - x)),
        )

        taylor_err = float(np.linalg.norm(ops.single_value(op, y) - ops.taylor_value(op, anchor, tcfg.p, y)))
        cap = tcfg.L / math.factorial(tcfg.p) * float(np.linalg.norm(y - anchor)) ** tcfg.p
        m_taylor = min(m_taylor, cap * (1.0 + 1e-8) + 1e-12 - taylor_err)

        ok, margin = ops.enlargement_check(op, y, v, 0.0, witness_count=16, seed=seed)
        m_member = min(m_member, margin + 1e-8)

        x = x - lam * v
    rep.add(f"{tag}: ran and produced steps", steps > 0, float(steps))
    rep.add(f"{tag}: framework certificate on every step", m_cert >= 0.0, m_cert)
    if tcfg.p >= 2:
        rep.add(f"{tag}: large-step product inside the window", m_win >= 0.0, m_win)
    rep.add(f"{tag}: surrogate solve within its inexactness budget", m_hat >= 0.0, m_hat)
    rep.add(f"{tag}: Taylor remainder within the derivative bound", m_taylor >= 0.0, m_taylor)
    rep.add(f"{tag}: output direction passes the membership spot check", m_member >= 0.0, m_member)


def tensor_suite(seed=0):
    rep = CheckReport()
    cases = [
        (
            "saddle p=2",
            make_bilinear_saddle(2, 1.0),
            TensorConfig(sigma_hat=0.05, sigma_l=0.3, sigma_u=0.7, L=1.0, p=2),
            np.array([0.7, 0.4]),
            30,
        ),
        (
            "monotone p=2",
            make_strongly_monotone_affine(2, 1.0, seed=2),
            TensorConfig(sigma_hat=0.05, sigma_l=0.3, sigma_u=0.7, L=1.0, p=2),
            np.array([1.0, -0.5]),
            30,
        ),
        (
            "cubic p=3",
            make_cubic_1d(),
            TensorConfig(sigma_hat=0.1, sigma_l=0.2, sigma_u=0.8, L=6.0, p=3),
            np.array([2.0]),
            40,
        ),
        (
            "radial p=3",
            make_convex_gradient(2),
            TensorConfig(sigma_hat=0.1, sigma_l=0.2, sigma_u=0.8, L=6.0, p=3),
            np.array([1.0, 0.8]),
            40,
        ),
        (
            "saddle p=1",
            make_bilinear_saddle(2, 1.0),
            TensorConfig(sigma_hat=0.2, sigma_l=0.3, sigma_u=0.7, L=1.0, p=1),
            np.array([0.7, 0.4]),
            150,
        ),
    ]
    for tag, prob, tcfg, x0, iters in cases:
        _tensor_step_audit(rep, tag, prob, tcfg, x0, iters, seed)

    # Lemma suite over a tensor-driven run, via the shared framework loop.
    prob = make_cubic_1d()
    tcfg = TensorConfig(sigma_hat=0.1, sigma_l=0.2, sigma_u=0.8, L=6.0, p=3)
    hcfg = HpeConfig(sigma=tcfg.sigma, theta=tcfg.theta, p=3, max_iters=40, stop_res=1e-10)
    from .tensor import TensorOracle

    try:
        result = run(prob, TensorOracle(prob, tcfg), hcfg, np.array([2.0]), witness_count=8, seed=seed)
        records = result.records
    except OracleFailure as exc:
        records = exc.records
    _merge(rep, check_discrete_lemmas(records, prob, hcfg), "cubic p=3 framework run")
    return rep


def _box_monotone_instance():
    # Strictly monotone affine part over the unit box: exercises the
    # certified-ascent gap route (the support form does not apply).
    d = 2
    m = np.array([[1.0, 1.5], [-1.5, 2.0]])
    q = np.array([0.1, -0.2])
    op = ops.make_affine(m, q, cone=ops.BoxCone(-np.ones(d), np.ones(d)), smoothness=(2, 0.0))
    sol = SolutionSet(kind="UNKNOWN", point=None, basis=None)
    return ProblemInstance(
        name="box-monotone",
        operator=op,
        domain_bounded=True,
        solution_set=sol,
        error_bound=None,
        lipschitz_L=0.0,
        order_p=2,
    )


def metrics_suite(seed=0):
    rng = np.random.default_rng(seed)
    rep = CheckReport()
    saddle = make_bilinear_saddle(2, 1.0)

    pts = [rng.uniform(-1.0, 1.0, size=2) for _ in range(50)]
    worst = min(gap(saddle, x) for x in pts)
    rep.add("gap nonnegative on domain samples", worst >= -1e-12, worst)

    g0 = gap(saddle, np.zeros(2))
    rep.add("gap vanishes at the solution", abs(g0) <= 1e-10, 1e-10 - abs(g0))

    worst = math.inf
    for x in pts:
        worst = min(worst, 1e-6 - abs(gap(saddle, x) - gap_grid_oracle(saddle, x)))
    rep.add("gap matches the dense-grid oracle", worst >= 0.0, worst)

    worst = math.inf
    for _ in range(50):
        x1 = rng.uniform(-1.0, 1.0, size=2)
        x2 = rng.uniform(-1.0, 1.0, size=2)
        mid = gap(saddle, 0.5 * (x1 + x2))
        worst = min(worst, 0.5 * gap(saddle, x1) + 0.5 * gap(saddle, x2) - mid + 1e-8)
    rep.add("gap midpoint convexity", worst >= 0.0, worst)

    worst = math.inf
    for x in pts[:25]:
        worst = min(worst, 1e-8 - abs(gap(saddle, x, route="ascent") - gap(saddle, x, route="support")))
    rep.add("ascent route agrees with the exact support form", worst >= 0.0, worst)

    box = _box_monotone_instance()
    worst_lo, worst_hi = math.inf, math.inf
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, size=2)
        val = gap(box, x)
        grid = gap_grid_oracle(box, x, points_per_axis=101)
        # The grid maximum under-estimates the true sup by at most the
        # first-order spread over one cell plus curvature.
        m, q = box.operator.affine.matrix, box.operator.affine.offset
        gbound = float(np.linalg.norm(m.T @ x - q)) + 2.0 * float(np.linalg.norm(m + m.T, 2))
        cell = 0.02
        tol = gbound * cell + 1e-9
        worst_lo = min(worst_lo, val - grid + 1e-9)
        worst_hi = min(worst_hi, tol - (val - grid))
    rep.add("ascent gap dominates the grid lower bound", worst_lo >= 0.0, worst_lo)
    rep.add("ascent gap within one grid cell of the oracle", worst_hi >= 0.0, worst_hi)

    cfg = HpeConfig(0.0, 0.01, 2, 60, stop_res=1e-12)
    result = run(saddle, ExactProxOracle(saddle, cfg), cfg, np.array([0.7, 0.4]))
    worst = math.inf
    for r in result.records:
        worst = min(worst, float(np.linalg.norm(r.v)) - residue(saddle, r.y) + 1e-8)
    rep.add("pointwise residue below the certified direction norm", worst >= 0.0, worst)

    strong = make_strongly_monotone_affine(2, 1.0, seed=3)
    kappa = strong.error_bound.kappa
    worst = math.inf
    for _ in range(50):
        x = 0.1 * rng.standard_normal(2) + np.asarray(strong.solution_set.point)
        worst = min(worst, kappa * residue(strong, x) * (1.0 + 1e-6) - dist_to_solutions(strong, x))
    rep.add("error bound holds near the solution", worst >= 0.0, worst)

    k = np.arange(1, 401, dtype=float)
    fit = fit_rate(3.0 * k**-1.5, tail_fraction=0.5)
    rep.add("rate fit recovers an exact power law", abs(fit.slope + 1.5) <= 1e-8, 1e-8 - abs(fit.slope + 1.5))
    noisy = 3.0 * k**-1.5 * (1.0 + 0.01 * np.sin(k))
    fitn = fit_rate(noisy, tail_fraction=0.5)
    rep.add("rate fit robust to small multiplicative noise", abs(fitn.slope + 1.5) <= 0.02, 0.02 - abs(fitn.slope + 1.5))

    for name, builder in (
        ("bilinear saddle", lambda: make_bilinear_saddle(2, 1.0)),
        ("strongly monotone affine", lambda: make_strongly_monotone_affine(2, 1.0, seed=0)),
        ("cubic", make_cubic_1d),
        ("radial gradient", lambda: make_convex_gradient(2)),
    ):
        sub = validate_instance(builder(), seed=seed)
        rep.add(
            f"instance {name} passes validation",
            sub.all_passed,
            sub.worst().margin if sub.outcomes else -1.0,
        )

    return rep


SUITES = {
    "FEEDBACK": feedback_suite,
    "FLOW": flow_suite,
    "HPE": hpe_suite,
    "TENSOR": tensor_suite,
    "METRICS": metrics_suite,
}

SUITE_NAMES = list(SUITES)


def run_suites(names, seed=0, max_workers=None):
    """Run the named suites, each with the same seed; returns name -> report.

    max_workers caps the thread pool; suites are independent and each is
    deterministic, so the result does not depend on scheduling.
    """
    names = list(names)
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {n!r}; known: {', '.join(SUITE_NAMES)}")
    if max_workers is None:
        max_workers = len(names) or 1
    max_workers = max(1, min(int(max_workers), len(names) or 1))
    out = {}
    if max_workers == 1 or len(names) <= 1:
        for n in names:
            out[n] = SUITES[n](seed)
        return out
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futs = {n: pool.submit(SUITES[n], seed) for n in names}
        for n in names:
            out[n] = futs[n].result()
    return out
