"""Fixed-step integration of the closed-loop resolvent flow.

The trajectory solves dx/dt = J_{lam(x)}(x) - x where lam(x) is the root
of the control law at the current point (lam = theta identically when
p = 1).  Integration is classical RK4 with the law re-solved at every
stage, warm-started from the previous stage.  Ergodic averages of
(lam, y) are accumulated with the trapezoid rule at step resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .errors import StationaryPoint, StepRejected
from .feedback import STATIONARITY_TOL, FeedbackParams, solve_lambda
from .report import CheckReport

__all__ = [
    "FLOW_AE_TOL",
    "FlowState",
    "Trajectory",
    "vector_field",
    "integrate",
    "ergodic_point",
    "ergodic_from_samples",
    "check_flow_invariants",
]

FLOW_AE_TOL = 1e-8


@dataclass(frozen=True)
class FlowState:
    t: float
    x: np.ndarray
    lam: float
    y: np.ndarray
    rho: float = 0.0  # certified residual of the resolvent solve behind y

    @property
    def speed(self):
        return float(np.linalg.norm(self.x - self.y))


@dataclass
class Trajectory:
    theta: float
    p: int
    states: list[FlowState] = field(default_factory=list)
    erg_num: list[np.ndarray] = field(default_factory=list)
    erg_den: list[float] = field(default_factory=list)
    status: str = "OK"

    def __len__(self):
        return len(self.states)


class _Stage:
    """Per-trajectory cache of warm starts for the stage solves."""

    def __init__(self, op, params):
        self.op = op
        self.params = params
        self.lam_hint = None
        self.warm = None
        self.rho = 0.0

    def eval(self, x):
        if self.params.p == 1:
            lam = self.params.theta
        else:
            lam = solve_lambda(self.op, x, self.params, hint=self.lam_hint)
            self.lam_hint = lam
        r = ops.resolvent(self.op, lam, x, warm=self.warm)
        if r.w is not None:
            self.warm = r.w
        self.rho = r.residual
        return r.y - x, lam, r.y


def vector_field(op, x, params):
    """Right-hand side J_{lam(x)}(x) - x; raises StationaryPoint on zer(A)."""
    x = np.asarray(x, dtype=float)
    if params.p == 1:
        res = ops.min_norm_residual(op, x)
        if res <= STATIONARITY_TOL:
            raise StationaryPoint("field undefined convention: x is stationary", x=x, residual=res)
        lam = params.theta
    else:
        lam = solve_lambda(op, x, params)
    return ops.resolvent(op, lam, x).y - x


def integrate(problem, x0, params, T, h, sample_stride=1):
    """Integrate the flow from x0 over [0, T] with fixed step h.

    Parameters
    ----------
    problem : ProblemInstance
    x0 : array, must not already solve the inclusion.
    params : FeedbackParams
    T, h : horizon and step; the last partial step is shortened to hit T.
    sample_stride : keep every n-th step in the trajectory (first and last
        states are always kept).  Ergodic accumulators advance every step
        regardless of the stride.

    Returns a Trajectory; status is STATIONARY when the flow reached the
    solution set early (benign).  A completed step whose control-law
    residual exceeds FLOW_AE_TOL relative raises StepRejected; the stage
    solves are two orders tighter, so this guards integrator misuse only.
    """
    op = problem.operator
    x = np.asarray(x0, dtype=float).copy()
    if ops.min_norm_residual(op, x) <= STATIONARITY_TOL:
        raise StationaryPoint("x0 already solves the inclusion", x=x)
    if not (T >= 0 and h > 0):
        raise ValueError("need T >= 0 and h > 0")

    stage = _Stage(op, params)
    traj = Trajectory(theta=params.theta, p=params.p)
    f1, lam, y = stage.eval(x)
    t = 0.0
    num = np.zeros(op.dim)
    den = 0.0
    step_idx = 0

    def record():
        traj.states.append(FlowState(t, x.copy(), lam, y.copy(), stage.rho))
        traj.erg_num.append(num.copy())
        traj.erg_den.append(den)

    record()
    nsteps = max(0, math.ceil((T - 1e-12 * max(1.0, T)) / h))
    for step_idx in range(1, nsteps + 1):
        # Grid-exact times: no accumulated drift, and the last step lands
        # exactly on T.
        t_next = T if step_idx == nsteps else step_idx * h
        hs = t_next - t
        try:
            k2 = stage.eval(x + 0.5 * hs * f1)[0]
            k3 = stage.eval(x + 0.5 * hs * k2)[0]
            k4 = stage.eval(x + hs * k3)[0]
            x_new = x + (hs / 6.0) * (f1 + 2.0 * k2 + 2.0 * k3 + k4)
            f1_new, lam_new, y_new = stage.eval(x_new)
        except StationaryPoint:
            # The step landed on (numerically) the solution set; keep the
            # last consistent state as the endpoint.
            traj.status = "STATIONARY"
            break
        # The law value is only measurable to the certified resolvent band.
        # Once that band swamps theta the state is within resolvent noise
        # of the solution set: stop with the last clean state rather than
        # commit steps whose control value cannot be certified.
        d_new = float(np.linalg.norm(x_new - y_new))
        band = lam_new * (
            (d_new + stage.rho) ** (params.p - 1) - max(d_new - stage.rho, 0.0) ** (params.p - 1)
        )
        if band > 0.1 * params.theta:
            traj.status = "STATIONARY"
            break
        ae = abs(lam_new * d_new ** (params.p - 1) - params.theta)
        if ae > FLOW_AE_TOL * params.theta + band:
            raise StepRejected(
                f"control law residual {ae / params.theta:.3e} rel at t={t_next:.6g}",
                t=t_next,
                residual=ae,
            )
        x, t = x_new, t_next
        prev_lam, prev_y = lam, y
        f1, lam, y = f1_new, lam_new, y_new
        num = num + 0.5 * hs * (prev_lam * prev_y + lam * y)
        den = den + 0.5 * hs * (prev_lam + lam)
        if step_idx % sample_stride == 0 or t >= T - 1e-12 * max(1.0, T):
            record()
        if ops.min_norm_residual(op, x) <= STATIONARITY_TOL:
            traj.status = "STATIONARY"
            break
    if traj.states[-1].t < t:
        record()
    return traj


def ergodic_point(traj, index=-1):
    """Weighted average of y over [0, t_index]; needs one completed step."""
    den = traj.erg_den[index]
    if den <= 0.0:
        raise ValueError("ergodic average undefined before the first step")
    return traj.erg_num[index] / den


def ergodic_from_samples(ts, lams, ys):
    """Trapezoid accumulation over explicit samples (quadrature helper)."""
    ts = np.asarray(ts, dtype=float)
    lams = np.asarray(lams, dtype=float)
    ys = np.asarray(ys, dtype=float)
    dt = np.diff(ts)
    wy = lams[:, np.newaxis] * ys
    num = np.sum(0.5 * dt[:, np.newaxis] * (wy[:-1] + wy[1:]), axis=0)
    den = float(np.sum(0.5 * dt * (lams[:-1] + lams[1:])))
    return num / den


def check_flow_invariants(traj, problem, params):
    """Audit a trajectory against the continuous-time lemmas.

    Checks the algebraic equation at every sample, monotone and growth-
    bounded lam, Lyapunov descent toward each declared solution, the
    speed bound ||x - y||^2 <= E(0)/t, the induced lower bound on lam,
    and (p >= 2) the exponential non-stabilization floor on the speed.
    """
    rep = CheckReport()
    theta, p = params.theta, params.p
    states = traj.states
    if not states:
        rep.add("trajectory nonempty", False, -1.0)
        return rep

    worst = np.inf
    for s in states:
        ae = abs(s.lam * s.speed ** (p - 1) - theta)
        band = s.lam * ((s.speed + s.rho) ** (p - 1) - max(s.speed - s.rho, 0.0) ** (p - 1))
        worst = min(worst, FLOW_AE_TOL - max(ae - band, 0.0) / theta)
    rep.add("algebraic equation residual <= 1e-8 rel", worst >= 0.0, worst)

    worst = np.inf
    for a, b in zip(states, states[1:]):
        worst = min(worst, (b.lam - a.lam) / a.lam + 1e-9)
    rep.add("lam nondecreasing", worst >= 0.0, worst)

    worst = np.inf
    for a, b in zip(states, states[1:]):
        cap = a.lam * math.exp((p - 1) * (b.t - a.t)) * (1.0 + 1e-6)
        worst = min(worst, (cap - b.lam) / a.lam)
    rep.add("lam growth <= e^{(p-1) dt}", worst >= 0.0, worst)

    sol = problem.solution_set
    if sol.kind == "SINGLETON":
        z = np.asarray(sol.point)
        e0 = 0.5 * float(np.linalg.norm(states[0].x - z) ** 2)

        worst = np.inf
        prev = e0
        for s in states[1:]:
            e = 0.5 * float(np.linalg.norm(s.x - z) ** 2)
            worst = min(worst, (prev - e) / max(e0, 1e-300) + 1e-9)
            prev = e
        rep.add("Lyapunov energy nonincreasing", worst >= 0.0, worst)

        worst = np.inf
        for s in states[1:]:
            if s.t <= 0:
                continue
            cap = e0 / s.t * (1.0 + 1e-6)
            worst = min(worst, cap - s.speed**2)
        rep.add("speed^2 <= E(0)/t", worst >= 0.0, worst)

        if p >= 2:
            worst = np.inf
            for s in states[1:]:
                if s.t <= 0:
                    continue
                floor = theta * (s.t / e0) ** ((p - 1) / 2.0) * (1.0 - 1e-6)
                worst = min(worst, (s.lam - floor) / max(floor, 1e-300))
            rep.add("lam >= theta (t/E0)^{(p-1)/2}", worst >= 0.0, worst)

    worst = np.inf
    for a, b in zip(states, states[1:]):
        worst = min(worst, (a.speed - b.speed) / max(states[0].speed, 1e-300) + 1e-9)
    rep.add("speed nonincreasing", worst >= 0.0, worst)

    if p >= 2:
        worst = np.inf
        s0 = states[0].speed
        for s in states[1:]:
            floor = s0 * math.exp(-s.t) * (1.0 - 1e-3)
            worst = min(worst, (s.speed - floor) / max(s0, 1e-300))
        rep.add("speed >= e^{-t} speed(0) (non-stabilization)", worst >= 0.0, worst)

    return rep
