"""Closed-loop step-size law lam * ||x - J_lam(x)||^(p-1) = theta.

The scaled displacement lam^{1/(p-1)} ||x - J_lam(x)|| is zero at lam = 0,
strictly increasing and unbounded in lam off the solution set, so the law
has exactly one root there.  The root is found by geometric bracketing from
a warm hint followed by a guarded bracketed root-find; the post-condition
|lam * ||x - y||^(p-1) - theta| <= ae_tol * theta is verified on exit, up to
the uncertainty the inner resolvent certifies for its own result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import operators as ops
from .errors import BracketOverflow, InnerSolverDiverged, StationaryPoint

__all__ = [
    "FeedbackParams",
    "STATIONARITY_TOL",
    "AE_TOL",
    "scaled_displacement",
    "solve_lambda",
    "stationarity_gauge",
]

STATIONARITY_TOL = 1e-12
AE_TOL = 1e-10
MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class FeedbackParams:
    """theta in (0, 1) and integer order p >= 1.

    relax_theta lifts the upper bound to theta > 0 for large-step uses
    where only lam * ||y - x||^(p-1) >= theta is needed.
    """

    theta: float
    p: int
    relax_theta: bool = False

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.relax_theta and not self.theta < 1:
            raise ValueError("theta must lie in (0, 1); set relax_theta to lift")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("order p must be an integer >= 1")
        object.__setattr__(self, "p", int(self.p))


def scaled_displacement(op, lam, x, p):
    """phi(lam, x) = lam^{1/(p-1)} * ||x - J_lam(x)||, with phi(0, x) = 0."""
    if p < 2:
        raise ValueError("scaled displacement needs p >= 2 (exponent 1/(p-1))")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    y = ops.resolvent(op, lam, x).y
    return lam ** (1.0 / (p - 1)) * float(np.linalg.norm(x - y))


class _LawCurve:
    """Cached evaluations of g(lam) = lam * ||x - J_lam(x)||^(p-1).

    The resolvent residual rho bounds ||y - J_lam(x)|| (the resolvent is
    nonexpansive and the returned v lies in A(y) exactly), so each value
    carries a certified band lam * ((d+rho)^(p-1) - (d-rho)^(p-1)) outside
    of which the true g cannot lie.
    """

    def __init__(self, op, x, p):
        self.op = op
        self.x = np.asarray(x, dtype=float)
        self.p = p
        self.warm = None
        self.last = None  # (lam, y, w)
        self.last_uncertainty = 0.0
        self.evals = 0

    def __call__(self, lam):
        r = ops.resolvent(self.op, lam, self.x, warm=self.warm)
        if r.w is not None:
            self.warm = r.w
        self.last = (lam, r.y, r.w)
        self.evals += 1
        d = float(np.linalg.norm(self.x - r.y))
        rho = r.residual
        low = max(d - rho, 0.0)
        self.last_uncertainty = lam * ((d + rho) ** (self.p - 1) - low ** (self.p - 1))
        return lam * d ** (self.p - 1)


def solve_lambda(op, x, params, hint=None, ae_tol=AE_TOL):
    """Root of the control law at x; raises StationaryPoint on solutions.

    Parameters
    ----------
    op : OperatorSpec
    x : array
    params : FeedbackParams
    hint : float or None, warm start for the geometric bracket.
    ae_tol : float, relative residual accepted on the algebraic equation.

    Returns the unique lam > 0 with lam * ||x - J_lam(x)||^(p-1) = theta
    (for p = 1 this is theta itself).
    """
    theta, p = params.theta, params.p
    res = ops.min_norm_residual(op, x)
    if res <= STATIONARITY_TOL:
        raise StationaryPoint("x solves the inclusion to tolerance", x=x, residual=res)
    if p == 1:
        return theta

    g = _LawCurve(op, x, p)

    def accepted(val):
        return abs(val - theta) <= ae_tol * theta + g.last_uncertainty

    lam = float(hint) if hint is not None and hint > 0 else 1.0
    val = g(lam)
    if accepted(val):
        return lam

    lo = hi = lam
    vlo = vhi = val
    ulo = uhi = g.last_uncertainty
    if val < theta:
        for _ in range(MAX_DOUBLINGS):
            lo, vlo, ulo = hi, vhi, uhi
            hi *= 2.0
            vhi = g(hi)
            uhi = g.last_uncertainty
            if vhi >= theta:
                break
        else:
            raise BracketOverflow(f"no upper bracket after {MAX_DOUBLINGS} doublings")
    else:
        for _ in range(MAX_DOUBLINGS):
            hi, vhi, uhi = lo, vlo, ulo
            lo *= 0.5
            vlo = g(lo)
            ulo = g.last_uncertainty
            if vlo <= theta:
                break
        else:
            raise BracketOverflow(f"no lower bracket after {MAX_DOUBLINGS} halvings")

    if abs(vlo - theta) <= ae_tol * theta + ulo:
        return lo
    if abs(vhi - theta) <= ae_tol * theta + uhi:
        return hi
    lam = float(brentq(lambda s: g(s) - theta, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=200))
    val = g(lam)
    if accepted(val):
        return lam
    # Brent met its own lam tolerance without the residual one; finish by
    # plain bisection on the remaining interval.
    lo, hi = (lam, hi) if val < theta else (lo, lam)
    for _ in range(256):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if accepted(val):
            return mid
        if val < theta:
            lo = mid
        else:
            hi = mid
    raise InnerSolverDiverged(
        f"control-law residual {abs(val - theta) / theta:.3e} above {ae_tol:.1e}"
        " plus the certified resolvent band",
        residual=abs(val - theta),
    )


def stationarity_gauge(op, x, params):
    """(1 / lam(x))^{1/(p-1)} extended by 0 on the solution set.

    Lipschitz on all of H with constant theta^{-1/(p-1)}.
    """
    if params.p < 2:
        raise ValueError("gauge needs p >= 2")
    try:
        lam = solve_lambda(op, x, params)
    except StationaryPoint:
        return 0.0
    return (1.0 / lam) ** (1.0 / (params.p - 1))
