"""Higher-order oracle built from inexact Taylor-surrogate resolvents.

One oracle call anchors an order-(p-1) Taylor surrogate of the smooth part
at the domain projection of the current point, solves the surrogate
resolvent inexactly within a relative inexactness sigma_hat, and searches
for a step size whose large-step product lands in the window

    sigma_l * p!/L  <=  lam * ||y - x||^(p-1)  <=  sigma_u * p!/L.

The returned (lam, y, v, 0) satisfies the large-step and relative-error
conditions with theta = sigma_l * p!/L and sigma = sigma_hat + sigma_u, so
every step is verifiable by the discrete framework's certificate.
"""

from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .errors import (
    ConfigError,
    InnerSolverDiverged,
    StationaryPoint,
    SurrogateNonmonotone,
    WindowUnreachable,
)
from .feedback import STATIONARITY_TOL

__all__ = [
    "TensorConfig",
    "surrogate_resolvent",
    "lambda_window_search",
    "tensor_oracle",
    "TensorOracle",
]

MAX_DOUBLINGS = 200
MAX_BISECTIONS = 200
INNER_MAX_ITERS = 100


@dataclass(frozen=True)
class TensorConfig:
    """Inexactness and window constants; window nonemptiness is enforced.

    Derived quantities: theta = sigma_l p!/L and sigma = sigma_hat +
    sigma_u are the constants under which every produced step verifies.
    """

    sigma_hat: float
    sigma_l: float
    sigma_u: float
    L: float
    p: int

    def __post_init__(self):
        if not 0.0 < self.sigma_hat < 1.0:
            raise ValueError("sigma_hat must lie in (0, 1)")
        if not 0.0 < self.sigma_l < self.sigma_u < 1.0:
            raise ValueError("need 0 < sigma_l < sigma_u < 1")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("order p must be an integer >= 1")
        object.__setattr__(self, "p", int(self.p))
        lo = self.sigma_l * (1.0 + self.sigma_hat) ** (self.p - 1)
        hi = self.sigma_u * (1.0 - self.sigma_hat) ** (self.p - 1)
        if not lo < hi:
            raise ValueError(
                "empty window: sigma_l (1+sigma_hat)^(p-1) must be < sigma_u (1-sigma_hat)^(p-1)"
            )
        if not self.sigma_hat + self.sigma_u < 1.0:
            raise ValueError("need sigma_hat + sigma_u < 1")

    @property
    def theta(self):
        return self.sigma_l * math.factorial(self.p) / self.L

    @property
    def sigma(self):
        return self.sigma_hat + self.sigma_u

    @property
    def window(self):
        f = math.factorial(self.p) / self.L
        return self.sigma_l * f, self.sigma_u * f


def _check_surrogate_order(op, p):
    if p <= 2:
        return
    if op.dim > 4:
        raise ConfigError("p >= 3 surrogate solves are supported only for d <= 4")
    if op.affine is not None:
        raise ConfigError("p >= 3 surrogate solves support only polynomial and radial parts")


def surrogate_resolvent(problem, anchor, x, lam, cfg, warm=None):
    """Inexact resolvent of the anchored surrogate plus the normal cone.

    Runs damped semismooth Newton on the normal map
    w + lam*F_anchor(P(w)) - x and stops as soon as the residual is within
    sigma_hat * ||P(w) - x||.  Returns (y, u, w) with u an exact element of
    (F_anchor + H)(y), so the inexactness lives entirely in the residual
    ||lam*u + y - x|| <= sigma_hat * ||y - x||.
    """
    op = problem.operator
    p = cfg.p
    _check_surrogate_order(op, p)
    x = np.asarray(x, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if p >= 3:
        jac = ops.taylor_jacobian(op, anchor, p, anchor)
        lo = float(np.linalg.eigvalsh(0.5 * (jac + jac.T))[0])
        if lo < -1e-10 * max(1.0, float(np.abs(jac).max())):
            raise SurrogateNonmonotone(f"surrogate Jacobian at the anchor has eigenvalue {lo:.3e}")

    def surrogate(u):
        return ops.taylor_value(op, anchor, p, u)

    def surrogate_jac(u):
        return ops.taylor_jacobian(op, anchor, p, u)

    eye = np.eye(op.dim)
    w = x.copy() if warm is None else np.asarray(warm, dtype=float).copy()

    def phi(wv):
        return wv + lam * surrogate(ops.domain_project(op, wv)) - x

    f = phi(w)
    nf = float(np.linalg.norm(f))
    floor = 1e-14 * (1.0 + float(np.linalg.norm(x)))
    for it in range(INNER_MAX_ITERS):
        y = ops.domain_project(op, w)
        target = cfg.sigma_hat * float(np.linalg.norm(y - x))
        if nf <= max(target, floor):
            break
        jf = surrogate_jac(y)
        dp = ops._proj_jacobian(op.cone, w)
        if dp is None:
            jacm = eye + lam * jf
        elif dp.ndim == 1:
            jacm = eye + lam * (jf * dp[np.newaxis, :])
        else:
            jacm = eye + lam * (jf @ dp)
        try:
            step = np.linalg.solve(jacm, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jacm, -f, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            wn = w + t * step
            fn = phi(wn)
            nfn = float(np.linalg.norm(fn))
            if nfn < nf * (1.0 - 1e-4 * t) or nfn <= max(target, floor):
                break
            t *= 0.5
        else:
            raise InnerSolverDiverged(
                f"surrogate newton stalled at residual {nf:.3e}", residual=nf, iterations=it
            )
        w, f, nf = wn, fn, nfn
    else:
        y = ops.domain_project(op, w)
        if nf > max(cfg.sigma_hat * float(np.linalg.norm(y - x)), floor):
            raise InnerSolverDiverged(
                f"surrogate newton hit iteration cap at residual {nf:.3e}",
                residual=nf,
                iterations=INNER_MAX_ITERS,
            )
    y = ops.domain_project(op, w)
    u = surrogate(y) + (w - y) / lam
    return y, u, w


def lambda_window_search(problem, x, cfg, hint=None, warm=None):
    """Find lam whose large-step product falls inside the window.

    For p = 1 the window constrains lam itself and the arithmetic midpoint
    is returned directly.  For p >= 2 the product is nondecreasing in lam
    wherever the surrogate subproblem is solvable, so geometric
    doubling/halving from the hint brackets the window and log-scale
    bisection lands in it.  An anchored surrogate of degree >= 2 is only
    locally monotone, so the subproblem can lose solvability past a finite
    lam; an inner-solver failure is therefore treated as product = +inf
    and only shrinks the bracket from above.

    Returns (lam, y, u, w); raises WindowUnreachable with the last bracket
    if the budget runs out.
    """
    op = problem.operator
    x = np.asarray(x, dtype=float)
    wlo, whi = cfg.window
    anchor = ops.domain_project(op, x)
    if cfg.p == 1:
        lam = 0.5 * (wlo + whi)
        y, u, w = surrogate_resolvent(problem, anchor, x, lam, cfg, warm=warm)
        return lam, y, u, w

    if ops.min_norm_residual(op, x) <= STATIONARITY_TOL:
        raise StationaryPoint("window search undefined on the solution set", x=x)

    cache = {"warm": warm}

    def product(lam):
        try:
            y, u, w = surrogate_resolvent(problem, anchor, x, lam, cfg, warm=cache["warm"])
        except InnerSolverDiverged:
            return None
        cache["warm"] = w
        return lam * float(np.linalg.norm(y - x)) ** (cfg.p - 1), y, u, w

    lam = float(hint) if hint is not None and hint > 0 else math.sqrt(wlo * whi)
    out = product(lam)
    if out is not None:
        s, y, u, w = out
        if wlo <= s <= whi:
            return lam, y, u, w
    else:
        s = math.inf

    if s < wlo:
        lo = hi = lam
        for _ in range(MAX_DOUBLINGS):
            lo = hi
            hi *= 2.0
            out = product(hi)
            if out is None:
                break
            shi, y, u, w = out
            if shi >= wlo:
                if shi <= whi:
                    return hi, y, u, w
                break
        else:
            raise WindowUnreachable("no upper bracket for the step window", bracket=(lo, hi))
    else:
        hi = lo = lam
        for _ in range(MAX_DOUBLINGS):
            hi = lo
            lo *= 0.5
            out = product(lo)
            if out is None:
                continue
            slo, y, u, w = out
            if slo <= whi:
                if slo >= wlo:
                    return lo, y, u, w
                break
        else:
            raise WindowUnreachable("no lower bracket for the step window", bracket=(lo, hi))

    for _ in range(MAX_BISECTIONS):
        lam = math.sqrt(lo * hi)
        out = product(lam)
        if out is None:
            hi = lam
            continue
        s, y, u, w = out
        if wlo <= s <= whi:
            return lam, y, u, w
        if s < wlo:
            lo = lam
        else:
            hi = lam
    raise WindowUnreachable("bisection budget exhausted", bracket=(lo, hi))


def tensor_oracle(problem, x, cfg, hint=None, warm=None):
    """One accelerated step: anchored surrogate solve plus window search.

    Returns (lam, y, v, 0.0) with v in A(y) exactly: the surrogate error
    F(y) - F_anchor(y) is folded into v, and the Taylor remainder bound
    together with the window upper edge gives
    ||lam*v + y - x|| <= (sigma_hat + sigma_u) ||y - x||.
    """
    op = problem.operator
    x = np.asarray(x, dtype=float)
    anchor = ops.domain_project(op, x)
    lam, y, u, w = lambda_window_search(problem, x, cfg, hint=hint, warm=warm)
    v = ops.single_value(op, y) + u - ops.taylor_value(op, anchor, cfg.p, y)
    return lam, y, v, 0.0


class TensorOracle:
    """Stateful oracle for hpe.run: warm-starts lam and the inner Newton."""

    def __init__(self, problem, cfg):
        self.problem = problem
        self.cfg = cfg
        self.hint = None
        self.warm = None

    def __call__(self, x):
        op = self.problem.operator
        x = np.asarray(x, dtype=float)
        anchor = ops.domain_project(op, x)
        lam, y, u, w = lambda_window_search(
            self.problem, x, self.cfg, hint=self.hint, warm=self.warm
        )
        self.hint = lam
        self.warm = w
        v = ops.single_value(op, y) + u - ops.taylor_value(op, anchor, self.cfg.p, y)
        return lam, y, v, 0.0
