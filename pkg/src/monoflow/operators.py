"""Structured maximal monotone operators and their exact resolvents.

An operator is a sum A = F + H where F is a single-valued monotone map
assembled from structured parts (affine, coordinatewise odd polynomial,
radial cubic field) and H is the normal cone of a box or a ball.  Every
shipped combination admits a resolvent (I + lam*A)^{-1} computed either in
closed form or by a damped semismooth Newton method on the normal map

    w  |->  w + lam * F(P(w)) - x,        y = P(w),

where P projects onto dom(A).  The returned pair (y, v) always satisfies
v in A(y) exactly (v is assembled from the parts plus an explicit normal
element), so the reported residual ||lam*v + y - x|| measures the full
solve error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.polynomial.polynomial as npoly

from .errors import InnerSolverDiverged

__all__ = [
    "AffinePart",
    "PolyPart",
    "RadialPart",
    "BoxCone",
    "BallCone",
    "OperatorSpec",
    "Resolvent",
    "make_affine",
    "make_poly",
    "single_value",
    "single_jacobian",
    "domain_project",
    "domain_contains",
    "domain_sup_dist_sq",
    "min_norm_residual",
    "resolvent",
    "taylor_value",
    "taylor_jacobian",
    "enlargement_check",
]

AFFINE_EIG_TOL = -1e-10
POLY_DERIV_TOL = -1e-12
RESOLVENT_TOL = 1e-10
NEWTON_MAX_ITERS = 100
BOUNDARY_ATOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffinePart:
    """F(x) = matrix @ x + offset with monotone (PSD symmetric part) matrix."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        q = _readonly(self.offset)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("affine matrix must be square")
        if q.shape != (m.shape[0],):
            raise ValueError("affine offset shape mismatch")
        sym = 0.5 * (m + m.T)
        lo = float(np.linalg.eigvalsh(sym)[0])
        if lo < AFFINE_EIG_TOL:
            raise ValueError(f"affine part not monotone: min symmetric eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", q)


@dataclass(frozen=True)
class PolyPart:
    """Coordinatewise scalar polynomial, coefficients in increasing degree.

    Monotonicity on R is checked exactly up to root finding: the derivative
    must have even degree, positive leading coefficient, and nonnegative
    values at all of its real critical points.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.trim_zeros(np.atleast_1d(np.asarray(self.coeffs, dtype=float)), "b")
        if c.size < 2:
            raise ValueError("polynomial must have degree >= 1")
        deg = c.size - 1
        if deg % 2 == 0:
            raise ValueError("monotone polynomial on R must have odd degree")
        d = npoly.polyder(c)
        if d[-1] <= 0:
            raise ValueError("polynomial derivative has nonpositive leading coefficient")
        if d.size >= 2:
            crit = np.roots(npoly.polyder(d)[::-1]) if d.size >= 3 else np.array([])
            crit = crit[np.abs(crit.imag) < 1e-9].real if crit.size else crit
            vals = npoly.polyval(crit, d) if crit.size else np.array([])
            if vals.size and float(vals.min()) < POLY_DERIV_TOL:
                raise ValueError("polynomial is not monotone on R")
        object.__setattr__(self, "coeffs", _readonly(c))


@dataclass(frozen=True)
class RadialPart:
    """F(x) = weight * ||x||^2 * x, the gradient of weight/4 * ||x||^4."""

    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("radial weight must be positive")


@dataclass(frozen=True)
class BoxCone:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _readonly(self.lower)
        hi = _readonly(self.upper)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be matching vectors")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if not np.all(lo <= hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class BallCone:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _readonly(self.center)
        if c.ndim != 1:
            raise ValueError("ball center must be a vector")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class OperatorSpec:
    """Structured description of A = F + H.

    smoothness = (p, L): the derivative D^{p-1}F is L-Lipschitz.  This is
    metadata consumed by the tensor machinery; the algebra below never
    reads it.
    """

    dim: int
    affine: AffinePart | None = None
    poly: PolyPart | None = None
    radial: RadialPart | None = None
    cone: BoxCone | BallCone | None = None
    smoothness: tuple[int, float] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.affine is None and self.poly is None and self.radial is None and self.cone is None:
            raise ValueError("operator needs at least one part")
        if self.affine is not None and self.affine.matrix.shape[0] != self.dim:
            raise ValueError("affine part dimension mismatch")
        if isinstance(self.cone, BoxCone) and self.cone.lower.size != self.dim:
            raise ValueError("box cone dimension mismatch")
        if isinstance(self.cone, BallCone) and self.cone.center.size != self.dim:
            raise ValueError("ball cone dimension mismatch")


def make_affine(matrix, offset=None, cone=None, smoothness=None):
    matrix = np.asarray(matrix, dtype=float)
    offset = np.zeros(matrix.shape[0]) if offset is None else offset
    return OperatorSpec(
        dim=matrix.shape[0],
        affine=AffinePart(matrix, offset),
        cone=cone,
        smoothness=smoothness,
    )


def make_poly(coeffs, dim=1, cone=None, smoothness=None):
    return OperatorSpec(dim=dim, poly=PolyPart(coeffs), cone=cone, smoothness=smoothness)


def single_value(op, x):
    """Evaluate the single-valued part F(x); excludes the normal cone."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(op.dim)
    if op.affine is not None:
        out += op.affine.matrix @ x + op.affine.offset
    if op.poly is not None:
        out += npoly.polyval(x, op.poly.coeffs)
    if op.radial is not None:
        out += op.radial.weight * float(x @ x) * x
    return out


def single_jacobian(op, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros((op.dim, op.dim))
    if op.affine is not None:
        out += op.affine.matrix
    if op.poly is not None:
        out += np.diag(npoly.polyval(x, npoly.polyder(op.poly.coeffs)))
    if op.radial is not None:
        out += op.radial.weight * (float(x @ x) * np.eye(op.dim) + 2.0 * np.outer(x, x))
    return out


def domain_project(op, x):
    x = np.asarray(x, dtype=float)
    c = op.cone
    if c is None:
        return x.copy()
    if isinstance(c, BoxCone):
        return np.clip(x, c.lower, c.upper)
    r = x - c.center
    nr = float(np.linalg.norm(r))
    if nr <= c.radius:
        return x.copy()
    return c.center + (c.radius / nr) * r


def domain_contains(op, x, atol=BOUNDARY_ATOL):
    x = np.asarray(x, dtype=float)
    c = op.cone
    if c is None:
        return True
    if isinstance(c, BoxCone):
        scale = 1.0 + np.maximum(np.abs(c.lower), np.abs(c.upper))
        return bool(np.all(x >= c.lower - atol * scale) and np.all(x <= c.upper + atol * scale))
    return float(np.linalg.norm(x - c.center)) <= c.radius * (1.0 + atol)


def domain_bounded(op):
    return op.cone is not None


def domain_sup_dist_sq(op, x0):
    """sup_{z in dom(A)} ||z - x0||^2 for bounded domains."""
    x0 = np.asarray(x0, dtype=float)
    c = op.cone
    if isinstance(c, BoxCone):
        far = np.where(np.abs(c.lower - x0) > np.abs(c.upper - x0), c.lower, c.upper)
        return float(np.sum((far - x0) ** 2))
    if isinstance(c, BallCone):
        return (float(np.linalg.norm(x0 - c.center)) + c.radius) ** 2
    raise ValueError("domain is unbounded")


def _cone_residual(cone, x, g):
    """min_{n in N_cone(x)} ||g + n||; x assumed in the domain."""
    if cone is None:
        return float(np.linalg.norm(g))
    if isinstance(cone, BoxCone):
        scale = 1.0 + np.maximum(np.abs(cone.lower), np.abs(cone.upper))
        at_hi = x >= cone.upper - BOUNDARY_ATOL * scale
        at_lo = x <= cone.lower + BOUNDARY_ATOL * scale
        r = g.copy()
        # n >= 0 available at the upper bound cancels negative g, and dually.
        r[at_hi & (g < 0)] = 0.0
        r[at_lo & (g > 0)] = 0.0
        return float(np.linalg.norm(r))
    rad = x - cone.center
    nr = float(np.linalg.norm(rad))
    if nr < cone.radius * (1.0 - BOUNDARY_ATOL):
        return float(np.linalg.norm(g))
    u = rad / nr if nr > 0 else np.zeros_like(x)
    inner = float(g @ u)
    if inner >= 0:
        return float(np.linalg.norm(g))
    return float(np.sqrt(max(0.0, float(g @ g) - inner * inner)))


def min_norm_residual(op, x):
    """inf{||v|| : v in A(x)}; +inf when x lies outside dom(A)."""
    x = np.asarray(x, dtype=float)
    if not domain_contains(op, x):
        return np.inf
    return _cone_residual(op.cone, x, single_value(op, x))


@dataclass(frozen=True)
class Resolvent:
    """Output of a resolvent solve: v in A(y) and lam*v + y ~= x."""

    y: np.ndarray
    v: np.ndarray
    lam: float
    residual: float
    iterations: int
    w: np.ndarray | None = None


def _scalar_poly_root(coeffs, lam, target, y0):
    # Solve y + lam*poly(y) = target; left side strictly increasing.
    d = npoly.polyder(coeffs)
    y = y0
    for _ in range(200):
        g = y + lam * float(npoly.polyval(y, coeffs)) - target
        if abs(g) <= 1e-14 * (1.0 + abs(target) + abs(y)):
            return y
        dg = 1.0 + lam * float(npoly.polyval(y, d))
        step = g / dg
        ynew = y - step
        # Safeguard with doubling bisection if Newton leaves a sane range.
        if not np.isfinite(ynew):
            break
        y = ynew
    lo, hi = min(y0, target), max(y0, target)
    width = max(1.0, abs(target))
    for _ in range(200):
        if (lo + lam * npoly.polyval(lo, coeffs) - target) <= 0 and (
            hi + lam * npoly.polyval(hi, coeffs) - target
        ) >= 0:
            break
        lo -= width
        hi += width
        width *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid + lam * float(npoly.polyval(mid, coeffs)) > target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def _radial_root(weight, lam, s):
    # r + lam*w*r^3 = s, r >= 0; g convex on r >= 0 so Newton from r = s
    # decreases monotonically.
    if s == 0.0:
        return 0.0
    r = s
    for _ in range(100):
        g = r + lam * weight * r**3 - s
        if abs(g) <= 1e-15 * (1.0 + s):
            break
        r -= g / (1.0 + 3.0 * lam * weight * r * r)
    return r


def _proj_jacobian(cone, w):
    if cone is None:
        return None  # identity
    if isinstance(cone, BoxCone):
        return ((w > cone.lower) & (w < cone.upper)).astype(float)
    r = w - cone.center
    nr = float(np.linalg.norm(r))
    if nr <= cone.radius:
        return None
    u = r / nr
    return (cone.radius / nr) * (np.eye(w.size) - np.outer(u, u))


def _normal_map_newton(op, lam, x, tol, w0):
    """Semismooth Newton on w + lam*F(P(w)) - x = 0."""
    w = x.copy() if w0 is None else np.asarray(w0, dtype=float).copy()
    d = op.dim
    eye = np.eye(d)

    def phi(wv):
        return wv + lam * single_value(op, domain_project(op, wv)) - x

    f = phi(w)
    nf = float(np.linalg.norm(f))
    its = 0
    while its < NEWTON_MAX_ITERS:
        y = domain_project(op, w)
        stop = tol * max(1.0, float(np.linalg.norm(y - x)))
        if nf <= stop:
            break
        jf = single_jacobian(op, y)
        dp = _proj_jacobian(op.cone, w)
        if dp is None:
            jac = eye + lam * jf
        elif dp.ndim == 1:
            jac = eye + lam * (jf * dp[np.newaxis, :])
        else:
            jac = eye + lam * (jf @ dp)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            wn = w + t * step
            fn = phi(wn)
            nfn = float(np.linalg.norm(fn))
            if nfn < nf * (1.0 - 1e-4 * t) or nfn <= stop:
                break
            t *= 0.5
        else:
            raise InnerSolverDiverged(
                f"resolvent newton stalled at residual {nf:.3e}", residual=nf, iterations=its
            )
        w, f, nf = wn, fn, nfn
        its += 1
    else:
        y = domain_project(op, w)
        if nf > tol * max(1.0, float(np.linalg.norm(y - x))):
            raise InnerSolverDiverged(
                f"resolvent newton hit iteration cap at residual {nf:.3e}",
                residual=nf,
                iterations=its,
            )
    y = domain_project(op, w)
    v = single_value(op, y) + (w - y) / lam
    return y, v, w, its


def resolvent(op, lam, x, tol=RESOLVENT_TOL, warm=None):
    """Solve the regularized inclusion x in y + lam*A(y).

    Parameters
    ----------
    op : OperatorSpec
    lam : float, positive proximal coefficient.
    x : array, query point (need not lie in dom(A)).
    tol : float, relative tolerance on ||lam*v + y - x||.
    warm : array or None, start for the iterative routes (a previous w).

    Returns
    -------
    Resolvent with v in A(y) exact by construction; residual reports
    ||lam*v + y - x|| <= tol * max(1, ||y - x||).
    """
    if not lam > 0:
        raise ValueError("resolvent needs lam > 0")
    x = np.asarray(x, dtype=float)

    single_parts = sum(p is not None for p in (op.affine, op.poly, op.radial))

    if single_parts == 0:
        y = domain_project(op, x)
        v = (x - y) / lam
        return Resolvent(y=y, v=v, lam=lam, residual=0.0, iterations=0)

    if op.affine is not None and single_parts == 1 and op.cone is None:
        m, q = op.affine.matrix, op.affine.offset
        y = np.linalg.solve(np.eye(op.dim) + lam * m, x - lam * q)
        v = m @ y + q
        res = float(np.linalg.norm(lam * v + y - x))
        return Resolvent(y=y, v=v, lam=lam, residual=res, iterations=0)

    if op.poly is not None and single_parts == 1 and not isinstance(op.cone, BallCone):
        c = op.poly.coeffs
        y = np.empty(op.dim)
        for i in range(op.dim):
            y[i] = _scalar_poly_root(c, lam, x[i], x[i])
        n = np.zeros(op.dim)
        if isinstance(op.cone, BoxCone):
            yc = np.clip(y, op.cone.lower, op.cone.upper)
            n = (x - yc) / lam - npoly.polyval(yc, c)
            # Clamping keeps the normal element sign-correct because the
            # scalar map y + lam*poly(y) is increasing.
            n[(yc > op.cone.lower) & (yc < op.cone.upper)] = 0.0
            y = yc
        v = npoly.polyval(y, c) + n
        res = float(np.linalg.norm(lam * v + y - x))
        return Resolvent(y=y, v=v, lam=lam, residual=res, iterations=0)

    if op.radial is not None and single_parts == 1 and op.cone is None:
        s = float(np.linalg.norm(x))
        r = _radial_root(op.radial.weight, lam, s)
        y = (r / s) * x if s > 0 else np.zeros(op.dim)
        v = op.radial.weight * r * r * y
        res = float(np.linalg.norm(lam * v + y - x))
        return Resolvent(y=y, v=v, lam=lam, residual=res, iterations=0)

    y, v, w, its = _normal_map_newton(op, lam, x, tol, warm)
    res = float(np.linalg.norm(lam * v + y - x))
    return Resolvent(y=y, v=v, lam=lam, residual=res, iterations=its, w=w)


def _poly_taylor_coeffs(coeffs, order):
    # Truncate to terms 0..order of the Taylor expansion; returns a callable
    # pair (value, derivative) in the offset h = u - a.
    ders = [coeffs]
    while len(ders) <= order:
        ders.append(npoly.polyder(ders[-1]))
    return ders


def taylor_value(op, anchor, p, u):
    """Evaluate the order-(p-1) Taylor surrogate of F at anchor.

    For p = 1 the surrogate is the frozen value F(anchor).  Affine parts
    are reproduced exactly for p >= 2, the radial part for p >= 4.
    """
    if p < 1:
        raise ValueError("order must be >= 1")
    anchor = np.asarray(anchor, dtype=float)
    u = np.asarray(u, dtype=float)
    h = u - anchor
    out = np.zeros(op.dim)
    if op.affine is not None:
        m, q = op.affine.matrix, op.affine.offset
        out += m @ anchor + q if p == 1 else m @ u + q
    if op.poly is not None:
        ders = _poly_taylor_coeffs(op.poly.coeffs, p - 1)
        fact = 1.0
        acc = np.zeros(op.dim)
        hk = np.ones(op.dim)
        for j in range(p):
            if j > 0:
                fact *= j
                hk = hk * h
            acc += npoly.polyval(anchor, ders[j]) * hk / fact
        out += acc
    if op.radial is not None:
        a = anchor
        wgt = op.radial.weight
        acc = float(a @ a) * a
        if p >= 2:
            acc = acc + float(a @ a) * h + 2.0 * float(a @ h) * a
        if p >= 3:
            acc = acc + float(h @ h) * a + 2.0 * float(a @ h) * h
        if p >= 4:
            acc = acc + float(h @ h) * h
        out += wgt * acc
    return out


def taylor_jacobian(op, anchor, p, u):
    """Jacobian in u of the order-(p-1) Taylor surrogate."""
    anchor = np.asarray(anchor, dtype=float)
    u = np.asarray(u, dtype=float)
    h = u - anchor
    out = np.zeros((op.dim, op.dim))
    if op.affine is not None and p >= 2:
        out += op.affine.matrix
    if op.poly is not None and p >= 2:
        ders = _poly_taylor_coeffs(op.poly.coeffs, p - 1)
        fact = 1.0
        diag = np.zeros(op.dim)
        hk = np.ones(op.dim)
        for j in range(1, p):
            fact *= j
            diag += npoly.polyval(anchor, ders[j]) * hk * j / fact
            hk = hk * h
        out += np.diag(diag)
    if op.radial is not None and p >= 2:
        a = anchor
        wgt = op.radial.weight
        eye = np.eye(op.dim)
        jac = float(a @ a) * eye + 2.0 * np.outer(a, a)
        if p >= 3:
            jac = jac + 2.0 * np.outer(a, h) + 2.0 * np.outer(h, a) + 2.0 * float(a @ h) * eye
        if p >= 4:
            jac = jac + 2.0 * np.outer(h, h) + float(h @ h) * eye
        out += wgt * jac
    return out


def _sample_domain_member(op, x, rng, scale_hint):
    """Draw (x_tilde, v_tilde) with v_tilde in A(x_tilde)."""
    c = op.cone
    d = op.dim
    if c is None:
        xt = x + rng.standard_normal(d) * (1.0 + 0.5 * float(np.linalg.norm(x)))
        return xt, single_value(op, xt)
    if isinstance(c, BoxCone):
        xt = c.lower + (c.upper - c.lower) * rng.random(d)
        n = np.zeros(d)
        if rng.random() < 0.4:
            mask = rng.random(d) < 0.5
            hi_side = rng.random(d) < 0.5
            xt = np.where(mask, np.where(hi_side, c.upper, c.lower), xt)
            mag = np.abs(rng.standard_normal(d)) * scale_hint
            n = np.where(mask, np.where(hi_side, mag, -mag), 0.0)
        return xt, single_value(op, xt) + n
    u = rng.standard_normal(d)
    u /= max(float(np.linalg.norm(u)), 1e-300)
    xt = c.center + c.radius * rng.random() ** (1.0 / d) * u
    n = np.zeros(d)
    if rng.random() < 0.4:
        xt = c.center + c.radius * u
        n = abs(rng.standard_normal()) * scale_hint * u
    return xt, single_value(op, xt) + n


def enlargement_check(op, x, v, eps, witness_count=64, seed=0):
    """Sampled necessary condition for v in the eps-enlargement of A at x.

    Draws witness_count pairs (x_tilde, v_tilde) from the graph of A,
    deterministic in seed, and tests <x - x_tilde, v - v_tilde> >= -eps up
    to a small relative slack.  A True answer is not a certificate (no
    finite one exists); a False answer exhibits a violating witness.

    Returns (ok, worst_margin) with worst_margin = min inner product + eps.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    rng = np.random.default_rng(seed)
    scale_hint = 1.0 + float(np.linalg.norm(v)) + float(np.linalg.norm(single_value(op, domain_project(op, x))))
    worst = np.inf
    ok = True
    for _ in range(witness_count):
        xt, vt = _sample_domain_member(op, x, rng, scale_hint)
        inner = float((x - xt) @ (v - vt))
        margin = inner + eps
        if margin < worst:
            worst = margin
        slack = 1e-10 * (1.0 + float(np.linalg.norm(x - xt)) * float(np.linalg.norm(v - vt)))
        if inner < -eps - slack:
            ok = False
    return ok, worst
