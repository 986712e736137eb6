"""Nonexpansive maps and their resolvents.

The resolvent ``R_lam x`` of a nonexpansive map ``F`` is the unique fixed
point of the contraction ``y -> x (+) [lam/(1+lam)] F(y)``, where ``(+)``
denotes the point at that fraction of the geodesic from ``x`` to ``F(y)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, StructuralError
from .spaces import (
    AffineSubspace,
    ConvexSet,
    Euclidean,
    HadamardSpace,
    Hyperbolic,
    Point,
    Product,
    Singleton,
    Spider,
    check_same_space,
    distance,
    frechet_mean,
    _frozen,
    _to_sheet,
)

LIPSCHITZ_SLACK = 1e-9
RESOLVENT_MAX_ITER = 1_000_000
# a step this small relative to the iterate's scale is a numerically exact fixed point
ROUNDING = 8 * np.finfo(float).eps


class NonexpansiveMap(ABC):
    """A 1-Lipschitz self-map of a Hadamard space.

    Subclasses implement ``__call__``.  ``fixed_set`` is optional metadata: a
    convex set known to equal ``Fix F``, used by diagnostics and tests.
    """

    space: HadamardSpace
    fixed_set: ConvexSet | None = None

    @abstractmethod
    def __call__(self, x): ...


class Projection(NonexpansiveMap):
    """Metric projection onto a closed convex set."""

    def __init__(self, convex_set: ConvexSet):
        self.convex_set = convex_set
        self.space = convex_set.space
        self.fixed_set = convex_set

    def __call__(self, x):
        return self.convex_set.project(x)

    def __repr__(self):
        return f"Projection({self.convex_set!r})"


def constant(point: Point) -> Projection:
    """The map sending everything to ``point`` (projection onto a singleton)."""
    return Projection(Singleton(point))


class LinearMap(NonexpansiveMap):
    """``x -> A x`` on R^n with operator norm at most one."""

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise StructuralError("linear map needs a square matrix")
        norm = np.linalg.norm(a, 2)
        if norm > 1 + 1e-12:
            raise StructuralError(f"operator norm {norm:.6g} exceeds 1; map is not nonexpansive")
        a.flags.writeable = False
        self.matrix = a
        self.space = Euclidean(a.shape[0])
        self._fixed = None

    def __call__(self, x):
        return Point(self.space, _frozen(self.matrix @ x.coords))

    @property
    def fixed_set(self) -> AffineSubspace:
        """``ker(I - A)`` as an affine subspace through the origin."""
        if self._fixed is None:
            n = self.space.n
            _, s, vt = np.linalg.svd(np.eye(n) - self.matrix)
            null = vt[s <= 1e-10 * max(1.0, s.max())]
            self._fixed = AffineSubspace(self.space.origin(), null)
        return self._fixed

    def __repr__(self):
        return f"LinearMap({self.matrix.tolist()})"


def rotation(angle: float) -> LinearMap:
    """Planar rotation by ``angle`` radians."""
    c, s = math.cos(angle), math.sin(angle)
    # exact zeros for quarter turns keep fixtures bit-reproducible
    c, s = (round(c) if abs(c - round(c)) < 1e-15 else c), (round(s) if abs(s - round(s)) < 1e-15 else s)
    return LinearMap([[c, -s], [s, c]])


def rot90() -> LinearMap:
    return rotation(math.pi / 2)


class EuclideanIsometry(NonexpansiveMap):
    """``x -> Q x + b`` with ``Q`` orthogonal."""

    def __init__(self, orthogonal, shift=None):
        q = np.array(orthogonal, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or not np.allclose(q.T @ q, np.eye(len(q)), atol=1e-12):
            raise StructuralError("isometry needs an orthogonal matrix")
        self.matrix = q
        self.shift = np.zeros(len(q)) if shift is None else np.asarray(shift, dtype=float)
        self.space = Euclidean(len(q))

    def __call__(self, x):
        return Point(self.space, _frozen(self.matrix @ x.coords + self.shift))


class LorentzIsometry(NonexpansiveMap):
    """Hyperbolic isometry given by a time-orientation preserving Lorentz matrix."""

    def __init__(self, space: Hyperbolic, matrix):
        m = np.array(matrix, dtype=float)
        j = np.diag([-1.0] + [1.0] * space.n)
        if m.shape != (space.n + 1, space.n + 1) or not np.allclose(m.T @ j @ m, j, atol=1e-10) or m[0, 0] <= 0:
            raise StructuralError("matrix is not an orthochronous Lorentz transformation")
        self.space = space
        self.matrix = m

    def __call__(self, x):
        return Point(self.space, _to_sheet(self.matrix @ x.coords))


def hyperbolic_rotation(space: Hyperbolic, angle: float, i: int = 1, j: int = 2) -> LorentzIsometry:
    """Rotation by ``angle`` about the hub in the plane of spatial axes ``i`` and ``j``."""
    m = np.eye(space.n + 1)
    c, s = math.cos(angle), math.sin(angle)
    m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
    return LorentzIsometry(space, m)


def hyperbolic_boost(space: Hyperbolic, dist: float, axis: int = 1) -> LorentzIsometry:
    """Translation by ``dist`` along the geodesic through the hub in direction ``axis``."""
    m = np.eye(space.n + 1)
    ch, sh = math.cosh(dist), math.sinh(dist)
    m[0, 0], m[0, axis], m[axis, 0], m[axis, axis] = ch, sh, sh, ch
    return LorentzIsometry(space, m)


class LegPermutation(NonexpansiveMap):
    """Spider isometry relabelling legs: leg ``i`` goes to ``perm[i-1]``."""

    def __init__(self, space: Spider, perm: Sequence[int]):
        perm = tuple(int(p) for p in perm)
        if sorted(perm) != list(range(1, space.legs + 1)):
            raise StructuralError(f"{perm} is not a permutation of 1..{space.legs}")
        self.space = space
        self.perm = perm

    def __call__(self, x):
        leg, r = x.coords
        return self.space.point(self.perm[leg - 1], r)


class GeodesicAverage(NonexpansiveMap):
    """``x -> frechet_mean(F_1 x, ..., F_k x; w)``.

    Nonexpansive because weighted means are jointly 1-Lipschitz in the l2
    sense on Hadamard spaces.
    """

    def __init__(self, maps: Sequence[NonexpansiveMap], weights=None, fixed_set=None):
        self.maps = tuple(maps)
        if not self.maps:
            raise StructuralError("geodesic average needs at least one map")
        self.space = self.maps[0].space
        if any(m.space != self.space for m in self.maps):
            raise StructuralError("averaged maps must share a space")
        w = np.ones(len(self.maps)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(self.maps),) or np.any(w < 0) or w.sum() <= 0:
            raise StructuralError("need one non-negative weight per map with positive sum")
        self.weights = w / w.sum()
        self.fixed_set = fixed_set

    def __call__(self, x):
        return frechet_mean([m(x) for m in self.maps], self.weights)


class Composition(NonexpansiveMap):
    """Maps applied in the order given: ``maps[0]`` first."""

    def __init__(self, maps: Sequence[NonexpansiveMap], fixed_set=None):
        self.maps = tuple(maps)
        if not self.maps:
            raise StructuralError("composition needs at least one map")
        self.space = self.maps[0].space
        if any(m.space != self.space for m in self.maps):
            raise StructuralError("composed maps must share a space")
        self.fixed_set = fixed_set

    def __call__(self, x):
        for m in self.maps:
            x = m(x)
        return x


class ProductMap(NonexpansiveMap):
    """Componentwise map on a product space."""

    def __init__(self, maps: Sequence[NonexpansiveMap]):
        self.maps = tuple(maps)
        self.space = Product(tuple(m.space for m in self.maps))

    def __call__(self, x):
        return Point(self.space, tuple(m(c) for m, c in zip(self.maps, x.coords)))


class CallableMap(NonexpansiveMap):
    """Wrap a user function; nonexpansiveness is checked by sampling at construction."""

    def __init__(self, space: HadamardSpace, func: Callable, n_pairs: int = 200, seed: int = 0,
                 scale: float = 1.0, fixed_set=None):
        self.space = space
        self.func = func
        self.fixed_set = fixed_set
        validate_nonexpansive(self, n_pairs=n_pairs, seed=seed, scale=scale)

    def __call__(self, x):
        y = self.func(x)
        if not isinstance(y, Point) or y.space != self.space:
            raise StructuralError("wrapped function returned a point outside its space")
        return y


def validate_nonexpansive(f: NonexpansiveMap, n_pairs: int = 200, seed: int = 0, scale: float = 1.0) -> float:
    """Sample point pairs and check ``d(Fx, Fy) <= d(x, y) (1 + 1e-9)``.

    Returns the largest observed ratio; raises :class:`StructuralError` on a
    violation.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = f.space.random_point(rng, scale)
        y = f.space.random_point(rng, scale)
        dxy = f.space.distance(x, y)
        dfx = f.space.distance(f(x), f(y))
        if dfx > dxy * (1 + LIPSCHITZ_SLACK) + 1e-12:
            raise StructuralError(f"map is not nonexpansive: d(Fx,Fy)={dfx:.6g} > d(x,y)={dxy:.6g}")
        if dxy > 0:
            worst = max(worst, dfx / dxy)
    return worst


def evaluate(f: NonexpansiveMap, x):
    """Apply ``f`` to ``x`` after checking that ``x`` lives in ``f``'s space."""
    if x.space is not f.space and x.space != f.space:
        raise StructuralError(f"point lives in {x.space!r}, map acts on {f.space!r}")
    return f(x)


@dataclass(frozen=True)
class ResolventResult:
    """Outcome of :func:`resolvent`.

    ``residual`` is the distance between the last two iterates; the distance
    from ``point`` to the exact resolvent is at most ``lam * residual``.
    """

    point: object
    iterations: int
    residual: float


def _anderson_step(hist_u, hist_g):
    r = [g - u for u, g in zip(hist_u, hist_g)]
    d_r = np.array([r[i + 1] - r[i] for i in range(len(r) - 1)]).T
    d_g = np.array([hist_g[i + 1] - hist_g[i] for i in range(len(hist_g) - 1)]).T
    gamma, *_ = np.linalg.lstsq(d_r, r[-1], rcond=1e-12)
    return hist_g[-1] - d_g @ gamma


def acceleration_chart(space, x):
    """``(to_vec, from_vec)`` for Anderson mixing, or ``None`` when the space offers neither."""
    if space.has_chart:
        return (lambda p: space.log(x, p)), (lambda v: space.exp(x, v))
    if space.can_embed:
        return space.embed, (lambda v: space.unembed(v, x))
    return None


def _candidate(from_vec, v, hist_g, fallback):
    # reject extrapolations that leave the region explored so far
    radius = max(float(np.linalg.norm(g)) for g in hist_g)
    if not np.all(np.isfinite(v)) or np.linalg.norm(v) > 2.0 * radius + 1.0:
        return fallback
    try:
        return from_vec(v)
    except (StructuralError, OverflowError, FloatingPointError):
        return fallback


def resolvent(f: NonexpansiveMap, lam: float, x, tol: float = 1e-8, *, start=None,
              max_iter: int = RESOLVENT_MAX_ITER, accelerate: bool = True, memory: int = 5,
              patience: int = 2000) -> ResolventResult:
    """Compute ``R_lam x``, the fixed point of ``y -> x (+) [lam/(1+lam)] F y``.

    Parameters
    ----------
    f : NonexpansiveMap
    lam : float
        Step, ``lam >= 0``; ``R_0`` is the identity.
    x : point
    tol : float
        The returned point is within ``tol`` of the exact resolvent.  With
        contraction factor ``q = lam/(1+lam)`` the error after a step of size
        ``s`` is at most ``q/(1-q) s = lam s``; iteration stops once both
        ``lam s`` and ``s`` are below ``tol``, or once ``s`` reaches rounding
        level (where the iterate is fixed in floating point).  A step already
        below ``tol`` that stops shrinking for ``patience`` iterations is
        also taken as rounding level.
    start : point, optional
        Warm start (defaults to ``x``).
    accelerate : bool
        Mix in safeguarded Anderson extrapolation, in the chart at ``x`` or
        else in the space's embedding.  Candidates are kept only when they shrink the
        step, so the stopping certificate is unaffected.
    patience : int
        Iterations without a new smallest step before declaring stagnation.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is exceeded, or progress stalls with the step still above ``tol``.
    """
    if not lam >= 0 or not math.isfinite(lam):
        raise DomainError(f"resolvent needs a positive step, got {lam}")
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    space = x.space
    if space is not f.space and space != f.space:
        raise StructuralError("point and map live in different spaces")
    if lam == 0:
        return ResolventResult(x, 0, 0.0)
    q = lam / (1.0 + lam)

    def contract(y):
        return space.geodesic(x, f(y), q)

    y = x if start is None else start
    gy = contract(y)
    step = space.distance(y, gy)
    iterations = 1
    chart = acceleration_chart(space, x) if accelerate else None
    hist_u, hist_g = [], []
    best, best_point, since_best = step, gy, 0
    while True:
        if step <= tol and (lam * step <= tol or step <= ROUNDING * (1.0 + space.distance(x, gy))):
            return ResolventResult(gy, iterations, step)
        if since_best > patience and best <= tol:
            # the step has bottomed out in floating point below tol
            return ResolventResult(best_point, iterations, best)
        if iterations >= max_iter or since_best > patience:
            why = "iteration cap" if iterations >= max_iter else "stagnation"
            raise ConvergenceError(f"resolvent hit {why} after {iterations} iterations (step {step:.3g})",
                                   last=gy, residual=step)
        cand = gy
        if chart is not None:
            to_vec, from_vec = chart
            hist_u.append(to_vec(y))
            hist_g.append(to_vec(gy))
            del hist_u[:-(memory + 1)], hist_g[:-(memory + 1)]
            if len(hist_u) >= 2:
                cand = _candidate(from_vec, _anderson_step(hist_u, hist_g), hist_g, gy)
        g_cand = contract(cand)
        s_cand = space.distance(cand, g_cand)
        iterations += 1
        if cand is not gy and not s_cand < step:
            hist_u.clear()
            hist_g.clear()
            cand = gy
            g_cand = contract(gy)
            s_cand = space.distance(gy, g_cand)
            iterations += 1
        y, gy, step = cand, g_cand, s_cand
        if step < best:
            best, best_point, since_best = step, gy, 0
        else:
            since_best += 1


@dataclass(frozen=True)
class ResolventCurve:
    lambdas: tuple
    points: tuple
    displacements: tuple
    iterations: tuple
    residuals: tuple

    @property
    def monotone(self) -> bool:
        """Whether ``lam -> d(x, R_lam x)`` is nondecreasing (up to 1e-9 relative)."""
        d = self.displacements
        return all(b >= a * (1 - 1e-9) - 1e-12 for a, b in zip(d, d[1:]))


def resolvent_curve(f: NonexpansiveMap, x, lambdas: Sequence[float], tol: float = 1e-8) -> ResolventCurve:
    """Evaluate ``R_lam x`` along an increasing grid, warm-starting each solve."""
    lambdas = tuple(float(v) for v in lambdas)
    if any(v <= 0 for v in lambdas):
        raise DomainError("resolvent curve needs positive steps")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise DomainError("resolvent curve needs a strictly increasing grid")
    points, disp, its, resid = [], [], [], []
    prev = None
    for lam in lambdas:
        res = resolvent(f, lam, x, tol, start=prev)
        prev = res.point
        points.append(res.point)
        disp.append(distance(x, res.point))
        its.append(res.iterations)
        resid.append(res.residual)
    return ResolventCurve(lambdas, tuple(points), tuple(disp), tuple(its), tuple(resid))


__all__ = [
    "NonexpansiveMap", "Projection", "constant", "LinearMap", "rotation", "rot90", "EuclideanIsometry",
    "LorentzIsometry", "hyperbolic_rotation", "hyperbolic_boost", "LegPermutation", "GeodesicAverage",
    "Composition", "ProductMap", "CallableMap", "validate_nonexpansive", "evaluate", "ResolventResult",
    "resolvent", "ResolventCurve", "resolvent_curve",
]
