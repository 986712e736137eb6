"""Hadamard space backends: geodesics, projections and weighted means.

Four concrete spaces are provided: :class:`Euclidean`, :class:`Hyperbolic`
(hyperboloid model), :class:`Spider` (a metric tree with one hub and ``k``
infinite legs) and :class:`Product` (l2 product of other backends).  A space
object doubles as its own descriptor; points carry a reference to it.

Module-level functions (:func:`distance`, :func:`geodesic_point`,
:func:`frechet_mean`, ...) check that their arguments live in a common space
and then dispatch to the backend.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, StructuralError

MEAN_TOL = 1e-10
MEAN_MAX_ITER = 10_000
SHEET_TOL = 1e-9
CAT0_SLACK = 1e-9


class HadamardSpace(ABC):
    """Interface every backend (and the map-field space) implements.

    ``has_chart`` advertises a smooth global chart given by :meth:`log` and
    :meth:`exp` at a base point; iterative solvers use it for acceleration
    and extrapolation and fall back to plain iteration otherwise.
    """

    has_chart = False
    chart_dim = 0
    # a (not necessarily isometric) embedding into R^k used to propose accelerated iterates
    can_embed = False

    @abstractmethod
    def distance(self, a, b) -> float: ...

    @abstractmethod
    def geodesic(self, a, b, t: float): ...

    @abstractmethod
    def frechet_mean(self, points: Sequence, weights: np.ndarray): ...

    @abstractmethod
    def random_point(self, rng: np.random.Generator, scale: float = 1.0): ...

    def log(self, base, p) -> np.ndarray:
        raise NotImplementedError(f"{self!r} has no chart")

    def exp(self, base, v: np.ndarray):
        raise NotImplementedError(f"{self!r} has no chart")

    def embed(self, p) -> np.ndarray:
        raise NotImplementedError(f"{self!r} has no embedding")

    def unembed(self, v: np.ndarray, like):
        """Point whose embedding is closest to ``v``; ``like`` supplies any fixed parts."""
        raise NotImplementedError(f"{self!r} has no embedding")


@dataclass(frozen=True, eq=False)
class Point:
    """An element of a concrete Hadamard space.

    ``coords`` is backend specific: a read-only float array for Euclidean and
    hyperbolic spaces, a ``(leg, radius)`` pair for the spider and a tuple of
    component points for products.  Build points through the space, e.g.
    ``Euclidean(2).point([1, 0])``, so they are validated and canonical.
    """

    space: HadamardSpace
    coords: Any

    def _key(self):
        if isinstance(self.coords, np.ndarray):
            return tuple(self.coords.tolist())
        if isinstance(self.space, Product):
            return tuple(c._key() for c in self.coords)
        return self.coords

    def __eq__(self, other):
        if not isinstance(other, Point):
            return NotImplemented
        return self.space == other.space and self._key() == other._key()

    def __hash__(self):
        return hash((self.space, self._key()))

    def __repr__(self):
        return f"Point({format_point(self)!r})"

    @property
    def array(self) -> np.ndarray:
        """Coordinates as a float array (Euclidean and hyperbolic points)."""
        if not isinstance(self.coords, np.ndarray):
            raise StructuralError(f"{format_space(self.space)} points have no array form")
        return self.coords


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


def _check_weights(points, weights):
    if len(points) == 0:
        raise StructuralError("weighted point set is empty")
    if weights is None:
        w = np.ones(len(points))
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape != (len(points),):
        raise StructuralError("need exactly one weight per point")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise StructuralError("weights must be finite and non-negative")
    if w.sum() <= 0:
        raise StructuralError("weights must have a positive sum")
    return w


# ---------------------------------------------------------------------------
# Euclidean


@dataclass(frozen=True)
class Euclidean(HadamardSpace):
    """Real coordinate space R^n with the Euclidean norm."""

    n: int
    has_chart = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise StructuralError("euclidean dimension must be >= 1")

    @property
    def chart_dim(self):
        return self.n

    def point(self, coords) -> Point:
        arr = _frozen(coords)
        if arr.shape != (self.n,):
            raise StructuralError(f"expected {self.n} coordinates, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise StructuralError("coordinates must be finite")
        return Point(self, arr)

    def origin(self) -> Point:
        return self.point(np.zeros(self.n))

    def distance(self, a, b):
        return float(np.linalg.norm(a.coords - b.coords))

    def geodesic(self, a, b, t):
        return Point(self, _frozen((1.0 - t) * a.coords + t * b.coords))

    def frechet_mean(self, points, weights):
        stacked = np.array([p.coords for p in points])
        return Point(self, _frozen(weights @ stacked / weights.sum()))

    def random_point(self, rng, scale=1.0):
        return Point(self, _frozen(rng.normal(scale=scale, size=self.n)))

    def log(self, base, p):
        return p.coords - base.coords

    def exp(self, base, v):
        return Point(self, _frozen(base.coords + v))

    can_embed = True

    def embed(self, p):
        return p.coords

    def unembed(self, v, like):
        return Point(self, _frozen(v))


# ---------------------------------------------------------------------------
# Hyperbolic (hyperboloid model)


def minkowski(x: np.ndarray, y: np.ndarray) -> float:
    """Minkowski bilinear form -x0*y0 + sum_i xi*yi."""
    return float(x[1:] @ y[1:] - x[0] * y[0])


def _to_sheet(x: np.ndarray) -> np.ndarray:
    q = -minkowski(x, x)
    if q <= 0 or x[0] <= 0:
        raise StructuralError("vector is not timelike future-pointing")
    return _frozen(x / math.sqrt(q))


@dataclass(frozen=True)
class Hyperbolic(HadamardSpace):
    """Hyperbolic n-space on the upper sheet of the hyperboloid <x,x>_M = -1."""

    n: int
    has_chart = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise StructuralError("hyperbolic dimension must be >= 1")

    @property
    def chart_dim(self):
        return self.n + 1

    def point(self, coords) -> Point:
        arr = np.array(coords, dtype=float)
        if arr.shape != (self.n + 1,):
            raise StructuralError(f"expected {self.n + 1} ambient coordinates, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr[0] <= 0 or abs(minkowski(arr, arr) + 1) > SHEET_TOL:
            raise StructuralError("point is not on the upper sheet of the hyperboloid")
        arr.flags.writeable = False
        return Point(self, arr)

    def from_spatial(self, v) -> Point:
        """Lift spatial coordinates ``v`` (length n) onto the sheet."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise StructuralError(f"expected {self.n} spatial coordinates")
        return Point(self, _frozen(np.concatenate([[math.sqrt(1.0 + v @ v)], v])))

    def hub(self) -> Point:
        return self.from_spatial(np.zeros(self.n))

    def distance(self, a, b):
        # 2 asinh(|a-b|_M / 2) stays accurate for nearby points, unlike arccosh(-<a,b>)
        diff = a.coords - b.coords
        c = max(minkowski(diff, diff), 0.0)
        return 2.0 * math.asinh(math.sqrt(c) / 2.0)

    def log(self, base, p):
        x = base.coords
        diff = p.coords - x
        c = max(minkowski(diff, diff), 0.0)
        d = 2.0 * math.asinh(math.sqrt(c) / 2.0)
        u = diff - 0.5 * c * x
        factor = 1.0 if d < 1e-8 else d / math.sinh(d)
        return u * factor

    def exp(self, base, v):
        x = base.coords
        v = v + minkowski(v, x) * x
        nv = math.sqrt(max(minkowski(v, v), 0.0))
        if nv == 0.0:
            return base
        return Point(self, _to_sheet(math.cosh(nv) * x + (math.sinh(nv) / nv) * v))

    def geodesic(self, a, b, t):
        return self.exp(a, t * self.log(a, b))

    can_embed = True

    def embed(self, p):
        return p.coords[1:]

    def unembed(self, v, like):
        return self.from_spatial(v)

    def frechet_mean(self, points, weights):
        w = weights / weights.sum()
        # Lorentzian centroid as the starting guess
        z = Point(self, _to_sheet(w @ np.array([p.coords for p in points])))
        step = math.inf
        for it in range(MEAN_MAX_ITER):
            logs = [self.log(z, p) for p in points]
            dists = [math.sqrt(max(minkowski(v, v), 0.0)) for v in logs]
            # majorize the Hessian of 1/2 d^2: radial 1, tangential d coth d
            curv = sum(wi * (di / math.tanh(di) if di > 1e-8 else 1.0) for wi, di in zip(w, dists))
            direction = sum(wi * v for wi, v in zip(w, logs)) / curv
            z_new = self.exp(z, direction)
            step = self.distance(z, z_new)
            z = z_new
            if step <= MEAN_TOL:
                return z
        raise ConvergenceError("hyperbolic Frechet mean did not converge", last=z, residual=step)

    def random_point(self, rng, scale=1.0):
        return self.from_spatial(rng.normal(scale=scale, size=self.n))


# ---------------------------------------------------------------------------
# Spider (star-shaped metric tree)


@dataclass(frozen=True)
class Spider(HadamardSpace):
    """Metric tree of ``legs`` half-lines glued at a common hub.

    Points are ``(leg, r)`` with legs numbered from 1; ``r = 0`` is the hub,
    stored canonically on leg 1.
    """

    legs: int

    def __post_init__(self):
        if int(self.legs) != self.legs or self.legs < 2:
            raise StructuralError("a spider needs at least two legs")

    def point(self, leg, r) -> Point:
        r = float(r)
        if int(leg) != leg or not 1 <= leg <= self.legs:
            raise StructuralError(f"leg must be in 1..{self.legs}, got {leg}")
        if not (r >= 0 and math.isfinite(r)):
            raise StructuralError("spider radius must be finite and >= 0")
        return Point(self, (1 if r == 0 else int(leg), r))

    def hub(self) -> Point:
        return Point(self, (1, 0.0))

    def distance(self, a, b):
        la, ra = a.coords
        lb, rb = b.coords
        if la == lb:
            return abs(ra - rb)
        return ra + rb

    def geodesic(self, a, b, t):
        la, ra = a.coords
        lb, rb = b.coords
        if la == lb or ra == 0.0 or rb == 0.0:
            leg = lb if ra == 0.0 else la
            return self.point(leg, (1.0 - t) * ra + t * rb)
        s = t * (ra + rb)
        if s <= ra:
            return self.point(la, ra - s)
        return self.point(lb, s - ra)

    def objective(self, z, points, weights) -> float:
        return float(sum(w * self.distance(z, p) ** 2 for p, w in zip(points, weights)))

    def frechet_mean(self, points, weights):
        total = weights.sum()
        legs = np.array([p.coords[0] for p in points])
        radii = np.array([p.coords[1] for p in points])
        moment = weights * radii
        best, best_val = None, math.inf
        for leg in range(1, self.legs + 1):
            on_leg = legs == leg
            r = max(0.0, (moment[on_leg].sum() - moment[~on_leg].sum()) / total)
            cand = self.point(leg, r)
            val = self.objective(cand, points, weights)
            if val < best_val:
                best, best_val = cand, val
        return best

    can_embed = True

    def embed(self, p):
        # leg l at radius r goes to r e_l
        v = np.zeros(self.legs)
        v[p.coords[0] - 1] = p.coords[1]
        return v

    def unembed(self, v, like):
        leg = int(np.argmax(v))
        return self.point(leg + 1, max(float(v[leg]), 0.0))

    def random_point(self, rng, scale=1.0):
        if rng.random() < 0.1:
            return self.hub()
        return self.point(int(rng.integers(1, self.legs + 1)), float(rng.exponential(scale)))


# ---------------------------------------------------------------------------
# Products


@dataclass(frozen=True)
class Product(HadamardSpace):
    """l2 product of backends: d^2 is the sum of the component d^2."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise StructuralError("product needs at least one factor")
        for f in self.factors:
            if not isinstance(f, HadamardSpace):
                raise StructuralError(f"product factor {f!r} is not a space")

    @property
    def has_chart(self):
        return all(f.has_chart for f in self.factors)

    @property
    def can_embed(self):
        return all(f.can_embed for f in self.factors)

    def embed(self, p):
        return np.concatenate([f.embed(c) for f, c in zip(self.factors, p.coords)])

    def unembed(self, v, like):
        out, start = [], 0
        for f, c in zip(self.factors, like.coords):
            size = len(f.embed(c))
            out.append(f.unembed(v[start:start + size], c))
            start += size
        return Point(self, tuple(out))

    def point(self, *components) -> Point:
        if len(components) != len(self.factors):
            raise StructuralError(f"expected {len(self.factors)} components")
        for c, f in zip(components, self.factors):
            if not isinstance(c, Point) or c.space != f:
                raise StructuralError("component does not belong to the matching factor")
        return Point(self, tuple(components))

    def distance(self, a, b):
        return math.sqrt(sum(f.distance(x, y) ** 2 for f, x, y in zip(self.factors, a.coords, b.coords)))

    def geodesic(self, a, b, t):
        return Point(self, tuple(f.geodesic(x, y, t) for f, x, y in zip(self.factors, a.coords, b.coords)))

    def frechet_mean(self, points, weights):
        # the objective separates over factors
        comps = tuple(
            f.frechet_mean([p.coords[i] for p in points], weights) for i, f in enumerate(self.factors)
        )
        return Point(self, comps)

    def random_point(self, rng, scale=1.0):
        return Point(self, tuple(f.random_point(rng, scale) for f in self.factors))

    @property
    def chart_dim(self):
        return sum(f.chart_dim for f in self.factors)

    def log(self, base, p):
        return np.concatenate([f.log(x, y) for f, x, y in zip(self.factors, base.coords, p.coords)])

    def exp(self, base, v):
        out, start = [], 0
        for f, x in zip(self.factors, base.coords):
            size = f.chart_dim
            out.append(f.exp(x, v[start:start + size]))
            start += size
        return Point(self, tuple(out))


# ---------------------------------------------------------------------------
# Convex sets and projections


class ConvexSet(ABC):
    """Closed geodesically convex subset with an exact metric projection."""

    space: HadamardSpace

    @abstractmethod
    def project(self, x: Point) -> Point: ...

    def contains(self, x: Point, tol: float = 1e-12) -> bool:
        return self.space.distance(x, self.project(x)) <= tol


class Singleton(ConvexSet):
    def __init__(self, point: Point):
        self.point = point
        self.space = point.space

    def project(self, x):
        return self.point

    def __repr__(self):
        return f"Singleton({format_point(self.point)!r})"


class WholeSpace(ConvexSet):
    def __init__(self, space: HadamardSpace):
        self.space = space

    def project(self, x):
        return x


class AffineSubspace(ConvexSet):
    """``base + span(directions)`` in a Euclidean space.

    The directions need not be orthonormal; an orthonormal basis of their
    span is computed once.
    """

    def __init__(self, base: Point, directions=()):
        if not isinstance(base.space, Euclidean):
            raise StructuralError("affine subspaces live in euclidean spaces")
        self.space = base.space
        self.base = base
        dirs = np.atleast_2d(np.asarray(directions, dtype=float)) if len(directions) else np.zeros((0, base.space.n))
        if dirs.shape[1] != base.space.n:
            raise StructuralError("direction vectors have the wrong length")
        if dirs.shape[0]:
            u, s, _ = np.linalg.svd(dirs.T, full_matrices=False)
            self.basis = u[:, s > 1e-12 * max(s.max(), 1.0)]
        else:
            self.basis = np.zeros((base.space.n, 0))

    def project(self, x):
        v = x.coords - self.base.coords
        return Point(self.space, _frozen(self.base.coords + self.basis @ (self.basis.T @ v)))


class SpiderSubtree(ConvexSet):
    """Hub plus an initial segment ``[0, cap]`` of each allowed leg."""

    def __init__(self, space: Spider, legs, caps=None):
        if not isinstance(space, Spider):
            raise StructuralError("subtrees live in spider spaces")
        self.space = space
        self.legs = tuple(sorted(set(int(leg) for leg in legs)))
        for leg in self.legs:
            if not 1 <= leg <= space.legs:
                raise StructuralError(f"leg {leg} outside 1..{space.legs}")
        if caps is None:
            caps = [math.inf] * len(self.legs)
        if isinstance(caps, dict):
            caps = [caps.get(leg, math.inf) for leg in self.legs]
        caps = [float(c) for c in caps]
        if len(caps) != len(self.legs) or any(not c >= 0 for c in caps):
            raise StructuralError("need one non-negative cap per leg")
        self.caps = dict(zip(self.legs, caps))

    def project(self, x):
        leg, r = x.coords
        if r == 0.0 or leg not in self.caps:
            return self.space.hub()
        return self.space.point(leg, min(r, self.caps[leg]))


class HyperbolicSubspace(ConvexSet):
    """Totally geodesic copy of H^k spanned by the hub and some spatial axes."""

    def __init__(self, space: Hyperbolic, axes):
        if not isinstance(space, Hyperbolic):
            raise StructuralError("hyperbolic subspaces live in hyperbolic spaces")
        self.space = space
        self.axes = tuple(sorted(set(int(a) for a in axes)))
        if any(not 1 <= a <= space.n for a in self.axes):
            raise StructuralError(f"axes must lie in 1..{space.n}")
        mask = np.zeros(space.n + 1, dtype=bool)
        mask[0] = True
        mask[list(self.axes)] = True
        self._mask = mask

    def project(self, x):
        return Point(self.space, _to_sheet(np.where(self._mask, x.coords, 0.0)))


# ---------------------------------------------------------------------------
# Module-level operations


def check_same_space(*points) -> HadamardSpace:
    space = points[0].space
    for p in points[1:]:
        if p.space is not space and p.space != space:
            raise StructuralError(f"points live in different spaces: {space!r} vs {p.space!r}")
    return space


def distance(a, b) -> float:
    """Geodesic distance between two points of one space."""
    return check_same_space(a, b).distance(a, b)


def geodesic_point(a, b, t: float):
    """Point at fraction ``t`` of the way along the geodesic from ``a`` to ``b``."""
    space = check_same_space(a, b)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    return space.geodesic(a, b, t)


class Cat0Check(NamedTuple):
    passed: bool
    slack: float


def check_cat0(x, g0, g1, t: float) -> Cat0Check:
    """Evaluate the CAT(0) comparison inequality at ``x`` for the geodesic g0 -> g1.

    The slack is ``rhs - lhs`` and the check passes when ``lhs <= rhs + 1e-9``.
    """
    gt = geodesic_point(g0, g1, t)
    check_same_space(x, g0)
    lhs = distance(x, gt) ** 2
    rhs = (1 - t) * distance(x, g0) ** 2 + t * distance(x, g1) ** 2 - t * (1 - t) * distance(g0, g1) ** 2
    return Cat0Check(lhs <= rhs + CAT0_SLACK, rhs - lhs)


def project(c: ConvexSet, x: Point) -> Point:
    """Metric projection of ``x`` onto the convex set ``c``."""
    if x.space != c.space:
        raise StructuralError(f"point in {x.space!r} cannot be projected onto a set in {c.space!r}")
    return c.project(x)


@dataclass(frozen=True)
class WeightedPointSet:
    points: tuple
    weights: np.ndarray

    def __init__(self, points, weights=None):
        points = tuple(points)
        w = _check_weights(points, weights)
        check_same_space(*points)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", w)

    def objective(self, z) -> float:
        return float(sum(w * distance(z, p) ** 2 for p, w in zip(self.points, self.weights)))


def frechet_mean(points, weights=None):
    """Minimizer of ``z -> sum_i w_i d(z, p_i)^2``.

    Parameters
    ----------
    points : sequence of Point or WeightedPointSet
        Points in one space.  Zero-weight points are ignored.
    weights : array-like, optional
        Non-negative weights with positive sum; uniform when omitted.
    """
    s = points if isinstance(points, WeightedPointSet) else WeightedPointSet(points, weights)
    keep = s.weights > 0
    pts = [p for p, k in zip(s.points, keep) if k]
    return pts[0].space.frechet_mean(pts, s.weights[keep])


# ---------------------------------------------------------------------------
# Text forms


def format_space(space: HadamardSpace) -> str:
    if isinstance(space, Euclidean):
        return f"euclidean {space.n}"
    if isinstance(space, Hyperbolic):
        return f"hyperbolic {space.n}"
    if isinstance(space, Spider):
        return f"spider {space.legs}"
    if isinstance(space, Product):
        return "product(" + "; ".join(format_space(f) for f in space.factors) + ")"
    raise StructuralError(f"no text form for {space!r}")


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise StructuralError(f"unbalanced parentheses in {text!r}")
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth:
        raise StructuralError(f"unbalanced parentheses in {text!r}")
    parts.append(text[start:])
    return parts


def parse_space(text: str) -> HadamardSpace:
    """Inverse of :func:`format_space`, e.g. ``"product(euclidean 2; spider 3)"``."""
    text = text.strip()
    if text.startswith("product"):
        inner = text[len("product"):].strip()
        if not (inner.startswith("(") and inner.endswith(")")):
            raise StructuralError(f"malformed product space {text!r}")
        return Product(tuple(parse_space(p) for p in _split_top(inner[1:-1], ";")))
    parts = text.split()
    if len(parts) != 2:
        raise StructuralError(f"malformed space {text!r}")
    kind, arg = parts
    try:
        size = int(arg)
    except ValueError:
        raise StructuralError(f"space size must be an integer in {text!r}") from None
    kinds = {"euclidean": Euclidean, "hyperbolic": Hyperbolic, "spider": Spider}
    if kind not in kinds:
        raise StructuralError(f"unknown space kind {kind!r}")
    return kinds[kind](size)


def format_point(p: Point) -> str:
    """Line form of a point, e.g. ``euclidean:1.0,0.5`` or ``spider:2,1.5``.

    Floats use the shortest repr that round-trips exactly.
    """
    space = p.space
    if isinstance(space, Euclidean):
        return "euclidean:" + ",".join(repr(float(v)) for v in p.coords)
    if isinstance(space, Hyperbolic):
        return "hyperbolic:" + ",".join(repr(float(v)) for v in p.coords)
    if isinstance(space, Spider):
        return f"spider:{p.coords[0]},{p.coords[1]!r}"
    if isinstance(space, Product):
        return "product:" + ";".join(f"({format_point(c)})" for c in p.coords)
    raise StructuralError(f"no text form for points of {space!r}")


def parse_point(text: str, space: HadamardSpace | None = None) -> Point:
    """Inverse of :func:`format_point`.

    ``space`` is required for spider points (the text does not carry the
    number of legs) and is otherwise used to validate the result.
    """
    text = text.strip()
    kind, sep, body = text.partition(":")
    if not sep:
        raise StructuralError(f"point text {text!r} lacks a 'kind:' prefix")
    kind = kind.strip()
    try:
        if kind == "product":
            parts = _split_top(body.strip(), ";")
            factors = space.factors if isinstance(space, Product) else [None] * len(parts)
            if len(factors) != len(parts):
                raise StructuralError("product point has the wrong number of components")
            comps = []
            for part, f in zip(parts, factors):
                part = part.strip()
                if not (part.startswith("(") and part.endswith(")")):
                    raise StructuralError(f"product component {part!r} must be parenthesized")
                comps.append(parse_point(part[1:-1], f))
            result = Product(tuple(c.space for c in comps)).point(*comps)
        elif kind in ("euclidean", "hyperbolic"):
            values = [float(v) for v in body.split(",")]
            if kind == "euclidean":
                result = Euclidean(len(values)).point(values)
            else:
                result = Hyperbolic(len(values) - 1).point(values)
        elif kind == "spider":
            if not isinstance(space, Spider):
                raise StructuralError("spider points need a spider space to parse against")
            leg, r = body.split(",")
            result = space.point(int(leg), float(r))
        else:
            raise StructuralError(f"unknown point kind {kind!r}")
    except ValueError as exc:
        if isinstance(exc, StructuralError):
            raise
        raise StructuralError(f"malformed point {text!r}: {exc}") from None
    if space is not None and result.space != space:
        raise StructuralError(f"point {text!r} does not belong to {format_space(space)}")
    return result
