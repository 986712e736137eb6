"""Reference instances with certified fixed points.

Every :class:`MapFixture` carries a point known to be fixed by its map and,
where it has a closed form, the projection of the start point onto the
fixed set.  The two Dirichlet instances are the path graph ``0-1-2-3``
(Euclidean target) and a five-node star mapped into a three-legged spider.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .markov import DirichletOperator, DirichletSpec, MarkovKernel
from .operators import (
    GeodesicAverage,
    LegPermutation,
    LinearMap,
    NonexpansiveMap,
    ProductMap,
    Projection,
    hyperbolic_rotation,
    rot90,
)
from .spaces import (
    AffineSubspace,
    Euclidean,
    Hyperbolic,
    HyperbolicSubspace,
    Product,
    Spider,
    SpiderSubtree,
)


@dataclass(frozen=True)
class MapFixture:
    name: str
    map: NonexpansiveMap
    x0: object
    fixed_point: object
    projection: object | None = None


def path_graph_spec(interior_guess=(0.0, 0.0)) -> DirichletSpec:
    """Path ``0-1-2-3`` with the 1/2-1/2 walk, uniform ``mu``, ``D = {1, 2}``, ``h(0) = 0``, ``h(3) = 3``.

    The harmonic extension is ``(0, 1, 2, 3)``.
    """
    e1 = Euclidean(1)
    values = [0.0, *interior_guess, 3.0]
    return DirichletSpec(MarkovKernel.path(4), [1, 2], [e1.point([v]) for v in values])


def star_spider_spec() -> DirichletSpec:
    """Star with centre 0 and leaves 1-4 into ``spider 3``.

    Leaves 1-3 are pinned at distance 1 on legs 1-3; the centre and leaf 4
    are free.  By symmetry the harmonic map sends both free states to the hub.
    """
    w = np.zeros((5, 5))
    w[0, 1:] = w[1:, 0] = 1.0
    spider = Spider(3)
    anchor = [spider.point(1, 0.5), spider.point(1, 1.0), spider.point(2, 1.0), spider.point(3, 1.0),
              spider.point(2, 0.7)]
    return DirichletSpec(MarkovKernel.from_weights(w), [0, 4], anchor)


def euclidean_fixtures() -> list[MapFixture]:
    e2 = Euclidean(2)
    x0 = e2.point([3.0, 4.0])
    line = AffineSubspace(e2.origin(), [[1.0, 0.0]])
    half = LinearMap(0.5 * rot90().matrix + 0.5 * np.diag([1.0, 0.0]))
    return [
        MapFixture("euclidean-rot90", rot90(), x0, e2.origin(), e2.origin()),
        MapFixture("euclidean-line-projection", Projection(line), x0, e2.origin(), e2.point([3.0, 0.0])),
        MapFixture("euclidean-convex-combination", half, x0, e2.origin(), e2.origin()),
    ]


def hyperbolic_fixtures() -> list[MapFixture]:
    h2 = Hyperbolic(2)
    x0 = h2.from_spatial([1.5, -2.0])
    turn = hyperbolic_rotation(h2, 2 * math.pi / 3)
    axis = Projection(HyperbolicSubspace(h2, [1]))
    return [
        MapFixture("hyperbolic-rotation", turn, x0, h2.hub(), h2.hub()),
        MapFixture("hyperbolic-projection", axis, x0, h2.hub(), axis(x0)),
        MapFixture("hyperbolic-average", GeodesicAverage([turn, axis]), x0, h2.hub(), h2.hub()),
    ]


def spider_fixtures() -> list[MapFixture]:
    s3 = Spider(3)
    x0 = s3.point(1, 2.0)
    both = GeodesicAverage([Projection(SpiderSubtree(s3, [1])), Projection(SpiderSubtree(s3, [2]))])
    capped = Projection(SpiderSubtree(s3, [1], [1.0]))
    return [
        MapFixture("spider-average", both, x0, s3.hub(), s3.hub()),
        MapFixture("spider-permutation", LegPermutation(s3, [2, 3, 1]), x0, s3.hub(), s3.hub()),
        MapFixture("spider-subtree-projection", capped, x0, s3.hub(), s3.point(1, 1.0)),
    ]


def product_fixtures() -> list[MapFixture]:
    e2, s3 = Euclidean(2), Spider(3)
    space = Product((e2, s3))
    f = ProductMap([rot90(), LegPermutation(s3, [3, 1, 2])])
    x0 = space.point(e2.point([1.0, -2.0]), s3.point(2, 1.5))
    hub = space.point(e2.origin(), s3.hub())
    return [MapFixture("product-rot90-permutation", f, x0, hub, hub)]


def markov_fixtures() -> list[MapFixture]:
    path = path_graph_spec()
    star = star_spider_spec()
    e1, s3 = path.target, star.target
    harmonic = path.field([e1.point([v]) for v in (0.0, 1.0, 2.0, 3.0)])
    star_fixed = star.field([s3.hub(), *star.anchor[1:4], s3.hub()])
    return [
        MapFixture("markov-path", DirichletOperator(path), path.initial_field(), harmonic, harmonic),
        MapFixture("markov-star", DirichletOperator(star), star.initial_field(), star_fixed, star_fixed),
    ]


def all_fixtures() -> list[MapFixture]:
    return (euclidean_fixtures() + hyperbolic_fixtures() + spider_fixtures() + product_fixtures()
            + markov_fixtures())
