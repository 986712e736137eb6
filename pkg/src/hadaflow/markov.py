"""Nonlinear Markov operators and heat flows on finite state spaces.

A :class:`MarkovKernel` on states ``0..m-1`` acts on map fields (one target
point per state) through state-wise weighted Frechet means.  Fields that
agree with an anchor ``h`` off an interior set ``D`` form the Hadamard space
``L2(D, H, h)`` with metric ``d2(f, g)^2 = sum_i mu_i d(f_i, g_i)^2``; the
Dirichlet operator ``P_D`` is nonexpansive there, and its PPA and semigroup
are the discrete and continuous heat flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, StructuralError
from .flows import StepSchedule, Trajectory, ppa, semigroup_trajectory
from .operators import NonexpansiveMap
from .spaces import (
    Euclidean,
    HadamardSpace,
    Point,
    _frozen,
    format_point,
    format_space,
    frechet_mean,
    parse_point,
    parse_space,
)

KERNEL_TOL = 1e-12


class MarkovKernel:
    """Row-stochastic matrix ``p`` symmetric with respect to state weights ``mu``.

    Parameters
    ----------
    p : array-like of shape (m, m)
        Transition weights, non-negative with unit row sums.
    mu : array-like of shape (m,)
        Positive state weights with ``mu_i p_ij = mu_j p_ji``.
    """

    def __init__(self, p, mu):
        p = np.array(p, dtype=float)
        mu = np.array(mu, dtype=float)
        m = len(mu)
        if m < 1 or p.shape != (m, m):
            raise StructuralError(f"kernel shape {p.shape} does not match {m} states")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise StructuralError("transition weights must be finite and non-negative")
        if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
            raise StructuralError("state weights must be positive")
        rows = np.abs(p.sum(axis=1) - 1)
        if rows.max() > KERNEL_TOL:
            raise StructuralError(f"row {int(rows.argmax())} does not sum to 1")
        flux = mu[:, None] * p
        asym = np.abs(flux - flux.T)
        if asym.max() > KERNEL_TOL:
            i, j = np.unravel_index(asym.argmax(), asym.shape)
            raise StructuralError(f"kernel is not mu-symmetric at ({i}, {j})")
        p.flags.writeable = False
        mu.flags.writeable = False
        self.p = p
        self.mu = mu
        self.symmetrized = False

    @property
    def m(self) -> int:
        return len(self.mu)

    @classmethod
    def symmetrize(cls, p, mu) -> "MarkovKernel":
        """Repair a nearly symmetric kernel: ``p'_ij = (p_ij mu_i + p_ji mu_j) / (2 mu_i)``, rows renormalized."""
        p = np.asarray(p, dtype=float)
        mu = np.asarray(mu, dtype=float)
        flux = mu[:, None] * p
        sym = (flux + flux.T) / 2
        # row renormalization changes the invariant weights to the row sums of the symmetric flux
        new_mu = sym.sum(axis=1)
        kernel = cls(sym / new_mu[:, None], new_mu)
        kernel.symmetrized = True
        kernel.original_mu = mu
        return kernel

    @classmethod
    def from_weights(cls, w) -> "MarkovKernel":
        """Random walk on a weighted graph: ``mu_i = sum_j w_ij``, ``p_ij = w_ij / mu_i``."""
        w = np.asarray(w, dtype=float)
        if w.shape[0] != w.shape[1] or not np.allclose(w, w.T, rtol=0, atol=0):
            raise StructuralError("edge weights must form a symmetric matrix")
        mu = w.sum(axis=1)
        return cls(w / mu[:, None], mu)

    @classmethod
    def path(cls, m: int) -> "MarkovKernel":
        """Nearest-neighbour walk on ``0 - 1 - ... - m-1`` with 1/2 holding at the ends; uniform ``mu``."""
        if m < 2:
            raise StructuralError("path needs at least two states")
        p = np.zeros((m, m))
        for i in range(m):
            for j in (i - 1, i + 1):
                p[i, min(max(j, 0), m - 1)] += 0.5
        return cls(p, np.ones(m))

    def neighbours(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.p[i] > 0)

    def __repr__(self):
        return f"MarkovKernel(m={self.m})"


class FieldSpace(HadamardSpace):
    """Maps from the kernel's states into ``target`` under the ``d2`` metric.

    With ``interior`` and ``anchor`` given this is ``L2(D, H, h)``: fields
    must equal the anchor exactly off the interior, and geodesics leave
    those values untouched.
    """

    def __init__(self, kernel: MarkovKernel, target: HadamardSpace, interior=None, anchor=None):
        self.kernel = kernel
        self.target = target
        if interior is None:
            self.interior = tuple(range(kernel.m))
            self.anchor = None
        else:
            self.interior = tuple(sorted(set(int(i) for i in interior)))
            if any(not 0 <= i < kernel.m for i in self.interior):
                raise StructuralError("interior states out of range")
            if anchor is None or len(anchor) != kernel.m:
                raise StructuralError("a constrained field space needs one anchor value per state")
            self.anchor = tuple(anchor)
        self._free = None

    @property
    def has_chart(self):
        return self.target.has_chart

    @property
    def chart_dim(self):
        return self.target.chart_dim * len(self.interior)

    @property
    def can_embed(self):
        return self.target.can_embed

    def embed(self, f):
        tg = self.target
        return np.concatenate([tg.embed(f.values[i]) for i in self.interior])

    def unembed(self, v, like):
        tg = self.target
        size = len(v) // max(len(self.interior), 1)
        return self._combine(like, [tg.unembed(v[k * size:(k + 1) * size], like.values[i])
                                    for k, i in enumerate(self.interior)])

    def free(self) -> "FieldSpace":
        """The unconstrained field space over the same kernel and target."""
        if self.anchor is None:
            return self
        if self._free is None:
            self._free = FieldSpace(self.kernel, self.target)
        return self._free

    def field(self, values) -> "MapField":
        values = tuple(values)
        if len(values) != self.kernel.m:
            raise StructuralError(f"expected {self.kernel.m} values, got {len(values)}")
        for v in values:
            if not isinstance(v, Point) or v.space != self.target:
                raise StructuralError(f"field values must be points of {format_space(self.target)}")
        if self.anchor is not None:
            inner = set(self.interior)
            for i, (v, h) in enumerate(zip(values, self.anchor)):
                if i not in inner and v != h:
                    raise DomainError(f"field disagrees with the boundary data at state {i}")
        return MapField(self, values)

    def _combine(self, a, values_for_interior):
        out = list(a.values)
        for i, v in zip(self.interior, values_for_interior):
            out[i] = v
        return MapField(self, tuple(out))

    def distance(self, a, b):
        t = self.target
        mu = self.kernel.mu
        return math.sqrt(sum(mu[i] * t.distance(a.values[i], b.values[i]) ** 2 for i in range(self.kernel.m)))

    def geodesic(self, a, b, t):
        tg = self.target
        return self._combine(a, [tg.geodesic(a.values[i], b.values[i], t) for i in self.interior])

    def frechet_mean(self, points, weights):
        tg = self.target
        return self._combine(points[0], [tg.frechet_mean([p.values[i] for p in points], weights)
                                         for i in self.interior])

    def random_point(self, rng, scale=1.0):
        values = list(self.anchor) if self.anchor is not None else [None] * self.kernel.m
        for i in self.interior:
            values[i] = self.target.random_point(rng, scale)
        return MapField(self, tuple(values))

    def log(self, base, p):
        tg = self.target
        return np.concatenate([tg.log(base.values[i], p.values[i]) for i in self.interior])

    def exp(self, base, v):
        tg = self.target
        size = tg.chart_dim
        return self._combine(base, [tg.exp(base.values[i], v[k * size:(k + 1) * size])
                                    for k, i in enumerate(self.interior)])

    def __repr__(self):
        return f"FieldSpace({self.kernel!r}, {format_space(self.target)}, interior={self.interior})"


@dataclass(frozen=True, eq=False)
class MapField:
    """One target point per state of a kernel."""

    space: FieldSpace
    values: tuple

    @property
    def kernel(self) -> MarkovKernel:
        return self.space.kernel

    def __eq__(self, other):
        if not isinstance(other, MapField):
            return NotImplemented
        return self.space.kernel is other.space.kernel and self.values == other.values

    def __hash__(self):
        return hash(self.values)

    def __repr__(self):
        return "MapField(" + ", ".join(format_point(v) for v in self.values) + ")"


class DirichletSpec:
    """Interior set ``D`` and anchor ``h`` (boundary data off ``D``, initial guess on ``D``)."""

    def __init__(self, kernel: MarkovKernel, interior: Sequence[int], anchor: Sequence[Point]):
        anchor = tuple(anchor)
        if len(anchor) != kernel.m:
            raise StructuralError("need one anchor point per state")
        target = anchor[0].space
        self.kernel = kernel
        self.target = target
        self.space = FieldSpace(kernel, target, interior, anchor)
        self.interior = self.space.interior
        self.anchor = anchor
        self.boundary = tuple(i for i in range(kernel.m) if i not in set(self.interior))
        for v in anchor:
            if v.space != target:
                raise StructuralError("anchor values must share one target space")

    def field(self, values) -> MapField:
        return self.space.field(values)

    def initial_field(self) -> MapField:
        return MapField(self.space, self.anchor)


def d2(f: MapField, g: MapField) -> float:
    """``(sum_i mu_i d(f_i, g_i)^2)^(1/2)``."""
    if f.space.kernel is not g.space.kernel or f.space.target != g.space.target:
        raise StructuralError("fields over different kernels or targets")
    return f.space.free().distance(f, g)


def _state_means(kernel: MarkovKernel, values, states):
    target = values[0].space
    if isinstance(target, Euclidean):
        stacked = np.array([v.coords for v in values])
        means = kernel.p[list(states)] @ stacked
        return [Point(target, _frozen(row)) for row in means]
    out = []
    for i in states:
        nb = kernel.neighbours(i)
        out.append(frechet_mean([values[j] for j in nb], kernel.p[i, nb]))
    return out


def markov_apply(kernel: MarkovKernel, f: MapField) -> MapField:
    """Nonlinear Markov operator: ``Pf(i)`` is the ``p_i.``-weighted Frechet mean of ``f``."""
    if f.space.kernel is not kernel:
        raise StructuralError("field is defined over a different kernel")
    space = f.space.free()
    return MapField(space, tuple(_state_means(kernel, f.values, range(kernel.m))))


def dirichlet_operator(spec: DirichletSpec, f: MapField) -> MapField:
    """``P_D f``: Markov means on the interior, ``f`` unchanged elsewhere."""
    if f.space is not spec.space:
        f = spec.field(f.values)
    if not spec.interior:
        return f
    means = _state_means(spec.kernel, f.values, spec.interior)
    return spec.space._combine(f, means)


class MarkovOperator(NonexpansiveMap):
    def __init__(self, kernel: MarkovKernel, target: HadamardSpace):
        self.kernel = kernel
        self.space = FieldSpace(kernel, target)

    def __call__(self, f):
        return markov_apply(self.kernel, f)


class DirichletOperator(NonexpansiveMap):
    """``P_D`` as a nonexpansive self-map of ``L2(D, H, h)``; fixed points are harmonic fields."""

    def __init__(self, spec: DirichletSpec):
        self.spec = spec
        self.space = spec.space

    def __call__(self, f):
        return dirichlet_operator(self.spec, f)


def _start(spec, f0):
    if f0 is None:
        return spec.initial_field()
    if f0.space is not spec.space:
        return spec.field(f0.values)
    return f0


def solve_dirichlet_ppa(spec: DirichletSpec, f0: MapField | None = None, schedule: StepSchedule | None = None,
                        tol: float = 1e-8, max_iter: int = 100_000) -> Trajectory:
    """Discrete heat flow: PPA for ``P_D`` in ``L2(D, H, h)``, stopping at ``d2(f, P_D f) <= tol``."""
    schedule = StepSchedule.constant(1.0) if schedule is None else schedule
    return ppa(DirichletOperator(spec), _start(spec, f0), schedule, max_iter=max_iter, tol=tol)


def solve_dirichlet_flow(spec: DirichletSpec, f0: MapField | None = None, time_grid: Sequence[float] = (0, 1),
                         tol: float = 1e-8, *, extrapolate: bool = True) -> Trajectory:
    """Continuous heat flow ``T_t f0`` generated by ``I - P_D``, sampled on ``time_grid``."""
    return semigroup_trajectory(DirichletOperator(spec), _start(spec, f0), time_grid, tol, extrapolate=extrapolate)


def spectral_bound(spec: DirichletSpec, k: int = 1, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """``1 - ||p_D^k||`` with the operator norm taken in ``L2(D)`` (mu-weighted).

    The norm is found by power iteration on ``(Q^k)^* Q^k`` where ``Q`` is
    the interior block of the kernel and ``^*`` is the mu-adjoint.
    """
    if k < 1:
        raise DomainError("power k must be >= 1")
    d = list(spec.interior)
    if not d:
        return 1.0
    q = spec.kernel.p[np.ix_(d, d)]
    mu = spec.kernel.mu[d]
    a = np.linalg.matrix_power(q, k)
    adj = (a.T * mu) / mu[:, None]
    v = np.random.default_rng(0).uniform(0.5, 1.5, len(d))
    v /= math.sqrt(v @ (mu * v))
    est = 0.0
    for _ in range(max_iter):
        w = adj @ (a @ v)
        nrm = math.sqrt(w @ (mu * w))
        if nrm == 0.0:
            return 1.0
        v = w / nrm
        av = a @ v
        new = math.sqrt(av @ (mu * av))
        if abs(new - est) <= tol:
            return 1.0 - new
        est = new
    raise ConvergenceError("power iteration stagnated", last=est)


class ProbeRow(NamedTuple):
    t: float
    gap_same: float
    gap_half: float
    gap_double: float
    energy_flow: float
    energy_gradient: float
    energy_gap: float


def conjecture_probe(spec: DirichletSpec, f0: MapField | None, time_grid: Sequence[float],
                     tol: float = 1e-8) -> list[ProbeRow]:
    """Compare the heat flow ``T_t`` of ``P_D`` with the energy gradient flow ``S``.

    For each ``t`` reports ``d2(T_t f0, S_g f0)`` for ``g in {t, t/2, 2t}``,
    the energies of ``T_t f0`` and ``S_t f0`` and their absolute difference.
    Purely a measurement; nothing is asserted.
    """
    from .energy import DirichletEnergy, gradient_flow

    f0 = _start(spec, f0)
    grid = sorted(set(float(t) for t in time_grid) | {0.0})
    flow = solve_dirichlet_flow(spec, f0, grid, tol)
    energy = DirichletEnergy(spec)
    s_times = sorted({0.0} | {g for t in grid for g in (t, t / 2, 2 * t)})
    grad = gradient_flow(energy, f0, s_times, tol)
    s_at = {s.time: s.point for s in grad}
    rows = []
    for sample in flow:
        t = sample.time
        if t not in set(float(v) for v in time_grid):
            continue
        ft = sample.point
        rows.append(ProbeRow(
            t,
            d2(ft, s_at[t]),
            d2(ft, s_at[t / 2]),
            d2(ft, s_at[2 * t]),
            energy(ft),
            energy(s_at[t]),
            abs(energy(ft) - energy(s_at[t])),
        ))
    return rows


# ---------------------------------------------------------------------------
# Instance files


def format_instance(spec: DirichletSpec) -> str:
    """Text form read back by :func:`parse_instance`."""
    k = spec.kernel
    lines = [f"states {k.m}", f"space: {format_space(spec.target)}", "mu: " + " ".join(repr(float(v)) for v in k.mu)]
    for i in range(k.m):
        lines.append(f"p {i}: " + " ".join(repr(float(v)) for v in k.p[i]))
    lines.append("D: " + " ".join(str(i) for i in spec.interior))
    for i, h in enumerate(spec.anchor):
        lines.append(f"h {i}: {format_point(h)}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str, space: HadamardSpace | None = None) -> DirichletSpec:
    """Parse a Dirichlet instance.

    Layout: ``states m``; optional ``space: <descriptor>``; ``mu: v1 ... vm``;
    ``m`` lines ``p i: p_i1 ... p_im``; ``D: i1 i2 ...``; ``m`` lines
    ``h i: <point>`` holding the boundary data (and the initial interior
    guess).  Blank lines and ``#`` comments are ignored.  ``space`` supplies
    the target when the file has no ``space:`` line.
    """
    lines = [(n, ln.split("#", 1)[0].strip()) for n, ln in enumerate(text.splitlines(), 1)]
    lines = [(n, ln) for n, ln in lines if ln]

    def fail(n, msg):
        raise StructuralError(f"instance line {n}: {msg}")

    if not lines or not lines[0][1].startswith("states"):
        fail(lines[0][0] if lines else 1, "expected 'states m'")
    try:
        m = int(lines[0][1].split()[1])
    except (IndexError, ValueError):
        fail(lines[0][0], "expected 'states m'")
    mu, rows, interior, anchor = None, {}, None, {}
    for n, ln in lines[1:]:
        key, sep, rest = ln.partition(":")
        if not sep:
            fail(n, f"expected 'key: value', got {ln!r}")
        key = key.strip()
        try:
            if key == "space":
                space = parse_space(rest)
            elif key == "mu":
                mu = [float(v) for v in rest.split()]
            elif key.startswith("p "):
                rows[int(key[2:])] = [float(v) for v in rest.split()]
            elif key == "D":
                interior = [int(v) for v in rest.split()]
            elif key.startswith("h "):
                anchor[int(key[2:])] = rest.strip()
            else:
                fail(n, f"unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, StructuralError):
                raise
            fail(n, str(exc))
    if mu is None or len(mu) != m:
        raise StructuralError(f"instance needs 'mu:' with {m} values")
    if sorted(rows) != list(range(m)) or any(len(r) != m for r in rows.values()):
        raise StructuralError(f"instance needs rows 'p 0:' .. 'p {m - 1}:' with {m} entries each")
    if interior is None:
        raise StructuralError("instance needs a 'D:' line")
    if sorted(anchor) != list(range(m)):
        raise StructuralError(f"instance needs points 'h 0:' .. 'h {m - 1}:'")
    kernel = MarkovKernel([rows[i] for i in range(m)], mu)
    return DirichletSpec(kernel, interior, [parse_point(anchor[i], space) for i in range(m)])
