"""Convex functionals, their proximal maps and gradient-flow semigroups.

``prox(phi, lam, x)`` is ``argmin_y phi(y) + d(x, y)^2 / (2 lam)`` and the
gradient flow is ``S_t x = lim (J_{t/n})^n x``.  Two functionals are
available: a Euclidean quadratic and the Dirichlet energy of map fields.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, StructuralError
from .flows import ScheduleWarning, StepSchedule, Trajectory, flow_trajectory, proximal_iteration
from .markov import DirichletSpec, MapField
from .spaces import Euclidean, Point, _frozen, distance, frechet_mean

MAX_SWEEPS = 100_000


class ConvexFunctional(ABC):
    """Geodesically convex function with an exact or iterative proximal map.

    ``minimum`` is the minimal value when known (``None`` otherwise).
    """

    space = None
    minimum: float | None = None

    @abstractmethod
    def __call__(self, x) -> float: ...

    @abstractmethod
    def prox(self, lam: float, x, tol: float = 1e-8): ...

    def minimizer_projection(self, x):
        """Nearest minimizer of ``x`` when it has a closed form, else ``None``."""
        return None


class QuadraticFunctional(ConvexFunctional):
    """``phi(y) = 1/2 (y - b)^T Q (y - b)`` with ``Q`` symmetric positive semidefinite."""

    def __init__(self, matrix, offset=None):
        q = np.array(matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise StructuralError("quadratic needs a square matrix")
        if not np.allclose(q, q.T, atol=1e-12):
            raise StructuralError("quadratic matrix must be symmetric")
        eig = np.linalg.eigvalsh(q)
        if eig.min() < -1e-12 * max(1.0, abs(eig).max()):
            raise StructuralError("quadratic matrix must be positive semidefinite")
        self.matrix = q
        self.space = Euclidean(len(q))
        self.offset = np.zeros(len(q)) if offset is None else np.asarray(offset, dtype=float)
        self.minimum = 0.0
        _, s, vt = np.linalg.svd(q)
        self._kernel_basis = vt[s <= 1e-12 * max(1.0, s.max())].T

    def __call__(self, y):
        r = y.coords - self.offset
        return 0.5 * float(r @ self.matrix @ r)

    def prox(self, lam, x, tol=1e-8):
        if lam == 0:
            return x
        n = self.space.n
        rhs = x.coords + lam * self.matrix @ self.offset
        return Point(self.space, _frozen(np.linalg.solve(np.eye(n) + lam * self.matrix, rhs)))

    def minimizer_projection(self, x):
        k = self._kernel_basis
        return Point(self.space, _frozen(self.offset + k @ (k.T @ (x.coords - self.offset))))


class DirichletEnergy(ConvexFunctional):
    """``E(f) = 1/2 sum_i mu_i sum_j p_ij d(f_i, f_j)^2`` on ``L2(D, H, h)``.

    The proximal map is computed by cyclic block-coordinate minimization over
    interior states in ascending order; each block problem is an exact
    weighted Frechet mean of the neighbouring values (weights
    ``lam (mu_i p_ij + mu_j p_ji)``) and the anchor value (weight ``mu_i``).
    """

    def __init__(self, spec: DirichletSpec, minimum: float | None = None):
        self.spec = spec
        self.space = spec.space
        self.minimum = minimum
        k = spec.kernel
        flux = k.mu[:, None] * k.p
        self._coupling = flux + flux.T
        np.fill_diagonal(self._coupling, 0.0)
        self._nbrs = {i: np.flatnonzero(self._coupling[i] > 0) for i in spec.interior}

    def __call__(self, f):
        k = self.spec.kernel
        d = self.spec.target.distance
        total = 0.0
        for i in range(k.m):
            for j in k.neighbours(i):
                if j != i:
                    total += k.mu[i] * k.p[i, j] * d(f.values[i], f.values[j]) ** 2
        return 0.5 * float(total)

    def objective(self, lam, x, g) -> float:
        return self(g) + self.space.distance(x, g) ** 2 / (2 * lam)

    def prox(self, lam, x, tol=1e-8, max_sweeps=MAX_SWEEPS):
        if not lam >= 0:
            raise DomainError(f"prox needs a non-negative step, got {lam}")
        if lam == 0 or not self.spec.interior:
            return x
        if isinstance(self.spec.target, Euclidean):
            return self._prox_euclidean(lam, x, tol, max_sweeps)
        mu = self.spec.kernel.mu
        values = list(x.values)
        history = []
        for _ in range(max_sweeps):
            moved = 0.0
            for i in self.spec.interior:
                nb = self._nbrs[i]
                pts = [values[j] for j in nb] + [x.values[i]]
                w = np.append(lam * self._coupling[i, nb], mu[i])
                new = frechet_mean(pts, w)
                moved = max(moved, distance(new, values[i]))
                values[i] = new
            history.append(moved)
            if moved <= tol:
                return MapField(self.space, tuple(values))
        raise ConvergenceError("block-coordinate prox hit its sweep cap",
                               last=MapField(self.space, tuple(values)), residual=history[-1], history=history)

    def _prox_euclidean(self, lam, x, tol, max_sweeps):
        target = self.spec.target
        mu = self.spec.kernel.mu
        anchor = np.array([v.coords for v in x.values])
        g = anchor.copy()
        weights = {i: lam * self._coupling[i, self._nbrs[i]] for i in self.spec.interior}
        history = []
        for _ in range(max_sweeps):
            moved = 0.0
            for i in self.spec.interior:
                w = weights[i]
                new = (w @ g[self._nbrs[i]] + mu[i] * anchor[i]) / (w.sum() + mu[i])
                moved = max(moved, float(np.linalg.norm(new - g[i])))
                g[i] = new
            history.append(moved)
            if moved <= tol:
                break
        else:
            raise ConvergenceError("block-coordinate prox hit its sweep cap", residual=history[-1], history=history)
        values = list(x.values)
        for i in self.spec.interior:
            values[i] = Point(target, _frozen(g[i]))
        return MapField(self.space, tuple(values))


def prox(phi: ConvexFunctional, lam: float, x, tol: float = 1e-8):
    """Proximal map ``J_lam x``; ``J_0`` is the identity."""
    if not lam >= 0:
        raise DomainError(f"prox needs a non-negative step, got {lam}")
    return phi.prox(lam, x, tol)


def _stationarity(phi):
    # d(x, J_1 x) vanishes exactly at minimizers
    return lambda x: distance(x, phi.prox(1.0, x, 1e-12))


def gradient_flow(phi: ConvexFunctional, x0, time_grid: Sequence[float], tol: float = 1e-8, *,
                  n_initial: int = 8, extrapolate: bool = True) -> Trajectory:
    """``S_t x0 = lim (J_{t/n})^n x0`` sampled on a grid starting at 0.

    Each sample records the energy ``phi(S_t x0)`` and, as its residual, the
    displacement ``d(x, J_1 x)`` which is zero exactly at minimizers.
    """
    return flow_trajectory(
        lambda lam, y, inner: phi.prox(lam, y, inner),
        _stationarity(phi),
        x0, time_grid, tol, energy=phi, n_initial=n_initial, extrapolate=extrapolate,
    )


class LimitProbeRow(NamedTuple):
    lam: float
    point: object
    value: float
    distance_to_target: float | None


def resolvent_limit_probe(phi: ConvexFunctional, x0, lambdas: Sequence[float], tol: float = 1e-8,
                          target=None) -> list[LimitProbeRow]:
    """Track ``J_lam x0`` as ``lam`` grows.

    ``target`` is the expected limit (the projection of ``x0`` onto the
    minimizer set); when omitted the functional's closed-form projection is
    used if it has one.
    """
    lambdas = [float(v) for v in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise DomainError("lambda grid must be increasing")
    if target is None:
        target = phi.minimizer_projection(x0)
    rows = []
    for lam in lambdas:
        y = phi.prox(lam, x0, tol)
        rows.append(LimitProbeRow(lam, y, phi(y), None if target is None else distance(y, target)))
    return rows


def prox_ppa(phi: ConvexFunctional, x0, schedule: StepSchedule, max_iter: int = 100_000, tol: float = 1e-8,
             *, reference=None) -> Trajectory:
    """Proximal point algorithm ``x_n = J_{lam_n} x_{n-1}`` for a convex functional.

    Here the schedule condition is ``sum lam_n = inf``.  The residual of
    step ``n`` is ``d(x_{n-1}, x_n) / lam_n``; when ``phi.minimum`` is known
    the run stops once ``phi(x_n) - minimum <= tol``, otherwise once the
    residual is below ``tol``.
    """
    note = None
    if not schedule.sum_diverges:
        note = f"schedule {schedule} does not certify sum lam_n = inf; convergence not guaranteed"
        warnings.warn(note, ScheduleWarning, stacklevel=2)

    def residual(prev, x, lam):
        if phi.minimum is not None:
            return max(phi(x) - phi.minimum, 0.0)
        return math.inf if prev is None else distance(prev, x) / lam

    traj = proximal_iteration(lambda lam, x: phi.prox(lam, x, tol / 100), residual, x0, schedule, max_iter,
                              tol, reference, energy=phi)
    if note:
        traj.warnings.insert(0, note)
    return traj
