"""Proximal point iterations and exponential-formula semigroups.

``ppa`` iterates ``x_n = R_{lam_n} x_{n-1}``; ``semigroup_apply`` evaluates
``T_t x = lim (R_{t/n})^n x`` by doubling ``n`` until successive estimates
agree.  Both record the residual ``d(x, F x)`` that their convergence
theory drives to zero.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError
from .operators import NonexpansiveMap, acceleration_chart, resolvent
from .spaces import Point, distance, format_point

logger = logging.getLogger(__name__)

MAX_DOUBLED_N = 2**20
MAX_RICHARDSON_ORDER = 6


class ScheduleWarning(UserWarning):
    """Step schedule without a certificate for the convergence hypothesis."""


@dataclass(frozen=True)
class StepSchedule:
    """Positive step sizes ``lam_1, lam_2, ...``.

    Use the constructors :meth:`constant`, :meth:`power` and :meth:`explicit`.
    """

    kind: str
    params: tuple

    @classmethod
    def constant(cls, lam: float) -> "StepSchedule":
        if not lam > 0:
            raise DomainError(f"schedule needs a positive step, got {lam}")
        return cls("constant", (float(lam),))

    @classmethod
    def power(cls, c: float, alpha: float) -> "StepSchedule":
        """``lam_n = c * n**(-alpha)``."""
        if not c > 0:
            raise DomainError(f"schedule needs a positive step scale, got {c}")
        return cls("power", (float(c), float(alpha)))

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "StepSchedule":
        values = tuple(float(v) for v in values)
        if not values or any(not v > 0 for v in values):
            raise DomainError("explicit schedule needs a non-empty list of positive steps")
        return cls("explicit", values)

    def __call__(self, n: int) -> float:
        if n < 1:
            raise DomainError("steps are indexed from 1")
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "power":
            c, alpha = self.params
            return c * n ** (-alpha)
        return self.params[n - 1]

    @property
    def length(self) -> float:
        return len(self.params) if self.kind == "explicit" else math.inf

    @property
    def divergence_certificate(self) -> bool:
        """True when ``sum lam_n**2 = inf`` is guaranteed."""
        if self.kind == "constant":
            return True
        if self.kind == "power":
            return self.params[1] <= 0.5
        return False

    @property
    def sum_diverges(self) -> bool:
        """True when ``sum lam_n = inf`` is guaranteed (the condition for functionals)."""
        if self.kind == "constant":
            return True
        if self.kind == "power":
            return self.params[1] <= 1.0
        return False

    def __str__(self):
        return " ".join([self.kind, *(repr(p) for p in self.params)])


def point_text(p) -> str:
    """Text form of a point; map fields list their state values separated by ``|``."""
    if isinstance(p, Point):
        return format_point(p)
    return "|".join(format_point(v) for v in p.values)


@dataclass(frozen=True)
class Sample:
    step: int
    time: float
    point: object
    residual: float
    fejer_distance: float | None = None
    energy: float | None = None


@dataclass
class Trajectory:
    """Recorded iterates of a flow.

    ``time`` is the cumulative step sum for proximal iterations and the flow
    time for semigroups.
    """

    samples: list = field(default_factory=list)
    converged: bool = False
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    @property
    def points(self) -> list:
        return [s.point for s in self.samples]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.residual for s in self.samples])

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.samples])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.samples], dtype=float)

    def to_csv(self) -> str:
        """Header plus one ``step,time,point,residual,fejer_distance`` row per sample.

        An ``energy`` column is appended when any sample carries an energy.
        """
        has_energy = any(s.energy is not None for s in self.samples)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["step", "time", "point", "residual", "fejer_distance"]
        if has_energy:
            header.append("energy")
        writer.writerow(header)
        for s in self.samples:
            row = [s.step, repr(float(s.time)), point_text(s.point), repr(float(s.residual)),
                   "" if s.fejer_distance is None else repr(float(s.fejer_distance))]
            if has_energy:
                row.append("" if s.energy is None else repr(float(s.energy)))
            writer.writerow(row)
        return buf.getvalue()


def proximal_iteration(step: Callable, residual: Callable, x0, schedule: StepSchedule, max_iter: int,
                       tol: float, reference=None, energy: Callable | None = None) -> Trajectory:
    """Shared driver for ``x_n = step(lam_n, x_{n-1})`` with residual-based stopping."""
    traj = Trajectory()

    def record(n, t, x, res):
        fejer = None if reference is None else distance(reference, x)
        traj.samples.append(Sample(n, t, x, res, fejer, None if energy is None else energy(x)))

    x, t = x0, 0.0
    res = residual(None, x, None)
    record(0, t, x, res)
    n = 0
    while res > tol:
        if n >= max_iter or n >= schedule.length:
            logger.info("proximal iteration stopped after %d steps, residual %.3g", n, res)
            return traj
        n += 1
        lam = schedule(n)
        x_prev, x = x, step(lam, x)
        t += lam
        res = residual(x_prev, x, lam)
        record(n, t, x, res)
    traj.converged = True
    return traj


def ppa(f: NonexpansiveMap, x0, schedule: StepSchedule, max_iter: int = 100_000, tol: float = 1e-8, *,
        reference=None, resolvent_tol: float | None = None) -> Trajectory:
    """Proximal point algorithm ``x_n = R_{lam_n} x_{n-1}`` for a nonexpansive map.

    Stops when ``d(x_n, F x_n) <= tol``; after ``max_iter`` steps the
    trajectory is returned with ``converged=False``.  Schedules that do not
    certify ``sum lam_n**2 = inf`` still run, with a :class:`ScheduleWarning`.

    Parameters
    ----------
    reference : point, optional
        A fixed point; its distance to each iterate is recorded for
        :func:`fejer_check`.
    resolvent_tol : float, optional
        Accuracy of each resolvent solve, ``tol / 100`` by default.
    """
    inner = tol / 100 if resolvent_tol is None else resolvent_tol
    traj_warnings = []
    if not schedule.divergence_certificate:
        traj_warnings.append(f"schedule {schedule} does not certify sum lam_n^2 = inf; convergence not guaranteed")
        warnings.warn(traj_warnings[-1], ScheduleWarning, stacklevel=2)
    traj = proximal_iteration(
        lambda lam, x: resolvent(f, lam, x, inner).point,
        lambda _prev, x, _lam: distance(x, f(x)),
        x0, schedule, max_iter, tol, reference,
    )
    traj.warnings[:0] = traj_warnings
    return traj


class SemigroupQuery(NamedTuple):
    t: float
    tol: float = 1e-8
    n_initial: int = 8


def exponential_formula(step: Callable, x, t: float, tol: float, n_initial: int = 8, *,
                        extrapolate: bool = True, max_n: int = MAX_DOUBLED_N):
    """Evaluate ``lim_n step(t/n, .)^n x`` by doubling ``n``.

    ``step(lam, y, inner_tol)`` must return a point.  On spaces with a chart
    (or an embedding) the powers are combined by Richardson extrapolation in
    the chart at ``x`` (or in the embedding); the estimate is returned once two successive estimates are within
    ``tol``.  Returns ``(point, n, gap)``.
    """
    if not t >= 0:
        raise DomainError(f"semigroup time must be >= 0, got {t}")
    if t == 0:
        return x, 0, 0.0
    space = x.space
    chart = acceleration_chart(space, x) if extrapolate else None
    inner_share = 32 if chart else 4
    n = int(n_initial)
    if n < 1:
        raise DomainError("n_initial must be >= 1")
    rows = []
    prev_est = None
    best = (None, None, math.inf)
    while n <= max_n:
        y = x
        lam = t / n
        inner = tol / (inner_share * n)
        for _ in range(n):
            y = step(lam, y, inner)
        if chart:
            to_vec, from_vec = chart
            row = [to_vec(y)]
            if rows:
                for j in range(1, min(len(rows), MAX_RICHARDSON_ORDER) + 1):
                    row.append(row[j - 1] + (row[j - 1] - rows[-1][j - 1]) / (2**j - 1))
            rows.append(row)
            est = from_vec(row[-1])
        else:
            est = y
        if prev_est is not None:
            gap = space.distance(prev_est, est)
            if gap < best[2]:
                best = (prev_est, est, gap)
            if gap <= tol:
                return est, n, gap
        prev_est = est
        n *= 2
    raise ConvergenceError(f"exponential formula did not settle by n = {max_n} (best gap {best[2]:.3g})",
                           last=best[1], residual=best[2])


def semigroup_apply(f: NonexpansiveMap, x, query, tol: float | None = None, n_initial: int | None = None, *,
                    extrapolate: bool = True, max_n: int = MAX_DOUBLED_N):
    """``T_t x`` for the semigroup generated by ``I - F``.

    ``query`` is either a :class:`SemigroupQuery` or the time ``t``, in which
    case ``tol`` (default 1e-8) and ``n_initial`` (default 8) apply.  Each
    resolvent is solved to ``tol / (4n)`` (``tol / (32n)`` when
    extrapolating) so accumulated inner error stays a fraction of ``tol``.
    """
    if not isinstance(query, SemigroupQuery):
        query = SemigroupQuery(float(query), 1e-8 if tol is None else tol, 8 if n_initial is None else n_initial)
    point, _, _ = exponential_formula(
        lambda lam, y, inner: resolvent(f, lam, y, inner).point,
        x, query.t, query.tol, query.n_initial, extrapolate=extrapolate, max_n=max_n,
    )
    return point


def _check_grid(time_grid):
    grid = [float(t) for t in time_grid]
    if not grid or grid[0] != 0.0:
        raise DomainError("time grid must start at 0")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("time grid must be strictly increasing")
    return grid


def flow_trajectory(step: Callable, residual: Callable, x0, time_grid, tol: float, *, reference=None,
                    energy: Callable | None = None, n_initial: int = 8, extrapolate: bool = True) -> Trajectory:
    """Evaluate a flow on a grid, stepping from each grid point to the next."""
    grid = _check_grid(time_grid)
    traj = Trajectory()
    x = x0
    for i, t in enumerate(grid):
        if i:
            x, _, _ = exponential_formula(step, x, t - grid[i - 1], tol, n_initial, extrapolate=extrapolate)
        fejer = None if reference is None else distance(reference, x)
        traj.samples.append(Sample(i, t, x, residual(x), fejer, None if energy is None else energy(x)))
    traj.converged = traj.final.residual <= tol
    return traj


def semigroup_trajectory(f: NonexpansiveMap, x0, time_grid: Sequence[float], tol: float = 1e-8, *,
                         reference=None, n_initial: int = 8, extrapolate: bool = True) -> Trajectory:
    """``T_t x0`` on an increasing grid starting at 0, using ``T_{s+t} = T_s T_t``.

    Records the residual ``d(T_t x0, F T_t x0)``.  ``converged`` reports
    whether the final residual is within ``tol``.
    """
    return flow_trajectory(
        lambda lam, y, inner: resolvent(f, lam, y, inner).point,
        lambda y: distance(y, f(y)),
        x0, time_grid, tol, reference=reference, n_initial=n_initial, extrapolate=extrapolate,
    )


class FejerResult(NamedTuple):
    passed: bool
    max_violation: float


def fejer_check(traj: Trajectory, ref) -> FejerResult:
    """Check ``d(ref, x_{n+1}) <= d(ref, x_n) (1 + 1e-9)`` along a trajectory."""
    dists = [distance(ref, s.point) for s in traj.samples]
    worst = 0.0
    passed = True
    for a, b in zip(dists, dists[1:]):
        worst = max(worst, b - a)
        if b > a * (1 + 1e-9) + 1e-15:
            passed = False
    return FejerResult(passed, worst)
