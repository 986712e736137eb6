import csv
import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from hadaflow import ConvergenceError, DomainError, Euclidean, Spider
from hadaflow.fixtures import all_fixtures, path_graph_spec, spider_fixtures
from hadaflow.flows import (
    ScheduleWarning,
    SemigroupQuery,
    StepSchedule,
    exponential_formula,
    fejer_check,
    ppa,
    semigroup_apply,
    semigroup_trajectory,
)
from hadaflow.markov import DirichletOperator
from hadaflow.operators import LinearMap, Projection, constant, resolvent, rot90
from hadaflow.spaces import AffineSubspace, distance

from conftest import seeds

E2 = Euclidean(2)
A90 = np.array([[0.0, -1.0], [1.0, 0.0]])
LINE = Projection(AffineSubspace(E2.origin(), [[1.0, 0.0]]))
MAP_FIXTURES = [f for f in all_fixtures() if not f.name.startswith("markov")]


def linear_semigroup(a, t, x):
    return expm(-t * (np.eye(len(x)) - a)) @ x


# --- schedules --------------------------------------------------------------


def test_schedule_values():
    assert StepSchedule.constant(2.0)(7) == 2.0
    assert StepSchedule.power(1.0, 0.5)(4) == 0.5
    assert StepSchedule.explicit([3, 2, 1])(2) == 2.0


@pytest.mark.parametrize("schedule, squares, plain", [
    (StepSchedule.constant(1.0), True, True),
    (StepSchedule.power(1.0, 0.5), True, True),
    (StepSchedule.power(1.0, 0.75), False, True),
    (StepSchedule.power(1.0, 2.0), False, False),
    (StepSchedule.explicit([1.0, 1.0]), False, False),
])
def test_divergence_certificates(schedule, squares, plain):
    assert schedule.divergence_certificate is squares
    assert schedule.sum_diverges is plain


@pytest.mark.parametrize("make", [lambda: StepSchedule.constant(0.0), lambda: StepSchedule.power(-1, 0.5),
                                  lambda: StepSchedule.explicit([1.0, -2.0])])
def test_schedule_needs_positive_steps(make):
    with pytest.raises(DomainError, match="positive step"):
        make()


# --- proximal point algorithm ------------------------------------------------


def test_ppa_rot90_iterates_match_matrix_oracle():
    traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.constant(1.0), tol=1e-10)
    inv = np.linalg.inv(2 * np.eye(2) - A90)
    x = np.array([1.0, 0.0])
    for sample in traj.samples[:6]:
        np.testing.assert_allclose(sample.point.coords, x, atol=1e-11)
        x = inv @ x
    np.testing.assert_allclose(traj.samples[1].point.coords, [0.4, 0.2], atol=1e-12)
    np.testing.assert_allclose(traj.samples[2].point.coords, [0.12, 0.16], atol=1e-12)
    assert traj.converged
    assert traj.final.residual <= 1e-10
    assert distance(traj.final.point, E2.origin()) <= 1e-10


def test_ppa_from_fixed_point_stops_immediately():
    x = E2.point([2, 0])
    traj = ppa(LINE, x, StepSchedule.constant(1.0))
    assert len(traj) == 1 and traj.converged and traj.final.point == x


def test_ppa_markov_path_reaches_harmonic_map():
    spec = path_graph_spec()
    traj = ppa(DirichletOperator(spec), spec.initial_field(), StepSchedule.constant(1.0), tol=1e-10)
    interior = [traj.final.point.values[i].coords[0] for i in spec.interior]
    q = np.array([[0.0, 0.5], [0.5, 0.0]])
    oracle = np.linalg.solve(np.eye(2) - q, [0.0, 1.5])
    np.testing.assert_allclose(interior, oracle, atol=1e-9)


def test_ppa_cap_gives_unconverged_trajectory():
    traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.constant(1e-3), max_iter=5)
    assert not traj.converged
    assert len(traj) == 6


def test_ppa_explicit_schedule_runs_out():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.explicit([0.1, 0.1]))
    assert not traj.converged and len(traj) == 3


def test_ppa_warns_without_certificate():
    with pytest.warns(ScheduleWarning):
        traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.power(1.0, 1.0), max_iter=10)
    assert any("sum lam_n^2" in w for w in traj.warnings)


@given(seed=seeds, c=st.floats(0.05, 5.0), alpha=st.floats(0.0, 1.5))
@settings(max_examples=25)
def test_ppa_residuals_nonincreasing(seed, c, alpha):
    fx = MAP_FIXTURES[seed % len(MAP_FIXTURES)]
    x0 = fx.x0.space.random_point(np.random.default_rng(seed), 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        traj = ppa(fx.map, x0, StepSchedule.power(c, alpha), max_iter=200, tol=1e-9, resolvent_tol=1e-12)
    r = traj.residuals
    assert np.all(r[1:] <= r[:-1] + 1e-9)


@pytest.mark.parametrize("fx", MAP_FIXTURES, ids=lambda f: f.name)
def test_ppa_energy_telescoping(fx):
    traj = ppa(fx.map, fx.x0, StepSchedule.constant(0.7), max_iter=300, tol=1e-9, resolvent_tol=1e-12)
    p = fx.fixed_point
    pts = traj.points
    for a, b in zip(pts, pts[1:]):
        assert distance(a, b) ** 2 <= distance(p, a) ** 2 - distance(p, b) ** 2 + 1e-9


# --- semigroup --------------------------------------------------------------


def test_semigroup_constant_map():
    y = semigroup_apply(constant(E2.origin()), E2.point([1, 0]), SemigroupQuery(1.0, 1e-9))
    np.testing.assert_allclose(y.coords, [math.exp(-1), 0.0], atol=1e-8)


def test_semigroup_time_zero_is_identity():
    x = E2.point([1, 2])
    assert semigroup_apply(rot90(), x, 0.0) is x


def test_semigroup_rot90():
    y = semigroup_apply(rot90(), E2.point([1, 0]), 1.0, tol=1e-9)
    expected = math.exp(-1) * np.array([math.cos(1), math.sin(1)])
    np.testing.assert_allclose(y.coords, expected, atol=1e-8)
    np.testing.assert_allclose(y.coords, [0.19877, 0.30956], atol=1e-5)


def test_semigroup_negative_time():
    with pytest.raises(DomainError):
        semigroup_apply(rot90(), E2.point([1, 0]), -1.0)


def test_plain_doubling_agrees_with_extrapolation():
    x = E2.point([1, 0])
    a = semigroup_apply(rot90(), x, 1.0, tol=1e-4, extrapolate=False)
    b = semigroup_apply(rot90(), x, 1.0, tol=1e-9)
    assert distance(a, b) <= 1e-3


def test_doubling_cap_raises_with_best_pair():
    with pytest.raises(ConvergenceError) as info:
        semigroup_apply(rot90(), E2.point([1, 0]), 1.0, tol=1e-12, extrapolate=False, max_n=64)
    assert info.value.last is not None and info.value.residual > 1e-12


@given(seed=seeds, t=st.sampled_from([0.1, 0.5, 1.0, 3.0]), n=st.integers(1, 5))
@settings(max_examples=15)
def test_semigroup_matches_matrix_exponential(seed, t, n):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    e = Euclidean(n)
    x = rng.uniform(-10, 10, n)
    y = semigroup_apply(LinearMap(q), e.point(x), t, tol=1e-8)
    assert np.linalg.norm(y.coords - linear_semigroup(q, t, x)) <= 10 * 1e-8


@pytest.mark.parametrize("fx", MAP_FIXTURES, ids=lambda f: f.name)
def test_semigroup_displacement_bound(fx):
    rng = np.random.default_rng(2)
    tol = 1e-8
    for t in (0.3, 1.5):
        x = fx.x0.space.random_point(rng, 2.0)
        y = semigroup_apply(fx.map, x, t, tol=tol)
        assert distance(x, y) <= t * distance(x, fx.map(x)) * (1 + 1e-6) + tol


@pytest.mark.parametrize("fx", MAP_FIXTURES, ids=lambda f: f.name)
def test_semigroup_law_and_nonexpansive(fx):
    rng = np.random.default_rng(6)
    tol = 1e-8
    x, z = fx.x0.space.random_point(rng, 2.0), fx.x0.space.random_point(rng, 2.0)
    s, t = 0.4, 0.7
    ts = semigroup_apply(fx.map, x, s + t, tol=tol)
    step = semigroup_apply(fx.map, semigroup_apply(fx.map, x, t, tol=tol), s, tol=tol)
    assert distance(ts, step) <= 5 * tol
    tz = semigroup_apply(fx.map, z, s + t, tol=tol)
    assert distance(ts, tz) <= distance(x, z) * (1 + 1e-6) + 2 * tol


def test_trajectory_projection_decays_exponentially():
    grid = [0, 1, 2, 4, 8]
    traj = semigroup_trajectory(LINE, E2.point([0, 1]), grid, tol=1e-10)
    for t, p in zip(grid, traj.points):
        assert p.coords[1] == pytest.approx(math.exp(-t), abs=1e-9)
    assert np.all(np.diff(traj.residuals) < 0)


def test_trajectory_first_record_is_input():
    x = E2.point([0.1, 0.3])
    traj = semigroup_trajectory(rot90(), x, [0, 1])
    assert traj.samples[0].point is x and traj.samples[0].time == 0.0


def test_trajectory_at_fixed_point_is_constant():
    x = E2.point([4, 0])
    traj = semigroup_trajectory(LINE, x, [0, 1, 2])
    assert all(p == x for p in traj.points)
    assert np.all(traj.residuals == 0)


def test_trajectory_grid_checked():
    with pytest.raises(DomainError):
        semigroup_trajectory(rot90(), E2.point([1, 0]), [1, 2])
    with pytest.raises(DomainError):
        semigroup_trajectory(rot90(), E2.point([1, 0]), [0, 2, 1])


def test_spider_trajectory_approaches_hub():
    fx = spider_fixtures()[0]
    s3 = fx.x0.space
    traj = semigroup_trajectory(fx.map, fx.x0, [0, 0.5, 1, 2, 4, 8], tol=1e-5)
    r = traj.residuals
    assert np.all(r[1:] <= r[:-1] + 1e-8)
    assert distance(traj.final.point, s3.hub()) < distance(fx.x0, s3.hub())
    # backward Euler with small steps approximates the same flow at t = 1
    y = fx.x0
    for _ in range(2000):
        y = resolvent(fx.map, 1 / 2000, y, 1e-12).point
    assert distance(y, traj.points[2]) <= 1e-3


# --- Fejer monotonicity -----------------------------------------------------


def test_fejer_rot90_ppa():
    traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.constant(1.0), reference=E2.origin())
    result = fejer_check(traj, E2.origin())
    assert result.passed
    d = [s.fejer_distance for s in traj.samples]
    assert d[0] == 1.0 and d[1] == pytest.approx(1 / math.sqrt(5), rel=1e-12)
    assert all(b < a for a, b in zip(d, d[1:]))


def test_fejer_constant_trajectory():
    x = E2.point([1, 0])
    assert fejer_check(ppa(LINE, x, StepSchedule.constant(1.0)), x).passed


def test_fejer_detects_violation():
    traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.constant(1.0))
    assert not fejer_check(traj, E2.point([0.4, 0.2])).passed


@pytest.mark.parametrize("fx", MAP_FIXTURES, ids=lambda f: f.name)
def test_fejer_semigroup(fx):
    tol = 1e-8
    traj = semigroup_trajectory(fx.map, fx.x0, [0, 0.5, 1, 2], tol=tol)
    assert fejer_check(traj, fx.fixed_point).passed


# --- export -----------------------------------------------------------------


def test_trajectory_csv():
    traj = ppa(rot90(), E2.point([1, 0]), StepSchedule.constant(1.0), reference=E2.origin())
    rows = list(csv.DictReader(io.StringIO(traj.to_csv())))
    assert list(rows[0]) == ["step", "time", "point", "residual", "fejer_distance"]
    assert rows[1]["point"].startswith("euclidean:")
    np.testing.assert_allclose([float(v) for v in rows[1]["point"][len("euclidean:"):].split(",")], [0.4, 0.2])
    assert len(rows) == len(traj)
    assert float(rows[0]["fejer_distance"]) == 1.0


def test_spider_trajectory_csv_round_trips_points():
    from hadaflow.spaces import parse_point

    s3 = Spider(3)
    fx = spider_fixtures()[0]
    traj = ppa(fx.map, fx.x0, StepSchedule.constant(1.0))
    rows = list(csv.DictReader(io.StringIO(traj.to_csv())))
    for row, p in zip(rows, traj.points):
        assert parse_point(row["point"], s3) == p


def test_exponential_formula_rejects_bad_n():
    with pytest.raises(DomainError):
        exponential_formula(lambda lam, y, inner: y, E2.origin(), 1.0, 1e-8, n_initial=0)
