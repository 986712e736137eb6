"""Acceptance criteria, one ``test_criterion_N_*`` group per criterion.

A ``criterion N: PASS/FAIL`` summary line per criterion is printed at the
end of the run (see ``conftest.py``).
"""

import csv
import io
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from hadaflow import (
    DirichletEnergy,
    DirichletSpec,
    Euclidean,
    LinearMap,
    MarkovKernel,
    QuadraticFunctional,
    StepSchedule,
    conjecture_probe,
    d2,
    dirichlet_operator,
    distance,
    fejer_check,
    gradient_flow,
    markov_apply,
    parse_instance,
    ppa,
    resolvent,
    resolvent_curve,
    semigroup_apply,
    semigroup_trajectory,
    solve_dirichlet_flow,
    solve_dirichlet_ppa,
    spectral_bound,
)
from hadaflow.cli import main
from hadaflow.fixtures import all_fixtures, path_graph_spec, star_spider_spec
from hadaflow.markov import FieldSpace
from hadaflow.operators import Projection

from conftest import BACKENDS

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
ALL = all_fixtures()
MAPS = [fx for fx in ALL if not fx.name.startswith("markov")]
BY_BACKEND = {
    "euclidean": [fx for fx in MAPS if fx.name.startswith("euclidean")],
    "hyperbolic": [fx for fx in MAPS if fx.name.startswith("hyperbolic")],
    "spider": [fx for fx in MAPS if fx.name.startswith("spider")],
    "product": [fx for fx in MAPS if fx.name.startswith("product")],
}
Q_PATH = np.array([[0.0, 0.5], [0.5, 0.0]])
HARMONIC = np.array([1.0, 2.0])


def random_linear_map(rng, n):
    """Random orthogonal matrix, orthogonal projector, or a convex combination of the two."""
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    q = q * np.sign(np.diag(r))
    basis, _ = np.linalg.qr(rng.normal(size=(n, rng.integers(0, n + 1))))
    proj = basis @ basis.T
    kind = rng.integers(3)
    if kind == 0:
        return q
    if kind == 1:
        return proj
    w = rng.uniform()
    return w * q + (1 - w) * proj


def interior_values(f):
    return np.array([f.values[1].coords[0], f.values[2].coords[0]])


def csv_records(text):
    body = "\n".join(ln for ln in text.splitlines() if ln and not ln.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


# --- 1 ----------------------------------------------------------------------


def test_criterion_1_resolvent_linear_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a = random_linear_map(rng, n)
        lam = float(10 ** rng.uniform(-3, 3))
        x = rng.uniform(-10, 10, n)
        y = resolvent(LinearMap(a), lam, Euclidean(n).point(x), tol=1e-10).point.coords
        oracle = np.linalg.solve(np.eye(n) + lam * (np.eye(n) - a), x)
        worst = max(worst, float(np.linalg.norm(y - oracle)))
    print(f"max resolvent error {worst:.3g}")
    assert worst <= 1e-7


# --- 2 ----------------------------------------------------------------------


@pytest.mark.parametrize("backend", sorted(BY_BACKEND))
def test_criterion_2_resolvent_displacement_bound(backend):
    rng = np.random.default_rng(7)
    fixtures = BY_BACKEND[backend]
    for k in range(250):  # 4 x 250 = 10^3 instances
        fx = fixtures[k % len(fixtures)]
        x = fx.x0.space.random_point(rng, 3.0)
        lam = float(10 ** rng.uniform(-3, 3))
        r = resolvent(fx.map, lam, x, tol=1e-12).point
        assert distance(x, r) <= lam * distance(x, fx.map(x)) * (1 + 1e-6), (fx.name, lam)


# --- 3 ----------------------------------------------------------------------

LIMIT_CASES = [fx for fx in MAPS if isinstance(fx.map, Projection) or fx.name == "euclidean-rot90"]


@pytest.mark.parametrize("fx", LIMIT_CASES, ids=lambda f: f.name)
def test_criterion_3_resolvent_limit_is_projection(fx):
    rng = np.random.default_rng(3)
    lams = [10.0 ** k for k in range(7)]
    starts = [fx.x0] + [fx.x0.space.random_point(rng, 3.0) for _ in range(5)]
    for x in starts:
        target = fx.map(x) if isinstance(fx.map, Projection) else fx.fixed_point
        curve = resolvent_curve(fx.map, x, lams, tol=1e-12)
        assert curve.monotone
        assert np.all(np.diff(curve.displacements) >= 0)
        assert distance(curve.points[-1], target) <= 1e-4


# --- 4 ----------------------------------------------------------------------


@pytest.mark.parametrize("schedule", [StepSchedule.constant(1.0), StepSchedule.power(1.0, 0.5)], ids=str)
@pytest.mark.parametrize("fx", ALL, ids=lambda f: f.name)
def test_criterion_4_ppa_converges(fx, schedule):
    traj = ppa(fx.map, fx.x0, schedule, max_iter=100_000, tol=1e-6, reference=fx.fixed_point)
    assert traj.converged and traj.final.residual <= 1e-6
    assert np.all(np.diff(traj.residuals) <= 0.0)
    assert fejer_check(traj, fx.fixed_point).passed


# --- 5 ----------------------------------------------------------------------


def test_criterion_5_semigroup_matrix_exponential():
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        a = random_linear_map(rng, n)
        x = rng.uniform(-10, 10, n)
        for t in (0.1, 1.0, 10.0):
            y = semigroup_apply(LinearMap(a), Euclidean(n).point(x), t, tol=1e-8).coords
            worst = max(worst, float(np.linalg.norm(y - expm(-t * (np.eye(n) - a)) @ x)))
    print(f"max semigroup error {worst:.3g}")
    assert worst <= 1e-6


@pytest.mark.parametrize("backend", sorted(BY_BACKEND))
def test_criterion_5_semigroup_displacement_and_law(backend):
    rng = np.random.default_rng(5)
    tol = 1e-8
    for fx in BY_BACKEND[backend]:
        for _ in range(3):
            x = fx.x0.space.random_point(rng, 2.0)
            for t in (0.1, 1.0, 10.0):
                assert distance(x, semigroup_apply(fx.map, x, t, tol=tol)) <= t * distance(x, fx.map(x)) * (1 + 1e-6)
        x = fx.x0.space.random_point(rng, 2.0)
        s, t = 0.4, 0.7
        whole = semigroup_apply(fx.map, x, s + t, tol=tol)
        split = semigroup_apply(fx.map, semigroup_apply(fx.map, x, t, tol=tol), s, tol=tol)
        assert distance(whole, split) <= 5 * tol, fx.name


# --- 6 ----------------------------------------------------------------------


@pytest.mark.parametrize("fx", ALL, ids=lambda f: f.name)
def test_criterion_6_semigroup_residual_decays(fx):
    grid = [0, 0.5, 1, 2, 5, 10, 20, 30, 40, 50]
    traj = semigroup_trajectory(fx.map, fx.x0, grid, tol=1e-8)
    assert traj.final.residual <= 1e-4
    assert np.all(np.diff(traj.residuals) <= 0.0)


# --- 7 ----------------------------------------------------------------------


@pytest.mark.parametrize("method", ["ppa", "flow"])
def test_criterion_7_dirichlet_path_via_cli(method, tmp_path):
    out = tmp_path / f"path_{method}.csv"
    code = main(["dirichlet", "--config", str(FIXTURES / "dirichlet_path.cfg"), "--method", method,
                 "--out", str(out)])
    assert code == 0
    last = csv_records(out.read_text())[-1]["point"]
    values = [float(v.split(":")[1]) for v in last.split("|")]
    assert [f"{v:.6f}" for v in values[1:3]] == ["1.000000", "2.000000"]
    np.testing.assert_allclose(values[1:3], HARMONIC, atol=1e-6)
    assert values[0] == 0.0 and values[3] == 3.0


def test_criterion_7_spectral_bounds():
    spec = parse_instance((FIXTURES / "path_graph.instance").read_text())
    assert abs(spectral_bound(spec, 1) - 0.5) <= 1e-9
    assert abs(spectral_bound(spec, 2) - 0.75) <= 1e-9


# --- 8 ----------------------------------------------------------------------


def spider_grid(legs, r_max, step):
    """Hub plus every ``(leg, k * step)``; returns leg labels (0 for the hub) and radii."""
    r = np.arange(1, round(r_max / step) + 1) * step
    leg = np.concatenate([[0], np.repeat(np.arange(1, legs + 1), len(r))])
    rad = np.concatenate([[0.0], np.tile(r, legs)])
    return leg, rad


def spider_dist(leg_a, r_a, leg_b, r_b):
    same = (leg_a == leg_b) | (leg_a == 0) | (leg_b == 0)
    return np.where(same, np.abs(r_a - r_b), r_a + r_b)


def grid_search_star(spec, step=1e-3, r_max=1.5):
    """Brute-force minimizer of the Dirichlet energy over spider grid points for the two free states."""
    free = list(spec.interior)
    assert len(free) == 2
    fixed = spec.boundary
    w = spec.kernel.mu[:, None] * spec.kernel.p  # w_ij; each unordered pair enters the energy once
    leg, rad = spider_grid(spec.target.legs, r_max, step)

    def to_grid(p):
        leg, r = p.coords
        return (0, 0.0) if r == 0 else (leg, r)

    def boundary_cost(i):
        cost = np.zeros(len(leg))
        for j in fixed:
            if w[i, j] > 0:
                lj, rj = to_grid(spec.anchor[j])
                cost += w[i, j] * spider_dist(leg, rad, lj, rj) ** 2
        return cost

    cu, cv = boundary_cost(free[0]), boundary_cost(free[1])
    best, arg = math.inf, None
    chunk = 500
    for s in range(0, len(leg), chunk):
        lu, ru = leg[s:s + chunk, None], rad[s:s + chunk, None]
        e = cu[s:s + chunk, None] + cv[None, :] + w[free[0], free[1]] * spider_dist(lu, ru, leg[None], rad[None]) ** 2
        k = int(np.argmin(e))
        if e.flat[k] < best:
            best, arg = float(e.flat[k]), (s + k // len(leg), k % len(leg))
    return [(int(leg[i]), float(rad[i])) for i in arg]


def test_criterion_8_star_into_spider():
    spec = parse_instance((FIXTURES / "star_spider.instance").read_text())
    traj = solve_dirichlet_ppa(spec, tol=1e-8)
    assert traj.converged
    oracle = grid_search_star(spec)
    target = spec.target
    for i, (leg, r) in zip(spec.interior, oracle):
        expected = target.hub() if r == 0 else target.point(leg, r)
        assert distance(traj.final.point.values[i], expected) <= 1e-4
        assert distance(traj.final.point.values[i], target.hub()) <= 1e-4


def random_kernel(rng, m):
    w = np.triu(rng.uniform(0, 1, (m, m)) * (rng.uniform(size=(m, m)) < 0.6), 1)
    w[np.arange(m - 1), np.arange(1, m)] += 0.1
    return MarkovKernel.from_weights(w + w.T + np.diag(rng.uniform(0.05, 1, m)))


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_criterion_8_markov_nonexpansive(backend):
    target = BACKENDS[backend]
    rng = np.random.default_rng(8)
    m = 4
    for _ in range(1000):
        k = random_kernel(rng, m)
        free = FieldSpace(k, target)
        f = free.field([target.random_point(rng, 2.0) for _ in range(m)])
        g = free.field([target.random_point(rng, 2.0) for _ in range(m)])
        assert d2(markov_apply(k, f), markov_apply(k, g)) <= d2(f, g) * (1 + 1e-9)
        spec = DirichletSpec(k, [0, 2], f.values)
        gd = spec.field([g.values[0], f.values[1], g.values[2], f.values[3]])
        fd = spec.initial_field()
        assert d2(dirichlet_operator(spec, fd), dirichlet_operator(spec, gd)) <= d2(fd, gd) * (1 + 1e-9)


# --- 9 ----------------------------------------------------------------------


def test_criterion_9_probe_half_time_on_path():
    spec = path_graph_spec()
    times = [0.5, 1.0, 2.0]
    f0 = np.zeros(2)
    rows = conjecture_probe(spec, None, times, tol=1e-10)
    flow = solve_dirichlet_flow(spec, time_grid=[0.0, *times], tol=1e-10)
    grad = gradient_flow(DirichletEnergy(spec), spec.initial_field(), [0.0, 0.25, 0.5, 1.0], tol=1e-10)
    for row, t, heat in zip(rows, times, flow.samples[1:]):
        t_oracle = HARMONIC + expm(-t * (np.eye(2) - Q_PATH)) @ (f0 - HARMONIC)
        s_oracle = HARMONIC + expm(-2 * (t / 2) * (np.eye(2) - Q_PATH)) @ (f0 - HARMONIC)
        assert np.linalg.norm(t_oracle - s_oracle) <= 1e-12
        np.testing.assert_allclose(interior_values(heat.point), t_oracle, atol=1e-8)
        s_half = next(s for s in grad if s.time == t / 2)
        np.testing.assert_allclose(interior_values(s_half.point), s_oracle, atol=1e-8)
        assert row.t == t and row.gap_half <= 1e-6


def test_criterion_9_spider_probe_runs(tmp_path):
    out = tmp_path / "probe.csv"
    assert main(["probe-conjecture", "--config", str(FIXTURES / "probe_star.cfg"), "--out", str(out)]) == 0
    rows = csv_records(out.read_text())
    assert [float(r["t"]) for r in rows] == [0.5, 1.0, 2.0]
    assert all(math.isfinite(float(v)) for r in rows for v in r.values())


# --- 10 ---------------------------------------------------------------------


def quadratic_fixtures():
    rng = np.random.default_rng(10)
    b = rng.normal(size=(3, 2))
    return [
        (QuadraticFunctional(np.eye(2)), Euclidean(2).point([2.0, 0.0])),
        (QuadraticFunctional(np.diag([0.0, 2.0]), offset=[0.0, 1.0]), Euclidean(2).point([3.0, -2.0])),
        (QuadraticFunctional(b @ b.T, offset=[1.0, -1.0, 0.5]), Euclidean(3).point([4.0, 2.0, -3.0])),
    ]


def random_field(spec, rng, scale):
    values = list(spec.anchor)
    for i in spec.interior:
        values[i] = spec.target.random_point(rng, scale)
    return spec.field(values)


def functional_instances():
    out = [(phi, x0, lambda rng, x0=x0: x0.space.random_point(rng, 8.0)) for phi, x0 in quadratic_fixtures()]
    for spec in (path_graph_spec((-2.0, 5.0)), star_spider_spec()):
        out.append((DirichletEnergy(spec), spec.initial_field(), lambda rng, spec=spec: random_field(spec, rng, 3.0)))
    return out


@pytest.mark.parametrize("k", range(5), ids=["half-norm", "valley", "random-quadratic", "path-energy", "star-energy"])
def test_criterion_10_energy_flow(k):
    phi, x0, sample = functional_instances()[k]
    space = x0.space
    rng = np.random.default_rng(100 + k)
    tol = 1e-10
    for lam in (0.1, 1.0, 10.0):
        j = phi.prox(lam, x0, tol)
        best = phi(j) + space.distance(x0, j) ** 2 / (2 * lam)
        for _ in range(1000):
            y = sample(rng)
            assert best <= phi(y) + space.distance(x0, y) ** 2 / (2 * lam) + 1e-8
    traj = gradient_flow(phi, x0, [0.0, 0.25, 0.5, 1.0, 2.0, 4.0], tol=1e-8)
    assert np.all(np.diff(traj.energies) <= 1e-9)


def test_criterion_10_resolvent_limit_on_quadratics():
    for phi, x0 in quadratic_fixtures():
        j = phi.prox(1e6, x0)
        assert distance(j, phi.minimizer_projection(x0)) <= 1e-4
