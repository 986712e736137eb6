"""Command-line front end.

::

    hadaflow ppa --config run.cfg --out run.csv
    hadaflow dirichlet --method flow --config path.cfg

Each command writes CSV records followed by a ``#``-prefixed report footer.
Exit codes: 0 converged, 2 iteration cap reached, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .config import COMMANDS, RunConfig, load_config
from .errors import ConfigError, ConvergenceError, DomainError, StructuralError
from .flows import ScheduleWarning, Trajectory, ppa, semigroup_trajectory
from .markov import conjecture_probe, parse_instance, solve_dirichlet_flow, solve_dirichlet_ppa
from .operators import resolvent_curve, validate_nonexpansive
from .spaces import format_point

EXIT_CODES = {"converged": 0, "max-iterations": 2, "error": 1}
VALIDATION_PAIRS = 64


@dataclass
class RunReport:
    """Outcome of one run.

    ``status`` is one of ``converged``, ``max-iterations`` or ``error``;
    ``iterations`` counts PPA steps, grid times or lambda values depending
    on the command.
    """

    config: RunConfig
    status: str
    iterations: int = 0
    final_residual: float = float("nan")
    wall_clock: float = 0.0
    warnings: list = field(default_factory=list)
    error: str | None = None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def footer(self) -> str:
        """Deterministic footer; the wall-clock time is left out so reruns are byte-identical."""
        lines = ["# " + line for line in self.config.to_text().splitlines()]
        lines += [f"# status: {self.status}", f"# iterations: {self.iterations}",
                  f"# final_residual: {self.final_residual!r}"]
        lines += [f"# warning: {w}" for w in self.warnings]
        if self.error:
            lines.append(f"# error: {self.error}")
        return "\n".join(lines) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _trajectory_result(traj: Trajectory, converged: bool):
    status = "converged" if converged else "max-iterations"
    return traj.to_csv(), status, traj.final.step, traj.final.residual, list(traj.warnings)


def _run_resolvent_curve(c: RunConfig):
    f = c.build_map()
    validate_nonexpansive(f, VALIDATION_PAIRS, c.seed)
    x = c.start_point()
    curve = resolvent_curve(f, x, c.lambda_values(), c.tol)
    rows = [[k, repr(lam), format_point(p), repr(float(d)), repr(float(r)), its]
            for k, (lam, p, d, r, its) in enumerate(zip(curve.lambdas, curve.points, curve.displacements,
                                                        curve.residuals, curve.iterations), 1)]
    text = _rows_csv(["step", "lambda", "point", "displacement", "residual", "iterations"], rows)
    notes = [] if curve.monotone else ["displacement d(x, R_lam x) is not nondecreasing in lambda"]
    return text, "converged", len(rows), curve.residuals[-1], notes


def _run_ppa(c: RunConfig):
    f = c.build_map()
    validate_nonexpansive(f, VALIDATION_PAIRS, c.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleWarning)
        traj = ppa(f, c.start_point(), c.step_schedule(), max_iter=c.iteration_cap(), tol=c.tol)
    return _trajectory_result(traj, traj.converged)


def _run_semigroup(c: RunConfig):
    f = c.build_map()
    validate_nonexpansive(f, VALIDATION_PAIRS, c.seed)
    traj = semigroup_trajectory(f, c.start_point(), c.grid(), c.tol)
    # every grid value was computed to tol; that is what this command promises
    return _trajectory_result(traj, True)


def _load_instance(c: RunConfig):
    return parse_instance(c.instance_path().read_text(), c.space_obj())


def _run_dirichlet(c: RunConfig):
    spec = _load_instance(c)
    if (c.method or "ppa") == "ppa":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScheduleWarning)
            traj = solve_dirichlet_ppa(spec, schedule=c.step_schedule(), tol=c.tol, max_iter=c.iteration_cap())
        return _trajectory_result(traj, traj.converged)
    traj = solve_dirichlet_flow(spec, time_grid=c.grid(), tol=c.tol)
    return _trajectory_result(traj, traj.converged)


def _run_probe(c: RunConfig):
    spec = _load_instance(c)
    rows = conjecture_probe(spec, None, c.grid(), c.tol)
    header = ["t", "gap_t", "gap_half", "gap_double", "energy_flow", "energy_gradient", "energy_gap"]
    text = _rows_csv(header, [[repr(float(v)) for v in row] for row in rows])
    return text, "converged", len(rows), rows[-1].gap_half if rows else 0.0, []


_DISPATCH = {
    "resolvent-curve": _run_resolvent_curve,
    "ppa": _run_ppa,
    "semigroup": _run_semigroup,
    "dirichlet": _run_dirichlet,
    "probe-conjecture": _run_probe,
}


def run(config: RunConfig, out: str | Path | None = None, stream=None) -> RunReport:
    """Execute a validated config and write records plus footer.

    Records go to ``out`` (or ``config.output``); with neither they are
    written to ``stream`` (standard output by default).
    """
    start = time.perf_counter()
    try:
        text, status, iterations, residual, notes = _DISPATCH[config.command](config)
        report = RunReport(config, status, iterations, float(residual), warnings=notes)
    except ConvergenceError as exc:
        text = ""
        report = RunReport(config, "max-iterations", final_residual=float(exc.residual), error=str(exc))
    except (StructuralError, DomainError, ConfigError, OSError) as exc:
        text = ""
        report = RunReport(config, "error", error=str(exc))
    report.wall_clock = time.perf_counter() - start
    target = out if out is not None else config.output
    payload = text + report.footer()
    if target is None:
        (stream or sys.stdout).write(payload)
    else:
        path = Path(target)
        if not path.is_absolute() and out is None:
            path = Path(config.base_dir) / path
        path.write_text(payload)
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hadaflow", description="Resolvents, proximal point iterations and "
                                     "heat flows on Hadamard spaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH", help="output file (default: config 'output' or stdout)")
        p.add_argument("--tol", type=float, metavar="X")
        p.add_argument("--seed", type=int, metavar="N")
        if name == "dirichlet":
            p.add_argument("--method", choices=("ppa", "flow"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigError, StructuralError, DomainError, OSError) as exc:
        print(f"hadaflow: {args.config}: {exc}", file=sys.stderr)
        return 1
    if config.command != args.command:
        print(f"hadaflow: config is for '{config.command}', not '{args.command}'", file=sys.stderr)
        return 1
    overrides = {}
    if args.tol is not None:
        if not args.tol > 0:
            print("hadaflow: --tol must be positive", file=sys.stderr)
            return 1
        overrides["tol"] = float(args.tol)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "method", None):
        overrides["method"] = args.method
    config = dataclasses.replace(config, **overrides)
    report = run(config, args.out)
    summary = (f"{report.status}: {report.iterations} iterations, final residual "
               f"{report.final_residual:.3g}, {report.wall_clock:.2f}s")
    print(summary, file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.error:
        print(f"error: {report.error}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
