"""Run configuration files.

A config is a list of ``key: value`` lines; blank lines and ``#`` comments
are ignored and unknown keys are rejected.  Example::

    command: semigroup
    space: euclidean 2
    map: rot90()
    x0: euclidean:1,0
    t-grid: 0..4

Map expressions are small call trees such as
``average([project_subtree([1]), project_subtree([2])], [0.5, 0.5])``; they
are parsed with :mod:`ast` and only the names in :data:`MAP_BUILDERS` are
accepted.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DomainError, StructuralError
from .flows import StepSchedule
from .operators import (
    Composition,
    EuclideanIsometry,
    GeodesicAverage,
    LegPermutation,
    LinearMap,
    NonexpansiveMap,
    ProductMap,
    Projection,
    hyperbolic_boost,
    hyperbolic_rotation,
    rot90,
    rotation,
)
from .spaces import (
    AffineSubspace,
    Euclidean,
    HadamardSpace,
    Hyperbolic,
    HyperbolicSubspace,
    Product,
    Singleton,
    Spider,
    SpiderSubtree,
    WholeSpace,
    format_point,
    format_space,
    parse_point,
    parse_space,
)

COMMANDS = ("resolvent-curve", "ppa", "semigroup", "dirichlet", "probe-conjecture")
MAP_COMMANDS = ("resolvent-curve", "ppa", "semigroup")
METHODS = ("ppa", "flow")

# key order is also the serialization order
KEYS = ("command", "space", "map", "instance", "x0", "lambdas", "schedule", "max-iter", "t-grid",
        "method", "tol", "seed", "output")

DEFAULT_FLOW_GRID = "0.0..64.0:4.0"
DEFAULT_PROBE_GRID = "0.5 1.0 2.0"


# ---------------------------------------------------------------------------
# Map expressions


class _MapError(Exception):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


def _need(space, kind, name, node):
    if not isinstance(space, kind):
        raise _MapError(f"{name} needs a {kind.__name__.lower()} space, got {format_space(space)}", node)


def _point_arg(space, value, node):
    if isinstance(value, str):
        try:
            return parse_point(value, space)
        except (StructuralError, DomainError) as exc:
            raise _MapError(str(exc), node) from None
    if isinstance(space, Euclidean):
        return space.point(value)
    raise _MapError("points outside Euclidean space must be given in text form", node)


def _b_rot90(space, node):
    _need(space, Euclidean, "rot90", node)
    return rot90()


def _b_rotation(space, node, angle):
    _need(space, Euclidean, "rotation", node)
    return rotation(float(angle))


def _b_identity(space, node):
    return Projection(WholeSpace(space))


def _b_linear(space, node, matrix):
    _need(space, Euclidean, "linear", node)
    return LinearMap(matrix)


def _b_isometry(space, node, matrix, shift=None):
    _need(space, Euclidean, "isometry", node)
    return EuclideanIsometry(matrix, shift)


def _b_constant(space, node, point):
    return Projection(Singleton(_point_arg(space, point, node)))


def _b_project_affine(space, node, base, directions=()):
    _need(space, Euclidean, "project_affine", node)
    return Projection(AffineSubspace(space.point(base), directions))


def _b_project_subtree(space, node, legs, caps=None):
    _need(space, Spider, "project_subtree", node)
    return Projection(SpiderSubtree(space, legs, caps))


def _b_project_hyperbolic(space, node, axes):
    _need(space, Hyperbolic, "project_hyperbolic", node)
    return Projection(HyperbolicSubspace(space, axes))


def _b_hyperbolic_rotation(space, node, angle, i=1, j=2):
    _need(space, Hyperbolic, "hyperbolic_rotation", node)
    return hyperbolic_rotation(space, float(angle), int(i), int(j))


def _b_boost(space, node, distance, axis=1):
    _need(space, Hyperbolic, "boost", node)
    return hyperbolic_boost(space, float(distance), int(axis))


def _b_permute_legs(space, node, perm):
    _need(space, Spider, "permute_legs", node)
    return LegPermutation(space, perm)


MAP_BUILDERS = {
    "rot90": _b_rot90,
    "rotation": _b_rotation,
    "identity": _b_identity,
    "linear": _b_linear,
    "isometry": _b_isometry,
    "constant": _b_constant,
    "project_affine": _b_project_affine,
    "project_subtree": _b_project_subtree,
    "project_hyperbolic": _b_project_hyperbolic,
    "hyperbolic_rotation": _b_hyperbolic_rotation,
    "boost": _b_boost,
    "permute_legs": _b_permute_legs,
}
COMBINATORS = ("average", "compose", "product")
CONSTANTS = {"inf": math.inf, "pi": math.pi}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}


def _literal(node):
    """Numbers, strings, nested lists and simple arithmetic on them."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)) \
            and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name) and node.id in CONSTANTS:
        return CONSTANTS[node.id]
    if isinstance(node, (ast.List, ast.Tuple)):
        return [_literal(e) for e in node.elts]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _literal(node.operand)
        if not isinstance(v, (int, float)):
            raise _MapError("sign applied to a non-number", node)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a, b = _literal(node.left), _literal(node.right)
        if not all(isinstance(v, (int, float)) for v in (a, b)):
            raise _MapError("arithmetic on a non-number", node)
        try:
            return _BINOPS[type(node.op)](a, b)
        except ZeroDivisionError:
            raise _MapError("division by zero", node) from None
    raise _MapError(f"unsupported expression {ast.unparse(node)!r}", node)


def _map_list(node, spaces):
    if not isinstance(node, (ast.List, ast.Tuple)):
        raise _MapError("expected a list of maps", node)
    if spaces is not None and len(spaces) != len(node.elts):
        raise _MapError(f"expected {len(spaces)} component maps, got {len(node.elts)}", node)
    return node.elts


def _build(node, space: HadamardSpace) -> NonexpansiveMap:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        raise _MapError("expected a map call such as rot90()", node)
    name = node.func.id
    if name in COMBINATORS:
        return _build_combinator(name, node, space)
    if name not in MAP_BUILDERS:
        raise _MapError(f"unknown map {name!r}", node.func)
    args = [_literal(a) for a in node.args]
    kwargs = {k.arg: _literal(k.value) for k in node.keywords}
    if None in kwargs:
        raise _MapError("** arguments are not allowed", node)
    try:
        return MAP_BUILDERS[name](space, node, *args, **kwargs)
    except TypeError as exc:
        raise _MapError(f"bad arguments to {name}: {exc}", node) from None
    except (StructuralError, DomainError, ValueError) as exc:
        raise _MapError(f"{name}: {exc}", node) from None


def _build_combinator(name, node, space):
    if not node.args:
        raise _MapError(f"{name} needs a list of maps", node)
    if name == "product":
        if not isinstance(space, Product):
            raise _MapError(f"product needs a product space, got {format_space(space)}", node)
        if len(node.args) != 1 or node.keywords:
            raise _MapError("product takes exactly one list of maps", node)
        elts = _map_list(node.args[0], space.factors)
        return ProductMap([_build(e, s) for e, s in zip(elts, space.factors)])
    maps = [_build(e, space) for e in _map_list(node.args[0], None)]
    if name == "compose":
        if len(node.args) != 1 or node.keywords:
            raise _MapError("compose takes exactly one list of maps", node)
        return Composition(maps)
    extra = [_literal(a) for a in node.args[1:]]
    kwargs = {k.arg: _literal(k.value) for k in node.keywords}
    if set(kwargs) - {"weights"} or len(extra) + len(kwargs) > 1:
        raise _MapError("average takes a list of maps and optional weights", node)
    weights = extra[0] if extra else kwargs.get("weights")
    try:
        return GeodesicAverage(maps, weights)
    except (StructuralError, DomainError, ValueError) as exc:
        raise _MapError(f"average: {exc}", node) from None


def _parse_expr(text: str):
    try:
        return ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise _MapError(f"syntax error: {exc.msg}", None) from None


def build_map(expr: str, space: HadamardSpace) -> NonexpansiveMap:
    """Construct the map described by ``expr`` on ``space``.

    >>> build_map("rot90()", Euclidean(2))
    LinearMap([[0.0, -1.0], [1.0, 0.0]])
    """
    try:
        return _build(_parse_expr(expr), space)
    except _MapError as exc:
        col = None if exc.node is None else exc.node.col_offset + 1
        raise ConfigError(str(exc), line=1, column=col or 1) from None


# ---------------------------------------------------------------------------
# Grids and schedules


def parse_grid(text: str) -> tuple[float, ...]:
    """``a..b`` (unit steps), ``a..b:h`` or an explicit list of numbers."""
    text = text.strip()
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        a, b = float(lo), float(hi)
        h = float(step) if step.strip() else 1.0
        if not h > 0 or b < a:
            raise ValueError("range needs a positive step and an upper end >= the lower end")
        n = round((b - a) / h)
        if abs(a + n * h - b) > 1e-9 * max(1.0, abs(b)):
            raise ValueError(f"step {h!r} does not divide {a!r}..{b!r}")
        return tuple(a + k * h if k < n else b for k in range(n + 1))
    return tuple(float(v) for v in text.replace(",", " ").split())


def _canonical_grid(text: str) -> str:
    text = text.strip()
    if ".." in text:
        lo, _, rest = text.partition("..")
        hi, _, step = rest.partition(":")
        parse_grid(text)
        return f"{float(lo)!r}..{float(hi)!r}:{float(step) if step.strip() else 1.0!r}"
    return " ".join(repr(v) for v in parse_grid(text))


def parse_schedule(text: str) -> StepSchedule:
    """``constant lam``, ``power c alpha`` (``lam_n = c n^-alpha``) or ``explicit l1 l2 ...``."""
    parts = text.split()
    if not parts:
        raise ValueError("empty schedule")
    kind, args = parts[0], [float(v) for v in parts[1:]]
    if kind == "constant" and len(args) == 1:
        return StepSchedule.constant(args[0])
    if kind == "power" and len(args) == 2:
        return StepSchedule.power(*args)
    if kind == "explicit" and args:
        return StepSchedule.explicit(args)
    raise ValueError(f"malformed schedule {text!r}; use 'constant L', 'power C ALPHA' or 'explicit L1 L2 ...'")


# ---------------------------------------------------------------------------
# RunConfig


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; every field holds its canonical text form.

    Use the accessor methods (:meth:`space_obj`, :meth:`grid`, ...) for the
    parsed values.  ``base_dir`` locates relative instance paths and takes
    no part in equality or serialization.
    """

    command: str
    space: str | None = None
    map: str | None = None
    instance: str | None = None
    x0: str | None = None
    lambdas: str | None = None
    schedule: str | None = None
    max_iter: int | None = None
    t_grid: str | None = None
    method: str | None = None
    tol: float = 1e-8
    seed: int = 0
    output: str | None = None
    base_dir: str = field(default=".", compare=False)

    def space_obj(self) -> HadamardSpace | None:
        return None if self.space is None else parse_space(self.space)

    def build_map(self) -> NonexpansiveMap:
        return build_map(self.map, self.space_obj())

    def start_point(self):
        return parse_point(self.x0, self.space_obj())

    def lambda_values(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.lambdas.split())

    def step_schedule(self) -> StepSchedule:
        return parse_schedule(self.schedule or "constant 1.0")

    def grid(self) -> tuple[float, ...]:
        default = DEFAULT_PROBE_GRID if self.command == "probe-conjecture" else DEFAULT_FLOW_GRID
        return parse_grid(self.t_grid or default)

    def iteration_cap(self) -> int:
        return 100_000 if self.max_iter is None else self.max_iter

    def instance_path(self) -> Path:
        p = Path(self.instance)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_text(self) -> str:
        """Canonical text; ``parse_config(c.to_text()) == c``."""
        lines = []
        for key in KEYS:
            value = getattr(self, key.replace("-", "_"))
            if value is None:
                continue
            if key == "tol":
                value = repr(float(value))
            lines.append(f"{key}: {value}")
        return "\n".join(lines) + "\n"


def _canonical(key: str, raw: str, space: HadamardSpace | None):
    """Canonical text (or number) for one value; raises ValueError-like errors."""
    if key == "command":
        if raw not in COMMANDS:
            raise ValueError(f"unknown command {raw!r}; expected one of {', '.join(COMMANDS)}")
        return raw
    if key == "space":
        return format_space(parse_space(raw))
    if key == "map":
        if space is None:
            raise ValueError("map needs a 'space:' line")
        build_map(raw, space)
        return ast.unparse(_parse_expr(raw))
    if key == "instance":
        if not raw:
            raise ValueError("empty instance path")
        return raw
    if key == "x0":
        if space is None:
            raise ValueError("x0 needs a 'space:' line")
        p = parse_point(raw, space)
        if p.space != space:
            raise ValueError(f"x0 is not a point of {format_space(space)}")
        return format_point(p)
    if key == "lambdas":
        values = [float(v) for v in raw.replace(",", " ").split()]
        if not values:
            raise ValueError("lambdas needs at least one value")
        if any(not v > 0 for v in values):
            raise ValueError("lambdas must be positive step sizes (resolvent needs a positive step)")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("lambdas must be strictly increasing")
        return " ".join(repr(v) for v in values)
    if key == "schedule":
        try:
            return str(parse_schedule(raw))
        except DomainError as exc:
            raise ValueError(str(exc)) from None
    if key == "max-iter":
        n = int(raw)
        if n < 1:
            raise ValueError("max-iter must be >= 1")
        return n
    if key == "t-grid":
        canon = _canonical_grid(raw)
        grid = parse_grid(canon)
        if not grid or any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("t-grid must be non-negative and strictly increasing")
        return canon
    if key == "method":
        if raw not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}")
        return raw
    if key == "tol":
        tol = float(raw)
        if not tol > 0 or not math.isfinite(tol):
            raise ValueError("tol must be positive (invariant tol > 0)")
        return tol
    if key == "seed":
        return int(raw)
    if key == "output":
        return raw
    raise AssertionError(key)


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and validate a config.

    Raises
    ------
    ConfigError
        With the 1-based line and column of the offending token.
    """
    entries = {}
    for n, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        key, sep, value = body.partition(":")
        indent = len(key) - len(key.lstrip())
        if not sep:
            raise ConfigError(f"expected 'key: value', got {body.strip()!r}", line=n, column=indent + 1)
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", line=n, column=indent + 1)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", line=n, column=indent + 1)
        vcol = len(key) + indent + 1 + (len(value) - len(value.lstrip())) + 1
        entries[key] = (value.strip(), n, vcol)

    if "command" not in entries:
        raise ConfigError("missing 'command:'", line=1, column=1)
    space = None
    values = {}
    for key in KEYS:
        if key not in entries:
            continue
        raw, n, col = entries[key]
        try:
            values[key] = _canonical(key, raw, space)
        except ConfigError as exc:
            # map expressions report their own column within the value
            raise ConfigError(exc.message, line=n, column=col + (exc.column or 1) - 1) from None
        except (ValueError, StructuralError, DomainError) as exc:
            raise ConfigError(str(exc), line=n, column=col) from None
        if key == "space":
            space = parse_space(values[key])
    config = RunConfig(**{k.replace("-", "_"): v for k, v in values.items()}, base_dir=str(base_dir))
    _validate(config, entries)
    return config


def _validate(c: RunConfig, entries):
    def fail(message, key=None):
        n, col = (entries[key][1], entries[key][2]) if key in entries else (entries["command"][1], 1)
        raise ConfigError(message, line=n, column=col)

    if (c.map is None) == (c.instance is None):
        fail("exactly one instance source per run: give either 'map:' or 'instance:'",
             "map" if c.map is not None else "instance")
    if c.command in MAP_COMMANDS:
        if c.map is None:
            fail(f"{c.command} needs 'map:'", "instance")
        if c.x0 is None:
            fail(f"{c.command} needs 'x0:'")
        if c.command == "resolvent-curve" and c.lambdas is None:
            fail("resolvent-curve needs 'lambdas:'")
        if c.command == "semigroup" and c.t_grid is None:
            fail("semigroup needs 't-grid:'")
    else:
        if c.instance is None:
            fail(f"{c.command} needs 'instance:'", "map")
        if c.x0 is not None:
            fail("x0 is taken from the instance file", "x0")
    if c.command == "semigroup" and parse_grid(c.t_grid)[0] != 0.0:
        fail("t-grid must start at 0", "t-grid")
    if c.command == "dirichlet" and c.t_grid is not None and parse_grid(c.t_grid)[0] != 0.0:
        fail("t-grid must start at 0", "t-grid")
    if c.method is not None and c.command != "dirichlet":
        fail("method applies only to dirichlet", "method")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


__all__ = ["RunConfig", "parse_config", "load_config", "build_map", "parse_grid", "parse_schedule",
           "MAP_BUILDERS", "COMMANDS"]
