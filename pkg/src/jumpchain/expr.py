"""A small, safe expression language for user-supplied densities.

Grammar (Python syntax, restricted):

* numbers, ``pi``, ``e`` and the variables listed below;
* ``+ - * / **``, unary minus, parentheses;
* comparisons ``< <= > >=`` (possibly chained) and ``and`` / ``or`` / ``not``;
* functions ``abs exp log sqrt sin cos tanh gamma min max``, ``ind(cond)``
  (indicator, 1.0 or 0.0) and ``where(cond, a, b)``.

For kernel densities the variables are ``x`` and ``y`` (the two points),
``z = y - x`` and ``r = |y - x|``; in dimension d > 1 the coordinates are
``x1 .. xd``, ``y1 .. yd`` and ``z1 .. zd`` and the bare ``x``, ``y``, ``z``
are unavailable.  Position-only expressions (stability index, drift scale)
see ``x``/``x1 .. xd`` and ``r = |x|``.  Half-spaces and balls are written
as indicators, e.g. ``ind(z > 0)`` or ``ind(r < 1)``.
"""
import ast

import numpy as np
from scipy.special import gamma as _gamma

from .errors import ConfigError

_FUNCS = {
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "gamma": _gamma,
    "min": np.minimum,
    "max": np.maximum,
    "ind": lambda c: np.asarray(c, dtype=float),
    "where": np.where,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.Call,
    ast.Name, ast.Load, ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
    ast.USub, ast.UAdd, ast.Not, ast.And, ast.Or, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


class _Lower(ast.NodeTransformer):
    """Rewrite boolean operators into elementwise numpy calls."""

    def visit_BoolOp(self, node):
        self.generic_visit(node)
        fn = "_and" if isinstance(node.op, ast.And) else "_or"
        out = node.values[0]
        for v in node.values[1:]:
            out = ast.Call(func=ast.Name(id=fn, ctx=ast.Load()), args=[out, v], keywords=[])
        return out

    def visit_UnaryOp(self, node):
        self.generic_visit(node)
        if isinstance(node.op, ast.Not):
            return ast.Call(func=ast.Name(id="_not", ctx=ast.Load()), args=[node.operand], keywords=[])
        return node

    def visit_Compare(self, node):
        self.generic_visit(node)
        if len(node.ops) == 1:
            return node
        parts = []
        left = node.left
        for op, right in zip(node.ops, node.comparators):
            parts.append(ast.Compare(left=left, ops=[op], comparators=[right]))
            left = right
        out = parts[0]
        for p in parts[1:]:
            out = ast.Call(func=ast.Name(id="_and", ctx=ast.Load()), args=[out, p], keywords=[])
        return out


def _compile(text, names):
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"expression {text!r}: construct {type(node).__name__} not allowed")
        if isinstance(node, ast.Name) and node.id not in names and node.id not in _FUNCS \
                and node.id not in _CONSTS:
            raise ConfigError(f"expression {text!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"expression {text!r}: only the documented functions may be called")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"expression {text!r}: only numeric constants allowed")
    tree = ast.fix_missing_locations(_Lower().visit(tree))
    return compile(tree, "<expression>", "eval")


def _namespace():
    ns = {"__builtins__": {}}
    ns.update(_FUNCS)
    ns.update(_CONSTS)
    ns.update(_and=np.logical_and, _or=np.logical_or, _not=np.logical_not)
    return ns


def _coords(prefix, pts, ns):
    d = pts.shape[1]
    if d == 1:
        ns[prefix] = pts[:, 0]
    for i in range(d):
        ns[f"{prefix}{i + 1}"] = pts[:, i]


def pair_expression(text, dim):
    """Compile a density in (x, y); returns ``f(x, y)`` on (N, d) arrays."""
    names = {"r"}
    for p in "xyz":
        if dim == 1:
            names.add(p)
        names.update(f"{p}{i + 1}" for i in range(dim))
    code = _compile(text, names)

    def evaluate(x, y):
        ns = _namespace()
        _coords("x", x, ns)
        _coords("y", y, ns)
        z = y - x
        _coords("z", z, ns)
        ns["r"] = np.linalg.norm(z, axis=1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = eval(code, ns)  # noqa: S307 - AST is whitelisted above
        return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()

    evaluate.source = text
    return evaluate


def point_expression(text, dim):
    """Compile a function of position only; returns ``f(x)`` on (N, d) arrays."""
    names = {"r"} | ({"x"} if dim == 1 else set()) | {f"x{i + 1}" for i in range(dim)}
    code = _compile(text, names)

    def evaluate(x):
        ns = _namespace()
        _coords("x", x, ns)
        ns["r"] = np.linalg.norm(x, axis=1)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = eval(code, ns)  # noqa: S307
        return np.broadcast_to(np.asarray(out, dtype=float), (len(x),)).copy()

    evaluate.source = text
    return evaluate
