"""Mini-language for transverse functions on the leaf space CP^1.

Expressions are written over the chart coordinate ``w = x + i y`` and are
parsed with :mod:`ast` against a whitelist.  Every primitive is evaluated
from homogeneous coordinates ``(z1, z2)`` so the same expression can be
sampled on either stereographic chart or pulled back to ``C^n \\ 0``:

==========  ===========================================================
``absw2``   ``|w|^2 = |z2|^2 / |z1|^2``
``h1``      ``(1 - |w|^2) / (1 + |w|^2)``
``re_wK``   ``Re(w^K) / (1 + |w|^2)^K``   (K a positive integer)
``im_wK``   ``Im(w^K) / (1 + |w|^2)^K``
``x, y``    real and imaginary part of ``w``
==========  ===========================================================

Functions ``log`` and ``exp`` and the operators ``+ - * / **`` are allowed.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

_PRIM_RE = re.compile(r"^(re|im)_w(\d+)$")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


class ExpressionError(ValueError):
    """Raised for malformed or unsupported expressions."""


def _check(node: ast.AST) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("unsupported unary operator")
        _check(node.operand)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"unsupported constant {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in ("absw2", "h1", "x", "y") and not _PRIM_RE.match(node.id):
            raise ExpressionError(f"unsupported primitive {node.id!r}")
        m = _PRIM_RE.match(node.id)
        if m and int(m.group(2)) < 1:
            raise ExpressionError(f"unsupported primitive {node.id!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in ("log", "exp"):
            raise ExpressionError("only log() and exp() calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id}() takes exactly one argument")
        _check(node.args[0])
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _walk(node: ast.AST, prim: Callable[[str], Any], fns: dict[str, Callable]) -> Any:
    if isinstance(node, ast.Expression):
        return _walk(node.body, prim, fns)
    if isinstance(node, ast.BinOp):
        a = _walk(node.left, prim, fns)
        b = _walk(node.right, prim, fns)
        op = node.op
        if isinstance(op, ast.Add):
            return a + b
        if isinstance(op, ast.Sub):
            return a - b
        if isinstance(op, ast.Mult):
            return a * b
        if isinstance(op, ast.Div):
            return a / b
        return a**b
    if isinstance(node, ast.UnaryOp):
        v = _walk(node.operand, prim, fns)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return prim(node.id)
    if isinstance(node, ast.Call):
        return fns[node.func.id](_walk(node.args[0], prim, fns))
    raise ExpressionError(f"unsupported syntax {type(node).__name__}")  # pragma: no cover


@dataclass(frozen=True)
class Expression:
    """A parsed transverse function.

    Parameters
    ----------
    source : str
        Text in the mini-language, e.g. ``"0.5*h1"`` or ``"0.1*re_w2"``.
    """

    source: str

    def __post_init__(self) -> None:
        try:
            tree = ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None
        _check(tree)
        object.__setattr__(self, "_tree", tree)

    @property
    def is_zero(self) -> bool:
        body = self._tree.body  # type: ignore[attr-defined]
        return isinstance(body, ast.Constant) and body.value == 0

    def evaluate_homogeneous(self, z1, z2, norm2=None) -> np.ndarray:
        """Evaluate on homogeneous coordinates ``[z1 : z2]``.

        ``norm2`` overrides ``|z1|^2 + |z2|^2`` in the scaled primitives; the
        ambient model passes the full ``|z|^2`` when ``n > 2``.
        """
        z1 = np.asarray(z1, dtype=complex)
        z2 = np.asarray(z2, dtype=complex)
        a1 = np.abs(z1) ** 2
        a2 = np.abs(z2) ** 2
        s = a1 + a2 if norm2 is None else np.asarray(norm2, dtype=float)
        cache: dict[str, np.ndarray] = {}

        def prim(name: str) -> np.ndarray:
            if name in cache:
                return cache[name]
            if name == "absw2":
                val = a2 / a1
            elif name == "h1":
                val = (a1 - a2) / s
            elif name in ("x", "y"):
                w = z2 / z1
                val = w.real if name == "x" else w.imag
            else:
                kind, k = _PRIM_RE.match(name).groups()
                p = (z2 * np.conj(z1)) ** int(k) / s ** int(k)
                val = p.real if kind == "re" else p.imag
            cache[name] = val
            return val

        with np.errstate(divide="ignore", invalid="ignore"):
            out = _walk(self._tree, prim, {"log": np.log, "exp": np.exp})  # type: ignore[attr-defined]
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(z1, z2).shape).copy()

    def evaluate_chart(self, w, chart: int = 0) -> np.ndarray:
        """Evaluate at chart coordinate ``w`` (chart 0) or ``w' = 1/w`` (chart 1)."""
        w = np.asarray(w, dtype=complex)
        one = np.ones_like(w)
        if chart == 0:
            return self.evaluate_homogeneous(one, w)
        return self.evaluate_homogeneous(w, one)

    def to_sympy(self):
        """Return ``(expr, x, y)``: a sympy expression in chart-A coordinates."""
        import sympy as sp

        x, y = sp.symbols("x y", real=True)
        r2 = x**2 + y**2
        w = x + sp.I * y

        def prim(name: str):
            if name == "absw2":
                return r2
            if name == "h1":
                return (1 - r2) / (1 + r2)
            if name == "x":
                return x
            if name == "y":
                return y
            kind, k = _PRIM_RE.match(name).groups()
            p = sp.expand(w ** int(k))
            part = sp.re(p) if kind == "re" else sp.im(p)
            return part / (1 + r2) ** int(k)

        expr = _walk(self._tree, prim, {"log": sp.log, "exp": sp.exp})  # type: ignore[attr-defined]
        return sp.sympify(expr), x, y


def parse(source: str | Expression) -> Expression:
    if isinstance(source, Expression):
        return source
    return Expression(source)
