"""Coefficient mini-language: arithmetic expressions in x1, x2.

Grammar (EBNF):

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = [ "+" | "-" ] atom ;
    atom    = number | "pi" | "x1" | "x2"
            | ("sin" | "cos" | "exp" | "abs") "(" expr ")"
            | "(" expr ")" ;

Numbers are Python floats.  ``x2`` is only valid on two-dimensional
grids.  Parsing is done with the standard-library ``ast`` module against
a strict node whitelist, so syntax errors carry character positions and
nothing outside the grammar evaluates.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ExpressionError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}

_BINOPS = {ast.Add, ast.Sub, ast.Mult, ast.Div}
_UNARYOPS = {ast.USub, ast.UAdd}


class Expression:
    """A parsed coefficient expression, evaluable on coordinate arrays."""

    def __init__(self, text: str, d_eff: int):
        self.text = text
        self.d_eff = d_eff
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            pos = (exc.offset - 1) if exc.offset else None
            raise ExpressionError(f"syntax error in {text!r}", pos) from None
        self._root = tree.body
        self._validate(self._root)

    def _validate(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError("operator not allowed", node.col_offset)
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARYOPS:
                raise ExpressionError("operator not allowed", node.col_offset)
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError("unknown function", node.col_offset)
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(
                    f"{node.func.id} takes exactly one argument", node.col_offset
                )
            self._validate(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id == "x2" and self.d_eff < 2:
                raise ExpressionError(
                    "x2 is undefined on a one-dimensional grid", node.col_offset
                )
            if node.id not in ("pi", "x1", "x2"):
                raise ExpressionError(f"unknown name {node.id!r}", node.col_offset)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ExpressionError("only numeric literals allowed", node.col_offset)
        else:
            raise ExpressionError(
                "unsupported syntax element", getattr(node, "col_offset", None)
            )

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, env)
            right = self._eval(node.right, env)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if np.any(right == 0):
                raise ExpressionError("division by zero at a node", node.col_offset)
            return left / right
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            return env[node.id]
        return float(node.value)

    def __call__(self, *coords):
        """Evaluate on coordinate arrays (or scalars), one per axis."""
        if len(coords) != self.d_eff:
            raise ValueError(f"expected {self.d_eff} coordinate arrays")
        env = {"pi": math.pi, "x1": coords[0]}
        if self.d_eff == 2:
            env["x2"] = coords[1]
        out = self._eval(self._root, env)
        out = np.asarray(out, dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise ExpressionError(f"expression {self.text!r} is not finite on the grid")
        return out if out.shape else float(out)


def parse_coefficient(text: str, geometry):
    """Sample an expression at the grid nodes as a band-projected field."""
    expr = Expression(text, geometry.d_eff)
    values = expr(*geometry.coordinates())
    values = np.broadcast_to(np.asarray(values, dtype=np.float64), geometry.shape)
    return geometry.field(np.ascontiguousarray(values))
