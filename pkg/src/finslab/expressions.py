"""Restricted arithmetic expressions over chart coordinates, evaluated on jets or floats."""
from __future__ import annotations

import ast
import math
import re

from . import jets

__all__ = ["ExpressionError", "compile_expression", "FUNCTIONS"]

FUNCTIONS = {
    "sqrt": jets.sqrt,
    "exp": jets.exp,
    "log": jets.log,
    "sin": jets.sin,
    "cos": jets.cos,
    "abs": jets.absolute,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
           ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b,
           ast.Pow: lambda a, b: a ** b}
_UNARY = {ast.USub: lambda a: -a, ast.UAdd: lambda a: a}


class ExpressionError(ValueError):
    pass


def _compile(node, n, params):
    if isinstance(node, ast.Expression):
        return _compile(node.body, n, params)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda x, y: v
    if isinstance(node, ast.Name):
        m = re.fullmatch(r"([xy])(\d+)", node.id)
        if m:
            i = int(m.group(2))
            if i >= n:
                raise ExpressionError(f"coordinate {node.id} out of range for n={n}")
            return (lambda x, y: x[i]) if m.group(1) == "x" else (lambda x, y: y[i])
        if node.id in params:
            v = float(params[node.id])
            return lambda x, y: v
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda x, y: v
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.Subscript) and isinstance(node.value, ast.Name) \
            and node.value.id in ("x", "y"):
        idx = node.slice
        if not (isinstance(idx, ast.Constant) and isinstance(idx.value, int)):
            raise ExpressionError("coordinate indices must be integer literals")
        return _compile(ast.Name(id=f"{node.value.id}{idx.value}"), n, params)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a, b = _compile(node.left, n, params), _compile(node.right, n, params)
        if isinstance(node.op, ast.Pow):
            exponent = node.right
            if not (isinstance(exponent, ast.Constant)
                    or (isinstance(exponent, ast.UnaryOp)
                        and isinstance(exponent.operand, ast.Constant))):
                raise ExpressionError("exponents must be numeric literals")
        return lambda x, y: op(a(x, y), b(x, y))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        a = _compile(node.operand, n, params)
        return lambda x, y: op(a(x, y))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
        fn = FUNCTIONS[node.func.id]
        a = _compile(node.args[0], n, params)
        return lambda x, y: fn(a(x, y))
    raise ExpressionError(f"unsupported construct: {ast.dump(node)[:60]}")


def compile_expression(text, n, params=None):
    """Compile ``text`` into ``f(x, y)`` over lists of coordinates.

    Allowed: numbers, ``x0..``/``y0..`` (or ``x[i]``), named parameters,
    ``pi``, ``e``, + - * / and ``**``/``^`` with literal exponents, and
    sqrt, exp, log, sin, cos, abs.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error in {text!r}: {exc.msg}") from None
    return _compile(tree, n, params or {})
