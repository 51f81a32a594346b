"""Expression strings to vectorized callables.

Problem files describe coefficients as strings in a small symbolic language
(sympy syntax).  Derivatives are taken symbolically.  The parser evaluates
Python syntax, so problem files must come from a trusted source.
"""
from __future__ import annotations

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import parse_expr

SYMBOLS = {name: sp.Symbol(name, real=True) for name in ("t", "x", "u", "p", "q", "u1", "u2")}

_FUNCTIONS = {
    name: getattr(sp, name)
    for name in (
        "sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh",
        "atan", "asin", "acos", "Abs", "pi", "E", "Rational", "Integer", "Float",
        "Symbol", "Piecewise", "Min", "Max", "sign",
    )
}


def parse(text, allowed: tuple[str, ...]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over the ``allowed`` symbols."""
    if isinstance(text, sp.Basic):
        expr = text
    elif isinstance(text, (int, float)):
        expr = sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    else:
        local = {name: SYMBOLS[name] for name in SYMBOLS}
        glob = {"__builtins__": {}}
        glob.update(_FUNCTIONS)
        try:
            expr = parse_expr(str(text), local_dict=local, global_dict=glob)
        except Exception as exc:  # noqa: BLE001 - surfaced as a usage error
            raise ValueError(f"cannot parse expression {text!r}: {exc}") from exc
    free = {s.name for s in expr.free_symbols}
    bad = free - set(allowed)
    if bad:
        raise ValueError(f"expression {text!r} uses unknown symbols {sorted(bad)}")
    return sp.sympify(expr)


def compile_expr(expr: sp.Expr, args: tuple[str, ...]):
    """Vectorized numpy callable of ``args`` that broadcasts constants."""
    syms = [SYMBOLS[a] for a in args]
    fn = sp.lambdify(syms, expr, modules="numpy", cse=True)

    def call(*vals):
        vals = [np.asarray(v, dtype=float) for v in vals]
        out = fn(*vals)
        shape = np.broadcast_shapes(*(v.shape for v in vals)) if vals else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    return call


def compile_array(exprs, args: tuple[str, ...]):
    """Callable returning a nested list of expressions as one stacked array."""
    if isinstance(exprs, (list, tuple)):
        parts = [compile_array(e, args) for e in exprs]

        def call(*vals):
            return np.stack([f(*vals) for f in parts])

        return call
    return compile_expr(exprs, args)


def to_text(expr: sp.Expr) -> str:
    return sp.sstr(expr)
