"""Symbolic target functions with exact derivatives (sympy + lambdify)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy

VARIABLES = ("x", "y")


class SymbolicFunction:
    """``f(x, gamma)`` handle built from an expression such as ``"x**3"``."""

    def __init__(self, expression: str, n: int):
        if n not in (1, 2):
            raise ValueError("only one or two variables are supported")
        self.expression = str(expression)
        self.n = n
        self.symbols = sympy.symbols(VARIABLES[:n])
        local = {name: s for name, s in zip(VARIABLES, self.symbols)}
        try:
            self.expr = sympy.sympify(self.expression, locals=local)
        except (sympy.SympifyError, SyntaxError) as exc:
            raise ValueError(f"cannot parse target {expression!r}") from exc
        extra = self.expr.free_symbols - set(self.symbols)
        if extra:
            raise ValueError(f"target uses unknown symbols {sorted(map(str, extra))}")

    @lru_cache(maxsize=None)
    def _compiled(self, gamma: tuple):
        d = self.expr
        for s, g in zip(self.symbols, gamma):
            if g:
                d = sympy.diff(d, s, g)
        return sympy.lambdify(self.symbols, d, modules="numpy")

    def derivative_expr(self, gamma: tuple):
        d = self.expr
        for s, g in zip(self.symbols, gamma):
            if g:
                d = sympy.diff(d, s, g)
        return d

    def __call__(self, x, gamma=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gamma = (0,) * self.n if gamma is None else tuple(int(g) for g in gamma)
        f = self._compiled(gamma)
        vals = f(*[x[:, i] for i in range(self.n)])
        return np.broadcast_to(np.asarray(vals, dtype=float), (x.shape[0],)).copy()

    def __repr__(self) -> str:
        return f"SymbolicFunction({self.expression!r})"
