"""Gauss-Legendre, tensor-product and triangle quadrature rules.

All rules live on reference elements: [-1, 1]^n for intervals and boxes and
the unit triangle {x, y >= 0, x + y <= 1}.  Every rule carries the total
polynomial degree it integrates exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_GAUSS_POINTS = 20
MAX_TRIANGLE_DEGREE = 10


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (P, n)
    weights: np.ndarray  # (P,)
    exact_degree: int
    domain: str  # "interval" | "box" | "triangle"

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> float:
        """Apply the rule to ``f(points) -> (P,)``."""
        return float(np.dot(self.weights, f(self.points)))


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _legendre_with_derivative(n: int, x: np.ndarray):
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    # P_n' from the standard identity (1 - x^2) P_n' = n (P_{n-1} - x P_n)
    dp = n * (p0 - x * p1) / (1.0 - x * x)
    return p1, dp


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1] with ``npts`` nodes.

    Nodes are roots of the Legendre polynomial P_npts, found by Newton
    iteration from Chebyshev-like initial guesses.
    """
    if not 1 <= npts <= MAX_GAUSS_POINTS:
        raise ValueError(f"npts must be in [1, {MAX_GAUSS_POINTS}], got {npts}")
    if npts == 1:
        x = np.zeros(1)
        w = np.full(1, 2.0)
    else:
        k = np.arange(1, npts + 1)
        x = np.cos(np.pi * (k - 0.25) / (npts + 0.5))
        for _ in range(100):
            p, dp = _legendre_with_derivative(npts, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) <= 1e-15:
                break
        else:
            raise RuntimeError(f"Newton iteration for {npts} Gauss nodes did not converge")
        _, dp = _legendre_with_derivative(npts, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        # ascending order, exact symmetry about 0
        order = np.argsort(x)
        x, w = x[order], w[order]
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
        if npts % 2:
            x[npts // 2] = 0.0
    pts = x.reshape(-1, 1)
    _freeze(pts, w)
    return QuadratureRule(pts, w, 2 * npts - 1, "interval")


def tensor_rule(rule_x: QuadratureRule, rule_y: QuadratureRule) -> QuadratureRule:
    """Tensor product of two 1D rules on [-1, 1]^2 (x index varies fastest)."""
    X, Y = np.meshgrid(rule_x.points[:, 0], rule_y.points[:, 0], indexing="xy")
    WX, WY = np.meshgrid(rule_x.weights, rule_y.weights, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = (WX * WY).ravel()
    _freeze(pts, w)
    return QuadratureRule(pts, w, min(rule_x.exact_degree, rule_y.exact_degree), "box")


@lru_cache(maxsize=None)
def box_rule(npts: int, dim: int = 2) -> QuadratureRule:
    g = gauss_legendre(npts)
    if dim == 1:
        return g
    if dim == 2:
        return tensor_rule(g, g)
    raise ValueError(f"unsupported dimension {dim}")


@lru_cache(maxsize=None)
def collapsed_triangle_rule(npts: int) -> QuadratureRule:
    """Conical product (Duffy) rule with ``npts`` x ``npts`` points.

    Exact for total degree 2*npts - 2; every weight is positive.
    """
    g = gauss_legendre(npts)
    s = 0.5 * (g.points[:, 0] + 1.0)
    ws = 0.5 * g.weights
    U, V = np.meshgrid(s, s, indexing="ij")
    WU, WV = np.meshgrid(ws, ws, indexing="ij")
    x = U
    y = (1.0 - U) * V
    w = WU * WV * (1.0 - U)
    pts = np.column_stack([x.ravel(), y.ravel()])
    w = w.ravel()
    _freeze(pts, w)
    return QuadratureRule(pts, w, 2 * npts - 2, "triangle")


def triangle_moment(a: int, b: int) -> float:
    """Closed form of the integral of x^a y^b over the unit triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def _check_triangle_rule(rule: QuadratureRule) -> None:
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(rule.exact_degree + 1):
        for b in range(rule.exact_degree + 1 - a):
            exact = triangle_moment(a, b)
            got = float(np.dot(rule.weights, x**a * y**b))
            if abs(got - exact) > 1e-13 * exact:
                raise AssertionError(
                    f"triangle rule of degree {rule.exact_degree} fails on x^{a} y^{b}"
                )


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Positive-weight rule on the unit triangle exact to total ``degree``.

    Degree 1 is the centroid rule and degree 2 the edge-midpoint rule; higher
    degrees use the collapsed Gauss product.  Moments are re-verified against
    a!b!/(a+b+2)! on construction.
    """
    if not 0 <= degree <= MAX_TRIANGLE_DEGREE:
        raise ValueError(f"triangle rules are available up to degree {MAX_TRIANGLE_DEGREE}")
    if degree <= 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        w = np.array([0.5])
        rule = QuadratureRule(pts, w, 1, "triangle")
    elif degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        w = np.full(3, 1.0 / 6.0)
        rule = QuadratureRule(pts, w, 2, "triangle")
    else:
        rule = collapsed_triangle_rule(math.ceil((degree + 2) / 2))
    _freeze(rule.points, rule.weights)
    _check_triangle_rule(rule)
    return rule
