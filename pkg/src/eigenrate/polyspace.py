"""Multi-index sets, monomial calculus and local polynomial spaces.

Polynomials are stored as ``{alpha: coefficient}`` maps in element-local
coordinates, where each physical coordinate is mapped affinely onto [-1, 1]
over the element's bounding box.  Physical derivatives therefore differ from
local ones only by the diagonal factors ``(2 / h_{K,i})**gamma_i``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np
from numpy.polynomial import legendre as npleg

from . import quadrature

MultiIndex = tuple  # tuple[int, ...]

SUPPORTED_DIMS = (1, 2)


def order(alpha: MultiIndex) -> int:
    return sum(alpha)


def _check_dim(n: int) -> None:
    if n not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension {n}; only 1 and 2 are available")


def _graded_key(alpha: MultiIndex):
    return (sum(alpha), tuple(-a for a in alpha))


@dataclass(frozen=True)
class MultiIndexSet:
    n: int
    members: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        _check_dim(self.n)
        for a in self.members:
            if len(a) != self.n or any(ai < 0 for ai in a):
                raise ValueError(f"invalid multi-index {a!r} for n={self.n}")

    @classmethod
    def of(cls, n: int, members: Iterable[MultiIndex]) -> "MultiIndexSet":
        return cls(n, frozenset(tuple(int(v) for v in a) for a in members))

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(sorted(self.members, key=_graded_key))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self.members

    def __le__(self, other: "MultiIndexSet") -> bool:
        return self.members <= other.members

    def __sub__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        return MultiIndexSet(self.n, self.members - other.members)

    def __and__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        return MultiIndexSet(self.n, self.members & other.members)

    def __or__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        return MultiIndexSet(self.n, self.members | other.members)

    def sorted(self) -> list:
        return list(self)

    def max_order(self) -> int:
        return max((sum(a) for a in self.members), default=-1)


def enumerate_indices(n: int, r: int) -> MultiIndexSet:
    """Ind_r: every multi-index of length n and order at most r."""
    _check_dim(n)
    if r < 0:
        raise ValueError("r must be non-negative")
    members = (a for a in itertools.product(range(r + 1), repeat=n) if sum(a) <= r)
    return MultiIndexSet.of(n, members)


def indices_of_order(n: int, k: int) -> list:
    return [a for a in enumerate_indices(n, k) if sum(a) == k]


# --------------------------------------------------------------------------
# Local polynomials


def _falling(a: int, g: int) -> int:
    out = 1
    for t in range(g):
        out *= a - t
    return out


@dataclass(frozen=True)
class LocalPolynomial:
    """Polynomial in local coordinates, ``{alpha: coefficient}``.

    ``center``/``half_widths`` optionally tie the polynomial to an element so
    it can be evaluated at physical points.
    """

    n: int
    coeffs: Mapping = field(default_factory=dict)
    center: tuple | None = None
    half_widths: tuple | None = None

    def __post_init__(self):
        _check_dim(self.n)
        clean = {tuple(int(v) for v in a): float(c) for a, c in self.coeffs.items() if c != 0}
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def monomial(cls, alpha: MultiIndex, coefficient: float = 1.0) -> "LocalPolynomial":
        return cls(len(alpha), {tuple(alpha): coefficient})

    @property
    def support(self) -> MultiIndexSet:
        return MultiIndexSet.of(self.n, self.coeffs.keys())

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coeffs), default=-1)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())

    def __add__(self, other: "LocalPolynomial") -> "LocalPolynomial":
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0.0) + c
        return LocalPolynomial(self.n, out, self.center, self.half_widths)

    def __sub__(self, other: "LocalPolynomial") -> "LocalPolynomial":
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "LocalPolynomial":
        return LocalPolynomial(self.n, {a: s * c for a, c in self.coeffs.items()},
                               self.center, self.half_widths)

    def __call__(self, xi) -> np.ndarray:
        """Evaluate at local points ``xi`` of shape (..., n)."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1])
        for a, c in self.coeffs.items():
            term = np.full(xi.shape[:-1], c)
            for i, ai in enumerate(a):
                if ai:
                    term = term * xi[..., i] ** ai
            out = out + term
        return out

    def to_local(self, x) -> np.ndarray:
        if self.center is None:
            raise ValueError("polynomial is not attached to an element")
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) / np.asarray(self.half_widths)

    def evaluate_physical(self, x, gamma: MultiIndex | None = None) -> np.ndarray:
        """Value (or physical derivative ``gamma``) at physical points ``x``."""
        p = self
        scale = 1.0
        if gamma is not None and any(gamma):
            p = differentiate(self, gamma)
            scale = float(np.prod([(1.0 / hw) ** g for hw, g in zip(self.half_widths, gamma)]))
        return scale * p(self.to_local(x))


def differentiate(p: LocalPolynomial, gamma: MultiIndex) -> LocalPolynomial:
    """Exact D^gamma of ``p`` with respect to its own (local) coordinates."""
    if len(gamma) != p.n:
        raise ValueError("derivative multi-index has the wrong length")
    out = {}
    for a, c in p.coeffs.items():
        if all(ai >= gi for ai, gi in zip(a, gamma)):
            f = 1
            for ai, gi in zip(a, gamma):
                f *= _falling(ai, gi)
            b = tuple(ai - gi for ai, gi in zip(a, gamma))
            out[b] = out.get(b, 0.0) + c * f
    return LocalPolynomial(p.n, out, p.center, p.half_widths)


def laplacian(p: LocalPolynomial, times: int = 1) -> LocalPolynomial:
    for _ in range(times):
        q = LocalPolynomial(p.n, {}, p.center, p.half_widths)
        for i in range(p.n):
            g = tuple(2 if k == i else 0 for k in range(p.n))
            q = q + differentiate(p, g)
        p = q
    return p


def monomial_values(exponents: np.ndarray, xi: np.ndarray, gamma: MultiIndex | None = None) -> np.ndarray:
    """D^gamma of each monomial ``xi**exponents[k]`` at points ``xi``.

    Returns an array of shape ``xi.shape[:-1] + (len(exponents),)``.
    """
    exponents = np.asarray(exponents, dtype=int)
    xi = np.asarray(xi, dtype=float)
    n = exponents.shape[1]
    if gamma is None:
        gamma = (0,) * n
    out = np.ones(xi.shape[:-1] + (len(exponents),))
    for i in range(n):
        a = exponents[:, i]
        g = gamma[i]
        fac = np.array([_falling(int(ai), g) for ai in a], dtype=float)
        powv = np.where(a >= g, a - g, 0)
        # table of xi_i**k by repeated products, gathered per monomial
        top = int(powv.max()) if len(powv) else 0
        table = np.empty(xi.shape[:-1] + (top + 1,))
        table[..., 0] = 1.0
        for k in range(1, top + 1):
            table[..., k] = table[..., k - 1] * xi[..., i]
        out *= fac * table[..., powv]
    return out


# --------------------------------------------------------------------------
# Polynomial spaces


@dataclass(frozen=True)
class PolynomialSpace:
    """Local polynomial space spanned by ``basis`` (local coordinates)."""

    name: str
    n: int
    basis: tuple

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def ind_used(self) -> MultiIndexSet:
        out = MultiIndexSet(self.n)
        for p in self.basis:
            out = out | p.support
        return out

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.basis)

    @property
    def is_monomial(self) -> bool:
        return all(len(p.coeffs) == 1 for p in self.basis)

    def exponents(self) -> np.ndarray:
        return np.array(self.ind_used.sorted(), dtype=int).reshape(-1, self.n)

    def coefficient_matrix(self) -> np.ndarray:
        """Rows: basis polynomials, columns: monomials of ``exponents()``."""
        exps = [tuple(e) for e in self.exponents()]
        col = {a: k for k, a in enumerate(exps)}
        C = np.zeros((self.dim, len(exps)))
        for i, p in enumerate(self.basis):
            for a, c in p.coeffs.items():
                C[i, col[a]] = c
        return C


def _monomial_space(name: str, n: int, members: Iterable[MultiIndex]) -> PolynomialSpace:
    idx = MultiIndexSet.of(n, members)
    return PolynomialSpace(name, n, tuple(LocalPolynomial.monomial(a) for a in idx))


def P(n: int, k: int) -> PolynomialSpace:
    return _monomial_space(f"P{k}", n, enumerate_indices(n, k))


def Q(n: int, k: int) -> PolynomialSpace:
    return _monomial_space(f"Q{k}", n, itertools.product(range(k + 1), repeat=n))


def serendipity(r: int) -> PolynomialSpace:
    """S_r = P_{r-1} + span{x^{r-1} y, x y^{r-1}} in two dimensions."""
    members = set(enumerate_indices(2, r - 1)) | {(r - 1, 1), (1, r - 1)}
    return _monomial_space(f"S{r}", 2, members)


def intermediate(r: int) -> PolynomialSpace:
    """P_{r+1} intersected with Q_{r-1} in two dimensions."""
    members = [a for a in itertools.product(range(r), repeat=2) if sum(a) <= r + 1]
    return _monomial_space(f"P{r + 1}Q{r - 1}", 2, members)


def rotated_q1(n: int = 2) -> PolynomialSpace:
    """P_1 + span{x_i^2 - x_{i+1}^2}."""
    basis = [LocalPolynomial.monomial(a) for a in enumerate_indices(n, 1)]
    for i in range(n - 1):
        ei = tuple(2 if k == i else 0 for k in range(n))
        ej = tuple(2 if k == i + 1 else 0 for k in range(n))
        basis.append(LocalPolynomial(n, {ei: 1.0, ej: -1.0}))
    return PolynomialSpace("Q1rot", n, tuple(basis))


def _space_of(obj) -> PolynomialSpace:
    return obj if isinstance(obj, PolynomialSpace) else obj.space


def index_sets(family) -> tuple:
    """Return ``(Ind_used, r, Ind_{r,rest})`` for a family or space.

    ``r`` is the smallest integer with Ind_{r-1} inside Ind_used and Ind_r not
    inside it.
    """
    space = _space_of(family)
    used = space.ind_used
    if not used.members:
        raise ValueError("empty polynomial space")
    r = 0
    while enumerate_indices(space.n, r) <= used:
        r += 1
        if r > used.max_order() + 1:
            raise ValueError("index set is not bounded")  # pragma: no cover
    rest = enumerate_indices(space.n, r) - used
    return used, r, rest


def operator_split(m: int, r: int) -> tuple:
    """Decompose r = m*i + 2*m*l with i in {0, 1}; returns (i, l)."""
    if m < 1 or r < 1:
        raise ValueError("m and r must be positive")
    if r % (2 * m) == 0:
        return 0, r // (2 * m)
    if r % (2 * m) == m:
        return 1, (r - m) // (2 * m)
    raise ValueError(f"r={r} is not of the form m*i + 2*m*l for m={m}")


def apply_operator(p: LocalPolynomial, m: int, r: int) -> list:
    """Components of nabla^{m i} Delta^{m l} p, as a list of polynomials."""
    i, ell = operator_split(m, r)
    q = laplacian(p, m * ell)
    if i == 0:
        return [q]
    return [differentiate(q, g) for g in indices_of_order(p.n, m)]


def annihilation_check(family, m: int, r: int) -> bool:
    """True iff nabla^{m i} Delta^{m l} kills every basis polynomial."""
    space = _space_of(family)
    for p in space.basis:
        for comp in apply_operator(p, m, r):
            if not comp.is_zero(tol=1e-13):
                return False
    return True


# --------------------------------------------------------------------------
# Local L2 / H1 projection


def element_frame(element):
    """Bounding-box center and half widths of an element (local map)."""
    v = np.asarray(element.vertices, dtype=float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def element_quadrature(element, npts: int):
    """Physical points and weights on a single element."""
    v = np.asarray(element.vertices, dtype=float)
    kind = element.kind
    if kind in ("interval", "rectangle"):
        c, hw = element_frame(element)
        rule = quadrature.box_rule(npts, len(c))
        x = c + rule.points * hw
        w = rule.weights * np.prod(hw)
    elif kind == "triangle":
        rule = quadrature.collapsed_triangle_rule(npts)
        J = np.column_stack([v[1] - v[0], v[2] - v[0]])
        x = v[0] + rule.points @ J.T
        w = rule.weights * abs(np.linalg.det(J))
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return x, w


def _legendre_to_monomial(alpha: MultiIndex) -> dict:
    """Product of Legendre polynomials L_alpha expanded in monomials."""
    out = {(): 1.0}
    for a in alpha:
        c = np.zeros(a + 1)
        c[a] = 1.0
        mono = npleg.leg2poly(c)
        nxt = {}
        for key, val in out.items():
            for k, mk in enumerate(mono):
                if mk != 0.0:
                    nk = key + (k,)
                    nxt[nk] = nxt.get(nk, 0.0) + val * mk
        out = nxt
    return out


def projection_basis(space: PolynomialSpace) -> list:
    """Well-conditioned basis of ``space``: Legendre products for monomial spaces."""
    used = space.ind_used
    downward_closed = all(
        tuple(b) in used
        for a in used
        for b in itertools.product(*[range(ai + 1) for ai in a])
    )
    if space.is_monomial and downward_closed:
        return [LocalPolynomial(space.n, _legendre_to_monomial(a)) for a in used]
    return list(space.basis)


GRAM_CONDITION_LIMIT = 1e6


def project_local(element, family, target, npts: int = 10, norm: str = "l2") -> LocalPolynomial:
    """Orthogonal projection of ``target`` onto the local space on ``element``.

    ``target(x, gamma)`` returns D^gamma of the function at physical points
    ``x`` of shape (P, n).  ``norm`` selects the L2 or the full H1 inner product.
    """
    space = _space_of(family)
    center, hw = element_frame(element)
    x, w = element_quadrature(element, npts)
    xi = (x - center) / hw
    basis = projection_basis(space)
    n = space.n

    def vals(gamma):
        scale = float(np.prod([(1.0 / h) ** g for h, g in zip(hw, gamma)]))
        return np.column_stack([scale * differentiate(p, gamma)(xi) for p in basis])

    zero = (0,) * n
    Phi = vals(zero)
    G = Phi.T @ (w[:, None] * Phi)
    rhs = Phi.T @ (w * target(x, zero))
    if norm == "h1":
        for g in indices_of_order(n, 1):
            D = vals(g)
            G += D.T @ (w[:, None] * D)
            rhs += D.T @ (w * target(x, g))
    elif norm != "l2":
        raise ValueError(f"unknown projection norm {norm!r}")

    d = np.sqrt(np.diag(G))
    cond = np.linalg.cond(G / np.outer(d, d))
    if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
        raise np.linalg.LinAlgError(f"singular local Gram matrix (condition {cond:.3g})")
    c = np.linalg.solve(G, rhs)
    out = LocalPolynomial(n, {}, tuple(center), tuple(hw))
    for ck, p in zip(c, basis):
        out = out + LocalPolynomial(n, p.coeffs, tuple(center), tuple(hw)).scale(ck)
    return out
