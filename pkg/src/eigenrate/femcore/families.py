"""Element family registry: local spaces and degree-of-freedom functionals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import polyspace
from ..polyspace import LocalPolynomial, PolynomialSpace


@dataclass(frozen=True)
class Functional:
    """One DOF functional.

    kind:
      ``point``  value at a convex combination ``weights`` of the vertices
      ``dx``     physical derivative along ``direction`` at that point
      ``mean``   average over the local edge ``local_entity``
      ``moment`` cell average of v * ``poly`` (``poly`` in local coordinates)
    entity is where the DOF is shared: ``vertex``, ``edge`` or ``cell``.
    """

    kind: str
    entity: str
    local_entity: int = 0
    slot: int = 0
    weights: tuple = ()
    direction: int = 0
    poly: LocalPolynomial | None = None

    @property
    def order(self) -> int:
        """Derivative order of the functional (drives boundary elimination)."""
        return 1 if self.kind == "dx" else 0


@dataclass(frozen=True)
class ElementFamily:
    name: str
    cell: str  # "interval" | "triangle" | "rectangle"
    space: PolynomialSpace
    functionals: tuple
    conforming: bool
    m_max: int = 1

    @property
    def dim(self) -> int:
        return self.space.n

    @property
    def ndofs(self) -> int:
        return len(self.functionals)

    @property
    def degree(self) -> int:
        return self.space.degree

    @property
    def r(self) -> int:
        return polyspace.index_sets(self.space)[1]

    @property
    def num_vertices(self) -> int:
        return {"interval": 2, "triangle": 3, "rectangle": 4}[self.cell]

    def slots(self, entity: str) -> int:
        used = [f.slot for f in self.functionals if f.entity == entity]
        return max(used) + 1 if used else 0

    def __repr__(self) -> str:
        return f"ElementFamily({self.name!r}, {self.cell})"


def _vertex(nv: int, k: int, slot: int = 0) -> Functional:
    w = tuple(1.0 if i == k else 0.0 for i in range(nv))
    return Functional("point", "vertex", k, slot, w)


def _edge_points(nv: int, npts: int) -> list:
    out = []
    for e in range(nv):
        a, b = e, (e + 1) % nv
        for s in range(npts):
            t = (s + 1) / (npts + 1)
            w = [0.0] * nv
            w[a], w[b] = 1.0 - t, t
            out.append(Functional("point", "edge", e, s, tuple(w)))
    return out


def _box_weights(xi: float, eta: float) -> tuple:
    return ((1 - xi) * (1 - eta) / 4, (1 + xi) * (1 - eta) / 4,
            (1 + xi) * (1 + eta) / 4, (1 - xi) * (1 + eta) / 4)


def lagrange_interval(k: int) -> ElementFamily:
    f = [_vertex(2, 0), _vertex(2, 1)]
    for s in range(1, k):
        t = s / k
        f.append(Functional("point", "cell", 0, s - 1, (1.0 - t, t)))
    return ElementFamily(f"P{k}", "interval", polyspace.P(1, k), tuple(f), True)


def lagrange_triangle(k: int) -> ElementFamily:
    f = [_vertex(3, i) for i in range(3)]
    f += _edge_points(3, k - 1)
    slot = 0
    for i in range(1, k):
        for j in range(1, k - i):
            w = ((k - i - j) / k, i / k, j / k)
            f.append(Functional("point", "cell", 0, slot, w))
            slot += 1
    return ElementFamily(f"P{k}", "triangle", polyspace.P(2, k), tuple(f), True)


def lagrange_box(k: int) -> ElementFamily:
    f = [_vertex(4, i) for i in range(4)]
    f += _edge_points(4, k - 1)
    slot = 0
    for j in range(1, k):
        for i in range(1, k):
            f.append(Functional("point", "cell", 0, slot,
                                _box_weights(-1 + 2 * i / k, -1 + 2 * j / k)))
            slot += 1
    return ElementFamily(f"Q{k}", "rectangle", polyspace.Q(2, k), tuple(f), True)


def serendipity3() -> ElementFamily:
    f = [_vertex(4, i) for i in range(4)] + _edge_points(4, 1)
    return ElementFamily("S3", "rectangle", polyspace.serendipity(3), tuple(f), True)


def intermediate4() -> ElementFamily:
    """P5 intersected with Q3: vertex values, two points per edge, three cell moments."""
    f = [_vertex(4, i) for i in range(4)] + _edge_points(4, 2)
    for slot, alpha in enumerate([(0, 0), (1, 0), (0, 1)]):
        f.append(Functional("moment", "cell", 0, slot, poly=LocalPolynomial.monomial(alpha)))
    return ElementFamily("P5Q3", "rectangle", polyspace.intermediate(4), tuple(f), True)


def crouzeix_raviart() -> ElementFamily:
    f = [Functional("mean", "edge", e) for e in range(3)]
    return ElementFamily("CR", "triangle", polyspace.P(2, 1), tuple(f), False)


def rannacher_turek() -> ElementFamily:
    """Rotated Q1 with edge-mean DOFs; the space lives in local coordinates."""
    f = [Functional("mean", "edge", e) for e in range(4)]
    return ElementFamily("Q1rot", "rectangle", polyspace.rotated_q1(2), tuple(f), False)


def hermite_cubic() -> ElementFamily:
    f = []
    for k in range(2):
        f.append(_vertex(2, k, slot=0))
        w = tuple(1.0 if i == k else 0.0 for i in range(2))
        f.append(Functional("dx", "vertex", k, 1, w, direction=0))
    return ElementFamily("Hermite3", "interval", polyspace.P(1, 3), tuple(f), True, m_max=2)


_BUILDERS = {
    ("P1", 1): lambda: lagrange_interval(1),
    ("P2", 1): lambda: lagrange_interval(2),
    ("P3", 1): lambda: lagrange_interval(3),
    ("P1", 2): lambda: lagrange_triangle(1),
    ("P2", 2): lambda: lagrange_triangle(2),
    ("P3", 2): lambda: lagrange_triangle(3),
    ("Q1", 2): lambda: lagrange_box(1),
    ("Q2", 2): lambda: lagrange_box(2),
    ("S3", 2): serendipity3,
    ("P5Q3", 2): intermediate4,
    ("CR", 2): crouzeix_raviart,
    ("Q1rot", 2): rannacher_turek,
    ("Hermite3", 1): hermite_cubic,
}

ALIASES = {"intermediate": "P5Q3", "hermite": "Hermite3", "Q1-rot": "Q1rot", "serendipity": "S3"}

_CACHE: dict = {}


def family_names() -> list:
    return sorted({name for name, _ in _BUILDERS})


def get_family(name: str, dim: int | None = None) -> ElementFamily:
    """Look up a family by name; ``dim`` disambiguates P_k on intervals vs triangles."""
    name = ALIASES.get(name, name)
    dims = [d for (n, d) in _BUILDERS if n == name]
    if not dims:
        raise KeyError(f"unknown element family {name!r}; known: {', '.join(family_names())}")
    if dim is None:
        if len(dims) > 1:
            dim = 2
        else:
            dim = dims[0]
    key = (name, dim)
    if key not in _BUILDERS:
        raise KeyError(f"family {name!r} is not available in {dim}D")
    if key not in _CACHE:
        _CACHE[key] = _BUILDERS[key]()
    return _CACHE[key]


def mesh_kind_for(family: ElementFamily) -> str:
    return family.cell


def registry() -> list:
    return [get_family(n, d) for (n, d) in _BUILDERS]


def local_edges(cell: str) -> list:
    nv = {"interval": 0, "triangle": 3, "rectangle": 4}[cell]
    return [(e, (e + 1) % nv) for e in range(nv)]


def functional_matrix(family: ElementFamily, verts: np.ndarray, polys_eval) -> np.ndarray:
    """Apply every functional to a set of functions on many cells.

    ``verts`` has shape (E, nv, n); ``polys_eval(x, gamma)`` maps physical
    points (E, P, n) to values (E, P, K).  Returns (E, ndofs, K).
    """
    from ..quadrature import gauss_legendre, box_rule

    E = verts.shape[0]
    n = verts.shape[2]
    rows = []
    zero = (0,) * n
    for f in family.functionals:
        if f.kind in ("point", "dx"):
            x = np.einsum("v,evn->en", np.asarray(f.weights), verts)[:, None, :]
            gamma = zero if f.kind == "point" else tuple(int(i == f.direction) for i in range(n))
            rows.append(polys_eval(x, gamma)[:, 0, :])
        elif f.kind == "mean":
            a, b = local_edges(family.cell)[f.local_entity]
            g = gauss_legendre(family.degree // 2 + 2)
            t = 0.5 * (g.points[:, 0] + 1.0)
            wt = 0.5 * g.weights
            xa, xb = verts[:, a, :], verts[:, b, :]
            x = xa[:, None, :] + t[None, :, None] * (xb - xa)[:, None, :]
            rows.append(np.einsum("q,eqk->ek", wt, polys_eval(x, zero)))
        elif f.kind == "moment":
            if family.cell != "rectangle":
                raise NotImplementedError("cell moments are only defined on boxes")
            rule = box_rule(family.degree + f.poly.degree // 2 + 2, n)
            lo = verts.min(axis=1)
            hi = verts.max(axis=1)
            c, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
            x = c[:, None, :] + rule.points[None, :, :] * hw[:, None, :]
            wq = rule.weights * f.poly(rule.points) / rule.weights.sum()
            rows.append(np.einsum("q,eqk->ek", wq, polys_eval(x, zero)))
        else:
            raise ValueError(f"unknown functional kind {f.kind!r}")
    return np.stack(rows, axis=1)
