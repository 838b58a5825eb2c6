"""Global DOF numbering and per-cell nodal bases."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .. import quadrature
from ..meshkit import Mesh
from ..polyspace import indices_of_order, monomial_values
from .families import ElementFamily, functional_matrix, local_edges

UNISOLVENCE_LIMIT = 1e8


@dataclass(frozen=True)
class DofMap:
    cell_dofs: np.ndarray  # (E, nloc) global indices
    N: int
    boundary: np.ndarray  # sorted global indices eliminated by the boundary condition

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.N, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @property
    def num_free(self) -> int:
        return self.N - len(self.boundary)


def _check_compatible(mesh: Mesh, family: ElementFamily) -> None:
    if mesh.kind != family.cell:
        raise ValueError(f"family {family.name} needs {family.cell} cells, mesh has {mesh.kind}")


def build_dofmap(mesh: Mesh, family: ElementFamily, m: int = 1) -> DofMap:
    """Number DOFs vertex block first, then edges, then cell interiors.

    Edge DOFs with several slots are ordered from the lower global vertex id
    so both neighbours agree.  Boundary DOFs are those whose functional sits
    on the boundary and has derivative order below ``m``.
    """
    _check_compatible(mesh, family)
    E = mesh.num_cells
    nv_slots = family.slots("vertex")
    ne_slots = family.slots("edge")
    nc_slots = family.slots("cell")
    nverts = len(mesh.vertices)
    nedges = len(mesh.edges)
    off_e = nverts * nv_slots
    off_c = off_e + nedges * ne_slots
    N = off_c + E * nc_slots

    cell_dofs = np.empty((E, family.ndofs), dtype=np.int64)
    on_boundary = np.zeros(N, dtype=bool)
    edges = local_edges(family.cell)
    for k, f in enumerate(family.functionals):
        if f.entity == "vertex":
            gv = mesh.cells[:, f.local_entity]
            ids = gv * nv_slots + f.slot
            if f.order < m:
                on_boundary[ids[mesh.boundary_vertices[gv]]] = True
        elif f.entity == "edge":
            ge = mesh.cell_facets[:, f.local_entity]
            a, b = edges[f.local_entity]
            forward = mesh.cells[:, a] < mesh.cells[:, b]
            slot = np.where(forward, f.slot, ne_slots - 1 - f.slot)
            ids = off_e + ge * ne_slots + slot
            if f.order < m:
                on_boundary[ids[mesh.boundary_facets[ge]]] = True
        else:
            ids = off_c + np.arange(E) * nc_slots + f.slot
        cell_dofs[:, k] = ids
    return DofMap(cell_dofs, int(N), np.flatnonzero(on_boundary))


class FESpace:
    """Finite element space on a mesh: DOF map plus nodal basis per cell.

    Basis function k on cell e is ``sum_j M[e, j, k] * p_j`` where ``p_j``
    runs over the family's local space basis.
    """

    def __init__(self, mesh: Mesh, family: ElementFamily, m: int = 1):
        _check_compatible(mesh, family)
        if m > family.m_max:
            raise ValueError(f"{family.name} supports operators up to order {family.m_max}")
        self.mesh = mesh
        self.family = family
        self.m = m
        self.dofmap = build_dofmap(mesh, family, m)
        self.exponents = family.space.exponents()
        self.prime = family.space.coefficient_matrix()  # (nprime, M)
        self.center = 0.5 * (mesh.cell_lo + mesh.cell_hi)
        self.half = 0.5 * (mesh.cell_hi - mesh.cell_lo)
        V = functional_matrix(family, np.asarray(mesh.cell_vertices), self._prime_physical)
        self.condition = float(np.max(np.linalg.cond(V)))
        if not np.isfinite(self.condition) or self.condition > UNISOLVENCE_LIMIT:
            raise np.linalg.LinAlgError(
                f"{family.name}: DOF functionals are not unisolvent (cond {self.condition:.3g})"
            )
        self.M = np.linalg.inv(V)  # (E, nprime, nloc)

    @property
    def N(self) -> int:
        return self.dofmap.N

    @property
    def num_free(self) -> int:
        return self.dofmap.num_free

    def _scale(self, cells, gamma) -> np.ndarray:
        return np.prod(self.half[cells] ** (-np.asarray(gamma, dtype=float)), axis=-1)

    def to_local(self, cells, x) -> np.ndarray:
        return (x - self.center[cells][:, None, :]) / self.half[cells][:, None, :]

    def _prime_physical(self, x, gamma, cells=slice(None)) -> np.ndarray:
        xi = self.to_local(cells, x)
        vals = monomial_values(self.exponents, xi, gamma) @ self.prime.T
        return vals * self._scale(cells, gamma)[:, None, None]

    def basis_values(self, cells, x, gamma=None) -> np.ndarray:
        """D^gamma of every local basis function at physical points ``x`` (C, P, n)."""
        cells = np.asarray(cells) if not isinstance(cells, slice) else cells
        if gamma is None:
            gamma = (0,) * self.mesh.dim
        prime = self._prime_physical(x, gamma, cells)
        return np.matmul(prime, self.M[cells])

    def gradient_orders(self, order: int) -> list:
        return indices_of_order(self.mesh.dim, order)


@dataclass(frozen=True)
class CellRule:
    x: np.ndarray  # (C, P, n) physical points
    w: np.ndarray  # (C, P) physical weights


def reference_rule(kind: str, dim: int, degree: int | None = None, npts: int | None = None):
    """Reference rule for a cell kind, by exact degree or by points per direction."""
    if kind in ("interval", "rectangle"):
        if npts is None:
            npts = degree // 2 + 1
        return quadrature.box_rule(npts, dim)
    if npts is None:
        if degree <= quadrature.MAX_TRIANGLE_DEGREE:
            return quadrature.triangle_rule(max(degree, 1))
        npts = (degree + 3) // 2
    return quadrature.collapsed_triangle_rule(npts)


def cell_rule(mesh: Mesh, rule, cells=slice(None)) -> CellRule:
    """Map a reference rule onto the selected cells."""
    v = np.asarray(mesh.cell_vertices[cells])
    if mesh.kind == "triangle":
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        x = (v[:, 0][:, None, :] + rule.points[None, :, 0:1] * e1[:, None, :]
             + rule.points[None, :, 1:2] * e2[:, None, :])
        det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        w = det[:, None] * rule.weights[None, :]
    else:
        lo = v.min(axis=1)
        hi = v.max(axis=1)
        c, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x = c[:, None, :] + rule.points[None, :, :] * hw[:, None, :]
        w = np.prod(hw, axis=1)[:, None] * rule.weights[None, :]
    return CellRule(x, w)


def chunks(ncells: int, size: int = 4096):
    for start in range(0, ncells, size):
        yield np.arange(start, min(start + size, ncells))
