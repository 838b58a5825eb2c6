"""Stiffness/mass assembly, Dirichlet elimination and FE functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..meshkit import Element
from ..polyspace import indices_of_order
from .families import ElementFamily, functional_matrix
from .space import FESpace, cell_rule, chunks, reference_rule


@dataclass(frozen=True, eq=False)
class SymmetricPair:
    """Stiffness ``A`` and mass ``B`` restricted to the free DOFs."""

    A: object
    B: object
    free: np.ndarray | None = None
    space: FESpace | None = None
    m: int = 1

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_dense(cls, A, B) -> "SymmetricPair":
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        return cls(A, B, np.arange(A.shape[0]))


def _multinomial(alpha) -> float:
    return math.factorial(sum(alpha)) / math.prod(math.factorial(a) for a in alpha)


def element_matrices(space: FESpace, m: int, cells) -> tuple:
    """Local stiffness (nabla^m . nabla^m) and mass matrices for ``cells``."""
    fam = space.family
    mesh = space.mesh
    rule = reference_rule(mesh.kind, mesh.dim, degree=2 * fam.degree)
    cr = cell_rule(mesh, rule, cells)
    phi = space.basis_values(cells, cr.x)
    Me = np.einsum("cp,cpi,cpj->cij", cr.w, phi, phi)
    Ae = np.zeros_like(Me)
    for alpha in indices_of_order(mesh.dim, m):
        d = space.basis_values(cells, cr.x, alpha)
        Ae += _multinomial(alpha) * np.einsum("cp,cpi,cpj->cij", cr.w, d, d)
    return Ae, Me


def assemble_full(space: FESpace, m: int | None = None) -> tuple:
    """Global A and B over all DOFs (no boundary elimination), CSR."""
    m = space.m if m is None else m
    if m > space.family.m_max:
        raise ValueError(f"{space.family.name} cannot discretize order-{2 * m} operators")
    N = space.N
    rows, cols, av, bv = [], [], [], []
    for cells in chunks(space.mesh.num_cells):
        Ae, Me = element_matrices(space, m, cells)
        dofs = space.dofmap.cell_dofs[cells]
        nl = dofs.shape[1]
        rows.append(np.repeat(dofs, nl, axis=1).ravel())
        cols.append(np.tile(dofs, (1, nl)).ravel())
        av.append(Ae.ravel())
        bv.append(Me.ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    A = sp.coo_matrix((np.concatenate(av), (r, c)), shape=(N, N)).tocsr()
    B = sp.coo_matrix((np.concatenate(bv), (r, c)), shape=(N, N)).tocsr()
    # symmetrize away round-off from the element loops
    A = ((A + A.T) * 0.5).tocsr()
    B = ((B + B.T) * 0.5).tocsr()
    return A, B


def assemble(space: FESpace, m: int | None = None) -> SymmetricPair:
    """A_ij = sum_K int_K nabla^m phi_i . nabla^m phi_j, B_ij = (phi_i, phi_j); boundary rows/cols removed."""
    m = space.m if m is None else m
    A, B = assemble_full(space, m)
    free = space.dofmap.free
    A = A[free][:, free].tocsr()
    B = B[free][:, free].tocsr()
    if B.shape[0] and np.any(B.diagonal() <= 0):
        raise np.linalg.LinAlgError("mass matrix has a non-positive diagonal entry")
    return SymmetricPair(A, B, free, space, m)


def dump_coo(matrix, path) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    M = sp.coo_matrix(matrix)
    order = np.lexsort((M.col, M.row))
    with open(path, "w") as fh:
        fh.write(f"% {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i in order:
            fh.write(f"{M.row[i]} {M.col[i]} {M.data[i]:.17g}\n")


# -----------------------------------------------------------------------------
# FE functions


@dataclass(eq=False)
class FeFunction:
    space: FESpace
    coeffs: np.ndarray  # values on the free DOFs
    label: str = ""
    _full: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.num_free,):
            raise ValueError(
                f"expected {self.space.num_free} free coefficients, got {self.coeffs.shape}"
            )

    @classmethod
    def from_full(cls, space: FESpace, full: np.ndarray, label: str = "") -> "FeFunction":
        f = cls(space, np.asarray(full)[space.dofmap.free], label)
        f._full = np.asarray(full, dtype=float)
        return f

    @property
    def full(self) -> np.ndarray:
        if self._full is None:
            out = np.zeros(self.space.N)
            out[self.space.dofmap.free] = self.coeffs
            self._full = out
        return self._full

    def local_coeffs(self, cells) -> np.ndarray:
        return self.full[self.space.dofmap.cell_dofs[cells]]

    def values(self, cells, x, gamma=None) -> np.ndarray:
        """D^gamma u_h at points x (C, P, n) of the given cells."""
        phi = self.space.basis_values(cells, x, gamma)
        return np.matmul(phi, self.local_coeffs(cells)[:, :, None])[..., 0]

    def __neg__(self) -> "FeFunction":
        return FeFunction(self.space, -self.coeffs, self.label)

    def combine(self, others: list, weights) -> "FeFunction":
        c = sum(w * o.coeffs for w, o in zip(weights, others))
        return FeFunction(self.space, c, self.label)


def locate(space: FESpace, point, tol: float = 1e-12) -> int:
    """Index of a cell containing ``point`` (lowest index on shared facets)."""
    mesh = space.mesh
    p = np.asarray(point, dtype=float)
    span = np.array([hi - lo for lo, hi in mesh.bbox])
    t = tol * span
    cand = np.flatnonzero(np.all((mesh.cell_lo - t <= p) & (p <= mesh.cell_hi + t), axis=1))
    for e in cand:
        if mesh.kind != "triangle":
            return int(e)
        v = mesh.cell_vertices[e]
        T = np.column_stack([v[1] - v[0], v[2] - v[0]])
        lam = np.linalg.solve(T, p - v[0])
        if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
            return int(e)
    raise ValueError(f"point {p.tolist()} lies outside the mesh")


def eval_fe(u: FeFunction, point, gamma=None, cell: int | None = None) -> float:
    """Evaluate u_h (or a derivative) at one point; no continuity is implied."""
    e = locate(u.space, point) if cell is None else int(cell)
    x = np.asarray(point, dtype=float).reshape(1, 1, -1)
    return float(u.values(np.array([e]), x, gamma)[0, 0])


def eval_basis(family: ElementFamily, element: Element, point, gamma=None) -> np.ndarray:
    """Values of every local basis function of ``family`` on ``element``."""
    from ..polyspace import monomial_values

    verts = np.asarray(element.vertices, dtype=float)[None]
    n = verts.shape[2]
    lo, hi = verts[0].min(axis=0), verts[0].max(axis=0)
    c, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    exps = family.space.exponents()
    prime = family.space.coefficient_matrix()
    if gamma is None:
        gamma = (0,) * n
    if sum(gamma) > family.degree + 1 and sum(gamma) > family.m_max:
        raise ValueError("derivative order beyond the family's support")

    def prime_eval(x, g):
        xi = (x - c) / hw
        scale = np.prod(hw ** (-np.asarray(g, dtype=float)))
        return (monomial_values(exps, xi, g) @ prime.T) * scale

    V = functional_matrix(family, verts, prime_eval)[0]
    M = np.linalg.inv(V)
    x = np.asarray(point, dtype=float).reshape(1, 1, n)
    return (prime_eval(x, gamma)[0, 0] @ M)


def interpolate(space: FESpace, f) -> FeFunction:
    """Apply the DOF functionals to ``f(x, gamma)``; conforming DOFs agree across cells."""
    mesh = space.mesh
    full = np.zeros(space.N)

    def feval(x, gamma):
        return f(x.reshape(-1, x.shape[-1]), gamma).reshape(x.shape[:-1])[..., None]

    vals = functional_matrix(space.family, np.asarray(mesh.cell_vertices), feval)[..., 0]
    full[space.dofmap.cell_dofs] = vals
    return FeFunction.from_full(space, full)
