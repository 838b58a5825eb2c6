"""Interval, rectangle and triangle meshes with regularity metrics.

Uniform coordinates come from an integer lattice scaled once, so a mesh with
twice the cells per direction has exactly half the element sizes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# interior subdomain used for lower-bound norms, as fractions of the bounding box
INTERIOR_FRACTION = (0.25, 0.75)


@dataclass(frozen=True)
class Element:
    id: int
    kind: str  # "interval" | "rectangle" | "triangle"
    vertices: np.ndarray
    sizes: tuple  # h_{K,i}: extents of the bounding box
    diameter: float  # h_K
    inscribed: float  # tau_K, diameter of the largest inscribed ball

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]


@dataclass(frozen=True)
class RegularityReport:
    sigma: float  # min over K of h_K / tau_K
    sigma_max: float  # max over K of h_K / tau_K
    beta: float  # max over K of h / h_K
    h: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    kind: str
    vertices: np.ndarray  # (nv, n)
    cells: np.ndarray  # (E, nverts) vertex ids, counter-clockwise in 2D
    facets: np.ndarray  # (nf, n) vertex ids of each (n-1)-face
    cell_facets: np.ndarray  # (E, nfacets_per_cell)
    facet_cells: np.ndarray  # (nf, 2), -1 marks the outside
    bbox: tuple  # ((lo, hi), ...) per direction
    recipe: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("vertices", "cells", "facets", "cell_facets", "facet_cells"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    # -- geometry --------------------------------------------------------
    @cached_property
    def cell_vertices(self) -> np.ndarray:
        return _readonly(self.vertices[self.cells])

    @cached_property
    def cell_lo(self) -> np.ndarray:
        return _readonly(self.cell_vertices.min(axis=1))

    @cached_property
    def cell_hi(self) -> np.ndarray:
        return _readonly(self.cell_vertices.max(axis=1))

    @cached_property
    def sizes(self) -> np.ndarray:
        """Per-direction sizes h_{K,i}, shape (E, n).

        Uniform lattice directions use the spacing (b - a) / cells, so uniform
        refinement by two halves every size bit for bit.
        """
        out = np.array(self.cell_hi - self.cell_lo)
        for i, (count, g) in enumerate(self._lattice_counts()):
            if count and g == 1.0:
                lo, hi = self.bbox[i]
                out[:, i] = (hi - lo) / count
        return _readonly(out)

    def _lattice_counts(self) -> list:
        r = self.recipe
        if self.kind == "interval" and r.get("builder") == "interval":
            return [(r["cells"], r["grading"])]
        if self.kind == "rectangle" and r.get("builder") == "rect":
            return [(r["nx"], r["grading"][0]), (r["ny"], r["grading"][1])]
        return [(0, 1.0)] * self.dim

    @cached_property
    def diameters(self) -> np.ndarray:
        v = self.cell_vertices
        d = np.zeros(len(v))
        nv = v.shape[1]
        for a in range(nv):
            for b in range(a + 1, nv):
                d = np.maximum(d, np.linalg.norm(v[:, a] - v[:, b], axis=1))
        return _readonly(d)

    @cached_property
    def measures(self) -> np.ndarray:
        if self.kind == "triangle":
            v = self.cell_vertices
            e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
            return _readonly(0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]))
        return _readonly(np.prod(self.sizes, axis=1))

    @cached_property
    def inscribed(self) -> np.ndarray:
        if self.kind == "triangle":
            v = self.cell_vertices
            per = sum(np.linalg.norm(v[:, (k + 1) % 3] - v[:, k], axis=1) for k in range(3))
            return _readonly(4.0 * self.measures / per)
        return _readonly(self.sizes.min(axis=1))

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return _readonly(self.facet_cells[:, 1] < 0)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(len(self.vertices), dtype=bool)
        mask[self.facets[self.boundary_facets].ravel()] = True
        return _readonly(mask)

    @cached_property
    def edges(self) -> np.ndarray:
        """Edges (2D) as vertex pairs; same as ``facets`` in two dimensions."""
        if self.dim != 2:
            return _readonly(np.zeros((0, 2), dtype=int))
        return self.facets

    def interior_mask(self, fraction=INTERIOR_FRACTION) -> np.ndarray:
        """Cells lying entirely inside G = [lo + a L, lo + b L]^n."""
        a, b = fraction
        ok = np.ones(self.num_cells, dtype=bool)
        for i, (lo, hi) in enumerate(self.bbox):
            L = hi - lo
            g_lo, g_hi = lo + a * L, lo + b * L
            tol = 1e-12 * L
            ok &= (self.cell_lo[:, i] >= g_lo - tol) & (self.cell_hi[:, i] <= g_hi + tol)
        return ok

    @cached_property
    def in_G(self) -> np.ndarray:
        return _readonly(self.interior_mask())

    @property
    def domain_measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bbox]))

    def element(self, i: int) -> Element:
        v = np.array(self.cell_vertices[i])
        return Element(int(i), self.kind, v, tuple(float(s) for s in self.sizes[i]),
                       float(self.diameters[i]), float(self.inscribed[i]))

    @property
    def elements(self) -> list:
        return [self.element(i) for i in range(self.num_cells)]

    def to_json(self) -> str:
        data = {
            "kind": self.kind,
            "vertices": self.vertices.tolist(),
            "cells": self.cells.tolist(),
            "facets": self.facets.tolist(),
            "boundary_facets": np.flatnonzero(self.boundary_facets).tolist(),
            "tags": {"G": np.flatnonzero(self.in_G).tolist()},
        }
        return json.dumps(data, sort_keys=True)


def _lattice(lo: float, hi: float, cells: int, grading: float) -> np.ndarray:
    t = np.arange(cells + 1) / cells
    if grading != 1.0:
        t = t**grading
    x = lo + (hi - lo) * t
    x[-1] = hi
    return x


def _facet_topology(cells: np.ndarray, local_facets: list):
    """Number facets by first appearance; returns facets, cell_facets, facet_cells."""
    index = {}
    facets = []
    owners = []
    cell_facets = np.empty((len(cells), len(local_facets)), dtype=int)
    for e, cell in enumerate(cells):
        for k, lf in enumerate(local_facets):
            key = tuple(sorted(int(cell[i]) for i in lf))
            fid = index.get(key)
            if fid is None:
                fid = len(facets)
                index[key] = fid
                facets.append(key)
                owners.append([e, -1])
            else:
                if owners[fid][1] != -1:
                    raise ValueError("facet shared by more than two cells")
                owners[fid][1] = e
            cell_facets[e, k] = fid
    return np.array(facets, dtype=int), cell_facets, np.array(owners, dtype=int)


def interval_mesh(a: float, b: float, cells: int, grading: float = 1.0) -> Mesh:
    """Nodes a + (b - a) (i / cells)**grading."""
    if cells < 1:
        raise ValueError("cells must be at least 1")
    if not b > a or grading <= 0:
        raise ValueError("need b > a and a positive grading exponent")
    x = _lattice(a, b, cells, grading)
    cell = np.column_stack([np.arange(cells), np.arange(1, cells + 1)])
    facets, cell_facets, facet_cells = _facet_topology(cell, [(0,), (1,)])
    return Mesh("interval", x.reshape(-1, 1), cell, facets, cell_facets, facet_cells,
                ((float(a), float(b)),),
                {"builder": "interval", "cells": cells, "grading": grading})


def rect_mesh(nx: int, ny: int, box=((0.0, 1.0), (0.0, 1.0)), grading=(1.0, 1.0)) -> Mesh:
    """nx * ny axis-aligned rectangles; vertex order (lo,lo), (hi,lo), (hi,hi), (lo,hi)."""
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    (x0, x1), (y0, y1) = box
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate box")
    gx, gy = (grading, grading) if np.isscalar(grading) else grading
    xs = _lattice(x0, x1, nx, gx)
    ys = _lattice(y0, y1, ny, gy)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    I, J = I.ravel(), J.ravel()
    cells = np.column_stack([vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)])
    local = [(0, 1), (1, 2), (2, 3), (3, 0)]
    facets, cell_facets, facet_cells = _facet_topology(cells, local)
    return Mesh("rectangle", verts, cells, facets, cell_facets, facet_cells,
                ((float(x0), float(x1)), (float(y0), float(y1))),
                {"builder": "rect", "nx": nx, "ny": ny, "grading": [gx, gy]})


def tri_mesh_from_rect(rect: Mesh, split: str = "fixed") -> Mesh:
    """Split every rectangle into two triangles.

    ``fixed`` always cuts along the (lo,lo)-(hi,hi) diagonal; ``alternating``
    flips the diagonal in a checkerboard pattern.
    """
    if rect.kind != "rectangle":
        raise ValueError("tri_mesh_from_rect needs a rectangle mesh")
    if split not in ("fixed", "alternating"):
        raise ValueError(f"unknown split rule {split!r}")
    nx = rect.recipe.get("nx", 1)
    tris = []
    for e, (v0, v1, v2, v3) in enumerate(rect.cells):
        i, j = e % nx, e // nx
        if split == "alternating" and (i + j) % 2:
            tris.append((v0, v1, v3))
            tris.append((v1, v2, v3))
        else:
            tris.append((v0, v1, v2))
            tris.append((v0, v2, v3))
    cells = np.array(tris, dtype=int)
    local = [(0, 1), (1, 2), (2, 0)]
    facets, cell_facets, facet_cells = _facet_topology(cells, local)
    recipe = dict(rect.recipe, builder="tri", split=split)
    return Mesh("triangle", np.array(rect.vertices), cells, facets, cell_facets, facet_cells,
                rect.bbox, recipe)


def unit_square_triangles(n: int, split: str = "fixed") -> Mesh:
    return tri_mesh_from_rect(rect_mesh(n, n), split)


def regularity(mesh: Mesh) -> RegularityReport:
    if mesh.num_cells == 0:
        raise ValueError("empty mesh")
    ratio = mesh.diameters / mesh.inscribed
    h = mesh.h
    return RegularityReport(
        sigma=float(ratio.min()),
        sigma_max=float(ratio.max()),
        beta=float(h / mesh.diameters.min()),
        h=h,
    )


def check_face_to_face(mesh: Mesh) -> None:
    """Raise if a facet has more than two neighbours or measures do not add up."""
    if np.any(mesh.facet_cells[:, 0] < 0):
        raise AssertionError("facet without owner")
    total = float(mesh.measures.sum())
    if not math.isclose(total, mesh.domain_measure, rel_tol=1e-12):
        raise AssertionError(f"cell measures sum to {total}, domain is {mesh.domain_measure}")
