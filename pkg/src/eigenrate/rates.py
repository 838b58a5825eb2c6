"""Error measurement, eigenpair matching, rate fits and reliability counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .femcore import FeFunction
from .femcore.space import cell_rule, chunks, reference_rule
from .meshkit import Mesh
from .polyspace import (
    GRAM_CONDITION_LIMIT,
    index_sets,
    indices_of_order,
    monomial_values,
    projection_basis,
)

ERROR_NPTS = 10  # oversampled error quadrature, points per direction
LAMBDA_H2_CAP = 0.1


# -----------------------------------------------------------------------------
# records


@dataclass
class ErrorRecord:
    level: int
    h: float
    N: int
    index: int = 1
    lam: float = float("nan")
    lam_h: float = float("nan")
    hs: tuple = ()  # max element size per direction
    errors: dict = field(default_factory=dict)

    @property
    def rel_lambda_error(self) -> float:
        return (self.lam_h - self.lam) / self.lam

    def to_dict(self) -> dict:
        return {
            "level": self.level, "h": self.h, "N": self.N, "index": self.index,
            "lam": self.lam, "lam_h": self.lam_h, "hs": list(self.hs),
            "errors": dict(sorted(self.errors.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorRecord":
        return cls(d["level"], d["h"], d["N"], d["index"], d["lam"], d["lam_h"],
                   tuple(d["hs"]), dict(d["errors"]))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float  # RMS residual of the log-log fit
    window: tuple  # indices of the points used
    pairwise: tuple = ()

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "window": list(self.window), "pairwise": list(self.pairwise)}


@dataclass(frozen=True)
class ReliabilityReport:
    tolerance: float
    mode: str
    N: tuple
    counts: tuple
    exponent: float
    theta: float

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "mode": self.mode, "N": list(self.N),
                "counts": list(self.counts), "exponent": self.exponent, "theta": self.theta}


# -----------------------------------------------------------------------------
# piecewise polynomials from local projections


class PiecewisePolynomial:
    """Discontinuous piecewise polynomial with per-cell coefficients.

    Cell e carries ``sum_k coeffs[e, k] * basis_k`` with the basis in the
    cell's local coordinates; evaluation mirrors :class:`FeFunction`.
    """

    def __init__(self, mesh: Mesh, basis: list, coeffs: np.ndarray):
        self.mesh = mesh
        self.basis = basis
        self.coeffs = np.asarray(coeffs, dtype=float)
        exps = sorted({a for p in basis for a in p.coeffs})
        self._exps = np.array(exps, dtype=int).reshape(len(exps), mesh.dim)
        self._index = {a: i for i, a in enumerate(exps)}
        self.center = 0.5 * (mesh.cell_lo + mesh.cell_hi)
        self.half = 0.5 * (mesh.cell_hi - mesh.cell_lo)
        # basis coefficients over the monomials in self._exps
        self.T = np.zeros((len(basis), len(exps)))
        for k, p in enumerate(basis):
            for a, c in p.coeffs.items():
                self.T[k, self._index[a]] = c

    def values(self, cells, x, gamma=None) -> np.ndarray:
        n = self.mesh.dim
        gamma = (0,) * n if gamma is None else tuple(gamma)
        xi = (x - self.center[cells][:, None, :]) / self.half[cells][:, None, :]
        mono = monomial_values(self._exps, xi, gamma)  # (C, P, nexp)
        scale = np.prod(self.half[cells] ** (-np.asarray(gamma, dtype=float)), axis=-1)
        return np.einsum("cpe,ke,ck->cp", mono, self.T, self.coeffs[cells]) * scale[:, None]


def best_approximation(mesh: Mesh, family, target, norm: str = "l2",
                       npts: int = ERROR_NPTS) -> PiecewisePolynomial:
    """Cellwise L2 (or full H1) projection of ``target`` onto the family's local space."""
    space = family.space if hasattr(family, "space") else family
    basis = projection_basis(space)
    pp = PiecewisePolynomial(mesh, basis, np.zeros((mesh.num_cells, len(basis))))
    T = pp.T
    rule = reference_rule(mesh.kind, mesh.dim, npts=npts)
    n = mesh.dim
    zero = (0,) * n
    grads = [zero] + (indices_of_order(n, 1) if norm == "h1" else [])
    if norm not in ("l2", "h1"):
        raise ValueError(f"unknown projection norm {norm!r}")
    for cells in chunks(mesh.num_cells):
        cr = cell_rule(mesh, rule, cells)
        xi = (cr.x - pp.center[cells][:, None, :]) / pp.half[cells][:, None, :]
        G = 0.0
        rhs = 0.0
        for g in grads:
            scale = np.prod(pp.half[cells] ** (-np.asarray(g, dtype=float)), axis=-1)
            Phi = np.einsum("cpe,ke->cpk", monomial_values(pp._exps, xi, g), T) * scale[:, None, None]
            f = target(cr.x.reshape(-1, n), g).reshape(cr.w.shape)
            G = G + np.einsum("cp,cpi,cpj->cij", cr.w, Phi, Phi)
            rhs = rhs + np.einsum("cp,cpi,cp->ci", cr.w, Phi, f)
        d = np.sqrt(np.einsum("cii->ci", G))
        cond = np.linalg.cond(G / (d[:, :, None] * d[:, None, :]))
        if not np.all(np.isfinite(cond)) or cond.max() > GRAM_CONDITION_LIMIT:
            raise np.linalg.LinAlgError("singular local Gram matrix")
        pp.coeffs[cells] = np.linalg.solve(G, rhs[..., None])[..., 0]
    return pp


# -----------------------------------------------------------------------------
# norms


def _mesh_of(uh) -> Mesh:
    return uh.space.mesh if isinstance(uh, FeFunction) else uh.mesh


def _region_cells(mesh: Mesh, region: str) -> np.ndarray:
    if region in ("omega", "Omega", "all"):
        return np.arange(mesh.num_cells)
    if region == "G":
        cells = np.flatnonzero(mesh.in_G)
        if len(cells) == 0:
            raise ValueError("no element lies inside G")
        return cells
    raise ValueError(f"unknown region {region!r}")


def _eval(f, cells, x, gamma) -> np.ndarray:
    """Evaluate an exact handle (x, gamma) or a discrete function on cell points."""
    if f is None:
        return np.zeros(x.shape[:2])
    if hasattr(f, "values"):
        return f.values(cells, x, gamma)
    return f(x.reshape(-1, x.shape[-1]), gamma).reshape(x.shape[:2])


def local_norms(u, uh, j: int, p: float = 2.0, semi: bool = False,
                npts: int = ERROR_NPTS, cells=None, mesh: Mesh | None = None) -> np.ndarray:
    """Per-cell ``||u - uh||_{j,p,K}**p`` (or the max-norm for p = inf).

    Either argument may be ``None`` (treated as zero), an exact handle or a
    discrete function.  ``semi`` keeps only |alpha| = j.
    """
    mesh = mesh if mesh is not None else _mesh_of(uh)
    cells = np.arange(mesh.num_cells) if cells is None else np.asarray(cells)
    rule = reference_rule(mesh.kind, mesh.dim, npts=npts)
    orders = [j] if semi else list(range(j + 1))
    out = np.zeros(len(cells))
    for start in range(0, len(cells), 4096):
        sel = cells[start:start + 4096]
        cr = cell_rule(mesh, rule, sel)
        acc = np.zeros(len(sel))
        for i in orders:
            for alpha in indices_of_order(mesh.dim, i):
                e = _eval(u, sel, cr.x, alpha) - _eval(uh, sel, cr.x, alpha)
                if math.isinf(p):
                    acc = np.maximum(acc, np.abs(e).max(axis=1))
                else:
                    acc += np.einsum("cp,cp->c", cr.w, np.abs(e) ** p)
        out[start:start + len(sel)] = acc
    return out


def broken_error(u, uh, j: int, p: float = 2.0, region: str = "omega", weights=None,
                 r: int | None = None, q: float | None = None, semi: bool = False,
                 npts: int = ERROR_NPTS, mesh: Mesh | None = None) -> float:
    """Broken (semi)norm of u - uh, plain or with the local h_K weights.

    weights=None gives ||u - uh||_{j,p,region,h}; ``"local"`` gives
    (sum_K h_K^{p(j-r)} ||u - uh||_{j,p,K}^p)^{1/p}; ``"mixed"`` gives
    (sum_K h_K^{p((j-r)+n(1/p-1/q))} ||u - uh||_{j,q,K}^p)^{1/p}.
    """
    mesh = mesh if mesh is not None else _mesh_of(uh)
    if p < 2 or (q is not None and q < p):
        raise ValueError(f"unsupported exponents p={p}, q={q}")
    cells = _region_cells(mesh, region)
    if weights is None:
        loc = local_norms(u, uh, j, p, semi, npts, cells, mesh)
        return float(loc.max()) if math.isinf(p) else float(loc.sum() ** (1.0 / p))
    if r is None:
        raise ValueError("weighted forms need the order parameter r")
    if math.isinf(p):
        raise ValueError("weighted forms need a finite p")
    hK = mesh.diameters[cells]
    if weights == "local":
        loc = local_norms(u, uh, j, p, semi, npts, cells, mesh)
        return float(np.sum(hK ** (p * (j - r)) * loc) ** (1.0 / p))
    if weights == "mixed":
        if q is None:
            raise ValueError("the mixed form needs q")
        locq = local_norms(u, uh, j, q, semi, npts, cells, mesh)
        normq = locq if math.isinf(q) else locq ** (1.0 / q)
        expo = p * ((j - r) + mesh.dim * (1.0 / p - (0.0 if math.isinf(q) else 1.0 / q)))
        return float(np.sum(hK**expo * normq**p) ** (1.0 / p))
    raise ValueError(f"unknown weights {weights!r}")


def l2_inner(u, uh, npts: int = ERROR_NPTS, mesh: Mesh | None = None) -> float:
    """(u, uh) over the mesh by oversampled quadrature."""
    mesh = mesh if mesh is not None else _mesh_of(uh)
    rule = reference_rule(mesh.kind, mesh.dim, npts=npts)
    zero = (0,) * mesh.dim
    tot = 0.0
    for cells in chunks(mesh.num_cells):
        cr = cell_rule(mesh, rule, cells)
        tot += float(np.einsum("cp,cp,cp->", cr.w, _eval(u, cells, cr.x, zero),
                               _eval(uh, cells, cr.x, zero)))
    return tot


# -----------------------------------------------------------------------------
# matching


@dataclass
class Match:
    index: int  # 1-based position in the exact spectrum (with multiplicity)
    lam: float
    lam_h: float
    positions: tuple  # 0-based discrete positions of the cluster
    u: object
    uh: FeFunction
    coefficients: tuple

    @property
    def multiplicity(self) -> int:
        return len(self.positions)


def flatten_exact(exact: list) -> list:
    """[(lam, group_start, offset, handle)] with one entry per eigenfunction."""
    out = []
    for grp in exact:
        start = len(out)
        for k, f in enumerate(grp.functions):
            out.append((grp.lam, start, k, f, grp.multiplicity))
    return out


def match_eigenpair(pairs: list, space, exact: list, j: int, npts: int = ERROR_NPTS) -> Match:
    """Pair the j-th exact eigenfunction with its discrete approximation.

    Simple eigenvalues take the discrete vector with the sign that makes
    (u, u_h) >= 0; clusters use the L2 projection of u onto the span of the
    discrete cluster.
    """
    flat = flatten_exact(exact)
    if j < 1 or j > len(flat):
        raise IndexError(f"eigen index {j} is outside the exact window of {len(flat)}")
    lam, start, off, u, mult = flat[j - 1]
    if start + mult > len(pairs):
        if j > len(pairs):
            raise IndexError(f"eigen index {j} is outside the computed window of {len(pairs)}")
        raise IndexError(f"cluster at {start + 1}..{start + mult} straddles the computed window")
    positions = tuple(range(start, start + mult))
    fns = [FeFunction(space, pairs[q].vector) for q in positions]
    coef = [l2_inner(u, f, npts) for f in fns]
    if mult == 1:
        coef = [1.0 if coef[0] >= 0 else -1.0]
    coeffs = sum(c * f.coeffs for c, f in zip(coef, fns))
    uh = FeFunction(space, coeffs)
    return Match(j, lam, pairs[j - 1].lam, positions, u, uh, tuple(coef))


# -----------------------------------------------------------------------------
# fits


def _fit(x, y, window) -> RateFit:
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), res


def eoc(errors, hs, window: int | None = None) -> RateFit:
    """Least-squares slope of log e vs log h plus pairwise rates.

    ``window`` restricts the fit to the last ``window`` points.
    """
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or len(e) < 3:
        raise ValueError("need at least three (error, h) pairs of equal length")
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("non-positive error entry (quadrature noise floor?); drop that level")
    idx = np.arange(len(e))
    if window is not None:
        if window < 3:
            raise ValueError("a rate fit needs at least three points")
        idx = idx[-window:]
    slope, icpt, res = _fit(np.log(h[idx]), np.log(e[idx]), idx)
    pair = tuple(float(np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1])) for i in range(len(e) - 1))
    return RateFit(slope, icpt, res, tuple(int(i) for i in idx), pair)


def lambda_scaling(errors, lambdas, h: float | None = None, cap: float = LAMBDA_H2_CAP) -> RateFit:
    """Slope of log(error) vs log(lambda) at a fixed mesh."""
    e = np.asarray(errors, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if len(e) < 3 or e.shape != lam.shape:
        raise ValueError("need at least three (error, lambda) pairs")
    if h is not None and float(lam.max()) * h * h > cap:
        raise ValueError(f"lambda h^2 = {lam.max() * h * h:.3g} exceeds the asymptotic cap {cap}")
    if np.any(e <= 0):
        raise ValueError("non-positive error entry")
    slope, icpt, res = _fit(np.log(lam), np.log(e), None)
    return RateFit(slope, icpt, res, tuple(range(len(e))))


def bound_ratio(error: float, h: float, lam: float, r: int, j: int, m: int = 1) -> float:
    """error / (h^{r-j} lambda^{r/(2m)})."""
    return float(error / (h ** (r - j) * lam ** (r / (2.0 * m))))


def rhs_seminorm(u, mesh: Mesh, family, alpha, p: float = 2.0, npts: int = ERROR_NPTS) -> float:
    """Right-hand side of the anisotropic projection bound with per-direction sizes.

    (sum_K sum_{gamma in Ind_rest or |gamma| = r+1} h_K^{p(gamma-alpha)} ||D^gamma u||_{0,p,K}^p)^{1/p}
    """
    if mesh.kind not in ("interval", "rectangle"):
        raise ValueError("the anisotropic bound needs a tensor-product mesh")
    _, r, rest = index_sets(family)
    gammas = list(rest) + indices_of_order(mesh.dim, r + 1)
    alpha = np.asarray(alpha, dtype=float)
    rule = reference_rule(mesh.kind, mesh.dim, npts=npts)
    tot = 0.0
    for cells in chunks(mesh.num_cells):
        cr = cell_rule(mesh, rule, cells)
        sz = mesh.sizes[cells]
        for g in gammas:
            w = np.prod(sz ** (p * (np.asarray(g, dtype=float) - alpha)), axis=1)
            vals = _eval(u, cells, cr.x, tuple(g))
            tot += float(w @ np.einsum("cp,cp->c", cr.w, np.abs(vals) ** p))
    return tot ** (1.0 / p)


# -----------------------------------------------------------------------------
# reliability


def reliable_count(discrete, exact, tol: float, mode: str = "relative") -> int:
    """Largest j with every index <= j inside the tolerance."""
    d = np.asarray(discrete, dtype=float)
    ex = np.asarray(exact, dtype=float)
    k = min(len(d), len(ex))
    d, ex = d[:k], ex[:k]
    if mode == "relative":
        err = np.abs(d - ex) / ex
    elif mode == "absolute":
        err = np.abs(d - ex)
    else:
        raise ValueError(f"unknown tolerance mode {mode!r}")
    bad = np.flatnonzero(~(err <= tol))
    return int(bad[0]) if len(bad) else k


def theta_from_exponent(exponent: float, mode: str, r: int | None, m: int = 1) -> float:
    """Invert the counting exponents: N^{1-theta} (relative) or the absolute analogues."""
    if mode == "relative":
        return 1.0 - exponent
    if r is None:
        return float("nan")
    if m == 1:
        return 1.0 - exponent * r / (r - 1)
    return 1.0 - exponent * r / (r - 2)


def reliability(spectra: list, exact, tol: float, mode: str = "relative",
                r: int | None = None, m: int = 1) -> ReliabilityReport:
    """Reliable counts across meshes; ``spectra`` is a list of (N, eigenvalues)."""
    if len(spectra) < 3:
        raise ValueError("reliability needs at least three mesh levels")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    Ns = tuple(int(N) for N, _ in spectra)
    counts = tuple(reliable_count(lams, exact, tol, mode) for _, lams in spectra)
    if all(c > 0 for c in counts):
        slope, _, _ = _fit(np.log(np.asarray(Ns, float)), np.log(np.asarray(counts, float)), None)
    else:
        slope = float("nan")
    return ReliabilityReport(float(tol), mode, Ns, counts, slope,
                             theta_from_exponent(slope, mode, r, m))
