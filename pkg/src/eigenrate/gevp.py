"""Generalized symmetric-definite eigenproblems A x = lambda B x.

The dense path reduces to a standard problem with a Cholesky factor of B,
tridiagonalizes with Householder reflections and finishes with implicitly
shifted QL.  Large sparse pairs go through shift-invert Lanczos followed by a
dense Rayleigh-Ritz step, so both paths return the same certified objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 4096
AUTO_DENSE = 640  # "auto" switches to Lanczos above this size
QL_MAX_ITER = 50
QL_VECTOR_LIMIT = 256
RESIDUAL_TOL = 1e-10
ORTHO_TOL = 1e-10


class NotSPDError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


class CertificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenPair:
    lam: float
    vector: np.ndarray  # B-normalized coefficient vector
    residual: float  # ||A x - lam B x||_2 / ||A||_F

    @property
    def value(self) -> float:
        return self.lam


@dataclass(frozen=True)
class Certificate:
    max_residual: float
    orthogonality: float  # max |X^T B X - I|
    method: str
    n: int


def cholesky(B) -> np.ndarray:
    """Lower factor L with L L^T = B; raises NotSPDError on a non-positive pivot."""
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be square")
    try:
        return np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("B is not symmetric positive definite") from exc


def householder_tridiagonal(C: np.ndarray):
    """Reduce symmetric C to tridiagonal form Q^T C Q.

    Returns the diagonal, the subdiagonal and the list of Householder
    vectors (one per column, ``None`` when the column is already reduced).
    """
    C = np.array(C, dtype=float)
    n = C.shape[0]
    vs = []
    for k in range(n - 2):
        x = C[k + 1:, k]
        sigma = np.linalg.norm(x)
        if sigma == 0.0:
            vs.append(None)
            continue
        alpha = -math.copysign(sigma, x[0])
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            vs.append(None)
            continue
        v /= vn
        S = C[k + 1:, k + 1:]
        p = S @ v
        w = p - (v @ p) * v
        U = np.outer(v, 2.0 * w)
        S -= U
        S -= U.T
        C[k + 1, k] = C[k, k + 1] = alpha
        C[k + 2:, k] = 0.0
        C[k, k + 2:] = 0.0
        vs.append(v)
    d = np.diag(C).copy()
    e = np.diag(C, -1).copy()
    return d, e, vs


def apply_householders(vs: list, Y: np.ndarray) -> np.ndarray:
    """Compute Q Y where Q = H_0 H_1 ... from :func:`householder_tridiagonal`."""
    Y = np.array(Y, dtype=float)
    for k in range(len(vs) - 1, -1, -1):
        v = vs[k]
        if v is None:
            continue
        blk = Y[k + 1:]
        blk -= 2.0 * np.outer(v, v @ blk)
    return Y


def tridiagonal_ql(d, e, vectors: bool = True, max_iter: int = QL_MAX_ITER):
    """Implicitly shifted QL on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e`` the subdiagonal (length n-1).  Returns the
    (unsorted) eigenvalues and, if requested, a matrix whose rows are the
    eigenvectors of the tridiagonal matrix.
    """
    n = len(d)
    d = [float(x) for x in d]
    e = [float(x) for x in e] + [0.0]
    Zt = np.eye(n) if vectors else None
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise ConvergenceError(f"QL did not converge for eigenvalue {l} in {max_iter} sweeps")
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if vectors:
                    zi = Zt[i].copy()
                    zj = Zt[i + 1]
                    Zt[i] = c * zi - s * zj
                    Zt[i + 1] = s * zi + c * zj
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.array(d), Zt


def tridiagonal_vectors(d, e, lams, cluster_tol: float = 1e-3, sweeps: int = 3) -> np.ndarray:
    """Eigenvectors of a tridiagonal matrix for known eigenvalues (columns).

    Inverse iteration with banded solves; vectors whose eigenvalues sit
    within ``cluster_tol * ||T||`` of the previous one are reorthogonalized
    against the rest of their cluster.
    """
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    n = len(d)
    if n == 1:
        return np.ones((1, len(lams)))
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[2, :-1] = e
    rows = np.abs(d)
    rows[:-1] += np.abs(e)
    rows[1:] += np.abs(e)
    scale = max(float(rows.max()), np.finfo(float).tiny)
    eps = np.finfo(float).eps
    start = np.cos(0.731 * np.arange(n)) + 1.25
    start /= np.linalg.norm(start)
    Y = np.empty((n, len(lams)))
    cluster_start = 0
    prev = None
    shift = 0.0
    for q, lam in enumerate(lams):
        if prev is None or lam - prev > cluster_tol * scale:
            cluster_start = q
        if prev is not None and lam - prev <= 10 * eps * scale:
            shift += 10 * eps * scale
        else:
            shift = 0.0
        mu = lam + shift
        ab[1] = d - (mu + eps * scale)
        y = start.copy()
        Yc = Y[:, cluster_start:q]
        for _ in range(sweeps):
            y = sla.solve_banded((1, 1), ab, y, check_finite=False)
            if Yc.shape[1]:
                y -= Yc @ (Yc.T @ y)
                y -= Yc @ (Yc.T @ y)
            y /= np.linalg.norm(y)
        Y[:, q] = y
        prev = lam
    return Y


def _dense(M) -> np.ndarray:
    return np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)


def _order(lams: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Ascending order; near-ties broken by the index of the dominant coefficient."""
    idx = np.argsort(lams, kind="stable")
    scale = max(1.0, float(np.max(np.abs(lams)))) if len(lams) else 1.0
    dom = np.argmax(np.abs(X), axis=0)
    out = list(idx)
    start = 0
    while start < len(out):
        stop = start + 1
        while stop < len(out) and lams[out[stop]] - lams[out[stop - 1]] <= 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            out[start:stop] = sorted(out[start:stop], key=lambda q: (dom[q], q))
        start = stop
    return np.array(out, dtype=int)


def _normalize_signs(X: np.ndarray) -> np.ndarray:
    dom = np.argmax(np.abs(X), axis=0)
    sgn = np.sign(X[dom, np.arange(X.shape[1])])
    sgn[sgn == 0] = 1.0
    return X * sgn


def dense_eigh(A, B, vectors: bool = True, k: int | None = None):
    """Eigenpairs of a dense pair: Cholesky, Householder, QL, back-transform.

    Up to ``QL_VECTOR_LIMIT`` unknowns QL accumulates every eigenvector;
    beyond that QL yields the eigenvalues and the ``k`` smallest vectors come
    from inverse iteration on the tridiagonal matrix.
    """
    A = _dense(A)
    B = _dense(B)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    L = cholesky(B)
    # C = L^{-1} A L^{-T}
    W = sla.solve_triangular(L, A, lower=True)
    C = sla.solve_triangular(L, W.T, lower=True)
    C = 0.5 * (C + C.T)
    d, e, vs = householder_tridiagonal(C)
    if not vectors:
        return np.sort(tridiagonal_ql(d, e, vectors=False)[0]), None
    if n <= QL_VECTOR_LIMIT:
        lams, Zt = tridiagonal_ql(d, e, vectors=True)
        Y = Zt.T
    else:
        lams = np.sort(tridiagonal_ql(d, e, vectors=False)[0])[: (n if k is None else k)]
        Y = tridiagonal_vectors(d, e, lams)
    Y = apply_householders(vs, Y)
    X = sla.solve_triangular(L.T, Y, lower=False)
    return lams, X


def _finish(A, B, lams, X, k, method: str):
    X = _normalize_signs(X)
    order = _order(lams, X)[:k]
    lams = lams[order]
    X = X[:, order]
    # one B-normalization pass absorbs the last ulp of drift
    X = X / np.sqrt(np.einsum("ij,ij->j", X, B @ X))
    AX = A @ X
    BX = B @ X
    # Rayleigh quotients on the original pair: the reduced matrix loses about
    # eps * lambda_max absolutely, which swamps small eigenvalues of stiff
    # (fourth-order) problems; the quotient error is quadratic in the vector error
    lams = np.einsum("ij,ij->j", X, AX) / np.einsum("ij,ij->j", X, BX)
    anorm = sp.linalg.norm(A) if sp.issparse(A) else np.linalg.norm(A)
    anorm = anorm if anorm > 0 else 1.0
    res = np.linalg.norm(AX - BX * lams, axis=0) / anorm
    G = X.T @ BX
    ortho = float(np.max(np.abs(G - np.eye(len(lams))))) if len(lams) else 0.0
    cert = Certificate(float(res.max()) if len(res) else 0.0, ortho, method, A.shape[0])
    if cert.max_residual > RESIDUAL_TOL or cert.orthogonality > ORTHO_TOL:
        raise CertificationError(
            f"{method}: residual {cert.max_residual:.3e}, orthogonality {cert.orthogonality:.3e}"
        )
    pairs = [EigenPair(float(lams[i]), np.ascontiguousarray(X[:, i]), float(res[i]))
             for i in range(len(lams))]
    return pairs, cert


def _lanczos(A, B, k: int):
    n = A.shape[0]
    A = sp.csc_matrix(A)
    B = sp.csc_matrix(B)
    ncv = min(n - 1, max(2 * k + 1, k + 20))
    v0 = np.cos(0.37 * np.arange(n)) + 1.5
    _, V = spla.eigsh(A, k=k, M=B, sigma=0.0, which="LM", v0=v0, ncv=ncv, tol=0.0)
    # Rayleigh-Ritz on the Lanczos subspace with the dense solver
    Q, _ = np.linalg.qr(V)
    Ak = Q.T @ (A @ Q)
    Bk = Q.T @ (B @ Q)
    lams, Y = dense_eigh(0.5 * (Ak + Ak.T), 0.5 * (Bk + Bk.T))
    return lams, Q @ Y


def solve_gevp(pair, k: int | None = None, method: str = "auto",
               dense_limit: int = DENSE_LIMIT, return_certificate: bool = False):
    """The k smallest certified eigenpairs of (pair.A, pair.B), ascending.

    method is ``dense``, ``lanczos`` or ``auto`` (dense up to ``AUTO_DENSE``).
    """
    A, B = pair.A, pair.B
    n = A.shape[0]
    k = n if k is None else int(k)
    if k < 1 or k > n:
        raise ValueError(f"requested {k} eigenpairs from a system with {n} free DOFs")
    if method == "auto":
        method = "dense" if n <= AUTO_DENSE or k >= n - 1 else "lanczos"
    if method == "dense":
        if n > dense_limit:
            raise ValueError(
                f"{n} free DOFs exceed the dense limit {dense_limit}; use method='lanczos'"
            )
        lams, X = dense_eigh(A, B, k=k)
    elif method == "lanczos":
        if k >= n - 1:
            raise ValueError("Lanczos needs k < n - 1")
        lams, X = _lanczos(A, B, k)
    else:
        raise ValueError(f"unknown method {method!r}")
    pairs, cert = _finish(A, B, lams, X, k, method)
    return (pairs, cert) if return_certificate else pairs


def eigenvalues(pair, method: str = "dense") -> np.ndarray:
    """All eigenvalues (no vectors, no certification) via the dense path."""
    lams, _ = dense_eigh(pair.A, pair.B, vectors=False)
    return lams
