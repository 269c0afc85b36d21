"""Dense linear algebra services: Gram factorization, rank, alignment, Schur."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from gramdim.graphs import Graph

__all__ = [
    "Configuration",
    "gram_factor",
    "numerical_rank",
    "align",
    "schur_complement",
    "complete_orthobasis",
]

RANK_TOL = 1e-7


@dataclass(frozen=True)
class Configuration:
    """An assignment of one vector per vertex, rows of `vectors` (n x d)."""

    vectors: np.ndarray
    host: Graph

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.host.n:
            raise ValueError("vectors must be an (n x d) array matching the host")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    def restrict(self, vertices) -> np.ndarray:
        return self.vectors[sorted(vertices)]


def numerical_rank(x: np.ndarray, tol: float = RANK_TOL) -> int:
    """Number of singular values above tol * max(1, sigma_max)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.size == 0:
        return 0
    s = np.linalg.svd(x, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip each column so its first entry of significant size is positive."""
    u = u.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        nz = np.where(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max(initial=0.0)))[0]
        if nz.size and col[nz[0]] < 0:
            u[:, k] = -col
    return u


def gram_factor(x: np.ndarray, tol: float = RANK_TOL, host: Optional[Graph] = None,
                dim: Optional[int] = None):
    """Factor a psd matrix X into vectors p_i (rows) with Gram(p) = X.

    Eigendecomposition rather than Cholesky so semidefinite inputs are fine;
    columns are ordered by decreasing eigenvalue with signs fixed by the first
    significant component, which makes the factors reproducible.  `dim` pads
    (or rejects truncation below the numerical rank).
    """
    x = np.asarray(x, dtype=float)
    x = (x + x.T) / 2
    w, u = np.linalg.eigh(x)
    scale = max(1.0, float(w[-1]) if w.size else 1.0)
    if w.size and w[0] < -tol * scale:
        raise ValueError(f"matrix is indefinite beyond tolerance (min eig {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    order = np.argsort(w)[::-1]
    w, u = w[order], u[:, order]
    r = int(np.sum(w > tol * scale))
    u = _fix_signs(u[:, :r])
    p = u * np.sqrt(w[:r])
    if dim is not None:
        if dim < r:
            raise ValueError(f"requested dim {dim} below numerical rank {r}")
        p = np.hstack([p, np.zeros((p.shape[0], dim - r))])
    if host is None:
        return p
    return Configuration(p, host)


def complete_orthobasis(cols: np.ndarray, d: int) -> np.ndarray:
    """Extend orthonormal columns to a full orthonormal basis of R^d.

    Completion is deterministic: Gram-Schmidt against the standard basis in
    order, signs normalized so the first significant entry is positive.  Both
    sides of an alignment must use this same convention for the glued
    configuration to be reproducible.
    """
    cols = np.asarray(cols, dtype=float).reshape(d, -1)
    basis = [cols[:, k] for k in range(cols.shape[1])]
    for k in range(d):
        v = np.zeros(d)
        v[k] = 1.0
        for b in basis:
            v = v - (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            nz = np.where(np.abs(v) > 1e-12)[0]
            if nz.size and v[nz[0]] < 0:
                v = -v
            basis.append(v)
        if len(basis) == d:
            break
    if len(basis) != d:
        raise np.linalg.LinAlgError("failed to complete orthonormal basis")
    return np.column_stack(basis)


def align(moving: Configuration, fixed: Configuration, shared, tol: float = 1e-6) -> Configuration:
    """Orthogonally map `moving` so its vectors on `shared` match `fixed`'s.

    `shared` lists (moving_vertex, fixed_vertex) pairs, or plain vertices when
    both configurations index the same host.  Requires the two Gram matrices
    to agree on shared x shared; the transform is exactly orthogonal, so every
    inner product among the moving vectors is preserved.
    """
    pairs = [(s, s) if np.isscalar(s) else tuple(s) for s in shared]
    d = max(moving.dim, fixed.dim, 1)
    mv = _pad(moving.vectors, d)
    fx = _pad(fixed.vectors, d)
    if pairs:
        a = np.column_stack([mv[i] for i, _ in pairs])  # d x s
        b = np.column_stack([fx[j] for _, j in pairs])
        if np.max(np.abs(a.T @ a - b.T @ b)) > tol:
            raise ValueError("shared Gram matrices disagree beyond tolerance")
        ua, sa, vta = np.linalg.svd(a, full_matrices=False)
        r = int(np.sum(sa > RANK_TOL * max(1.0, sa[0] if sa.size else 1.0)))
        ua = ua[:, :r]
        if r:
            w = b @ vta[:r].T / sa[:r]  # orthonormal columns spanning fixed side
            # re-orthonormalize against roundoff before completing the bases
            w, rr = np.linalg.qr(w)
            w = w * np.sign(np.where(np.diag(rr) == 0, 1.0, np.diag(rr)))
            u_full = complete_orthobasis(ua, d)
            w_full = complete_orthobasis(w, d)
            q = w_full @ u_full.T
        else:
            q = np.eye(d)
    else:
        q = np.eye(d)
    out = mv @ q.T
    return Configuration(out, moving.host)


def _pad(v: np.ndarray, d: int) -> np.ndarray:
    if v.shape[1] == d:
        return v
    return np.hstack([v, np.zeros((v.shape[0], d - v.shape[1]))])


def schur_complement(m: np.ndarray, i: int) -> np.ndarray:
    """Schur complement of the (i,i) entry: M' = M_-i - m_i m_i^T / m_ii."""
    m = np.asarray(m, dtype=float)
    if abs(m[i, i]) < 1e-14:
        raise ValueError("pivot entry is zero")
    keep = [k for k in range(m.shape[0]) if k != i]
    col = m[keep, i]
    return m[np.ix_(keep, keep)] - np.outer(col, col) / m[i, i]
