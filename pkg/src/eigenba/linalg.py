"""Dense linear algebra: truncated SVD by one-sided Jacobi, eigen directions,
a brute-force solver for the greedy direction problem, and finite differences.

Matrices are plain ``numpy`` float64 arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class SvdResult:
    """Top-``k`` singular triplets of a matrix ``J`` (m x n).

    ``J @ right_vectors[:, i] == singular_values[i] * left_vectors[:, i]``.
    """

    singular_values: np.ndarray  # (k,)
    left_vectors: np.ndarray  # (m, k)
    right_vectors: np.ndarray  # (n, k)

    @property
    def k(self):
        return self.singular_values.shape[0]


def _round_robin(q):
    """Yield index arrays (left, right) of q/2 disjoint pairs; q must be even.

    Over q-1 steps every unordered pair appears exactly once.
    """
    order = list(range(q))
    half = q // 2
    for _ in range(q - 1):
        yield np.array(order[:half]), np.array(order[::-1][:half])
        order = [order[0], order[-1]] + order[1:-1]


def _orthogonalize_columns(a, tol, max_sweeps):
    """Hestenes one-sided Jacobi: rotate columns of ``a`` until mutually orthogonal.

    Returns the rotated matrix and the accumulated orthogonal rotation ``w``
    with ``a_in @ w == a_out``.  Pairs are processed in round-robin order so
    each step rotates q/2 disjoint pairs at once.
    """
    a = np.array(a, dtype=np.float64)
    p, q = a.shape
    if q % 2:
        a = np.hstack([a, np.zeros((p, 1))])
    qe = a.shape[1]
    w = np.eye(qe)
    # columns this small are roundoff; rotating against them never converges
    floor = (_EPS * np.linalg.norm(a)) ** 2
    steps = list(_round_robin(qe)) if qe > 1 else []
    for _ in range(max_sweeps):
        rotated = False
        for left, right in steps:
            ai, aj = a[:, left], a[:, right]
            alpha = np.einsum("ij,ij->j", ai, ai)
            beta = np.einsum("ij,ij->j", aj, aj)
            gamma = np.einsum("ij,ij->j", ai, aj)
            active = (np.abs(gamma) > tol * np.sqrt(alpha * beta)) & (np.minimum(alpha, beta) > floor)
            if not active.any():
                continue
            rotated = True
            li, ri = left[active], right[active]
            g = gamma[active]
            zeta = (beta[active] - alpha[active]) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (a, w):
                x, y = mat[:, li], mat[:, ri]
                mat[:, li] = c * x - s * y
                mat[:, ri] = s * x + c * y
        if not rotated:
            break
    return a[:, :q], w[:q, :q]


def _complete_basis(vectors, valid):
    """Replace invalid columns of ``vectors`` with an orthonormal completion.

    Valid columns are assumed orthonormal already.  Replacements are drawn by
    Gram-Schmidt over the standard basis, so the result is deterministic.
    """
    out = vectors.copy()
    dim = out.shape[0]
    kept = [out[:, i] for i in range(out.shape[1]) if valid[i]]
    candidates = iter(np.eye(dim))
    for i in np.flatnonzero(~valid):
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for u in kept:
                    v -= (u @ v) * u
            norm = np.linalg.norm(v)
            if norm > 0.5:
                v /= norm
                out[:, i] = v
                kept.append(v)
                break
        else:  # pragma: no cover - more columns than dimensions
            raise ArgumentError("cannot complete an orthonormal basis")
    return out


def truncated_svd(J, k, tol=None, max_sweeps=80):
    """Top-``k`` singular triplets of ``J`` via one-sided Jacobi.

    Jacobi rotations act on the smaller of the two Gram dimensions.  Singular
    values come back non-increasing and each right vector has its largest
    magnitude entry non-negative (left vector flipped alongside).
    """
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2 or 0 in J.shape:
        raise ArgumentError(f"expected a non-empty 2-D matrix, got shape {J.shape}")
    m, n = J.shape
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= min(m, n):
        raise ArgumentError(f"k must be an integer in [1, {min(m, n)}], got {k!r}")
    if not np.all(np.isfinite(J)):
        raise DataError("matrix contains non-finite entries")
    if tol is None:
        tol = max(m, n) * _EPS

    # work on a max-abs normalised copy so squared norms neither under- nor overflow
    magnitude = np.abs(J).max()
    A = J / magnitude if magnitude > 0 else J
    wide = n > m
    # tall: J W = U S with W = V;  wide: J^T W = V S with W = U
    b, w = _orthogonalize_columns(A.T if wide else A, tol, max_sweeps)
    sigma = np.linalg.norm(b, axis=0)
    order = np.argsort(-sigma, kind="stable")[:k]
    sigma, b, w = sigma[order], b[:, order], w[:, order]

    # below this the rotated columns are roundoff and carry no direction
    valid = sigma > 16 * _EPS * np.linalg.norm(A)
    scaled = np.zeros_like(b)
    scaled[:, valid] = b[:, valid] / sigma[valid]
    scaled = _complete_basis(scaled, valid)
    if magnitude > 0:
        sigma = sigma * magnitude
    if wide:
        left, right = w, scaled
    else:
        left, right = scaled, w

    peak = np.abs(right).argmax(axis=0)
    flip = right[peak, np.arange(k)] < 0
    right[:, flip] *= -1.0
    left[:, flip] *= -1.0
    return SvdResult(singular_values=sigma, left_vectors=left, right_vectors=right)


def eigen_directions(J, k):
    """Unit input directions maximising representation displacement.

    These are the leading right singular vectors of ``J`` (eigenvectors of
    ``J.T @ J``), returned as a list of length-n arrays, re-normalised.
    """
    V = truncated_svd(J, k).right_vectors
    V = V / np.linalg.norm(V, axis=0)
    return [V[:, i].copy() for i in range(k)]


def brute_force_problem5(J, k, starts=50, max_iter=20000, tol=1e-13, seed=0):
    """Greedy constrained maximisation of ``||J d||`` solved directly.

    For each i, maximise ``||J d_i||`` over ``||d_i|| <= 1`` subject to
    ``d_j^T J^T J d_i = 0`` for all earlier j, by projected gradient ascent
    from ``starts`` random points; the best end point wins.  Intended as a
    test oracle on matrices no larger than 8 x 8.
    """
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2:
        raise ArgumentError("expected a 2-D matrix")
    m, n = J.shape
    if max(m, n) > 8:
        raise ArgumentError("brute force oracle is limited to 8 x 8 matrices")
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, {n}]")
    rng = np.random.default_rng(seed)
    gram = J.T @ J
    scale = np.trace(gram)
    step = 10.0 / scale if scale > 0 else 1.0
    found = []
    constraint_rows = []
    for _ in range(k):
        if constraint_rows:
            # orthonormal basis of the constraint normals; project them out
            C = np.array(constraint_rows).T
            Q, R = np.linalg.qr(C)
            keep = np.abs(np.diag(R)) > 1e-12 * max(1.0, np.abs(R).max())
            Q = Q[:, keep]
            proj = np.eye(n) - Q @ Q.T
        else:
            proj = np.eye(n)
        D = proj @ rng.standard_normal((n, starts))
        D /= np.maximum(np.linalg.norm(D, axis=0), 1e-300)
        for _ in range(max_iter):
            nxt = proj @ (D + step * 2.0 * (gram @ D))
            norms = np.linalg.norm(nxt, axis=0)
            nxt = nxt / np.where(norms > 0, norms, 1.0)
            delta = np.abs(nxt - D).max()
            D = nxt
            if delta < tol:
                break
        values = np.einsum("ij,ij->j", J @ D, J @ D)
        best = D[:, int(np.argmax(values))]
        best = best / np.linalg.norm(best)
        found.append(best)
        constraint_rows.append(gram @ best)
    return found


def dct_matrix(size):
    """Orthonormal DCT-II matrix: row ``u`` is the u-th cosine basis vector."""
    i = np.arange(size)
    u = i[:, None]
    mat = np.cos(np.pi * (2 * i[None, :] + 1) * u / (2 * size))
    mat *= math.sqrt(2.0 / size)
    mat[0] /= math.sqrt(2.0)
    return mat


def finite_difference_jacobian(f, x, step=1e-5):
    """Central-difference Jacobian of ``f`` at ``x``; rows index outputs."""
    if step <= 0:
        raise ArgumentError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    columns = []
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        hi = np.asarray(f((flat + e).reshape(x.shape)), dtype=np.float64).ravel()
        lo = np.asarray(f((flat - e).reshape(x.shape)), dtype=np.float64).ravel()
        columns.append((hi - lo) / (2.0 * step))
    return np.stack(columns, axis=1)
