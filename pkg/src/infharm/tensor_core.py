"""Small dense linear algebra: tensor contraction, Jacobi SVD, range/normal projectors.

Gradient matrices are stored as ``(N, n)`` arrays (rows index the target,
columns the domain) and Hessians as ``(N, n, n)`` arrays. Every routine here
also accepts a leading batch axis so that whole grids can be processed at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-8


class ShapeError(ValueError):
    """Raised when tensor dimensions do not agree."""


def as_mat(M) -> np.ndarray:
    """Validate a gradient matrix: finite, 2-d, dimensions >= 1."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or min(M.shape) < 1:
        raise ShapeError(f"expected an N x n matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def as_ten3(T, symmetric: bool = True, tol: float = 1e-10) -> np.ndarray:
    """Validate an ``(N, n, n)`` Hessian tensor, optionally checking symmetry."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 3 or T.shape[1] != T.shape[2]:
        raise ShapeError(f"expected an N x n x n tensor, got shape {T.shape}")
    if symmetric:
        scale = 1.0 + np.max(np.abs(T), initial=0.0)
        if np.max(np.abs(T - T.transpose(0, 2, 1)), initial=0.0) > tol * scale:
            raise ValueError("Hessian tensor is not symmetric in its last two indices")
    return T


def contract(S, T) -> np.ndarray | float:
    """Full contraction of ``T`` against the trailing indices of ``S``.

    For ``S`` of order ``q + s`` and ``T`` of order ``p + s`` the result has
    order ``q - p`` with entries ``S[a_q..a_{p+1}, *] * T[*]`` summed over all
    indices of ``T``. Equal orders give the Frobenius product ``tr(S^T T)``.
    """
    S = np.asarray(S, dtype=float)
    T = np.asarray(T, dtype=float)
    k = T.ndim
    if k > S.ndim:
        raise ShapeError(f"cannot contract order-{S.ndim} tensor with order-{k} tensor")
    if S.shape[S.ndim - k:] != T.shape:
        raise ShapeError(f"trailing shape {S.shape[S.ndim - k:]} does not match {T.shape}")
    out = np.tensordot(S, T, axes=k)
    return float(out) if out.ndim == 0 else out


def _jacobi_columns(A: np.ndarray, tol: float, max_sweeps: int):
    """One-sided (Hestenes) Jacobi on the columns of a batch of tall matrices."""
    A = A.copy()
    k = A.shape[-1]
    V = np.broadcast_to(np.eye(k), A.shape[:-2] + (k, k)).copy()
    for _ in range(max_sweeps):
        rotated = False
        for i in range(k - 1):
            for j in range(i + 1, k):
                ai = A[..., :, i]
                aj = A[..., :, j]
                alpha = np.einsum("...m,...m->...", ai, ai)
                beta = np.einsum("...m,...m->...", aj, aj)
                gamma = np.einsum("...m,...m->...", ai, aj)
                active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                g = np.where(active, gamma, 1.0)
                with np.errstate(over="ignore"):
                    # subnormal gamma sends zeta to inf, giving the correct angle t = 0
                    zeta = (beta - alpha) / (2.0 * g)
                    t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                t = np.where(zeta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for M in (A, V):
                    mi = M[..., :, i].copy()
                    mj = M[..., :, j]
                    M[..., :, i] = c[..., None] * mi - s[..., None] * mj
                    M[..., :, j] = s[..., None] * mi + c[..., None] * mj
        if not rotated:
            break
    return A, V


def _complete_basis(U: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Replace columns of ``U`` belonging to (numerically) zero singular values
    by an orthonormal completion, so that ``U`` always has orthonormal columns."""
    m, k = U.shape[-2:]
    flat_U = U.reshape(-1, m, k)
    flat_s = sigma.reshape(-1, k)
    for b in range(flat_U.shape[0]):
        smax = flat_s[b, 0] if k else 0.0
        good = flat_s[b] > 1e-300 + 1e-15 * smax
        if np.all(good):
            continue
        basis = [flat_U[b, :, c] for c in range(k) if good[c]]
        for c in np.flatnonzero(~good):
            for e in np.eye(m):
                v = e - sum((b_ @ e) * b_ for b_ in basis)
                nv = np.linalg.norm(v)
                if nv > 1e-6:
                    v = v / nv
                    v = v - sum((b_ @ v) * b_ for b_ in basis)
                    v /= np.linalg.norm(v)
                    basis.append(v)
                    flat_U[b, :, c] = v
                    break
    return flat_U.reshape(U.shape)


def svd_small(M, tol: float = 1e-15, max_sweeps: int = 60):
    """Thin SVD ``M = U diag(sigma) V^T`` by one-sided Jacobi rotations.

    Works for any small ``(N, n)`` matrix or a batch ``(..., N, n)``. Returns
    ``U (..., N, k)``, ``sigma (..., k)`` sorted descending and ``V (..., n, k)``
    with ``k = min(N, n)``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim < 2:
        raise ShapeError("svd_small needs at least a 2-d array")
    wide = M.shape[-2] < M.shape[-1]
    A = np.swapaxes(M, -1, -2) if wide else M
    B, W = _jacobi_columns(A, tol, max_sweeps)
    sigma = np.linalg.norm(B, axis=-2)
    order = np.argsort(-sigma, axis=-1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=-1)
    B = np.take_along_axis(B, order[..., None, :], axis=-1)
    W = np.take_along_axis(W, order[..., None, :], axis=-1)
    safe = np.where(sigma > 0.0, sigma, 1.0)
    L = B / safe[..., None, :]
    L = _complete_basis(L, sigma)
    if wide:
        return W, sigma, L
    return L, sigma, W


def numerical_rank(sigma, tau: float = DEFAULT_RANK_TOL) -> np.ndarray | int:
    """Count singular values above ``tau * sigma_max`` (0 for the zero matrix)."""
    sigma = np.asarray(sigma, dtype=float)
    smax = sigma[..., :1]
    r = np.sum((sigma > tau * smax) & (smax > 0.0), axis=-1)
    return int(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector on R^N together with its rank."""

    matrix: np.ndarray
    rank: int

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def __matmul__(self, other):
        return self.matrix @ other


def _range_matrix(M, tau):
    U, sigma, _ = svd_small(M)
    r = numerical_rank(sigma, tau)
    keep = np.arange(sigma.shape[-1]) < np.asarray(r)[..., None]
    Uk = U * keep[..., None, :]
    return Uk @ np.swapaxes(Uk, -1, -2), r


def range_proj(M, tau: float = DEFAULT_RANK_TOL) -> Projector:
    """Projector onto the range of ``M`` (the tangent space for a gradient)."""
    M = as_mat(M)
    P, r = _range_matrix(M, tau)
    return Projector(P, int(r))


def null_proj_transpose(M, tau: float = DEFAULT_RANK_TOL) -> Projector:
    """Projector onto the nullspace of ``M^T`` (the normal space for a gradient)."""
    M = as_mat(M)
    P, r = _range_matrix(M, tau)
    return Projector(np.eye(M.shape[0]) - P, M.shape[0] - int(r))


def projectors_batch(M, tau: float = DEFAULT_RANK_TOL):
    """Batched ``(range, normal, rank)`` for an array of gradients ``(..., N, n)``."""
    M = np.asarray(M, dtype=float)
    P, r = _range_matrix(M, tau)
    return P, np.eye(M.shape[-2]) - P, np.asarray(r)
