"""Dense linear algebra kernel: one-sided Jacobi SVD, truncation, norms.

Factorizations follow a fixed sign convention (largest-magnitude entry of
every left singular vector is nonnegative) so repeated runs on identical
input produce identical bytes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import NoConvergence, RankRequestTooLarge, ShapeMismatch

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M = U @ diag(sigma) @ V.T``."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    sweeps: int = 0

    @property
    def r(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@nb.njit(cache=True)
def _jacobi_sweeps(A, V, tol, max_sweeps):
    # A: m x q, Fortran-ordered, rotated in place; V accumulates rotations.
    m, q = A.shape
    norms = np.empty(q)
    total = 0.0
    for j in range(q):
        acc = 0.0
        for r in range(m):
            acc += A[r, j] * A[r, j]
        norms[j] = acc
        total += acc
    # columns below this squared norm are rounding residue; rotating them
    # against real columns never settles
    eps = 2.220446049250313e-16
    negligible = (max(m, q) * eps) ** 2 * total
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(q - 1):
            for j in range(i + 1, q):
                alpha = norms[i]
                beta = norms[j]
                if alpha <= negligible or beta <= negligible:
                    continue
                gamma = 0.0
                for r in range(m):
                    gamma += A[r, i] * A[r, j]
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = 1.0 / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    ai = A[r, i]
                    aj = A[r, j]
                    A[r, i] = c * ai - s * aj
                    A[r, j] = s * ai + c * aj
                for r in range(q):
                    vi = V[r, i]
                    vj = V[r, j]
                    V[r, i] = c * vi - s * vj
                    V[r, j] = s * vi + c * vj
                ni = alpha - t * gamma
                nj = beta + t * gamma
                # the cheap update cancels badly once a column nearly vanishes
                big = max(alpha, beta)
                if ni <= 1e-4 * big:
                    ni = 0.0
                    for r in range(m):
                        ni += A[r, i] * A[r, i]
                if nj <= 1e-4 * big:
                    nj = 0.0
                    for r in range(m):
                        nj += A[r, j] * A[r, j]
                norms[i] = ni
                norms[j] = nj
        if not rotated:
            return sweep
    return -1


def _complete_basis(U: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of U not flagged ``good`` with an orthonormal completion."""
    m = U.shape[0]
    B = U[:, good]
    out = U.copy()
    for j in np.flatnonzero(~good):
        # project every standard basis vector off the current basis, twice for
        # stability, and take the one with the largest residual
        R = np.eye(m)
        for _ in range(2):
            R -= B @ (B.T @ R)
        norms = np.linalg.norm(R, axis=0)
        c = int(np.argmax(norms))
        w = R[:, c] / norms[c]
        out[:, j] = w
        B = np.column_stack([B, w])
    return out


def _tall_svd(A: np.ndarray):
    m, q = A.shape
    work = np.asfortranarray(A, dtype=np.float64).copy(order="F")
    # unit max-entry scaling keeps squared norms inside the float range
    scale = float(np.abs(work).max(initial=0.0))
    if scale > 0.0:
        work /= scale
    V = np.eye(q, order="F")
    sweeps = _jacobi_sweeps(work, V, JACOBI_TOL, MAX_SWEEPS)
    if sweeps < 0:
        raise NoConvergence(f"one-sided Jacobi exceeded {MAX_SWEEPS} sweeps")
    sigma = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    V = np.ascontiguousarray(V[:, order])
    # twice the kernel's negligible-column threshold
    floor = 2.0 * max(m, q) * np.finfo(float).eps * float(np.sqrt(np.sum(sigma**2)))
    good = sigma > max(floor, np.finfo(float).tiny)
    U = np.zeros((m, q))
    U[:, good] = work[:, good] / sigma[good]
    if not good.all():
        U = _complete_basis(U, good)
    return U, sigma * scale, V, sweeps


def _apply_sign_convention(U: np.ndarray, V: np.ndarray) -> None:
    if U.shape[1] == 0:
        return
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1.0
    V[:, flip] *= -1.0


def thin_svd(M) -> SvdFactors:
    """Thin SVD of a dense real matrix via cyclic one-sided Jacobi.

    Returns ``r = min(rows, cols)`` triples in nonincreasing order. Raises
    :class:`NoConvergence` if the sweep budget is exhausted.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = M.shape
    if rows >= cols:
        U, sigma, V, sweeps = _tall_svd(M)
    else:
        V, sigma, U, sweeps = _tall_svd(M.T)
    _apply_sign_convention(U, V)
    return SvdFactors(U=U, sigma=sigma, V=V, sweeps=sweeps)


def truncate(f: SvdFactors, m: int) -> SvdFactors:
    """Keep the leading ``m`` singular triples."""
    if m < 1:
        raise ValueError(f"truncation rank must be positive, got {m}")
    if m > f.r:
        raise RankRequestTooLarge(f"requested rank {m} exceeds available {f.r}")
    return SvdFactors(U=f.U[:, :m], sigma=f.sigma[:m], V=f.V[:, :m], sweeps=f.sweeps)


def operator_norm(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    return float(thin_svd(M).sigma[0])


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=np.float64), "fro"))


def projector_distance(V1, V2) -> float:
    """Operator norm of ``V1 V1^T - V2 V2^T`` for orthonormal-column inputs."""
    V1 = np.asarray(V1, dtype=np.float64)
    V2 = np.asarray(V2, dtype=np.float64)
    if V1.ndim == 1:
        V1 = V1[:, None]
    if V2.ndim == 1:
        V2 = V2[:, None]
    if V1.shape[0] != V2.shape[0]:
        raise ShapeMismatch(f"row counts differ: {V1.shape} vs {V2.shape}")
    for W in (V1, V2):
        if np.abs(W.T @ W - np.eye(W.shape[1])).max(initial=0.0) > 1e-8:
            raise ValueError("projector_distance needs orthonormal columns")
    # ||P1 - P2|| = max(||(I - P2) P1||, ||(I - P1) P2||); the residuals are
    # n x m so the SVDs stay small.
    r1 = V1 - V2 @ (V2.T @ V1)
    r2 = V2 - V1 @ (V1.T @ V2)
    return max(operator_norm(r1), operator_norm(r2))
