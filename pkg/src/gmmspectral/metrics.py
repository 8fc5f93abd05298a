"""Permutation-minimized misclustering loss and center matching error."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LabelError, ShapeMismatch

ENUMERATION_MAX_K = 8


@dataclass(frozen=True)
class MatchResult:
    loss: float
    permutation: np.ndarray  # permutation[a] = true label matched to estimated label a
    mismatches: int
    center_error: float | None = None


@lru_cache(maxsize=None)
def _all_permutations(k: int) -> np.ndarray:
    return np.array(list(permutations(range(k))), dtype=np.int64).reshape(-1, k)


def confusion(z, z_star, k: int) -> np.ndarray:
    """k x k agreement counts: entry (a, b) counts points with z = a and z* = b."""
    z = np.asarray(z, dtype=np.int64)
    z_star = np.asarray(z_star, dtype=np.int64)
    if z.shape != z_star.shape or z.ndim != 1:
        raise LabelError(f"label vectors differ in shape: {z.shape} vs {z_star.shape}")
    for name, v in (("z", z), ("z_star", z_star)):
        if v.size and (v.min() < 0 or v.max() >= k):
            raise LabelError(f"{name} has labels outside [0, {k})")
    return np.bincount(z * k + z_star, minlength=k * k).reshape(k, k)


def misclustering_loss(z, z_star, k: int, method: str = "auto") -> MatchResult:
    """Fraction of points mislabeled under the best relabeling of ``z``.

    ``method`` is ``"enumerate"`` (all k! bijections), ``"assignment"``
    (maximum-weight matching on the confusion matrix) or ``"auto"``, which
    enumerates for ``k <= 8``.
    """
    C = confusion(z, z_star, k)
    n = int(C.sum())
    if method == "auto":
        method = "enumerate" if k <= ENUMERATION_MAX_K else "assignment"
    if method == "enumerate":
        perms = _all_permutations(k)
        agree = C[np.arange(k), perms].sum(axis=1)
        best = int(np.argmax(agree))
        perm = perms[best].copy()
        matched = int(agree[best])
    elif method == "assignment":
        rows, cols = linear_sum_assignment(C, maximize=True)
        perm = np.empty(k, dtype=np.int64)
        perm[rows] = cols
        matched = int(C[rows, cols].sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    mismatches = n - matched
    return MatchResult(loss=mismatches / n if n else 0.0, permutation=perm, mismatches=mismatches)


def center_error(theta_hat, theta_star, permutation) -> float:
    """max_j |theta_hat_j - theta_star_{perm[j]}|."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    perm = np.asarray(permutation)
    if theta_hat.shape != theta_star.shape or perm.shape != (theta_hat.shape[1],):
        raise ShapeMismatch(
            f"shapes disagree: {theta_hat.shape}, {theta_star.shape}, permutation {perm.shape}"
        )
    return float(np.linalg.norm(theta_hat - theta_star[:, perm], axis=0).max())


def match(z, z_star, k: int, theta_hat=None, theta_star=None) -> MatchResult:
    """Loss plus, when both center sets are given, the error at the loss-optimal permutation."""
    res = misclustering_loss(z, z_star, k)
    if theta_hat is None or theta_star is None:
        return res
    err = center_error(theta_hat, theta_star, res.permutation)
    return MatchResult(res.loss, res.permutation, res.mismatches, err)
