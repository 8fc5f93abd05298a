"""k-means solvers on the columns of a d x n matrix.

Ties in nearest-center assignment go to the lowest center index. Restart
randomness derives from ``(config.seed, restart index)`` only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import EmptyInputClass, InstanceTooLarge, KExceedsN, LabelError

ORACLE_MAX_N = 14
ORACLE_MAX_K = 4


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 20
    max_iters: int = 100
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")

    def replace(self, **changes) -> "KMeansConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return KMeansConfig(**d)


@dataclass
class KMeansSolution:
    labels: np.ndarray
    centers: np.ndarray  # d x k
    objective: float
    iterations: int = 0
    converged: bool = True
    trace: list[float] = field(default_factory=list)
    init_centers: np.ndarray | None = None
    restart: int = 0


def sq_distances(Y: np.ndarray, C: np.ndarray) -> np.ndarray:
    """n x k squared distances between columns of Y and columns of C."""
    diff = Y[:, :, None] - C[:, None, :]
    return np.einsum("dnk,dnk->nk", diff, diff)


def assign(Y: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = sq_distances(Y, C)
    labels = np.argmin(d2, axis=1)  # first minimum -> lowest index
    return labels, d2[np.arange(Y.shape[1]), labels]


def class_means(Y: np.ndarray, labels: np.ndarray, k: int, fallback: np.ndarray | None = None):
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((Y.shape[0], k))
    for j in range(k):
        sums[:, j] = Y[:, labels == j].sum(axis=1)
    centers = np.zeros_like(sums) if fallback is None else fallback.copy()
    nz = counts > 0
    centers[:, nz] = sums[:, nz] / counts[nz]
    return centers, counts


def objective(Y: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    r = Y - centers[:, labels]
    return float(np.einsum("dn,dn->", r, r))


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(restart,)))


def kmeanspp_seed(Y: np.ndarray, k: int, seed: int | np.random.Generator) -> np.ndarray:
    """D^2 seeding: k distinct columns of Y, returned as a d x k matrix."""
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[1]
    if k > n:
        raise KExceedsN(f"k={k} exceeds n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = sq_distances(Y, Y[:, chosen])[:, 0]
    available = np.ones(n, dtype=bool)
    available[chosen[0]] = False
    for _ in range(1, k):
        w = np.where(available, d2, 0.0)
        total = w.sum()
        if total > 0:
            idx = int(rng.choice(n, p=w / total))
        else:
            # every remaining point coincides with a chosen one
            idx = int(rng.choice(np.flatnonzero(available)))
        chosen.append(idx)
        available[idx] = False
        d2 = np.minimum(d2, sq_distances(Y, Y[:, [idx]])[:, 0])
    return Y[:, chosen].copy()


def fill_empty(Y: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int):
    """Move the point farthest from its class mean into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    if counts.min() > 0:
        return labels, centers
    labels = labels.copy()
    centers, counts = class_means(Y, labels, k, fallback=centers)
    for j in np.flatnonzero(counts == 0):
        r = Y - centers[:, labels]
        d2 = np.einsum("dn,dn->n", r, r)
        i = int(np.argmax(d2))
        if d2[i] <= 0.0:
            break  # fewer distinct points than clusters
        # d2 > 0 implies the donor class has at least two members
        old = labels[i]
        labels[i] = j
        centers[:, j] = Y[:, i]
        centers[:, old] = Y[:, labels == old].mean(axis=1)
    return labels, centers


def lloyd(Y, init_centers, config: KMeansConfig = KMeansConfig()) -> KMeansSolution:
    """Lloyd iterations from ``init_centers`` (d x k).

    Each iteration assigns points to the nearest center, re-seeds empty
    clusters with the farthest point, then moves centers to class means. The
    run stops once an iteration lowers the objective by less than
    ``config.tol`` relative to its assignment cost.
    """
    Y = np.asarray(Y, dtype=np.float64)
    centers = np.array(init_centers, dtype=np.float64)
    k = centers.shape[1]
    trace: list[float] = []
    converged = False
    labels = np.zeros(Y.shape[1], dtype=np.int64)
    it = 0
    for it in range(1, config.max_iters + 1):
        labels, d2 = assign(Y, centers)
        before = float(d2.sum())
        labels, centers = fill_empty(Y, labels, centers, k)
        centers, _ = class_means(Y, labels, k, fallback=centers)
        after = objective(Y, labels, centers)
        trace.append(after)
        if before - after <= config.tol * before:
            converged = True
            break
    return KMeansSolution(
        labels=labels,
        centers=centers,
        objective=trace[-1],
        iterations=it,
        converged=converged,
        trace=trace,
        init_centers=np.array(init_centers, dtype=np.float64),
    )


def solve(Y, k: int, config: KMeansConfig = KMeansConfig()) -> KMeansSolution:
    """Best of ``config.restarts`` kmeans++ + Lloyd runs (ties: earliest restart)."""
    Y = np.asarray(Y, dtype=np.float64)
    if k > Y.shape[1]:
        raise KExceedsN(f"k={k} exceeds n={Y.shape[1]}")
    best = None
    for r in range(config.restarts):
        init = kmeanspp_seed(Y, k, _restart_rng(config.seed, r))
        sol = lloyd(Y, init, config)
        sol.restart = r
        if best is None or sol.objective < best.objective:
            best = sol
    return best


def refine_once(Y, labels, k: int | None = None) -> KMeansSolution:
    """One center update followed by one nearest-center relabeling.

    The returned centers are the class means of the *input* labels, so the
    output satisfies ``|Y_i - c_{z_i}| <= |Y_i - c_j|`` for every ``j``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape != (Y.shape[1],):
        raise LabelError(f"need {Y.shape[1]} labels, got shape {labels.shape}")
    if k is None:
        k = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"labels must lie in [0, {k})")
    centers, counts = class_means(Y, labels, k)
    if counts.min() == 0:
        raise EmptyInputClass(f"label class(es) {np.flatnonzero(counts == 0).tolist()} are empty")
    new_labels, d2 = assign(Y, centers)
    return KMeansSolution(
        labels=new_labels,
        centers=centers,
        objective=float(d2.sum()),
        iterations=1,
        converged=True,
        trace=[float(d2.sum())],
    )


def is_locally_optimal(Y, labels, centers) -> bool:
    """Every point is at least as close to its own center as to any other."""
    d2 = sq_distances(np.asarray(Y, float), np.asarray(centers, float))
    own = d2[np.arange(d2.shape[0]), labels]
    return bool(np.all(own <= d2.min(axis=1)))


@nb.njit(cache=True)
def _partition_cost(pts, lab, k):
    n, d = pts.shape
    sums = np.zeros((k, d))
    cnt = np.zeros(k)
    for i in range(n):
        cnt[lab[i]] += 1.0
        for c in range(d):
            sums[lab[i], c] += pts[i, c]
    for j in range(k):
        for c in range(d):
            sums[j, c] /= cnt[j]
    cost = 0.0
    for i in range(n):
        for c in range(d):
            r = pts[i, c] - sums[lab[i], c]
            cost += r * r
    return cost


@nb.njit(cache=True)
def _enumerate_partitions(pts, k):
    # Restricted growth strings: a[0] = 0, a[i] <= max(a[:i]) + 1 < k.
    n = pts.shape[0]
    a = np.zeros(n, dtype=np.int64)
    mx = np.zeros(n, dtype=np.int64)  # mx[i] = max(a[:i+1])
    best = np.inf
    best_lab = a.copy()
    while True:
        if mx[n - 1] == k - 1:
            c = _partition_cost(pts, a, k)
            if c < best:
                best = c
                best_lab[:] = a
        # advance to the next string
        i = n - 1
        while i > 0:
            limit = min(mx[i - 1] + 1, k - 1)
            if a[i] < limit:
                break
            i -= 1
        if i == 0:
            break
        a[i] += 1
        mx[i] = max(mx[i - 1], a[i])
        for t in range(i + 1, n):
            a[t] = 0
            mx[t] = mx[i]
    return best, best_lab


def exact_oracle(Y, k: int) -> KMeansSolution:
    """Globally optimal k-means by enumerating all partitions into k nonempty blocks."""
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[1]
    if k > n:
        raise KExceedsN(f"k={k} exceeds n={n}")
    if n > ORACLE_MAX_N or k > ORACLE_MAX_K:
        raise InstanceTooLarge(f"oracle budget is n <= {ORACLE_MAX_N}, k <= {ORACLE_MAX_K}")
    best, labels = _enumerate_partitions(np.ascontiguousarray(Y.T), k)
    centers, _ = class_means(Y, labels, k)
    return KMeansSolution(labels=labels, centers=centers, objective=objective(Y, labels, centers))
