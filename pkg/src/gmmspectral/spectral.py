"""Spectral clustering on the singular-value-weighted projection of X.

``algorithm1`` clusters the columns of ``Sigma_hat V_hat^T``; ``algorithm2``
adds one Lloyd refinement after the approximate solve; ``algorithm3``
clusters the rank-m approximation ``U_hat Sigma_hat V_hat^T`` by replaying
algorithm1's winning run through ``U_hat``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kmeans as km
from .errors import KExceedsN
from .numlin import SvdFactors, thin_svd, truncate

ALGORITHMS = ("alg1", "alg2", "alg3")


@dataclass
class SpectralOutput:
    labels: np.ndarray
    centers_reduced: np.ndarray  # m x k
    centers_ambient: np.ndarray  # p x k
    svd: SvdFactors
    objective: float
    Y_hat: np.ndarray
    kmeans: km.KMeansSolution
    pre_refine_objective: float | None = None

    @property
    def m(self) -> int:
        return self.svd.r


def project(X, k: int) -> tuple[SvdFactors, np.ndarray]:
    """Leading min(k, p) singular triples of X and ``Y_hat = Sigma_hat V_hat^T``."""
    X = np.asarray(X, dtype=np.float64)
    p, n = X.shape
    if k > n:
        raise KExceedsN(f"k={k} exceeds n={n}")
    f = truncate(thin_svd(X), min(k, p))
    return f, f.sigma[:, None] * f.V.T


def algorithm1(X, k: int, config: km.KMeansConfig = km.KMeansConfig()) -> SpectralOutput:
    f, Y = project(X, k)
    sol = km.solve(Y, k, config)
    return SpectralOutput(
        labels=sol.labels,
        centers_reduced=sol.centers,
        centers_ambient=f.U @ sol.centers,
        svd=f,
        objective=sol.objective,
        Y_hat=Y,
        kmeans=sol,
    )


def algorithm2(X, k: int, config: km.KMeansConfig = km.KMeansConfig()) -> SpectralOutput:
    f, Y = project(X, k)
    approx = km.solve(Y, k, config)
    labels, _ = km.fill_empty(Y, approx.labels, approx.centers, k)
    if np.bincount(labels, minlength=k).min() == 0:
        # fewer distinct projected points than clusters; nothing to refine
        refined = km.KMeansSolution(labels, approx.centers, approx.objective)
    else:
        refined = km.refine_once(Y, labels, k)
    return SpectralOutput(
        labels=refined.labels,
        centers_reduced=refined.centers,
        centers_ambient=f.U @ refined.centers,
        svd=f,
        objective=refined.objective,
        Y_hat=Y,
        kmeans=refined,
        pre_refine_objective=approx.objective,
    )


def algorithm3(
    X, k: int, config: km.KMeansConfig = km.KMeansConfig(), reference: SpectralOutput | None = None
) -> SpectralOutput:
    """k-means on the columns of the rank-m approximation of X.

    The Lloyd run starts from algorithm1's winning initial centers mapped
    through ``U_hat``; ``reference`` may pass an existing algorithm1 output.
    """
    ref = reference if reference is not None else algorithm1(X, k, config)
    f = ref.svd
    P_hat = f.U @ ref.Y_hat
    sol = km.lloyd(P_hat, f.U @ ref.kmeans.init_centers, config)
    return SpectralOutput(
        labels=sol.labels,
        centers_reduced=f.U.T @ sol.centers,
        centers_ambient=sol.centers,
        svd=f,
        objective=sol.objective,
        Y_hat=ref.Y_hat,
        kmeans=sol,
    )


def run(algorithm: str, X, k: int, config: km.KMeansConfig = km.KMeansConfig()) -> SpectralOutput:
    try:
        fn = {"alg1": algorithm1, "alg2": algorithm2, "alg3": algorithm3}[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}") from None
    return fn(X, k, config)
