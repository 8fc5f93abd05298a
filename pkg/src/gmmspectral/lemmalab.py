"""Direct numerical checks of the perturbation and population facts behind
spectral clustering in the isotropic Gaussian mixture.

Every check returns a small report dataclass; none of them raise on a failed
bound, they record it. Indices ``a``, ``b``, ``j`` are 1-based to match the
usual singular-value numbering.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import kmeans as km
from . import metrics, spectral
from .errors import NoiseModelNotIsotropic, RankRequestTooLarge, ShapeMismatch
from .matgen import GmmInstance, GmmSpec, derive_seed, philox, realized_beta, sample_instance
from .numlin import operator_norm, projector_distance, thin_svd

RANK_RTOL = 1e-9
# Floating-point slack for inequalities that can hold with equality.
BOUND_RTOL = 1e-10

_HAAR_STREAM = 0x48414152
_TAIL_STREAM = 0x5441494C


def _to_json(obj):
    if isinstance(obj, dict):
        return {k: _to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Report:
    def to_dict(self) -> dict:
        return _to_json(asdict(self))


def numerical_rank(sigma: np.ndarray) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > RANK_RTOL * sigma[0]))


# --- population structure -------------------------------------------------


@dataclass
class PopulationReport(_Report):
    sigma1: float
    sigma1_lower: float
    row_coherence: float
    coherence_bound: float
    rows_equal_within_clusters: bool
    inner_products_ok: bool
    rank: int
    sigma: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.sigma1 >= self.sigma1_lower * (1 - BOUND_RTOL)
            and self.row_coherence <= self.coherence_bound * (1 + BOUND_RTOL)
            and self.rows_equal_within_clusters
            and self.inner_products_ok
        )


def population_check(instance: GmmInstance) -> PopulationReport:
    """SVD structure of the population matrix P, restricted to its numerical rank."""
    spec = instance.spec
    n, k = spec.n, spec.k
    f = thin_svd(instance.P)
    r = numerical_rank(f.sigma)
    beta = realized_beta(instance.z_star, k)
    V = f.V[:, :r]
    U = f.U[:, :r]
    sigma = f.sigma[:r]
    coherence_bound = math.sqrt(k / (beta * n))
    row_coherence = float(np.linalg.norm(V, axis=1).max()) if r else 0.0
    rows_equal = True
    for j in range(k):
        rows = V[instance.z_star == j]
        if rows.size and np.abs(rows - rows[0]).max() > 1e-8:
            rows_equal = False
    # |<u_l, theta_j>| <= sigma_l sqrt(k / (beta n))
    ip = np.abs(U.T @ instance.centers)
    ip_ok = bool(np.all(ip <= sigma[:, None] * coherence_bound * (1 + BOUND_RTOL) + 1e-12))
    return PopulationReport(
        sigma1=float(f.sigma[0]),
        sigma1_lower=math.sqrt(beta * n / k) * spec.delta / 2.0,
        row_coherence=row_coherence,
        coherence_bound=coherence_bound,
        rows_equal_within_clusters=rows_equal,
        inner_products_ok=ip_ok,
        rank=r,
        sigma=f.sigma[: min(k, f.r)].tolist(),
    )


# --- deterministic perturbation bounds ------------------------------------


@dataclass
class WeylReport(_Report):
    ok: bool
    worst_margin: float  # min_j (|E| - |sigma_hat_j - sigma_j|)
    opnorm_E: float
    event_F: bool  # |E| <= sqrt(2)(sqrt(n) + sqrt(p))
    upper_ok: bool  # sigma_hat_j <= sigma_j + sqrt(2)(sqrt(n) + sqrt(p)) on event_F
    deviations: list[float] = field(default_factory=list)


def weyl_check(P, E) -> WeylReport:
    P = np.asarray(P, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if P.shape != E.shape:
        raise ShapeMismatch(f"P {P.shape} and E {E.shape} differ")
    p, n = P.shape
    s = thin_svd(P).sigma
    s_hat = thin_svd(P + E).sigma
    e = operator_norm(E)
    dev = np.abs(s_hat - s)
    slack = BOUND_RTOL * (s[0] + e + 1.0)
    ok = bool(np.all(dev <= e + slack))
    radius = math.sqrt(2.0) * (math.sqrt(n) + math.sqrt(p))
    event_F = e <= radius
    upper_ok = bool(np.all(s_hat <= s + radius + slack)) if event_F else True
    return WeylReport(
        ok=ok and upper_ok,
        worst_margin=float(np.min(e - dev)),
        opnorm_E=e,
        event_F=event_F,
        upper_ok=upper_ok,
        deviations=dev.tolist(),
    )


def singular_gap(sigma: np.ndarray, a: int, b: int, k: int) -> float:
    """min(sigma_{a-1} - sigma_a, sigma_b - sigma_{b+1}) with sigma_0 = inf, sigma_{k+1} = 0."""
    prev = math.inf if a == 1 else sigma[a - 2]
    nxt = 0.0 if b >= k else sigma[b]
    return float(min(prev - sigma[a - 1], sigma[b - 1] - nxt))


@dataclass
class DavisKahanReport(_Report):
    ok: bool
    skipped: bool
    dk_lhs: float
    dk_rhs: float
    gap_used: float
    opnorm_E: float

    @property
    def margin(self) -> float:
        return self.dk_rhs - self.dk_lhs


def davis_kahan_check(P, E, a: int, b: int) -> DavisKahanReport:
    """|V_hat V_hat^T - V V^T| <= 4 sqrt(2) |E| / g for singular vectors a..b."""
    P = np.asarray(P, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if P.shape != E.shape:
        raise ShapeMismatch(f"P {P.shape} and E {E.shape} differ")
    f = thin_svd(P)
    rank = numerical_rank(f.sigma)
    if not 1 <= a <= b <= rank:
        raise RankRequestTooLarge(f"need 1 <= a <= b <= rank(P) = {rank}, got a={a}, b={b}")
    g = singular_gap(f.sigma, a, b, rank)
    e = operator_norm(E)
    if g <= RANK_RTOL * f.sigma[0]:
        return DavisKahanReport(True, True, math.nan, math.nan, g, e)
    fh = thin_svd(P + E)
    lhs = projector_distance(fh.V[:, a - 1 : b], f.V[:, a - 1 : b])
    rhs = 4.0 * math.sqrt(2.0) * e / g
    return DavisKahanReport(bool(lhs <= rhs + BOUND_RTOL), False, lhs, rhs, g, e)


@dataclass
class SabReport(_Report):
    ok: bool
    sab_norm: float
    sab_bound: float
    branch: str  # "small-noise" when |E| <= g/4, else "large-noise"
    gap_used: float
    opnorm_E: float
    skipped: bool = False  # zero gap: the bound is undefined


def sab_matrix(P, E, a: int, b: int, k: int | None = None):
    """Nonlinear remainder of the projector perturbation for singular vectors a..b.

    ``(I - VV^T)(V_hat_ab V_hat_ab^T - V_ab V_ab^T) V_ab
      - sum_j (1/sigma_j) (I - VV^T) E^T u_j v_j^T V_ab``
    with V the first k population right singular vectors.
    Returns ``(S, sigma, k)``.
    """
    P = np.asarray(P, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if P.shape != E.shape:
        raise ShapeMismatch(f"P {P.shape} and E {E.shape} differ")
    f = thin_svd(P)
    if k is None:
        k = numerical_rank(f.sigma)
    if not 1 <= a <= b <= k <= f.r:
        raise RankRequestTooLarge(f"need 1 <= a <= b <= k <= {f.r}, got a={a}, b={b}, k={k}")
    if f.sigma[b - 1] <= RANK_RTOL * f.sigma[0]:
        raise RankRequestTooLarge(f"sigma_{b} of P is zero; S_ab is undefined")
    fh = thin_svd(P + E)
    V = f.V[:, :k]
    Vab = f.V[:, a - 1 : b]
    Vh = fh.V[:, a - 1 : b]

    def perp(M):
        return M - V @ (V.T @ M)

    diff = Vh @ (Vh.T @ Vab) - Vab @ (Vab.T @ Vab)
    linear = np.zeros_like(Vab)
    for j in range(a - 1, b):
        uj, vj = f.U[:, j], f.V[:, j]
        linear += np.outer(E.T @ uj, vj @ Vab) / f.sigma[j]
    return perp(diff) - perp(linear), f.sigma, k


def sab_residual(P, E, a: int, b: int, k: int | None = None) -> SabReport:
    S, sigma, k = sab_matrix(P, E, a, b, k)
    g = singular_gap(sigma, a, b, k)
    e = operator_norm(E)
    norm = operator_norm(S)
    if g <= RANK_RTOL * sigma[0]:
        return SabReport(True, norm, math.nan, "zero-gap", g, e, skipped=True)
    ratio2 = (e / g) ** 2
    if e <= g / 4:
        branch = "small-noise"
        bound = (32.0 * (sigma[a - 1] - sigma[b - 1]) / (math.pi * g) + 16.0) * ratio2
    else:
        branch = "large-noise"
        bound = 16.0 * ratio2
    return SabReport(bool(norm <= bound * (1 + BOUND_RTOL)), norm, bound, branch, g, e)


@dataclass
class PerturbationReport(_Report):
    weyl_ok: bool
    weyl_margin: float
    dk_lhs: float
    dk_rhs: float
    sab_norm: float
    sab_bound: float
    opnorm_E: float
    gap_used: float

    @property
    def ok(self) -> bool:
        return (
            self.weyl_ok
            and (self.dk_lhs != self.dk_lhs or self.dk_lhs <= self.dk_rhs + BOUND_RTOL)
            and (self.sab_bound != self.sab_bound or self.sab_norm <= self.sab_bound * (1 + BOUND_RTOL))
        )


def perturbation_report(P, E, a: int, b: int, k: int | None = None) -> PerturbationReport:
    w = weyl_check(P, E)
    dk = davis_kahan_check(P, E, a, b)
    sab = sab_residual(P, E, a, b, k)
    return PerturbationReport(
        weyl_ok=w.ok,
        weyl_margin=w.worst_margin,
        dk_lhs=dk.dk_lhs,
        dk_rhs=dk.dk_rhs,
        sab_norm=sab.sab_norm,
        sab_bound=sab.sab_bound,
        opnorm_E=w.opnorm_E,
        gap_used=sab.gap_used,
    )


# --- distributional checks ------------------------------------------------


def haar_residual_samples(
    spec: GmmSpec, j: int, trials: int, coords: int = 1, seed: int | None = None
) -> np.ndarray:
    """Scaled coordinates of the normalized component of v_hat_j orthogonal to V.

    The population part (centers, labels) is fixed by ``spec``; every trial
    redraws the noise. Returns shape ``(trials,)`` or ``(trials, coords)``.
    """
    if not spec.noise.is_isotropic:
        raise NoiseModelNotIsotropic("hypothesis requires isotropic Gaussian noise")
    k = spec.k
    if not 1 <= j <= min(k, spec.p):
        raise RankRequestTooLarge(f"j={j} must lie in [1, min(k, p)]")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    base = sample_instance(spec)
    V = thin_svd(base.P).V[:, :k]
    n = spec.n
    scale = math.sqrt(n - k)
    root = spec.seed if seed is None else seed
    pick = philox(root, _HAAR_STREAM)
    out = np.empty((trials, coords))
    for t in range(trials):
        noise = philox(derive_seed(root, t), _HAAR_STREAM)
        X = base.P + noise.standard_normal(base.P.shape)
        v = thin_svd(X).V[:, j - 1]
        r = v - V @ (V.T @ v)
        r /= np.linalg.norm(r)
        idx = pick.choice(n, size=coords, replace=False)
        out[t] = scale * r[idx]
    return out[:, 0] if coords == 1 else out


@dataclass
class HaarReport(_Report):
    ok: bool
    mean: float
    variance: float
    ks_distance: float
    trials: int
    mean_limit: float
    variance_band: tuple[float, float]
    ks_limit: float


def haar_summary(samples: np.ndarray) -> HaarReport:
    """Compare samples with a standard normal.

    Limits: |mean| <= 4/sqrt(N); variance within 1 +- max(0.15, 4 sqrt(2/N));
    KS distance <= max(0.06, 1.63/sqrt(N)), the 1% critical value. At
    N >= 2000 the fixed parts govern.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    ks = float(stats.kstest(x, "norm").statistic)
    mean_limit = 4 / math.sqrt(n)
    half = max(0.15, 4 * math.sqrt(2 / n))
    ks_limit = max(0.06, 1.63 / math.sqrt(n))
    ok = abs(mean) <= mean_limit and 1 - half <= var <= 1 + half and ks <= ks_limit
    return HaarReport(ok, mean, var, ks, n, mean_limit, (1 - half, 1 + half), ks_limit)


@dataclass
class TailReport(_Report):
    ok: bool
    exceedance_fraction: float
    bound: float
    allowed: float
    threshold: float
    trials: int


def opnorm_tail_check(n: int, p: int, t: float, trials: int, seed: int = 0) -> TailReport:
    """Fraction of standard Gaussian p x n matrices with |E| >= sqrt(n) + sqrt(p) + t."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = philox(seed, _TAIL_STREAM)
    threshold = math.sqrt(n) + math.sqrt(p) + t
    hits = sum(operator_norm(rng.standard_normal((p, n))) >= threshold for _ in range(trials))
    frac = hits / trials
    bound = math.exp(-t * t / 2)
    allowed = bound + 3 * math.sqrt(bound / trials)
    return TailReport(frac <= allowed, frac, bound, allowed, threshold, trials)


# --- algorithm equivalence -------------------------------------------------


@dataclass
class EquivalenceReport(_Report):
    ok: bool
    loss_between: float
    center_gap: float


def equivalence_check(X, k: int, config: km.KMeansConfig = km.KMeansConfig()) -> EquivalenceReport:
    """alg1 and alg3 agree up to relabeling, with theta_hat_a = U_hat c_hat_{perm(a)}."""
    o1 = spectral.algorithm1(X, k, config)
    o3 = spectral.algorithm3(X, k, config, reference=o1)
    m = metrics.misclustering_loss(o3.labels, o1.labels, k)
    mapped = o1.svd.U @ o1.centers_reduced[:, m.permutation]
    gap = float(np.linalg.norm(o3.centers_ambient - mapped, axis=0).max())
    return EquivalenceReport(m.loss == 0 and gap <= 1e-8, m.loss, gap)
