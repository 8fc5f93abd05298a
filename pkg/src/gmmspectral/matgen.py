"""Gaussian mixture instances with a prescribed separation and balance.

An instance is ``X = P + E`` where column ``i`` of ``P`` is the center of
point ``i``'s cluster and ``E`` is noise drawn from a :class:`NoiseModel`.
All randomness comes from Philox streams keyed by ``(seed, stream tag)``,
so an instance is reproducible byte-for-byte from its spec.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, DimensionTooSmall, InfeasibleBalance

LAYOUTS = ("simplex", "collinear", "explicit")
NOISE_VARIANTS = ("isotropic-gaussian", "gaussian-with-covariance", "bounded-uniform")

# Philox key words for independent streams derived from one seed.
_LABEL_STREAM = 0x4C41424C
_NOISE_STREAM = 0x4E4F4953


def philox(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64))
    )


def derive_seed(root: int, *keys: int) -> int:
    """64-bit seed hashed from a root seed and an index tuple."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class NoiseModel:
    variant: str = "isotropic-gaussian"
    covariance: np.ndarray | None = None
    variance: float | None = None

    def __post_init__(self):
        if self.variant not in NOISE_VARIANTS:
            raise ConfigError(f"unknown noise variant {self.variant!r}")
        if self.variant == "gaussian-with-covariance":
            if self.covariance is None:
                raise ConfigError("gaussian-with-covariance needs a covariance matrix")
            cov = np.asarray(self.covariance, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
                raise ConfigError(f"covariance must be square, got shape {cov.shape}")
            if np.abs(cov - cov.T).max(initial=0.0) > 1e-10:
                raise ConfigError("covariance is not symmetric")
            if cov.size and np.linalg.eigvalsh(cov).min() < -1e-10:
                raise ConfigError("covariance is not positive semidefinite")
            object.__setattr__(self, "covariance", cov)
        if self.variant == "bounded-uniform":
            if self.variance is None or self.variance < 0:
                raise ConfigError("bounded-uniform needs a nonnegative variance")

    @classmethod
    def zero(cls, p: int) -> "NoiseModel":
        return cls("gaussian-with-covariance", covariance=np.zeros((p, p)))

    @property
    def is_isotropic(self) -> bool:
        return self.variant == "isotropic-gaussian"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"variant": self.variant}
        if self.covariance is not None:
            out["covariance"] = self.covariance.tolist()
        if self.variance is not None:
            out["variance"] = self.variance
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any] | str) -> "NoiseModel":
        if isinstance(d, str):
            return cls(d)
        unknown = set(d) - {"variant", "covariance", "variance"}
        if unknown:
            raise ConfigError(f"noise: unknown field(s) {sorted(unknown)}")
        return cls(
            d.get("variant", "isotropic-gaussian"),
            covariance=None if d.get("covariance") is None else np.asarray(d["covariance"], float),
            variance=d.get("variance"),
        )


@dataclass(frozen=True)
class GmmSpec:
    n: int
    p: int
    k: int
    delta: float
    beta: float = 1.0
    layout: str = "simplex"
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    centers: np.ndarray | None = None  # explicit layout only, p x k

    def __post_init__(self):
        for name in ("n", "p", "k"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.k > self.n:
            raise ConfigError(f"k={self.k} exceeds n={self.n}")
        if not (0 < self.beta <= 1):
            raise ConfigError(f"beta must lie in (0, 1], got {self.beta}")
        if self.delta < 0:
            raise ConfigError(f"delta must be nonnegative, got {self.delta}")
        if self.beta * self.n / self.k < 1 - 1e-12:
            raise InfeasibleBalance(f"beta*n/k = {self.beta * self.n / self.k:.4g} < 1")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.layout == "explicit":
            if self.centers is None:
                raise ConfigError("explicit layout needs a centers matrix")
            object.__setattr__(self, "centers", np.asarray(self.centers, dtype=np.float64))
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        cov = self.noise.covariance
        if cov is not None and cov.shape != (self.p, self.p):
            raise ConfigError(f"covariance shape {cov.shape} does not match p={self.p}")

    def replace(self, **changes) -> "GmmSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return GmmSpec(**d)

    def to_dict(self) -> dict[str, Any]:
        layout: Any = self.layout
        if self.layout == "explicit":
            layout = {"explicit": self.centers.tolist()}
        return {
            "n": int(self.n),
            "p": int(self.p),
            "k": int(self.k),
            "delta": float(self.delta),
            "beta": float(self.beta),
            "layout": layout,
            "noise": self.noise.to_dict(),
            "seed": int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None) -> "GmmSpec":
        allowed = {"n", "p", "k", "delta", "beta", "layout", "noise", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"spec: unknown field(s) {sorted(unknown)}")
        missing = {"n", "p", "k", "delta"} - set(d)
        if missing:
            raise ConfigError(f"spec: missing field(s) {sorted(missing)}")
        layout = d.get("layout", "simplex")
        centers = None
        if isinstance(layout, dict):
            if set(layout) != {"explicit"}:
                raise ConfigError("spec.layout object must be {\"explicit\": <matrix or CSV path>}")
            src = layout["explicit"]
            if isinstance(src, str):
                path = Path(src)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                centers = read_matrix_csv(path)
            else:
                centers = np.asarray(src, dtype=np.float64)
            layout = "explicit"
        try:
            return cls(
                n=int(d["n"]),
                p=int(d["p"]),
                k=int(d["k"]),
                delta=float(d["delta"]),
                beta=float(d.get("beta", 1.0)),
                layout=layout,
                noise=NoiseModel.from_dict(d.get("noise", {"variant": "isotropic-gaussian"})),
                seed=int(d.get("seed", 0)),
                centers=centers,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"spec: {exc}") from exc

    @classmethod
    def from_json(cls, text: str, base_dir: Path | None = None) -> "GmmSpec":
        return cls.from_dict(json.loads(text), base_dir=base_dir)


@dataclass(frozen=True)
class GmmInstance:
    spec: GmmSpec
    X: np.ndarray
    P: np.ndarray
    E: np.ndarray
    z_star: np.ndarray  # 0-based labels
    centers: np.ndarray

    def validate(self) -> None:
        """Raise ``AssertionError`` if any instance invariant is broken."""
        s = self.spec
        assert self.X.shape == self.P.shape == self.E.shape == (s.p, s.n)
        assert np.array_equal(self.X, self.P + self.E)
        assert self.centers.shape == (s.p, s.k)
        assert np.array_equal(self.P, self.centers[:, self.z_star])
        if s.k > 1:
            d = min_center_distance(self.centers)
            assert abs(d - s.delta) <= 1e-9 * max(1.0, s.delta), (d, s.delta)
        assert self.z_star.min() >= 0 and self.z_star.max() < s.k
        sizes = np.bincount(self.z_star, minlength=s.k)
        assert sizes.min() >= min_cluster_size(s.n, s.k, s.beta)


def min_center_distance(centers: np.ndarray) -> float:
    k = centers.shape[1]
    diffs = centers[:, :, None] - centers[:, None, :]
    d = np.sqrt((diffs**2).sum(axis=0))
    return float(d[~np.eye(k, dtype=bool)].min()) if k > 1 else math.inf


def min_cluster_size(n: int, k: int, beta: float) -> int:
    return math.ceil(beta * n / k - 1e-9)


def realized_beta(labels: np.ndarray, k: int) -> float:
    sizes = np.bincount(labels, minlength=k)
    return float(sizes.min() / (labels.size / k))


def _helmert_rows(k: int) -> np.ndarray:
    # Orthonormal basis of the sum-zero subspace of R^k, sign chosen so the
    # first simplex vertex lands on the negative side of every axis.
    H = np.zeros((k - 1, k))
    for j in range(1, k):
        H[j - 1, :j] = -1.0
        H[j - 1, j] = j
        H[j - 1] /= math.sqrt(j * (j + 1))
    return H


def build_centers(layout: str, k: int, p: int, delta: float, centers=None) -> np.ndarray:
    """Return a p x k center matrix whose minimum pairwise distance is ``delta``."""
    if delta < 0:
        raise ConfigError(f"delta must be nonnegative, got {delta}")
    if p < 1:
        raise DimensionTooSmall(f"p={p} must be at least 1")
    out = np.zeros((p, k))
    if layout == "simplex":
        if p < k - 1:
            raise DimensionTooSmall(f"simplex layout with k={k} needs p >= {k - 1}, got p={p}")
        if k > 1:
            vertices = (delta / math.sqrt(2.0)) * (np.eye(k) - 1.0 / k)
            out[: k - 1] = _helmert_rows(k) @ vertices
    elif layout == "collinear":
        out[0] = delta * (np.arange(k) - (k - 1) / 2.0)
    elif layout == "explicit":
        if centers is None:
            raise ConfigError("explicit layout needs a centers matrix")
        out = np.array(centers, dtype=np.float64)
        if out.shape != (p, k):
            raise ConfigError(f"explicit centers have shape {out.shape}, expected {(p, k)}")
        if k > 1:
            d = min_center_distance(out)
            if abs(d - delta) > 1e-9 * max(1.0, delta):
                raise ConfigError(f"explicit centers have minimum distance {d}, spec says {delta}")
    else:
        raise ConfigError(f"unknown layout {layout!r}")
    return out


def assign_labels(n: int, k: int, beta: float, seed: int) -> np.ndarray:
    """Cluster labels (0-based) with one designated cluster of the minimum size.

    The last cluster gets exactly ``ceil(beta n / k)`` points; the others
    split the remainder as evenly as possible. Positions are then shuffled.
    """
    smallest = min_cluster_size(n, k, beta)
    if smallest < 1 or smallest * k > n:
        raise InfeasibleBalance(f"cannot give {k} clusters at least {smallest} of {n} points")
    if k == 1:
        sizes = np.array([n])
    else:
        rest = n - smallest
        sizes = np.full(k, smallest)
        sizes[:-1] = rest // (k - 1)
        sizes[: rest % (k - 1)] += 1
    labels = np.repeat(np.arange(k), sizes)
    return philox(seed, _LABEL_STREAM).permutation(labels)


def sample_noise(noise: NoiseModel, p: int, n: int, seed: int) -> np.ndarray:
    rng = philox(seed, _NOISE_STREAM)
    if noise.variant == "isotropic-gaussian":
        return rng.standard_normal((p, n))
    if noise.variant == "bounded-uniform":
        half = math.sqrt(3.0 * noise.variance)
        return rng.uniform(-1.0, 1.0, size=(p, n)) * half
    evals, evecs = np.linalg.eigh(noise.covariance)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return root @ rng.standard_normal((p, n))


def sample_instance(spec: GmmSpec) -> GmmInstance:
    centers = build_centers(spec.layout, spec.k, spec.p, spec.delta, spec.centers)
    z = assign_labels(spec.n, spec.k, spec.beta, spec.seed)
    P = centers[:, z]
    E = sample_noise(spec.noise, spec.p, spec.n, spec.seed)
    X = P + E
    for a in (X, P, E, z, centers):
        a.setflags(write=False)
    return GmmInstance(spec=spec, X=X, P=P, E=E, z_star=z, centers=centers)


def write_matrix_csv(path: Path, M: np.ndarray, prefix: str = "c") -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{j + 1}" for j in range(M.shape[1])])
        for row in M:
            w.writerow([format(v, ".17g") for v in row])


def read_matrix_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ConfigError(f"{path}: empty CSV")

    def numeric(row):
        try:
            [float(x) for x in row]
            return True
        except ValueError:
            return False

    if not numeric(rows[0]):
        rows = rows[1:]
    try:
        M = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if M.ndim != 2:
        raise ConfigError(f"{path}: rows have unequal lengths")
    return M


def write_labels_csv(path: Path, labels: np.ndarray) -> None:
    """Labels are written 1-based, one per line under a ``label`` header."""
    with open(path, "w", newline="") as fh:
        fh.write("label\n")
        for v in np.asarray(labels):
            fh.write(f"{int(v) + 1}\n")


def read_labels_csv(path: Path) -> np.ndarray:
    M = read_matrix_csv(path)
    return M.ravel().astype(np.int64) - 1
