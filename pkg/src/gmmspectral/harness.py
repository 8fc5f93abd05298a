"""Seeded Monte Carlo sweeps over the separation and log-linear rate fits.

Every trial's randomness is a pure function of ``(master_seed, delta index,
trial index)``, so records can be produced in any order, on any number of
worker processes, and still merge into the same canonical sequence.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import kmeans as km
from . import spectral
from .errors import ConfigError, InsufficientUncensoredPoints
from .matgen import GmmSpec, derive_seed, sample_instance
from .metrics import misclustering_loss

REFERENCE_SLOPE = -0.125
RECORD_HEADER = ("delta", "trial", "algorithm", "loss", "objective", "elapsed_ms", "seed")
_KMEANS_KEY = 0x4B4D


@dataclass(frozen=True)
class SweepConfig:
    base: GmmSpec
    delta_grid: tuple[float, ...]
    trials_per_delta: int = 1
    algorithms: tuple[str, ...] = ("alg1",)
    master_seed: int = 0
    kmeans: km.KMeansConfig = field(default_factory=km.KMeansConfig)

    def __post_init__(self):
        grid = tuple(float(d) for d in self.delta_grid)
        object.__setattr__(self, "delta_grid", grid)
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not grid:
            raise ConfigError("delta_grid is empty")
        if any(not math.isfinite(d) or d <= 0 for d in grid):
            raise ConfigError("delta_grid entries must be positive and finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("delta_grid must be strictly increasing")
        if not isinstance(self.trials_per_delta, (int, np.integer)) or self.trials_per_delta < 1:
            raise ConfigError(f"trials_per_delta must be a positive integer, got {self.trials_per_delta!r}")
        if not self.algorithms:
            raise ConfigError("algorithms is empty")
        bad = [a for a in self.algorithms if a not in spectral.ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s) {bad}; expected a subset of {spectral.ALGORITHMS}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms contains duplicates")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")

    def replace(self, **changes) -> "SweepConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SweepConfig(**d)

    def to_dict(self) -> dict[str, Any]:
        base = self.base.to_dict()
        base.pop("seed")
        return {
            "base": base,
            "delta_grid": list(self.delta_grid),
            "trials_per_delta": int(self.trials_per_delta),
            "algorithms": list(self.algorithms),
            "master_seed": int(self.master_seed),
            "kmeans": {
                "restarts": self.kmeans.restarts,
                "max_iters": self.kmeans.max_iters,
                "tol": self.kmeans.tol,
            },
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None) -> "SweepConfig":
        allowed = {"base", "delta_grid", "trials_per_delta", "algorithms", "master_seed", "kmeans"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"sweep: unknown field(s) {sorted(unknown)}")
        for name in ("base", "delta_grid"):
            if name not in d:
                raise ConfigError(f"sweep: missing field {name!r}")
        grid = d["delta_grid"]
        if not isinstance(grid, list):
            raise ConfigError("sweep.delta_grid must be a list")
        if not grid:
            raise ConfigError("delta_grid is empty")
        base = dict(d["base"])
        # the grid supplies delta; the base template may omit it
        base.setdefault("delta", grid[0])
        kd = d.get("kmeans", {})
        unknown = set(kd) - {"restarts", "max_iters", "tol"}
        if unknown:
            raise ConfigError(f"sweep.kmeans: unknown field(s) {sorted(unknown)}")
        try:
            kmc = km.KMeansConfig(**kd)
            return cls(
                base=GmmSpec.from_dict(base, base_dir=base_dir),
                delta_grid=tuple(grid),
                trials_per_delta=d.get("trials_per_delta", 1),
                algorithms=tuple(d.get("algorithms", ["alg1"])),
                master_seed=int(d.get("master_seed", 0)),
                kmeans=kmc,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"sweep: {exc}") from exc

    @classmethod
    def from_json(cls, text: str, base_dir: Path | None = None) -> "SweepConfig":
        return cls.from_dict(json.loads(text), base_dir=base_dir)


@dataclass(frozen=True)
class TrialRecord:
    delta: float
    trial_index: int
    algorithm: str
    loss: float
    objective: float
    elapsed_ms: float
    seed_used: int
    # not part of the CSV layout
    pre_refine_objective: float | None = None
    locally_optimal: bool | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def without_timing(self) -> "TrialRecord":
        d = asdict(self)
        d["elapsed_ms"] = 0.0
        return TrialRecord(**d)


def trial_seed(master_seed: int, delta_index: int, trial_index: int) -> int:
    return derive_seed(master_seed, delta_index, trial_index)


def run_trial(
    spec: GmmSpec,
    algorithm: str,
    kmeans_config: km.KMeansConfig = km.KMeansConfig(),
    trial_index: int = 0,
) -> TrialRecord:
    """Sample one instance from ``spec``, cluster it, and score against the truth.

    The k-means restarts are seeded from ``spec.seed`` so the record depends
    on nothing else.
    """
    t0 = time.perf_counter()
    inst = sample_instance(spec)
    config = kmeans_config.replace(seed=derive_seed(spec.seed, _KMEANS_KEY))
    out = spectral.run(algorithm, inst.X, spec.k, config)
    loss = misclustering_loss(out.labels, inst.z_star, spec.k).loss
    local = km.is_locally_optimal(out.Y_hat, out.labels, out.centers_reduced)
    elapsed = (time.perf_counter() - t0) * 1e3
    return TrialRecord(
        delta=float(spec.delta),
        trial_index=trial_index,
        algorithm=algorithm,
        loss=float(loss),
        objective=float(out.objective),
        elapsed_ms=elapsed,
        seed_used=int(spec.seed),
        pre_refine_objective=out.pre_refine_objective,
        locally_optimal=local,
    )


def _tasks(config: SweepConfig) -> list[tuple[int, int, int]]:
    """Canonical (delta index, trial index, algorithm index) triples."""
    return [
        (di, t, ai)
        for di in range(len(config.delta_grid))
        for t in range(config.trials_per_delta)
        for ai in range(len(config.algorithms))
    ]


def _execute(config: SweepConfig, task: tuple[int, int, int]) -> TrialRecord:
    di, t, ai = task
    delta = config.delta_grid[di]
    algorithm = config.algorithms[ai]
    seed = trial_seed(config.master_seed, di, t)
    try:
        spec = config.base.replace(delta=delta, seed=seed)
        return run_trial(spec, algorithm, config.kmeans, trial_index=t)
    except Exception as exc:  # a failed trial is recorded, the sweep goes on
        return TrialRecord(
            delta=delta,
            trial_index=t,
            algorithm=algorithm,
            loss=math.nan,
            objective=math.nan,
            elapsed_ms=0.0,
            seed_used=seed,
            error=f"{type(exc).__name__}: {exc}",
        )


def _execute_chunk(config: SweepConfig, chunk: list[tuple[int, int, int]]):
    return [(task, _execute(config, task)) for task in chunk]


def run_sweep(
    config: SweepConfig,
    threads: int = 1,
    schedule: Sequence[int] | None = None,
) -> list[TrialRecord]:
    """Run every (delta, trial, algorithm) combination of ``config``.

    ``threads > 1`` fans trials out to worker processes. ``schedule`` is an
    optional permutation of task positions controlling execution order; the
    returned list is always in canonical order.
    """
    tasks = _tasks(config)
    order = list(range(len(tasks))) if schedule is None else [int(i) for i in schedule]
    if sorted(order) != list(range(len(tasks))):
        raise ValueError("schedule must be a permutation of the task positions")
    ordered = [tasks[i] for i in order]
    results: dict[tuple[int, int, int], TrialRecord] = {}
    if threads <= 1 or len(ordered) < 2:
        for task in ordered:
            results[task] = _execute(config, task)
    else:
        size = max(1, len(ordered) // (threads * 8))
        chunks = [ordered[i : i + size] for i in range(0, len(ordered), size)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_execute_chunk, config, c) for c in chunks]
            for fut in futures:
                results.update(fut.result())
    return [results[task] for task in tasks]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    n_points_used: int
    n_censored: int
    reference_slope: float = REFERENCE_SLOPE
    algorithm: str = "alg1"
    slope_stderr: float | None = None
    deltas: tuple[float, ...] = ()
    mean_losses: tuple[float, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        d["mean_losses"] = list(self.mean_losses)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def mean_loss_by_delta(records: Iterable[TrialRecord], algorithm: str) -> tuple[np.ndarray, np.ndarray]:
    """Grid values and mean loss per grid value (NaN where every trial failed)."""
    buckets: dict[float, list[float]] = {}
    for r in records:
        if r.algorithm != algorithm:
            continue
        buckets.setdefault(r.delta, [])
        if r.ok:
            buckets[r.delta].append(r.loss)
    deltas = np.array(sorted(buckets), dtype=np.float64)
    means = np.array([np.mean(buckets[d]) if buckets[d] else math.nan for d in deltas])
    return deltas, means


def fit_rate(records: Iterable[TrialRecord], algorithm: str = "alg1") -> RateFit:
    """Least-squares line through ``(delta^2, log mean loss)``.

    Grid points whose mean loss is zero (or that have no successful trial)
    are censored: excluded from the fit and counted in ``n_censored``.
    """
    deltas, means = mean_loss_by_delta(records, algorithm)
    used = np.isfinite(means) & (means > 0)
    if used.sum() < 2:
        raise InsufficientUncensoredPoints(
            f"need at least 2 grid points with positive mean loss, have {int(used.sum())}"
        )
    x = deltas[used] ** 2
    y = np.log(means[used])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    stderr = None
    dof = len(x) - 2
    if dof > 0:
        resid = y - A @ np.array([slope, intercept])
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        n_points_used=int(used.sum()),
        n_censored=int((~used).sum()),
        algorithm=algorithm,
        slope_stderr=stderr,
        deltas=tuple(float(d) for d in deltas),
        mean_losses=tuple(float(m) for m in means),
    )


def write_records_csv(path: Path, records: Iterable[TrialRecord], timing: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow(
                [
                    format(r.delta, ".17g"),
                    r.trial_index,
                    r.algorithm,
                    format(r.loss, ".17g"),
                    format(r.objective, ".17g"),
                    format(r.elapsed_ms if timing else 0.0, ".17g"),
                    r.seed_used,
                ]
            )


def read_records_csv(path: Path) -> list[TrialRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RECORD_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(RECORD_HEADER)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RECORD_HEADER):
                raise ConfigError(f"{path}:{lineno}: expected {len(RECORD_HEADER)} fields, got {len(row)}")
            try:
                loss = float(row[3])
                out.append(
                    TrialRecord(
                        delta=float(row[0]),
                        trial_index=int(row[1]),
                        algorithm=row[2],
                        loss=loss,
                        objective=float(row[4]),
                        elapsed_ms=float(row[5]),
                        seed_used=int(row[6]),
                        error=None if math.isfinite(loss) else "failed",
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return out
