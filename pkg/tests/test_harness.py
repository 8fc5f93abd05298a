import math

import numpy as np
import pytest
from scipy import stats

from gmmspectral.errors import ConfigError, InsufficientUncensoredPoints
from gmmspectral.harness import (
    RECORD_HEADER,
    SweepConfig,
    TrialRecord,
    fit_rate,
    read_records_csv,
    run_sweep,
    run_trial,
    write_records_csv,
)
from gmmspectral.kmeans import KMeansConfig
from gmmspectral.matgen import GmmSpec, NoiseModel, sample_instance
from gmmspectral.metrics import misclustering_loss

FAST = KMeansConfig(restarts=3)


def synthetic(deltas, mean_loss, trials=3, algorithm="alg1"):
    return [
        TrialRecord(d, t, algorithm, float(mean_loss(d)), 1.0, 0.0, 0)
        for d in deltas
        for t in range(trials)
    ]


def small_config(**kw):
    base = dict(
        base=GmmSpec(n=200, p=4, k=2, delta=1.0),
        delta_grid=(1.5, 2.5, 3.5),
        trials_per_delta=2,
        algorithms=("alg1",),
        master_seed=99,
        kmeans=FAST,
    )
    base.update(kw)
    return SweepConfig(**base)


def test_zero_noise_trial():
    spec = GmmSpec(n=40, p=3, k=2, delta=1.0, noise=NoiseModel.zero(3), seed=4)
    assert run_trial(spec, "alg2", FAST).loss == 0


def test_trial_determinism():
    spec = GmmSpec(n=100, p=5, k=2, delta=2.0, seed=17)
    a, b = run_trial(spec, "alg1", FAST), run_trial(spec, "alg1", FAST)
    assert a.without_timing() == b.without_timing()


def test_trial_close_to_bayes_oracle():
    spec = GmmSpec(n=2000, p=5, k=2, delta=5.0, beta=1.0, seed=1)
    rec = run_trial(spec, "alg1")
    assert 0 <= rec.loss <= 0.05
    # oracle: nearest true centre on the same noise draw
    inst = sample_instance(spec)
    d = ((inst.X[:, :, None] - inst.centers[:, None, :]) ** 2).sum(axis=0)
    bayes = misclustering_loss(d.argmin(axis=1), inst.z_star, 2).loss
    assert abs(rec.loss - bayes) <= 0.01
    assert bayes == pytest.approx(stats.norm.cdf(-2.5), abs=0.005)


def test_sweep_cardinality_and_order():
    recs = run_sweep(small_config())
    assert len(recs) == 6
    keys = [(r.delta, r.trial_index, r.algorithm) for r in recs]
    assert keys == sorted(keys)
    assert all(0 <= r.loss <= 1 and r.ok for r in recs)


def test_sweep_schedule_and_threads_do_not_matter():
    cfg = small_config(algorithms=("alg1", "alg2"))
    base = [r.without_timing() for r in run_sweep(cfg)]
    rev = [r.without_timing() for r in run_sweep(cfg, schedule=list(range(12))[::-1])]
    par = [r.without_timing() for r in run_sweep(cfg, threads=2)]
    assert base == rev == par
    with pytest.raises(ValueError):
        run_sweep(cfg, schedule=[0, 0, 1])


def test_sweep_output_is_byte_identical(tmp_path):
    cfg = small_config()
    write_records_csv(tmp_path / "a.csv", run_sweep(cfg), timing=False)
    write_records_csv(tmp_path / "b.csv", run_sweep(cfg, threads=2), timing=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_adding_grid_points_keeps_other_trials():
    a = run_sweep(small_config(delta_grid=(1.5, 2.5)))
    b = run_sweep(small_config(delta_grid=(1.5, 2.5, 3.5)))
    assert [r.without_timing() for r in a] == [r.without_timing() for r in b[:4]]


def test_alg2_never_worse_than_its_starting_point():
    recs = run_sweep(small_config(algorithms=("alg1", "alg2"), trials_per_delta=4))
    by_key = {(r.delta, r.trial_index, r.algorithm): r for r in recs}
    for (d, t, alg), r in by_key.items():
        if alg != "alg2":
            continue
        one = by_key[(d, t, "alg1")]
        assert r.seed_used == one.seed_used
        assert r.pre_refine_objective == one.objective
        assert r.objective <= one.objective * (1 + 1e-12)
        assert r.locally_optimal


def test_failed_trials_are_recorded():
    # beta = 1 with n not divisible by k cannot be sampled
    cfg = small_config(base=GmmSpec(n=10, p=2, k=3, delta=1.0))
    recs = run_sweep(cfg)
    assert len(recs) == 6 and all(not r.ok for r in recs)
    assert "InfeasibleBalance" in recs[0].error


@pytest.mark.parametrize(
    "change",
    [
        {"delta_grid": ()},
        {"delta_grid": (2.0, 1.0)},
        {"delta_grid": (1.0, 1.0)},
        {"delta_grid": (0.0, 1.0)},
        {"trials_per_delta": 0},
        {"algorithms": ("alg4",)},
        {"algorithms": ()},
    ],
)
def test_config_validation(change):
    with pytest.raises(ConfigError):
        small_config(**change)


def test_config_json_round_trip():
    cfg = small_config(algorithms=("alg1", "alg3"))
    doc = cfg.to_dict()
    again = SweepConfig.from_dict(doc)
    assert again.to_dict() == doc
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({**doc, "delta_grid": []})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({**doc, "extra": 1})


def test_fit_exact_exponential():
    grid = [3.0, 3.5, 4.0, 4.5, 5.0]
    fit = fit_rate(synthetic(grid, lambda d: math.exp(-d * d / 8)))
    assert fit.slope == pytest.approx(-0.125, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.reference_slope == -0.125
    assert (fit.n_points_used, fit.n_censored) == (5, 0)


def test_fit_affine_shift():
    c = 0.37
    fit = fit_rate(synthetic([1.0, 2.0, 3.0], lambda d: c * math.exp(-d * d / 8)))
    assert fit.slope == pytest.approx(-0.125, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(c), abs=1e-12)


def test_fit_gaussian_tail_oracle():
    grid = np.array([3.0, 3.5, 4.0, 4.5, 5.0])
    fit = fit_rate(synthetic(grid, lambda d: stats.norm.cdf(-d / 2)))
    expected = np.polyfit(grid**2, np.log(stats.norm.cdf(-grid / 2)), 1)[0]
    assert fit.slope == pytest.approx(expected, abs=1e-12)
    assert fit.slope == pytest.approx(-0.148, abs=0.002)


def test_fit_censors_zero_loss_points():
    recs = synthetic([1.0, 2.0, 3.0, 4.0], lambda d: math.exp(-d * d / 8) if d < 3.5 else 0.0)
    fit = fit_rate(recs)
    assert (fit.n_points_used, fit.n_censored) == (3, 1)
    assert fit.n_points_used + fit.n_censored == 4
    assert fit.slope == pytest.approx(-0.125, abs=1e-12)
    with pytest.raises(InsufficientUncensoredPoints):
        fit_rate(synthetic([1.0, 2.0, 3.0], lambda d: 0.1 if d == 1.0 else 0.0))
    with pytest.raises(InsufficientUncensoredPoints):
        fit_rate(recs, algorithm="alg2")


def test_fit_uses_only_requested_algorithm():
    recs = synthetic([1.0, 2.0], lambda d: math.exp(-d * d / 8)) + synthetic(
        [1.0, 2.0], lambda d: math.exp(-d * d / 4), algorithm="alg2"
    )
    assert fit_rate(recs, "alg2").slope == pytest.approx(-0.25, abs=1e-12)


def test_records_csv_round_trip(tmp_path):
    recs = run_sweep(small_config())
    write_records_csv(tmp_path / "r.csv", recs)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(RECORD_HEADER)
    back = read_records_csv(tmp_path / "r.csv")
    for a, b in zip(recs, back):
        assert (a.delta, a.trial_index, a.algorithm, a.loss, a.objective, a.seed_used) == (
            b.delta, b.trial_index, b.algorithm, b.loss, b.objective, b.seed_used
        )
    (tmp_path / "bad.csv").write_text("delta,loss\n1,0\n")
    with pytest.raises(ConfigError):
        read_records_csv(tmp_path / "bad.csv")
