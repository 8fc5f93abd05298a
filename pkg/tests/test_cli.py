import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from gmmspectral.cli import main
from gmmspectral.matgen import read_labels_csv, read_matrix_csv
from gmmspectral.metrics import misclustering_loss

ZERO_NOISE = {"variant": "bounded-uniform", "variance": 0.0}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_generate_shape_and_zero_noise(tmp_path):
    cfg = write(tmp_path / "s.json", {"n": 4, "p": 2, "k": 2, "delta": 3.0, "noise": ZERO_NOISE})
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    lines = (tmp_path / "g" / "X.csv").read_text().splitlines()
    assert len(lines) == 3 and all(len(l.split(",")) == 4 for l in lines[1:])
    X = read_matrix_csv(tmp_path / "g" / "X.csv")
    C = read_matrix_csv(tmp_path / "g" / "centers.csv")
    z = read_labels_csv(tmp_path / "g" / "z_star.csv")
    np.testing.assert_array_equal(X, C[:, z])
    assert set(json.loads((tmp_path / "g" / "spec.json").read_text())) >= {"n", "p", "k", "delta", "seed"}


def test_generate_is_deterministic(tmp_path):
    cfg = write(tmp_path / "s.json", {"n": 30, "p": 3, "k": 3, "delta": 2.0, "seed": 5})
    for d in ("a", "b"):
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("X.csv", "z_star.csv", "centers.csv", "spec.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    main(["generate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "6"])
    assert (tmp_path / "a" / "X.csv").read_bytes() != (tmp_path / "c" / "X.csv").read_bytes()


def test_generate_validation_errors(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"n": 4, "p": 2, "k": 2, "delta": 1.0, "layot": "simplex"})
    assert main(["generate", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "layot" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text('{"n": 4,\n "p": }')
    assert main(["generate", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path)]) == 2
    assert "broken.json:2:" in capsys.readouterr().err


def test_cluster_zero_noise_and_json_format(tmp_path):
    cfg = write(tmp_path / "s.json", {"n": 30, "p": 4, "k": 3, "delta": 2.0, "noise": ZERO_NOISE})
    out = tmp_path / "c"
    assert main(["cluster", "--config", cfg, "--out", str(out), "--algorithm", "alg2"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["loss"] == 0 and summary["algorithm"] == "alg2" and summary["k"] == 3
    assert read_matrix_csv(out / "centers_hat.csv").shape == (4, 3)
    jout = tmp_path / "j"
    assert main(["cluster", "--config", cfg, "--out", str(jout), "--format", "json"]) == 0
    assert json.loads((jout / "summary.json").read_text())["loss"] == 0
    assert len(json.loads((jout / "labels.json").read_text())) == 30


def test_cluster_alg3_matches_alg1(tmp_path):
    cfg = write(tmp_path / "s.json", {"n": 90, "p": 6, "k": 3, "delta": 2.0, "seed": 3})
    gen = tmp_path / "g"
    main(["generate", "--config", cfg, "--out", str(gen)])
    for alg in ("alg1", "alg3"):
        assert main(["cluster", "--input", str(gen), "--out", str(tmp_path / alg), "--algorithm", alg, "--seed", "4"]) == 0
    z1 = read_labels_csv(tmp_path / "alg1" / "labels.csv")
    z3 = read_labels_csv(tmp_path / "alg3" / "labels.csv")
    assert misclustering_loss(z3, z1, 3).loss == 0
    assert json.loads((tmp_path / "alg3" / "summary.json").read_text())["loss_vs_alg1"] == 0


def test_cluster_missing_input(tmp_path, capsys):
    assert main(["cluster", "--out", str(tmp_path / "empty")]) == 2
    assert "missing-input" in capsys.readouterr().err
    (tmp_path / "x").mkdir()
    np.savetxt(tmp_path / "x" / "X.csv", np.ones((2, 3)), delimiter=",")
    assert main(["cluster", "--input", str(tmp_path / "x"), "--out", str(tmp_path / "y")]) == 2
    assert main(["cluster", "--input", str(tmp_path / "x"), "--out", str(tmp_path / "y"), "--k", "4"]) == 2


def sweep_doc(**kw):
    doc = {
        "base": {"n": 300, "p": 4, "k": 2},
        "delta_grid": [1.5, 2.5, 3.5],
        "trials_per_delta": 3,
        "algorithms": ["alg1"],
        "master_seed": 1,
        "kmeans": {"restarts": 3},
    }
    doc.update(kw)
    return doc


def test_sweep_outputs(tmp_path):
    cfg = write(tmp_path / "sw.json", sweep_doc())
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--no-timing"]) == 0
    header = (out / "records.csv").read_text().splitlines()[0]
    assert header == "delta,trial,algorithm,loss,objective,elapsed_ms,seed"
    fit = json.loads((out / "ratefit.json").read_text())
    assert fit["n_points_used"] + fit["n_censored"] == 3 and fit["reference_slope"] == -0.125
    svg = (out / "rate.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg and "<image" not in svg
    # deterministic across runs and worker counts
    out2 = tmp_path / "s2"
    assert main(["sweep", "--config", cfg, "--out", str(out2), "--no-timing", "--threads", "2"]) == 0
    for name in ("records.csv", "ratefit.json", "rate.svg"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_sweep_errors(tmp_path):
    empty = write(tmp_path / "e.json", sweep_doc(delta_grid=[]))
    assert main(["sweep", "--config", empty, "--out", str(tmp_path / "e")]) == 2
    far = write(tmp_path / "f.json", sweep_doc(delta_grid=[20.0, 30.0]))
    assert main(["sweep", "--config", far, "--out", str(tmp_path / "f")]) == 3
    assert (tmp_path / "f" / "records.csv").exists()
    assert main(["sweep", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_fit_perfect_exponential(tmp_path):
    rows = ["delta,trial,algorithm,loss,objective,elapsed_ms,seed"]
    for d in (3.0, 3.5, 4.0, 4.5, 5.0):
        rows.append(f"{d!r},0,alg1,{math.exp(-d * d / 8)!r},1,0,0")
    (tmp_path / "records.csv").write_text("\n".join(rows) + "\n")
    assert main(["fit", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "ratefit.json").read_text())
    assert fit["slope"] == pytest.approx(-0.125, abs=1e-12)
    assert (tmp_path / "rate.svg").exists()
    assert main(["fit", "--out", str(tmp_path / "none")]) == 2


def test_verify_default_passes(tmp_path):
    cfg = write(tmp_path / "v.json", {"haar": {"trials": 200}, "tail": {"trials": 50}, "equivalence": {"trials": 3}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    checks = json.loads((tmp_path / "verify.json").read_text())["checks"]
    names = {c["name"] for c in checks}
    assert names == {"population", "weyl", "davis_kahan", "sab_remainder", "equivalence", "haar", "opnorm_tail"}
    assert all(c["status"] == "pass" for c in checks)


def test_verify_skips_haar_for_bounded_noise_and_t_zero(tmp_path):
    spec = {"n": 120, "p": 20, "k": 3, "delta": 6.0, "layout": "collinear", "noise": {"variant": "bounded-uniform", "variance": 1.0}}
    cfg = write(tmp_path / "v.json", {"spec": spec, "tail": {"t": 0.0, "trials": 20}, "equivalence": {"trials": 2}})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 0
    checks = {c["name"]: c for c in json.loads((tmp_path / "verify.json").read_text())["checks"]}
    assert checks["haar"]["status"] == "skipped"
    assert checks["haar"]["detail"] == "skipped: hypothesis requires isotropic Gaussian"
    assert checks["opnorm_tail"]["status"] == "pass"
    assert checks["opnorm_tail"]["detail"]["bound"] == 1.0


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("gmmspectral")
    cmd = [exe] if exe else [sys.executable, "-m", "gmmspectral.cli"]
    res = subprocess.run(cmd + ["cluster", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2 and "missing-input" in res.stderr
