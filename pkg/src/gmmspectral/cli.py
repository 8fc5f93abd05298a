"""Command-line entry point: ``gmmspectral {generate,cluster,sweep,fit,verify}``.

Exit codes: 0 success, 1 internal error, 2 config or input error,
3 rate fit infeasible (fewer than two uncensored grid points).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import harness, lemmalab, spectral
from . import kmeans as km
from .errors import ConfigError, GmmSpectralError, InsufficientUncensoredPoints
from .matgen import (
    GmmSpec,
    derive_seed,
    read_labels_csv,
    read_matrix_csv,
    sample_instance,
    write_labels_csv,
    write_matrix_csv,
)
from .metrics import misclustering_loss

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_FIT = 0, 1, 2, 3


class MissingInput(ConfigError):
    pass


def _load_json(path: str | None, what: str) -> tuple[dict[str, Any], Path]:
    if path is None:
        raise ConfigError(f"{what} needs --config")
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"missing-input: config file {p} not found")
    try:
        return json.loads(p.read_text(encoding="utf-8")), p.parent
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _write_matrix(out: Path, stem: str, M: np.ndarray, fmt: str) -> None:
    if fmt == "json":
        _write_json(out / f"{stem}.json", np.asarray(M, dtype=np.float64).tolist())
    else:
        write_matrix_csv(out / f"{stem}.csv", M)


def _write_labels(out: Path, stem: str, labels: np.ndarray, fmt: str) -> None:
    if fmt == "json":
        _write_json(out / f"{stem}.json", [int(v) + 1 for v in labels])
    else:
        write_labels_csv(out / f"{stem}.csv", labels)


def _read_matrix(folder: Path, stem: str) -> np.ndarray | None:
    if (folder / f"{stem}.csv").is_file():
        return read_matrix_csv(folder / f"{stem}.csv")
    if (folder / f"{stem}.json").is_file():
        return np.atleast_2d(np.asarray(json.loads((folder / f"{stem}.json").read_text()), float))
    return None


def _read_labels(folder: Path, stem: str) -> np.ndarray | None:
    if (folder / f"{stem}.csv").is_file():
        return read_labels_csv(folder / f"{stem}.csv")
    if (folder / f"{stem}.json").is_file():
        return np.asarray(json.loads((folder / f"{stem}.json").read_text()), dtype=np.int64) - 1
    return None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _threads(n: int) -> int:
    if n == 0:
        return os.cpu_count() or 1
    return n


# --- subcommands -----------------------------------------------------------


def _generate(spec: GmmSpec, out: Path, fmt: str) -> None:
    inst = sample_instance(spec)
    _write_matrix(out, "X", inst.X, fmt)
    _write_labels(out, "z_star", inst.z_star, fmt)
    _write_matrix(out, "centers", inst.centers, fmt)
    (out / "spec.json").write_text(spec.to_json(), encoding="utf-8")


def cmd_generate(args) -> int:
    d, base = _load_json(args.config, "generate")
    spec = GmmSpec.from_dict(d, base_dir=base)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    _generate(spec, _out_dir(args), args.format)
    return EXIT_OK


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    source = Path(args.input) if args.input else out
    k = args.k
    if args.config:
        # inline spec: generate into the output directory, then cluster it
        d, base = _load_json(args.config, "cluster")
        spec = GmmSpec.from_dict(d, base_dir=base)
        _generate(spec, out, args.format)
        source = out
        k = k or spec.k
    X = _read_matrix(source, "X")
    if X is None:
        raise MissingInput(f"missing-input: no X.csv or X.json in {source}")
    if k is None and (source / "spec.json").is_file():
        k = GmmSpec.from_json((source / "spec.json").read_text(), base_dir=source).k
    if k is None:
        raise MissingInput(f"missing-input: pass --k or provide spec.json in {source}")
    config = km.KMeansConfig(restarts=args.restarts, seed=0 if args.seed is None else args.seed)
    ref = spectral.algorithm1(X, k, config)
    if args.algorithm == "alg1":
        res = ref
    elif args.algorithm == "alg3":
        res = spectral.algorithm3(X, k, config, reference=ref)
    else:
        res = spectral.algorithm2(X, k, config)
    _write_labels(out, "labels", res.labels, args.format)
    _write_matrix(out, "centers_hat", res.centers_ambient, args.format)
    summary: dict[str, Any] = {
        "algorithm": args.algorithm,
        "k": int(k),
        "objective": float(res.objective),
        "loss": None,
        "loss_vs_alg1": float(misclustering_loss(res.labels, ref.labels, k).loss),
    }
    z_star = _read_labels(source, "z_star")
    if z_star is not None:
        summary["loss"] = float(misclustering_loss(res.labels, z_star, k).loss)
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def _write_fit(out: Path, fit: harness.RateFit, suffix: str = "") -> None:
    from .report import render_rate_svg  # matplotlib is only loaded here

    (out / f"ratefit{suffix}.json").write_text(fit.to_json(), encoding="utf-8")
    render_rate_svg(fit, out / f"rate{suffix}.svg")


def _fit_all(records, algorithms, out: Path) -> int:
    status = EXIT_OK
    for i, alg in enumerate(algorithms):
        try:
            fit = harness.fit_rate(records, alg)
        except InsufficientUncensoredPoints as exc:
            print(f"error: {alg}: {exc}", file=sys.stderr)
            status = EXIT_FIT
            continue
        _write_fit(out, fit, "" if i == 0 else f"_{alg}")
    return status


def cmd_sweep(args) -> int:
    d, base = _load_json(args.config, "sweep")
    config = harness.SweepConfig.from_dict(d, base_dir=base)
    if args.seed is not None:
        config = config.replace(master_seed=args.seed)
    if args.algorithm is not None:
        config = config.replace(algorithms=(args.algorithm,))
    out = _out_dir(args)
    records = harness.run_sweep(config, threads=_threads(args.threads))
    failed = [r for r in records if not r.ok]
    for r in failed:
        print(f"warning: trial delta={r.delta} #{r.trial_index} {r.algorithm} failed: {r.error}",
              file=sys.stderr)
    if args.format == "json":
        rows = [
            {"delta": r.delta, "trial": r.trial_index, "algorithm": r.algorithm,
             "loss": None if math.isnan(r.loss) else r.loss,
             "objective": None if math.isnan(r.objective) else r.objective,
             "elapsed_ms": r.elapsed_ms if args.timing else 0.0, "seed": r.seed_used}
            for r in records
        ]
        _write_json(out / "records.json", rows)
    else:
        harness.write_records_csv(out / "records.csv", records, timing=args.timing)
    return _fit_all(records, config.algorithms, out)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    path = Path(args.records) if args.records else out / "records.csv"
    if not path.is_file():
        raise MissingInput(f"missing-input: records file {path} not found")
    records = harness.read_records_csv(path)
    if args.algorithm is not None:
        algorithms = [args.algorithm]
    else:
        algorithms = list(dict.fromkeys(r.algorithm for r in records))
    if not algorithms:
        raise ConfigError(f"{path}: no records")
    return _fit_all(records, algorithms, out)


VERIFY_DEFAULTS: dict[str, Any] = {
    "spec": {"n": 300, "p": 60, "k": 3, "delta": 6.0, "layout": "collinear", "seed": 2024},
    "perturbation": {"trials": 20, "n": 60, "p": 30, "k": 4, "noise_scale": 0.5},
    "haar": {"j": 3, "trials": 400},
    "tail": {"n": 100, "p": 100, "t": 3.0, "trials": 200},
    "equivalence": {"trials": 10},
    "seed": 0,
}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = dict(defaults)
    for key, val in given.items():
        if isinstance(defaults[key], dict) and key != "spec":
            if not isinstance(val, dict):
                raise ConfigError(f"{where}.{key} must be an object")
            out[key] = _merge(defaults[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


def _entry(name: str, status: str, margin: float | None, detail: dict | str) -> dict[str, Any]:
    if margin is not None and not math.isfinite(margin):
        margin = None
    return {"name": name, "status": status, "margin": margin, "detail": detail}


def _random_pair(n: int, p: int, k: int, scale: float, rng: np.random.Generator):
    P = rng.standard_normal((p, k)) @ rng.standard_normal((k, n))
    E = scale * rng.standard_normal((p, n))
    return P, E


def run_verify(cfg: dict[str, Any], base_dir: Path | None = None) -> list[dict[str, Any]]:
    seed = int(cfg["seed"])
    spec = GmmSpec.from_dict(cfg["spec"], base_dir=base_dir)
    checks = []

    pop = lemmalab.population_check(sample_instance(spec))
    checks.append(_entry("population", "pass" if pop.ok else "fail",
                         pop.sigma1 - pop.sigma1_lower, pop.to_dict()))

    pc = cfg["perturbation"]
    rng = np.random.default_rng(derive_seed(seed, 1))
    weyl_m, dk_m, sab_m = math.inf, math.inf, math.inf
    weyl_ok = dk_ok = sab_ok = True
    dk_skipped = 0
    for _ in range(int(pc["trials"])):
        P, E = _random_pair(int(pc["n"]), int(pc["p"]), int(pc["k"]), float(pc["noise_scale"]), rng)
        b = int(rng.integers(1, int(pc["k"]) + 1))
        a = int(rng.integers(1, b + 1))
        w = lemmalab.weyl_check(P, E)
        weyl_ok &= w.ok
        weyl_m = min(weyl_m, w.worst_margin)
        dk = lemmalab.davis_kahan_check(P, E, a, b)
        if dk.skipped:
            dk_skipped += 1
        else:
            dk_ok &= dk.ok
            dk_m = min(dk_m, dk.margin)
        s = lemmalab.sab_residual(P, E, a, b)
        sab_ok &= s.ok
        if not s.skipped:
            sab_m = min(sab_m, s.sab_bound - s.sab_norm)
    checks.append(_entry("weyl", "pass" if weyl_ok else "fail", weyl_m, {"trials": pc["trials"]}))
    checks.append(_entry("davis_kahan", "pass" if dk_ok else "fail", dk_m,
                         {"trials": pc["trials"], "skipped_zero_gap": dk_skipped}))
    checks.append(_entry("sab_remainder", "pass" if sab_ok else "fail", sab_m,
                         {"trials": pc["trials"]}))

    eq_ok, eq_gap = True, 0.0
    for t in range(int(cfg["equivalence"]["trials"])):
        inst = sample_instance(spec.replace(seed=derive_seed(seed, 2, t)))
        rep = lemmalab.equivalence_check(inst.X, spec.k, km.KMeansConfig(seed=derive_seed(seed, 3, t)))
        eq_ok &= rep.ok
        eq_gap = max(eq_gap, rep.center_gap)
    checks.append(_entry("equivalence", "pass" if eq_ok else "fail", 1e-8 - eq_gap,
                         {"trials": cfg["equivalence"]["trials"], "max_center_gap": eq_gap}))

    hc = cfg["haar"]
    if not spec.noise.is_isotropic:
        checks.append(_entry("haar", "skipped", None,
                             "skipped: hypothesis requires isotropic Gaussian"))
    else:
        samples = lemmalab.haar_residual_samples(spec, int(hc["j"]), int(hc["trials"]),
                                                 seed=derive_seed(seed, 4))
        h = lemmalab.haar_summary(samples)
        checks.append(_entry("haar", "pass" if h.ok else "fail", h.ks_limit - h.ks_distance, h.to_dict()))

    tc = cfg["tail"]
    tail = lemmalab.opnorm_tail_check(int(tc["n"]), int(tc["p"]), float(tc["t"]), int(tc["trials"]),
                                      seed=derive_seed(seed, 5))
    checks.append(_entry("opnorm_tail", "pass" if tail.ok else "fail",
                         tail.allowed - tail.exceedance_fraction, tail.to_dict()))
    return checks


def cmd_verify(args) -> int:
    given: dict[str, Any] = {}
    base = None
    if args.config:
        given, base = _load_json(args.config, "verify")
    cfg = _merge(VERIFY_DEFAULTS, given, "verify")
    if args.seed is not None:
        cfg["seed"] = args.seed
    checks = run_verify(cfg, base)
    _write_json(_out_dir(args) / "verify.json", {"checks": checks})
    for c in checks:
        print(f"{c['name']}: {c['status']}")
    return EXIT_OK if all(c["status"] != "fail" for c in checks) else EXIT_INTERNAL


# --- argument parsing ------------------------------------------------------


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmmspectral", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_help):
        p.add_argument("--config", help=config_help)
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--threads", type=int, default=1, help="worker processes, 0 = all cores")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")

    p = sub.add_parser("generate", help="sample one mixture instance")
    common(p, "GmmSpec JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cluster", help="cluster X.csv with one of the spectral algorithms")
    common(p, "optional GmmSpec JSON to generate into --out first")
    p.add_argument("--input", help="directory holding X.csv (default: --out)")
    p.add_argument("--k", type=int, default=None, help="cluster count (default: from spec.json)")
    p.add_argument("--algorithm", choices=spectral.ALGORITHMS, default="alg1")
    p.add_argument("--restarts", type=int, default=km.KMeansConfig.restarts)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over a delta grid, then fit the rate")
    common(p, "sweep config JSON")
    p.add_argument("--algorithm", choices=spectral.ALGORITHMS, default=None,
                   help="run only this algorithm")
    p.add_argument("--no-timing", dest="timing", action="store_false",
                   help="write elapsed_ms as 0 so records are byte-reproducible")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit the rate from an existing records.csv")
    common(p, "unused")
    p.add_argument("--records", help="records CSV (default: <out>/records.csv)")
    p.add_argument("--algorithm", choices=spectral.ALGORITHMS, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("verify", help="run the numerical bound and distribution checks")
    common(p, "verify config JSON (optional; defaults are built in)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsufficientUncensoredPoints as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GmmSpectralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(exc, ValueError) else EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
