"""Command-line front end.

Subcommands: ``score`` a forecast file, ``fit`` a variance model to
(x, eps) samples, ``bench`` the synthetic experiment matrix, ``gen``
dump a synthetic dataset.  All numeric outputs are deterministic under
``--seed``; CSV files are the interchange format, model and config
documents are JSON.

Exit codes: 0 ok, 2 input error, 3 unsupported combination,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import arcost, bench, scores, varmodel

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNSUPPORTED = 3
EXIT_NUMERIC = 4


class InputError(Exception):
    pass


class UnsupportedError(Exception):
    pass


def _sig6(v: float) -> str:
    """Six significant digits, trailing zeros kept."""
    return np.format_float_positional(float(v), precision=6, unique=False,
                                      fractional=False, trim="k")


def _fmt(v: float) -> str:
    """Full-precision, round-trippable float for CSV cells."""
    return repr(float(v))


def _read_csv(path, expected_header=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    rows = list(reader)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if expected_header is not None and header != expected_header:
        raise InputError(
            f"{path}:1: expected header {','.join(expected_header)!r}, got {','.join(header)!r}"
        )
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if not data:
        raise InputError(f"{path}: no data rows")
    return header, np.array(data, dtype=float)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _bool_flag(value: str) -> bool:
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {value!r}")


# --- score ------------------------------------------------------------------


def cmd_score(args) -> int:
    _, data = _read_csv(args.input, ["mu", "sigma", "y_obs"])
    mu, sigma, y = data[:, 0], data[:, 1], data[:, 2]
    if np.any(sigma <= 0.0):
        raise InputError(f"{args.input}: sigma values must be strictly positive")
    eps = y - mu

    crps_mean = float(np.mean(scores.crps_values(eps, sigma)))
    etas = np.sort(eps / (np.sqrt(2.0) * sigma), kind="stable")
    rs_full = scores.reliability_score(etas, drop_constant=False)
    rs_drop = scores.reliability_score(etas, drop_constant=True)
    weights = arcost.compute_beta(eps, drop_constant=args.drop_constant)
    ar = arcost.ar_cost(sigma, eps, weights, drop_constant=args.drop_constant)
    nlpd_val = bench.nlpd_from_arrays(mu, sigma, y)

    fields = [
        ("n", str(data.shape[0])),
        ("crps_mean", _sig6(crps_mean)),
        ("rs", _sig6(rs_full)),
        ("rs_drop_constant", _sig6(rs_drop)),
        ("beta", _sig6(weights.beta)),
        ("ar", _sig6(ar)),
        ("nlpd", _sig6(nlpd_val)),
    ]
    for name, value in fields:
        print(f"{name} = {value}")
    if args.out:
        _write_csv(args.out, [k for k, _ in fields], [[v for _, v in fields]])
    return EXIT_OK


# --- fit --------------------------------------------------------------------


def _load_samples(path):
    header, data = _read_csv(path)
    if header[-1] != "eps" or len(header) < 2:
        raise InputError(f"{path}:1: expected header x1,..,xd,eps")
    for i, name in enumerate(header[:-1], start=1):
        if name != f"x{i}":
            raise InputError(f"{path}:1: expected column {i} to be named x{i}, got {name!r}")
    return data[:, :-1], data[:, -1]


def cmd_fit(args) -> int:
    x, eps = _load_samples(args.input)
    d = x.shape[1]
    if args.model == "poly" and d != 1:
        raise UnsupportedError(f"--model poly supports 1-D inputs only (got d={d})")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.model == "per-point":
            model = varmodel.fit_per_point((x, eps), drop_constant=args.drop_constant)
        elif args.model == "poly":
            model = varmodel.fit_polynomial((x, eps), tol=args.tol,
                                            drop_constant=args.drop_constant)
        else:
            model = varmodel.fit_mlp((x, eps), rng_seed=args.seed,
                                     drop_constant=args.drop_constant)
    except (varmodel.FitError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"error: fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    varmodel.save_model(model, out_dir / "model.json")
    if args.model == "per-point":
        sig = model.sigmas
    else:
        sig = varmodel.predict_sigma(model, x if d > 1 else x.ravel())
    header = [f"x{i}" for i in range(1, d + 1)] + ["sigma_hat"]
    rows = [[_fmt(v) for v in x[i]] + [_fmt(sig[i])] for i in range(x.shape[0])]
    _write_csv(out_dir / "sigma_hat.csv", header, rows)
    print(f"wrote {out_dir / 'model.json'}")
    print(f"wrote {out_dir / 'sigma_hat.csv'}")
    return EXIT_OK


# --- gen --------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        spec = bench.make_dataset(args.dataset, n_train=args.n, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    x, y, f, s = bench.generate(spec)
    header = [f"x{i}" for i in range(1, spec.dim + 1)] + ["y", "f_true", "sigma_true"]
    rows = [
        [_fmt(v) for v in x[i]] + [_fmt(y[i]), _fmt(f[i]), _fmt(s[i])]
        for i in range(x.shape[0])
    ]
    _write_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return EXIT_OK


# --- bench ------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Benchmark invocation, mirroring the CLI flags."""

    datasets: tuple
    estimators: tuple
    runs: int
    seed: int
    out_dir: str
    n_test: int = 900
    tol: float = 3e-4
    drop_constant: bool = True
    plots: bool = False

    def to_json(self) -> str:
        doc = asdict(self)
        doc["datasets"] = list(doc["datasets"])
        doc["estimators"] = list(doc["estimators"])
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        doc = json.loads(text)
        doc["datasets"] = tuple(doc["datasets"])
        doc["estimators"] = tuple(doc["estimators"])
        return cls(**doc)


def _parse_list(value, allowed, what):
    items = tuple(sorted({v.strip() for v in value.split(",") if v.strip()}))
    if not items:
        raise InputError(f"no {what} selected")
    for item in items:
        if item not in allowed:
            raise InputError(f"unknown {what} {item!r}; choose from {', '.join(allowed)}")
    return items


def cmd_bench(args) -> int:
    datasets = _parse_list(args.datasets, bench.DATASET_NAMES, "dataset")
    estimators = _parse_list(args.estimators, bench.ESTIMATORS, "estimator")
    config = RunConfig(
        datasets=datasets, estimators=estimators, runs=args.runs, seed=args.seed,
        out_dir=str(args.out_dir), n_test=args.n_test, tol=args.tol,
        drop_constant=args.drop_constant, plots=args.plots,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json(), encoding="utf-8")

    results = {}   # (dataset, estimator) -> ExperimentReport
    failures = {}  # (dataset, estimator) -> message
    timings = {}
    for ds in datasets:
        spec = bench.make_dataset(ds, seed=args.seed)
        cell_ests = []
        for est in estimators:
            try:
                bench.validate_combination(ds, est, spec.dim)
                cell_ests.append(est)
            except ValueError as exc:
                failures[(ds, est)] = str(exc)
        if not cell_ests:
            continue
        t0 = time.perf_counter()
        try:
            reports = bench.run_matrix(spec, cell_ests, args.runs, args.n_test,
                                        poly_tol=args.tol, timer=time.perf_counter)
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            for est in cell_ests:
                failures[(ds, est)] = f"{type(exc).__name__}: {exc}"
            continue
        timings[ds] = time.perf_counter() - t0
        results.update({(ds, est): rep for est, rep in reports.items()})

    if not results:
        print("error: all benchmark cells failed", file=sys.stderr)
        for key, msg in sorted(failures.items()):
            print(f"  {key[0]}/{key[1]}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC

    _write_bench_outputs(out_dir, config, results, failures, timings)
    for key, msg in sorted(failures.items()):
        print(f"skipped {key[0]}/{key[1]}: {msg}")
    print(f"wrote benchmark outputs to {out_dir}")
    return EXIT_OK


def _write_bench_outputs(out_dir, config, results, failures, timings):
    # per-run NLPD rows, canonical ordering
    run_rows = []
    for (ds, est) in sorted(results):
        rep = results[(ds, est)]
        for run in range(rep.n_runs):
            run_rows.append([ds, est, str(run), str(rep.run_seeds[run]), _fmt(rep.nlpds[run])])
    _write_csv(out_dir / "runs.csv", ["dataset", "estimator", "run", "seed", "nlpd"], run_rows)

    # quartile table in the reference layout: one row per dataset x quartile
    datasets = sorted({ds for ds, _ in results})
    estimators = sorted({est for _, est in results})
    table_rows = []
    for ds in datasets:
        for label, idx in (("q1", 0), ("median", 1), ("q3", 2)):
            row = [ds, label]
            for est in estimators:
                rep = results.get((ds, est))
                row.append(_fmt(rep.quartiles[idx]) if rep is not None else "")
            table_rows.append(row)
    _write_csv(out_dir / "table1.csv", ["dataset", "quartile", *estimators], table_rows)

    # sigma-recovery grids for 1-D datasets
    for (ds, est) in sorted(results):
        rep = results[(ds, est)]
        if rep.recovery_sigmas is None:
            continue
        summary = bench.sigma_recovery(rep)
        rows = [
            [_fmt(summary.grid[i]), _fmt(summary.truth[i]), _fmt(summary.mean[i]), _fmt(summary.std[i])]
            for i in range(summary.grid.size)
        ]
        _write_csv(out_dir / f"recovery_{ds}_{est}.csv",
                   ["x", "sigma_true", "sigma_hat_mean", "sigma_hat_std"], rows)

    # 5D density map from the first run's model
    for (ds, est) in sorted(results):
        rep = results[(ds, est)]
        if ds != "5D":
            continue
        dmap = bench.density_plot_5d(rep.models[0], seed=config.seed)
        centers_p = 0.5 * (dmap.pred_edges[:-1] + dmap.pred_edges[1:])
        centers_t = 0.5 * (dmap.true_edges[:-1] + dmap.true_edges[1:])
        rows = []
        for i, cp in enumerate(centers_p):
            for j, ct in enumerate(centers_t):
                rows.append([_fmt(cp), _fmt(ct), _fmt(dmap.hist[i, j])])
        _write_csv(out_dir / f"density_5d_{est}.csv",
                   ["sigma_pred", "sigma_true", "density"], rows)
        if config.plots:
            from . import plots

            plots.plot_density_map(dmap, f"5D / {est}", out_dir / f"density_5d_{est}.svg")

    if config.plots:
        from . import plots

        for (ds, est) in sorted(results):
            rep = results[(ds, est)]
            if rep.recovery_sigmas is None:
                continue
            summary = bench.sigma_recovery(rep)
            plots.plot_recovery(summary, f"{ds} / {est}", out_dir / f"recovery_{ds}_{est}.svg")

    # wall-clock metadata lives outside the CSVs so result files stay
    # byte-identical across repeated seeded invocations
    timing_doc = {
        "per_fit_seconds": {
            f"{ds}/{est}": [round(t, 6) for t in results[(ds, est)].wall_times.tolist()]
            for (ds, est) in sorted(results)
        },
        "per_dataset_seconds": {ds: round(t, 3) for ds, t in sorted(timings.items())},
        "failures": {f"{ds}/{est}": msg for (ds, est), msg in sorted(failures.items())},
    }
    (out_dir / "timings.json").write_text(json.dumps(timing_doc, indent=2) + "\n", encoding="utf-8")


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arsigma",
                                description="Accuracy-reliability variance estimation")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("score", help="score a CSV of (mu, sigma, y_obs) forecasts")
    ps.add_argument("input")
    ps.add_argument("--drop-constant", type=_bool_flag, default=True)
    ps.add_argument("--out", default=None, help="also write the report as CSV")
    ps.set_defaults(func=cmd_score)

    pf = sub.add_parser("fit", help="fit a variance model to (x1..xd, eps) samples")
    pf.add_argument("input")
    pf.add_argument("--model", choices=["per-point", "poly", "nn"], default="poly")
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--tol", type=float, default=3e-4)
    pf.add_argument("--drop-constant", type=_bool_flag, default=True)
    pf.add_argument("--out-dir", default="fit_out")
    pf.set_defaults(func=cmd_fit)

    pg = sub.add_parser("gen", help="dump a synthetic dataset as CSV")
    pg.add_argument("--dataset", required=True)
    pg.add_argument("--n", type=int, default=None)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", default="dataset.csv")
    pg.set_defaults(func=cmd_gen)

    pb = sub.add_parser("bench", help="run the benchmark matrix")
    pb.add_argument("--datasets", default="G,Y,W")
    pb.add_argument("--estimators", default="gp,ar-nn,ar-poly")
    pb.add_argument("--runs", type=int, default=20)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--n-test", type=int, default=900)
    pb.add_argument("--tol", type=float, default=3e-4)
    pb.add_argument("--drop-constant", type=_bool_flag, default=True)
    pb.add_argument("--out-dir", default="bench_out")
    pb.add_argument("--plots", action="store_true")
    pb.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (np.linalg.LinAlgError, FloatingPointError, varmodel.FitError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
