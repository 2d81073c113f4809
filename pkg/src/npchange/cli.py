"""Command-line front end.

Every command resolves its flags into a parameter dictionary, writes that
dictionary into ``manifest.json`` next to its outputs, and derives all of
its randomness from ``--seed``. ``npchange rerun MANIFEST`` replays a run.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 input schema
error, 5 series too short to scan.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bandwidth_select import DEFAULT_CANDIDATES, select_bandwidth
from .cusum_core import DetectionConfig, ScanInfeasibleError
from .dgp_sim import DESIGNS, ChangeModelSpec, simulate
from .experiment_harness import (
    THREADS_ENV,
    ExperimentSpec,
    Method,
    run_bias_experiment,
    run_pdc_experiment,
    theorem_scaling_probe,
)
from .segmentation import binary_segmentation
from .series_io import (
    SchemaError,
    dump_column,
    dump_records,
    file_digest,
    fmt4,
    read_series_csv,
    write_series_csv,
)
from .thresholding import PermutationPolicy, detect

log = logging.getLogger("npchange")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_INFEASIBLE = 5


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- parameters

def _positive_or_auto(text: str):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _block(text: str):
    if text == "auto":
        return None
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _add_input(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--x-col", default="x", help="regressor column (default: x)")
    p.add_argument("--y-col", default="y", help="response column (default: y)")
    p.add_argument("--label-col", default=None,
                   help="optional label/date column passed through to outputs")


def _add_scan(p, bandwidth_default="auto"):
    p.add_argument("--bandwidth", type=_positive_or_auto, default=bandwidth_default,
                   help=f"kernel bandwidth or 'auto' (default: {bandwidth_default})")
    p.add_argument("--candidates", type=int, default=DEFAULT_CANDIDATES,
                   help="bandwidth candidates for 'auto' (default: %(default)s)")
    p.add_argument("--grid-m", type=int, default=100, help="grid points (default: 100)")
    p.add_argument("--grid-lo", type=float, default=5.0, help="lower grid percentile")
    p.add_argument("--grid-hi", type=float, default=95.0, help="upper grid percentile")
    p.add_argument("--trim", type=float, default=0.05, help="trim fraction (default: 0.05)")
    p.add_argument("--aggregation", choices=["ss", "sup"], default="ss")
    p.add_argument("--estimator", choices=["nw", "ll"], default="nw")
    p.add_argument("--kernel", choices=["epanechnikov", "uniform", "triangular"],
                   default="epanechnikov")


def _add_policy(p):
    p.add_argument("--permutations", type=int, default=200,
                   help="permutation draws for the threshold (default: 200)")
    p.add_argument("--level", type=float, default=0.99,
                   help="threshold quantile level (default: 0.99)")
    p.add_argument("--block-length", type=_block, default=None,
                   help="permutation block length, or 'auto' for the cube root of n "
                        "rounded up (default: auto)")


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--out-dir", required=True, help="directory for all outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npchange",
        description="Change-point detection in nonparametric regression.",
        epilog=(f"Environment: {THREADS_ENV} sets the number of worker processes "
                "used for Monte Carlo replications (default 1). Outputs do not "
                "depend on it. Exit codes: 0 ok, 2 config, 3 I/O, 4 schema, "
                "5 series too short."),
    )
    parser.add_argument("--version", action="version", version=f"npchange {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="single change point with permutation threshold")
    _add_input(p)
    _add_scan(p)
    _add_policy(p)
    _common(p)

    p = sub.add_parser("segment", help="multiple change points by binary segmentation")
    _add_input(p)
    _add_scan(p)
    _add_policy(p)
    p.add_argument("--min-segment", type=int, default=50)
    p.add_argument("--rebandwidth-per-segment", action="store_true",
                   help="re-run the bandwidth search on every segment")
    _common(p)

    p = sub.add_parser("bandwidth", help="F(h) curve and its maximiser")
    _add_input(p)
    _add_scan(p)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo study on simulated data")
    p.add_argument("--mode", choices=["bias", "pdc", "scaling-probe"], default="bias")
    p.add_argument("--dgp", choices=sorted(DESIGNS), default="arma")
    p.add_argument("--model", choices=["m41", "m42"], default="m41")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--theta", type=float, default=0.4)
    p.add_argument("--delta-phi", type=float, default=0.0)
    p.add_argument("--method", choices=[m.value for m in Method], default="nwss")
    p.add_argument("--N", dest="replications", type=int, default=200,
                   help="replications (default: 200)")
    p.add_argument("--n-values", default="200,500,1000,2000",
                   help="comma-separated sample sizes for scaling-probe")
    p.add_argument("--omega", type=float, default=0.2,
                   help="bandwidth exponent h = n^-omega for scaling-probe")
    _add_scan(p, bandwidth_default=1.0)
    _add_policy(p)
    _common(p)

    p = sub.add_parser("generate", help="write a simulated series as CSV")
    p.add_argument("--dgp", choices=sorted(DESIGNS), default="arma")
    p.add_argument("--model", choices=["m41", "m42"], default="m41")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--theta", type=float, default=0.4)
    p.add_argument("--delta-phi", type=float, default=0.0)
    _common(p)

    p = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    p.add_argument("--input", default=None, help="override the recorded input path")
    p.add_argument("--out-dir", required=True)
    return parser


_NON_PARAMS = {"command", "out_dir", "verbose"}


def params_from_args(args: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in _NON_PARAMS}
    if "input" in params:
        params["input"] = str(Path(params["input"]).resolve())
    return params


# ------------------------------------------------------------------- helpers

def _config(p: dict, bandwidth: float) -> DetectionConfig:
    try:
        return DetectionConfig(
            bandwidth=bandwidth, kernel=p["kernel"], m=p["grid_m"], lo_pct=p["grid_lo"],
            hi_pct=p["grid_hi"], trim=p["trim"], aggregation=p["aggregation"],
            estimator=p["estimator"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _policy(p: dict, seed: int) -> PermutationPolicy:
    try:
        return PermutationPolicy(p["permutations"], p["level"], seed, p["block_length"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load(p: dict):
    return read_series_csv(p["input"], p["x_col"], p["y_col"], p["label_col"])


def _resolve_bandwidth(series, p: dict, out: Path):
    if p["bandwidth"] != "auto":
        return float(p["bandwidth"]), None
    search = select_bandwidth(series, _config(p, 1.0), p["candidates"])
    (out / "bandwidth.tsv").write_text(search.to_text())
    return search.h_star, search


def _write_manifest(out: Path, command: str, p: dict) -> dict:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": p.get("seed"),
        "params": p,
    }
    if "input" in p:
        manifest["input_sha256"] = file_digest(p["input"])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ------------------------------------------------------------------ commands

def cmd_detect(p: dict, out: Path) -> None:
    loaded = _load(p)
    series = loaded.series
    h, _ = _resolve_bandwidth(series, p, out)
    outcome = detect(series, _config(p, h), _policy(p, p["seed"]))
    rec = {**outcome.as_record(), "bandwidth": h, "k_hat_label": loaded.label(outcome.k_hat)}
    dump_records(out / "result.jsonl", [rec])
    (out / "profile.tsv").write_text(outcome.profile.to_text())
    dump_column(out / "permutation_maxima.txt", outcome.permutation_maxima.tolist())
    verdict = "change detected" if outcome.change_detected else "no change detected"
    lines = [
        f"{verdict}",
        f"n          {series.n}",
        f"bandwidth  {fmt4(h)}",
        f"max W(t)   {fmt4(outcome.max_stat)}",
        f"threshold  {fmt4(outcome.threshold)}",
    ]
    if outcome.change_detected:
        where = f"{outcome.k_hat}"
        if rec["k_hat_label"] is not None:
            where += f" ({rec['k_hat_label']})"
        lines.append(f"k_hat      {where}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_segment(p: dict, out: Path) -> None:
    loaded = _load(p)
    series = loaded.series
    h, _ = _resolve_bandwidth(series, p, out)
    config = _config(p, h)
    result = binary_segmentation(series, config, _policy(p, p["seed"]),
                                 p["min_segment"], p["rebandwidth_per_segment"],
                                 p["candidates"])
    records = []
    prof_dir = out / "profiles"
    prof_dir.mkdir(exist_ok=True)
    for node in result.nodes:
        rec = node.as_record()
        rec["k_hat_label"] = loaded.label(node.k_hat)
        records.append(rec)
        if node.profile is not None:
            (prof_dir / f"segment_{node.start}_{node.end}.tsv").write_text(node.profile.to_text())
    dump_records(out / "segments.jsonl", records)
    dump_records(out / "change_points.jsonl",
                 [{"k": k, "label": loaded.label(k)} for k in result.change_points])
    header = f"{'start':>6} {'end':>6} {'depth':>5} {'decision':>10} {'k_hat':>6} " \
             f"{'max_stat':>10} {'threshold':>10}"
    rows = [header]
    for r in records:
        rows.append(f"{r['start']:>6} {r['end']:>6} {r['depth']:>5} {r['decision']:>10} "
                    f"{fmt4(r['k_hat']):>6} {fmt4(r['max_stat']):>10} "
                    f"{fmt4(r['threshold']):>10}")
    cps = ", ".join(str(k) if loaded.label(k) is None else f"{k} ({loaded.label(k)})"
                    for k in result.change_points)
    rows.append("")
    rows.append(f"{len(result.change_points)} change point(s): {cps or '-'}")
    (out / "segments.txt").write_text("\n".join(rows) + "\n")
    print("\n".join(rows))


def cmd_bandwidth(p: dict, out: Path) -> None:
    series = _load(p).series
    search = select_bandwidth(series, _config(p, 1.0), p["candidates"])
    (out / "bandwidth.tsv").write_text(search.to_text())
    dump_records(out / "result.jsonl", [{"h_star": search.h_star,
                                         "f_max": float(search.f_values.max()),
                                         "n_candidates": int(search.h_grid.size)}])
    msg = f"h* = {fmt4(search.h_star)}  (F = {fmt4(float(search.f_values.max()))})"
    (out / "summary.txt").write_text(msg + "\n")
    print(msg)


def _experiment(p: dict) -> ExperimentSpec:
    if p["bandwidth"] == "auto":
        raise ConfigError("--bandwidth: simulations need a fixed bandwidth")
    if p["model"] == "m41" and p["delta_phi"] != 0.0:
        raise ConfigError("--delta-phi only applies to --model m42")
    try:
        model = ChangeModelSpec(p["model"], p["theta"], p["delta_phi"])
    except ValueError as exc:
        raise ConfigError(f"--theta: {exc}") from exc
    policy = _policy(p, p["seed"]) if p["mode"] == "pdc" else None
    if p["replications"] < 1:
        raise ConfigError("--N must be at least 1")
    try:
        return ExperimentSpec(p["dgp"], model, p["n"], p["method"], _config(p, p["bandwidth"]),
                              policy, p["replications"], p["seed"])
    except ValueError as exc:
        raise ConfigError(f"--n: {exc}") from exc


def cmd_simulate(p: dict, out: Path) -> None:
    spec = _experiment(p)
    if p["mode"] == "scaling-probe":
        try:
            n_values = [int(v) for v in p["n_values"].split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--n-values: not a list of integers: {p['n_values']!r}") from None
        rows = theorem_scaling_probe(n_values, spec, p["omega"])
        records = [{**r.as_record(), "mode": "scaling-probe"} for r in rows]
        dump_records(out / "report.jsonl", records)
        lines = [f"{'n':>6} {'h':>8} {'mean max W':>12} {'rate':>10} {'ratio':>10}"]
        lines += [f"{r.n:>6} {fmt4(r.bandwidth):>8} {fmt4(r.mean_max_stat):>12} "
                  f"{fmt4(r.normalizer):>10} {fmt4(r.ratio):>10}" for r in rows]
    else:
        run = run_pdc_experiment if p["mode"] == "pdc" else run_bias_experiment
        report = run(spec)
        rec = {"mode": p["mode"], "dgp": p["dgp"], "model": p["model"], "n": p["n"],
               "theta": p["theta"], "delta_phi": p["delta_phi"], "method": p["method"],
               **report.as_record()}
        dump_records(out / "report.jsonl", [rec])
        dump_records(out / "replicates.jsonl", [
            {"index": r.index, "k_hat": r.k_hat, "max_stat": r.max_stat,
             "threshold": r.threshold, "detected": r.detected} for r in report.replicates])
        dump_column(out / "khat_errors.txt",
                    [None if r.k_hat is None else r.k_hat - report.change_index
                     for r in report.replicates])
        lines = [f"{'Bias':>8} {'BiasSd':>8} {'ABias':>8} {'ABiasSd':>8} {'PDC':>6}",
                 f"{fmt4(report.bias):>8} {fmt4(report.bias_sd):>8} {fmt4(report.abias):>8} "
                 f"{fmt4(report.abias_sd):>8} {fmt4(report.pdc):>6}"]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_generate(p: dict, out: Path) -> None:
    try:
        model = ChangeModelSpec(p["model"], p["theta"], p["delta_phi"])
    except ValueError as exc:
        raise ConfigError(f"--theta: {exc}") from exc
    if p["n"] < 2:
        raise ConfigError("--n must be at least 2")
    series = simulate(p["dgp"], model, p["n"], p["seed"])
    write_series_csv(out / "series.csv", series)
    print(f"wrote {out / 'series.csv'} (n={series.n}, change after t={model.change_index(series.n)})")


COMMANDS = {
    "detect": cmd_detect,
    "segment": cmd_segment,
    "bandwidth": cmd_bandwidth,
    "simulate": cmd_simulate,
    "generate": cmd_generate,
}


def execute(command: str, params: dict, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "input" in params and not Path(params["input"]).is_file():
        raise FileNotFoundError(f"input file not found: {params['input']}")
    _write_manifest(out, command, params)
    COMMANDS[command](params, out)


def rerun(manifest_path: str, out_dir: str, input_override: str | None = None) -> None:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    params = dict(manifest["params"])
    if input_override is not None:
        params["input"] = str(Path(input_override).resolve())
    if "input" in params:
        digest = file_digest(params["input"])
        if digest != manifest.get("input_sha256"):
            raise ConfigError(f"input {params['input']} does not match the manifest digest")
    if manifest["command"] not in COMMANDS:
        raise ConfigError(f"unknown command in manifest: {manifest['command']!r}")
    execute(manifest["command"], params, out_dir)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.out_dir, args.input)
        else:
            execute(args.command, params_from_args(args), args.out_dir)
    except ScanInfeasibleError as exc:
        print(f"npchange: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SchemaError as exc:
        print(f"npchange: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ConfigError as exc:
        print(f"npchange: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"npchange: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        # invalid parameter values or data the scan cannot use
        print(f"npchange: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
