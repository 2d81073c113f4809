import json
from pathlib import Path

import numpy as np
import pytest

from npchange.cli import main
from npchange.series_io import load_records


def run(*argv):
    return main([str(a) for a in argv])


def snapshot(directory: Path) -> dict:
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def write_csv(path, x, y, labels=None):
    with open(path, "w") as fh:
        fh.write("date,x,y\n" if labels is not None else "x,y\n")
        for i, (a, b) in enumerate(zip(x, y)):
            prefix = f"{labels[i]}," if labels is not None else ""
            fh.write(f"{prefix}{float(a)!r},{float(b)!r}\n")
    return path


@pytest.fixture(scope="module")
def model_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("generate", "--dgp", "arma", "--model", "m41", "--n", 500, "--theta", 0.4,
               "--seed", 42, "--out-dir", out) == 0
    return out / "series.csv"


def test_constant_response_reports_no_change(tmp_path, rng):
    csv = write_csv(tmp_path / "flat.csv", rng.normal(size=200), np.full(200, 3.0))
    assert run("detect", csv, "--bandwidth", 1, "--permutations", 50,
               "--out-dir", tmp_path / "out") == 0
    (rec,) = load_records(tmp_path / "out" / "result.jsonl")
    assert rec["change_detected"] is False and rec["k_hat"] is None
    assert (tmp_path / "out" / "summary.txt").read_text().startswith("no change detected")


def test_model_series_detected_near_truth(tmp_path, model_csv):
    out = tmp_path / "det"
    assert run("detect", model_csv, "--bandwidth", 1, "--seed", 1,
               "--out-dir", out) == 0
    (rec,) = load_records(out / "result.jsonl")
    assert rec["change_detected"] and abs(rec["k_hat"] - 200) <= 15
    prof = np.loadtxt(out / "profile.tsv")
    assert prof[0, 0] == 25 and prof[-1, 0] == 475
    assert np.loadtxt(out / "permutation_maxima.txt").size == 200


def test_detect_auto_bandwidth_and_labels(tmp_path, rng):
    n = 300
    x = rng.normal(size=n)
    y = np.where(np.arange(n) < 150, 1 + x, x * x) + 0.3 * rng.normal(size=n)
    labels = [f"d{i:03d}" for i in range(n)]
    csv = write_csv(tmp_path / "lab.csv", x, y, labels)
    out = tmp_path / "out"
    assert run("detect", csv, "--label-col", "date", "--candidates", 8,
               "--grid-m", 30, "--out-dir", out) == 0
    (rec,) = load_records(out / "result.jsonl")
    assert rec["change_detected"]
    assert rec["k_hat_label"] == labels[rec["k_hat"] - 1]
    assert (out / "bandwidth.tsv").exists()


def test_rerun_is_byte_identical_across_worker_counts(tmp_path, model_csv, monkeypatch):
    jobs = {
        "detect": [model_csv, "--bandwidth", "auto", "--candidates", 6,
                   "--permutations", 40],
        "segment": [model_csv, "--bandwidth", 1, "--permutations", 40],
        "bandwidth": [model_csv, "--candidates", 6],
        "simulate": ["--mode", "pdc", "--n", 200, "--N", 4, "--permutations", 30],
        "generate": ["--n", 100],
    }
    for command, flags in jobs.items():
        first = tmp_path / f"{command}_a"
        monkeypatch.setenv("NPCHANGE_THREADS", "1")
        assert run(command, *flags, "--seed", 3, "--out-dir", first) == 0
        monkeypatch.setenv("NPCHANGE_THREADS", "2")
        again = tmp_path / f"{command}_b"
        assert run("rerun", first / "manifest.json", "--out-dir", again) == 0
        assert snapshot(first) == snapshot(again), command


def test_manifest_contents(tmp_path, model_csv):
    out = tmp_path / "o"
    assert run("bandwidth", model_csv, "--candidates", 4, "--out-dir", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "bandwidth"
    assert manifest["params"]["input"] == str(model_csv.resolve())
    assert manifest["params"]["grid_m"] == 100 and manifest["params"]["trim"] == 0.05
    assert len(manifest["input_sha256"]) == 64


def test_rerun_rejects_changed_input(tmp_path, rng):
    csv = write_csv(tmp_path / "s.csv", rng.normal(size=80), rng.normal(size=80))
    out = tmp_path / "o"
    assert run("bandwidth", csv, "--candidates", 3, "--out-dir", out) == 0
    write_csv(csv, rng.normal(size=80), rng.normal(size=80))
    assert run("rerun", out / "manifest.json", "--out-dir", tmp_path / "o2") == 2


def test_segment_outputs(tmp_path, rng):
    csv = write_csv(tmp_path / "flat.csv", rng.normal(size=200), np.zeros(200))
    out = tmp_path / "seg"
    assert run("segment", csv, "--bandwidth", 1, "--permutations", 30,
               "--out-dir", out) == 0
    assert load_records(out / "change_points.jsonl") == []
    assert len(load_records(out / "segments.jsonl")) == 1
    assert (out / "profiles" / "segment_1_200.tsv").exists()


def test_segment_two_changes_in_order(tmp_path, rng):
    n = 600
    x = rng.uniform(-1.5, 1.5, n)
    t = np.arange(1, n + 1)
    y = np.select([t <= 200, t <= 400], [1 + x, x * x], 1 + x) + 0.2 * rng.normal(size=n)
    csv = write_csv(tmp_path / "two.csv", x, y)
    out = tmp_path / "seg"
    assert run("segment", csv, "--bandwidth", 1, "--out-dir", out) == 0
    ks = [r["k"] for r in load_records(out / "change_points.jsonl")]
    assert len(ks) == 2 and abs(ks[0] - 200) <= 15 and abs(ks[1] - 400) <= 15


def test_simulate_single_replication(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--mode", "bias", "--n", 200, "--N", 1, "--seed", 4,
               "--out-dir", out) == 0
    (rep,) = load_records(out / "report.jsonl")
    (one,) = load_records(out / "replicates.jsonl")
    assert rep["bias"] == one["k_hat"] - rep["change_index"]
    assert rep["abias"] == abs(rep["bias"]) and rep["bias_sd"] == 0.0
    assert rep["pdc"] is None
    assert (out / "khat_errors.txt").read_text().strip() == str(int(rep["bias"]))


def test_simulate_scaling_probe(tmp_path):
    out = tmp_path / "probe"
    assert run("simulate", "--mode", "scaling-probe", "--model", "m42", "--N", 2,
               "--n-values", "100,200", "--grid-m", 10, "--out-dir", out) == 0
    rows = load_records(out / "report.jsonl")
    assert [r["n"] for r in rows] == [100, 200]


def test_schema_errors_name_rows(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n4,5\n\n6\n7,inf\n")
    assert run("detect", bad, "--out-dir", tmp_path / "o") == 4
    err = capsys.readouterr().err
    for line in ("3", "5", "6", "7"):
        assert f"line {line}" in err
    missing = tmp_path / "cols.csv"
    missing.write_text("a,b\n1,2\n3,4\n")
    assert run("detect", missing, "--out-dir", tmp_path / "o") == 4


@pytest.mark.parametrize("flags", [
    ["--trim", "0.7"],
    ["--level", "1.5"],
    ["--grid-m", "0"],
    ["--bandwidth", "-1"],
])
def test_config_errors(tmp_path, rng, flags):
    csv = write_csv(tmp_path / "s.csv", rng.normal(size=50), rng.normal(size=50))
    with pytest.raises(SystemExit) if flags[0] == "--bandwidth" else _noop():
        code = run("detect", csv, *flags, "--out-dir", tmp_path / "o")
        assert code == 2


def test_simulate_config_errors(tmp_path):
    assert run("simulate", "--model", "m41", "--delta-phi", 0.3,
               "--out-dir", tmp_path / "o") == 2
    assert run("simulate", "--bandwidth", "auto", "--out-dir", tmp_path / "o") == 2
    assert run("simulate", "--N", 0, "--out-dir", tmp_path / "o") == 2


def test_missing_input_is_io_error(tmp_path):
    assert run("detect", tmp_path / "nope.csv", "--out-dir", tmp_path / "o") == 3


def test_short_series_is_infeasible(tmp_path):
    csv = write_csv(tmp_path / "s.csv", [0.0, 1.0, 2.0], [1.0, 0.0, 1.0])
    assert run("detect", csv, "--bandwidth", 1, "--trim", 0.4,
               "--out-dir", tmp_path / "o") == 5


class _noop:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False
