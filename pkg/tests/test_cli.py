import json
import subprocess
import sys

import numpy as np
import pytest

from rsm.cli import main
from rsm.io import read_matrix, read_rows, sha256_file, write_matrix

GEN = {"seed": 3, "generator": {"C": 4, "block_size": 4, "d": 30, "L": 3, "k": 3}}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dict(GEN, **{"lambda": 1e-4, "T": 20, "baseline": {"tol": 1e-6}})))
    return path


@pytest.fixture
def generated(tmp_path, config):
    out = tmp_path / "data"
    assert main(["generate", "--config", str(config), "--out", str(out)]) == 0
    return out


def test_generate_writes_files(generated):
    names = sorted(p.name for p in generated.iterdir())
    assert names == ["gallery.csv", "labels.csv", "manifest.json"] + [f"probe_{c}.csv" for c in range(1, 5)]
    assert read_matrix(generated / "gallery.csv").shape == (30, 16)
    manifest = json.loads((generated / "manifest.json").read_text())
    assert manifest["generator"]["bit_generator"] == "PCG64"
    assert set(manifest) >= {"config_hash", "versions", "started", "finished", "arguments", "outputs"}
    for name, digest in manifest["outputs"].items():
        assert sha256_file(generated / name) == digest


def test_generate_is_deterministic(tmp_path, config, generated):
    again = tmp_path / "again"
    assert main(["generate", "--config", str(config), "--out", str(again)]) == 0
    for p in generated.glob("*.csv"):
        assert p.read_bytes() == (again / p.name).read_bytes()


def test_generate_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"generator": {"k": 5, "block_size": 4}}))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "k <= block_size" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"lamda": 1.0}))
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_argument_parse_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["rank", "--gallery", "g.csv"])
    assert exc.value.code == 2


def _rank(generated, config, probe="probe_2.csv", *extra):
    return [
        "rank", "--gallery", str(generated / "gallery.csv"), "--labels", str(generated / "labels.csv"),
        "--probe", str(generated / probe), "--config", str(config), *extra,
    ]


@pytest.mark.parametrize("method", ["rsm", "isr", "src"])
def test_rank_noiseless_picks_true_subject(generated, config, capsys, method):
    assert main(_rank(generated, config, "probe_2.csv", "--method", method)) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["psi"][0] == 2
    assert sorted(doc["psi"]) == [1, 2, 3, 4]
    assert doc["method"] == method.upper() and doc["probe_id"] == "probe_2"


def test_rank_is_deterministic(generated, config, capsys):
    args = _rank(generated, config, "probe_3.csv", "--zeta", "1", "--tau", "1")
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_rank_writes_out_file(tmp_path, generated, config, capsys):
    out = tmp_path / "r.json"
    assert main(_rank(generated, config, "probe_1.csv", "--out", str(out), "--zeta", "0.5", "--tau", "0.5")) == 0
    assert capsys.readouterr().out == ""
    doc = json.loads(out.read_text())
    assert doc["iterations"] == [20, 10, 5, 2]


def test_rank_wrong_dimension_exits_3(tmp_path, generated, config, capsys):
    write_matrix(generated / "short.csv", np.ones((29, 2)))
    assert main(_rank(generated, config, "short.csv")) == 3
    err = capsys.readouterr().err
    assert "29" in err and "30" in err


def test_rank_label_count_mismatch_exits_3(tmp_path, generated, config):
    (generated / "labels.csv").write_text("1\n2\n")
    assert main(_rank(generated, config)) == 3


def test_rank_unparseable_probe_exits_2(generated, config):
    (generated / "junk.csv").write_text("a,b\n")
    assert main(_rank(generated, config, "junk.csv")) == 2


def _experiment(tmp_path, config, *extra):
    out = tmp_path / "exp"
    assert main(["experiment", "--config", str(config), "--out", str(out), *extra]) == 0
    return out


def test_experiment_records_and_outputs(tmp_path, config):
    out = _experiment(tmp_path, config, "--trials", "2", "--method", "rsm,src", "--sweep-L", "1,2,4")
    results = json.loads((out / "results.json").read_text())
    assert len(results["trials"]) == 4
    assert {r["method"] for r in results["trials"]} == {"RSM", "SRC"}
    assert results["config"]["rng"]["bit_generator"] == "PCG64"
    cmc = read_rows(out / "cmc.csv")
    assert [r["rank"] for r in cmc if r["method"] == "RSM"] == ["1", "2", "3", "4"]
    assert all(float(r["mean"]) == 1.0 for r in cmc if r["rank"] == "1")
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "L,method,rank1_mean,rank1_std"
    assert len(lines) == 1 + 3 * 2
    for row in read_rows(out / "sweep.csv"):
        assert float(row["rank1_mean"]) == 1.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"results.json", "cmc.csv", "sweep.csv"}


def test_experiment_lambda_grid(tmp_path, config):
    out = _experiment(tmp_path, config, "--trials", "1", "--lambda-grid", "1e-4,1e-2")
    rows = read_rows(out / "lambda_sweep.csv")
    assert [float(r["lambda"]) for r in rows] == [1e-4, 1e-2]


def test_experiment_results_are_byte_identical(tmp_path, config):
    a = _experiment(tmp_path / "a", config, "--trials", "2")
    b = _experiment(tmp_path / "b", config, "--trials", "2", "--jobs", "2")
    assert (a / "results.json").read_bytes() == (b / "results.json").read_bytes()
    assert (a / "cmc.csv").read_bytes() == (b / "cmc.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rsm", "generate", "--seed", "1", "--out", str(tmp_path / "g")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout == ""
    bad = subprocess.run([sys.executable, "-m", "rsm", "rank"], capture_output=True, text=True)
    assert bad.returncode == 2 and "required" in bad.stderr


def test_numerical_failure_exits_4(generated, config, capsys, monkeypatch):
    from rsm.errors import NumericalError

    def boom(*args, **kwargs):
        raise NumericalError("non-finite posterior state", iteration=7)

    monkeypatch.setattr("rsm.cli.rank_probe", boom)
    assert main(_rank(generated, config)) == 4
    assert "iteration 7" in capsys.readouterr().err
