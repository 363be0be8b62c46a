import csv
import json
import subprocess
import sys

import numpy as np

from sparse_accel.arch_config import save_config, preset
from sparse_accel.cli import main
from sparse_accel.preprocess import decode_b, read_stream
from sparse_accel.workload import deblock, write_tensor


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_simulate_griffin_alexnet(capsys):
    assert main(["simulate", "--config", "griffin", "--workload", "alexnet"]) == 0
    out = _json_out(capsys)
    assert out["speedup"] > 1.0 and out["functional_ok"]
    assert out["category"] == "AB" and len(out["reports"]) == 8
    assert out["cost"]["effective_tops_per_w"] > out["cost"]["tops_per_w"]


def test_simulate_dense(capsys, tmp_path):
    save_config(preset("dense"), tmp_path / "dense.json")
    assert main(["simulate", "--config", str(tmp_path / "dense.json"),
                 "--workload", "gemm:20,50,30"]) == 0
    assert _json_out(capsys)["speedup"] == 1.0


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--config", "sparse_ab_star", "--workload", "gemm:32,128,32:0.5,0.2",
            "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "x.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "y.json")]) == 0
    assert (tmp_path / "x.json").read_text() == (tmp_path / "y.json").read_text()


def test_exit_codes(capsys, tmp_path):
    assert main(["simulate", "--config", "dense", "--workload", str(tmp_path / "none.json")]) == 2
    assert "none.json" in capsys.readouterr().err
    assert main(["simulate", "--config", "nonsense", "--workload", "alexnet"]) == 2
    (tmp_path / "bad.json").write_text(json.dumps({"mode": "dense", "a_window": {"d1": 1}}))
    assert main(["simulate", "--config", str(tmp_path / "bad.json"), "--workload", "alexnet"]) == 2
    assert main(["frobnicate"]) == 1
    assert main(["simulate"]) == 1
    assert main(["sweep", "--max-amux", "0"]) == 2


def test_sweep_and_pareto(tmp_path):
    space = {"space": {"modes": ["sparse_b"], "db1": [1, 2, 8], "shuffle": [False]},
             "constraints": {"max_amux": 8}}
    (tmp_path / "space.json").write_text(json.dumps(space))
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--space", str(tmp_path / "space.json"), "--workload",
                 "gemm:16,128,32:1.0,0.2", "--jobs", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["config"] for r in rows] == ["B(1,0,0,off)", "B(2,0,0,off)"]
    front = tmp_path / "front.csv"
    assert main(["pareto", "--input", str(out), "--x", "tops_per_w",
                 "--y", "effective_tops_per_w", "--out", str(front)]) == 0
    kept = list(csv.DictReader(front.open()))
    assert 1 <= len(kept) <= 2
    assert main(["pareto", "--input", str(out), "--x", "nope"]) == 2


def test_preprocess_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    b = (rng.integers(-9, 9, (90, 40)) * (rng.random((90, 40)) < 0.25)).astype(np.int8)
    write_tensor(tmp_path / "b.sgt", b)
    assert main(["preprocess", "--tensor", str(tmp_path / "b.sgt"), "--window", "2,0,1",
                 "--shuffle", "--out", str(tmp_path / "b.sgc")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["metadata_bits"] == 3 and info["compressed_chunks"] <= info["original_chunks"]
    assert np.array_equal(deblock(decode_b(read_stream(tmp_path / "b.sgc"))), b)
    assert main(["preprocess", "--tensor", str(tmp_path / "b.sgt"), "--window", "0,1,0",
                 "--out", str(tmp_path / "c.sgc")]) == 2


def test_calibrate(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path / "u.json")]) == 0
    assert "Griffin" in capsys.readouterr().err
    assert "register_bit" in json.loads((tmp_path / "u.json").read_text())["power"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sparse_accel.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
