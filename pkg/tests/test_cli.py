import json

import pytest

from mmpaxos.bench.metrics import windows, write_csv
from mmpaxos.cli import build_parser, main
from mmpaxos.simnet.scenarios import corpus_schedule


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["frobnicate"])


def test_corpus_command(capsys):
    assert main(["corpus", "--count", "5"]) == 0
    assert "5 schedules, 0 with violations" in capsys.readouterr().out


def test_corpus_command_with_mutant(capsys):
    assert main(["corpus", "--count", "20", "--mutant", "gc-guard", "--stop"]) == 0
    assert "with violations" in capsys.readouterr().out


def test_sim_command_from_schedule_file(tmp_path, capsys):
    path = tmp_path / "s.txt"
    path.write_text(corpus_schedule(4).dumps())
    trace = tmp_path / "trace.tsv"
    assert main(["sim", "--schedule", str(path), "--trace", str(trace)]) == 0
    assert "seed 4:" in capsys.readouterr().out and trace.read_text()


def test_explore_command(capsys):
    assert main(["explore", "fast", "--depth", "4"]) == 0
    assert "ok=True" in capsys.readouterr().out


def test_bench_activation_writes_csv(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert main(["bench", "activation", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["experiment"] == "activation" and report["commands"] > 0
    assert out.read_text().startswith("window_start,")


def test_compare_command(tmp_path, capsys):
    path = tmp_path / "m.csv"
    write_csv(windows([(t, 4) for t in range(0, 8000, 4)], 0, 8000), path)
    args = ["compare", str(path), "--phase-a", "0", "3000", "--phase-b", "4000", "7000"]
    assert main(args + ["--bound", "0.1"]) == 0
    assert json.loads(capsys.readouterr().out)["median"] == 0.0
