"""End-to-end tests of the command-line interface via main(argv)."""

import csv
import json
import os

import pytest

from stagelab.cli import main
from stagelab.records import read_records

SIMULATE_INI = """\
[pretrain]
steps = 300
mix_fraction = 0.5
[posttrain]
steps = 200
[finetune]
steps = 200
"""

SWEEP_INI = """\
[pretrain]
steps = 300
[sweep]
mix_fractions = 0.0, 0.5
eta2 = 0.02
eta3 = 0.01, 0.05
steps2 = 100
steps3 = 100
"""

DIVERGENT_INI = """\
[init]
tau = -2.0
[pretrain]
steps = 200
eta = 0.05
"""


def write_ini(tmp_path, text, name="lab.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def sweep_out(tmp_path_factory):
    """A completed small sweep to feed the read-only commands."""
    base = tmp_path_factory.mktemp("sweep")
    cfg = write_ini(base, SWEEP_INI)
    out = str(base / "out")
    assert main(["--config", cfg, "--out", out, "sweep"]) == 0
    return cfg, out


# ----------------------------------------------------------------- simulate


def test_simulate_prints_metrics_and_writes_a_record(tmp_path, capsys):
    cfg = write_ini(tmp_path, SIMULATE_INI)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "simulate"]) == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("run m0.5-")
    for key in ("L_im", "L_ret", "L_ft", "L_pre", "delta"):
        assert f"  {key} = " in stdout
    records = read_records(out / "runs.jsonl")
    assert len(records) == 1
    assert records[0]["status"] == "ok"
    assert records[0]["mix_fraction"] == 0.5


def test_simulate_rerun_is_byte_identical(tmp_path):
    cfg = write_ini(tmp_path, SIMULATE_INI)
    out1, out2 = tmp_path / "one", tmp_path / "two"
    assert main(["--config", cfg, "--out", str(out1), "simulate"]) == 0
    assert main(["--config", cfg, "--out", str(out2), "simulate"]) == 0
    first = (out1 / "runs.jsonl").read_bytes()
    assert first == (out2 / "runs.jsonl").read_bytes()
    # a third rerun into an existing directory overwrites with the same bytes
    assert main(["--config", cfg, "--out", str(out1), "simulate"]) == 0
    assert (out1 / "runs.jsonl").read_bytes() == first


def test_simulate_reports_divergence_with_exit_3(tmp_path, capsys):
    cfg = write_ini(tmp_path, DIVERGENT_INI)
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "simulate"]) == 3
    assert "diverged during pretrain" in capsys.readouterr().err
    records = read_records(out / "runs.jsonl")
    assert records[0]["status"] == "diverged"
    assert records[0]["L_im"] is None


def test_out_directory_falls_back_to_the_environment(tmp_path, monkeypatch, capsys):
    cfg = write_ini(tmp_path, SIMULATE_INI)
    env_out = tmp_path / "envout"
    monkeypatch.setenv("STAGELAB_OUT", str(env_out))
    assert main(["--config", cfg, "simulate"]) == 0
    capsys.readouterr()
    assert (env_out / "runs.jsonl").exists()


# -------------------------------------------------------------------- sweep


def test_sweep_runs_the_grid_and_resumes(sweep_out, capsys):
    cfg, out = sweep_out
    runs_path = os.path.join(out, "runs.jsonl")
    csv_path = os.path.join(out, "sweep.csv")
    records = read_records(runs_path)
    assert len(records) == 4
    assert all(r["status"] == "ok" for r in records)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "run_id" and len(rows) == 5

    before_runs = open(runs_path, "rb").read()
    before_csv = open(csv_path, "rb").read()
    assert main(["--config", cfg, "--out", out, "sweep"]) == 0
    assert "sweep: 0 new runs, 4 already recorded" in capsys.readouterr().out
    assert open(runs_path, "rb").read() == before_runs
    assert open(csv_path, "rb").read() == before_csv


def test_interrupted_sweep_converges_to_the_uninterrupted_result(tmp_path):
    partial_cfg = write_ini(tmp_path, SWEEP_INI.replace("eta3 = 0.01, 0.05", "eta3 = 0.05"), "p.ini")
    full_cfg = write_ini(tmp_path, SWEEP_INI, "f.ini")
    resumed = str(tmp_path / "resumed")
    straight = str(tmp_path / "straight")
    assert main(["--config", partial_cfg, "--out", resumed, "sweep"]) == 0
    assert main(["--config", full_cfg, "--out", resumed, "sweep"]) == 0
    assert main(["--config", full_cfg, "--out", straight, "sweep"]) == 0
    # the CSV is regenerated in grid order, so it converges byte for byte;
    # the JSONL keeps arrival order, so compare it as a set of rows with the
    # config-dependent provenance fields stripped
    with open(os.path.join(resumed, "sweep.csv"), "rb") as fh:
        resumed_csv = fh.read()
    with open(os.path.join(straight, "sweep.csv"), "rb") as fh:
        assert resumed_csv == fh.read()

    def row_set(out):
        rows = read_records(os.path.join(out, "runs.jsonl"))
        return {json.dumps({k: v for k, v in r.items() if k != "config_hash"}, sort_keys=True) for r in rows}

    assert row_set(resumed) == row_set(straight)


def test_sweep_with_threads_matches_the_serial_records(tmp_path):
    cfg = write_ini(tmp_path, SWEEP_INI)
    serial = str(tmp_path / "serial")
    threaded = str(tmp_path / "threaded")
    assert main(["--config", cfg, "--out", serial, "sweep"]) == 0
    assert main(["--config", cfg, "--out", threaded, "--threads", "4", "sweep"]) == 0
    assert open(os.path.join(serial, "runs.jsonl"), "rb").read() == open(
        os.path.join(threaded, "runs.jsonl"), "rb"
    ).read()
    assert open(os.path.join(serial, "sweep.csv"), "rb").read() == open(
        os.path.join(threaded, "sweep.csv"), "rb"
    ).read()


def test_sweep_rejects_an_empty_grid(tmp_path, capsys):
    cfg = write_ini(tmp_path, "[sweep]\neta2 =\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "out"), "sweep"]) == 2
    assert "sweep grid is empty" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = write_ini(tmp_path, "[posttrain]\nlerning_rate = 0.1\n")
    assert main(["--config", cfg, "--out", str(tmp_path / "out"), "simulate"]) == 2
    assert "unknown key 'lerning_rate'" in capsys.readouterr().err


# ------------------------------------------------------------------- verify


def test_verify_prints_a_table_and_writes_details(tmp_path, capsys):
    cfg = write_ini(tmp_path, "[verify]\nacquisition_steps = 2000\nrouting_steps = 1000\n")
    out = tmp_path / "out"
    assert main(["--config", cfg, "--out", str(out), "verify"]) == 0
    stdout = capsys.readouterr().out
    lines = stdout.strip().splitlines()
    assert len(lines) == 6
    assert all(line.startswith("[PASS]") for line in lines)
    details = (out / "verify.txt").read_text()
    assert "[PASS] specialized_acquisition" in details
    assert "worst_ratio = " in details
    assert "\n\n" in details


def test_verify_literal_flag_adds_the_side_by_side_reports(tmp_path, capsys):
    cfg = write_ini(
        tmp_path,
        "[verify]\nacquisition_steps = 2000\nrouting_steps = 1000\nliteral_inconsistent = true\n",
    )
    assert main(["--config", cfg, "--out", str(tmp_path / "out"), "verify"]) == 0
    stdout = capsys.readouterr().out
    assert "[PASS] posttrain_routing_literal" in stdout
    assert "[PASS] forgetting_gap_literal" in stdout


def test_verify_failures_exit_3_and_show_notes(tmp_path, capsys):
    cfg = write_ini(
        tmp_path, "[verify]\nalpha = 0.0\nacquisition_steps = 2000\nrouting_steps = 1000\n"
    )
    assert main(["--config", cfg, "--out", str(tmp_path / "out"), "verify"]) == 3
    stdout = capsys.readouterr().out
    assert "[FAIL]" in stdout
    assert "    " in stdout  # failure notes are indented under the table line


# -------------------------------------------------------------- plot/frontier


def test_plot_writes_a_stable_svg(sweep_out, capsys):
    cfg, out = sweep_out
    assert main(["--config", cfg, "--out", out, "plot"]) == 0
    assert f"wrote {os.path.join(out, 'frontier.svg')}" in capsys.readouterr().out
    svg = open(os.path.join(out, "frontier.svg"), "rb").read()
    text = svg.decode()
    assert text.startswith("<svg ")
    assert text.count("<path d=") == 2  # one staircase per method
    assert ">mixed</text>" in text and ">unmixed</text>" in text
    assert main(["--config", cfg, "--out", out, "plot"]) == 0
    capsys.readouterr()
    assert open(os.path.join(out, "frontier.svg"), "rb").read() == svg


def test_plot_without_records_exits_2(tmp_path, capsys):
    assert main(["--out", str(tmp_path / "empty"), "plot"]) == 2
    assert "no run records" in capsys.readouterr().err


def test_plot_with_only_diverged_records_exits_2(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    (out / "runs.jsonl").write_text(
        '{"run_id": "x", "mix_fraction": 0.0, "L_ret": null, "L_ft": null}\n'
    )
    assert main(["--out", str(out), "plot"]) == 2
    assert "no completed runs" in capsys.readouterr().err


def test_frontier_csv_flags_front_membership(sweep_out, capsys):
    cfg, out = sweep_out
    assert main(["--config", cfg, "--out", out, "frontier"]) == 0
    capsys.readouterr()
    with open(os.path.join(out, "frontier.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["projection", "run_id", "x", "y", "on_front", "method"]
    body = rows[1:]
    assert len(body) == 4
    methods = [r[5] for r in body]
    assert methods == sorted(methods)
    assert set(methods) == {"mixed", "unmixed"}
    assert all(r[0] == "ret_ft" for r in body)
    assert all(r[4] in ("true", "false") for r in body)
    for method in ("mixed", "unmixed"):
        flags = [r[4] for r in body if r[5] == method]
        assert "true" in flags
    # x/y columns round-trip as floats
    assert all(float(r[2]) >= 0 and float(r[3]) >= 0 for r in body)


def test_frontier_with_unknown_projection_exits_2(sweep_out, tmp_path, capsys):
    _, out = sweep_out
    cfg = write_ini(tmp_path, "[report]\nprojection = upside_down\n")
    assert main(["--config", cfg, "--out", out, "frontier"]) == 2
    assert "unknown projection" in capsys.readouterr().err
