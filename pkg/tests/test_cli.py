import json
import math
import os

import pytest

from isinglab.cli import main
from isinglab.exact import enumerate_gibbs, transition_matrix
from isinglab.graphs import read_instance


def run(argv):
    return main(argv)


def test_gen_cycle_instance(tmp_path, capsys):
    out = tmp_path / "c8.ising"
    assert run(["gen", "--family", "cycle", "--n", "8", "--beta", "0.3",
                "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n"] == 8 and summary["m"] == 8
    inst = read_instance(out)
    assert inst.beta_max == 0.3


def test_gen_deterministic_er(tmp_path):
    a, b = tmp_path / "a.ising", tmp_path / "b.ising"
    for out in (a, b):
        assert run(["gen", "--family", "er", "--n", "1000", "--d", "2",
                    "--seed", "7", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_regular_odd_nd_rejected(tmp_path):
    code = run(["gen", "--family", "regular", "--n", "5", "--d", "3",
                "--seed", "1", "--out", str(tmp_path / "x.ising")])
    assert code == 4


def test_gen_requires_seed_for_random_families(tmp_path):
    code = run(["gen", "--family", "er", "--n", "10", "--d", "2",
                "--out", str(tmp_path / "x.ising")])
    assert code == 4


def test_exact_command_matches_library(tmp_path, capsys):
    inst_path = tmp_path / "edge.ising"
    run(["gen", "--family", "path", "--n", "2", "--beta", "1.0",
         "--out", str(inst_path)])
    capsys.readouterr()
    out = tmp_path / "exact.json"
    assert run(["exact", "--in", str(inst_path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    inst = read_instance(inst_path)
    dist = enumerate_gibbs(inst)
    spec = transition_matrix(inst, distribution=dist)
    assert doc["gap"] == pytest.approx(spec.gap)
    assert doc["log_Z"] == pytest.approx(dist.log_z)
    assert doc["mixing_time"] >= 1


def test_exact_size_cap_exit_code(tmp_path, capsys):
    inst_path = tmp_path / "big.ising"
    run(["gen", "--family", "path", "--n", "30", "--beta", "0.1",
         "--out", str(inst_path)])
    capsys.readouterr()
    assert run(["exact", "--in", str(inst_path)]) == 3


def test_saw_command(tmp_path, capsys):
    inst_path = tmp_path / "c8.ising"
    run(["gen", "--family", "cycle", "--n", "8", "--beta", "0.3",
         "--out", str(inst_path)])
    capsys.readouterr()
    out = tmp_path / "saw.json"
    assert run(["saw", "--in", str(inst_path), "--radius", "2",
                "--out", str(out), "--format", "csv"]) == 0
    doc = json.loads(out.read_text())
    assert doc["all_pass"] is True
    csv_text = (tmp_path / "saw.csv").read_text()
    assert csv_text.startswith("# schema: isinglab-v1 saw")


def test_certify_command_and_refusal(tmp_path, capsys):
    ok_path = tmp_path / "c8.ising"
    run(["gen", "--family", "cycle", "--n", "8", "--beta", "0.3",
         "--out", str(ok_path)])
    capsys.readouterr()
    out = tmp_path / "cert.json"
    assert run(["certify", "--in", str(ok_path), "--R", "auto",
                "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["certified"] is True
    assert doc["certified_discrete"] >= 1
    assert len(doc["per_vertex"]) == 8

    hot = tmp_path / "hot.ising"
    run(["gen", "--family", "star", "--n", "6", "--beta", "3.0",
         "--out", str(hot)])
    capsys.readouterr()
    code = run(["certify", "--in", str(hot), "--R", "1",
                "--out", str(tmp_path / "refused.json")])
    assert code == 2
    refused = json.loads((tmp_path / "refused.json").read_text())
    assert refused["certified"] is False


def test_cutwidth_exact_command(tmp_path, capsys):
    k4 = tmp_path / "k4.ising"
    run(["gen", "--family", "regular", "--n", "4", "--d", "3", "--seed", "1",
         "--out", str(k4)])
    capsys.readouterr()
    assert run(["cutwidth", "--exact", "--in", str(k4), "--witness",
                "--out", str(tmp_path / "cw.json")]) == 0
    doc = json.loads((tmp_path / "cw.json").read_text())
    assert doc["value"] == 4
    assert sorted(doc["ordering"]) == [0, 1, 2, 3]


def test_cutwidth_gw_scan_with_plot(tmp_path):
    out = tmp_path / "gw.json"
    assert run(["cutwidth", "--gw", "2.0", "1,2,3", "400", "--seed", "5",
                "--out", str(out), "--plot"]) == 0
    doc = json.loads(out.read_text())
    assert doc["calibrated_shift"] >= 1
    assert set(doc["means"]) == {"1", "2", "3"}
    assert (tmp_path / "gw.png").exists()


def test_couple_command(tmp_path, capsys):
    inst_path = tmp_path / "c6.ising"
    run(["gen", "--family", "cycle", "--n", "6", "--beta", "0.2",
         "--out", str(inst_path)])
    capsys.readouterr()
    out = tmp_path / "couple.json"
    assert run(["couple", "--in", str(inst_path), "--mode", "discrete",
                "--replicas", "50", "--horizon", "100000", "--seed", "3",
                "--out", str(out), "--format", "csv", "--plot"]) == 0
    doc = json.loads(out.read_text())
    assert doc["censored_fraction"] == 0.0
    assert doc["median_coupling_time"] > 0
    assert doc["sandwich_ok"] is True
    csv_lines = (tmp_path / "couple.csv").read_text().splitlines()
    assert csv_lines[1].split(",") == ["seed", "replica", "n", "beta", "d",
                                       "mode", "coupling_time", "censored_flag"]
    assert len(csv_lines) == 2 + 50
    assert (tmp_path / "couple.png").exists()


def test_scan_reproducible_across_threads(tmp_path):
    outs = {}
    for threads in ("1", "4"):
        base = tmp_path / f"scan{threads}"
        assert run(["scan", "--family", "cycle", "--n-grid", "8,12",
                    "--beta-grid", "0.2", "--replicas", "20", "--seed", "9",
                    "--threads", threads, "--cap", "200000",
                    "--out", str(base)]) == 0
        outs[threads] = ((base.with_suffix(".csv")).read_bytes(),
                         (base.with_suffix(".json")).read_bytes())
    assert outs["1"] == outs["4"]


def test_scan_with_plot_and_ratio(tmp_path):
    base = tmp_path / "scanp"
    assert run(["scan", "--family", "cycle", "--n-grid", "8,16",
                "--beta-grid", "0.2", "--replicas", "30", "--seed", "10",
                "--cap", "500000", "--out", str(base), "--plot"]) == 0
    doc = json.loads(base.with_suffix(".json").read_text())
    for cell in doc["cells"]:
        assert cell["censored_fraction"] == 0.0
        assert cell["ratio_n_ln_n"] > 0
    assert base.with_suffix(".png").exists()


def test_config_file_defaults_flags_win(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("family = cycle\nn = 8\nbeta = 0.3\n# comment\n")
    out = tmp_path / "from_cfg.ising"
    assert run(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    assert read_instance(out).n == 8
    # the flag overrides the config value
    out2 = tmp_path / "flag_wins.ising"
    assert run(["gen", "--config", str(cfg), "--n", "10",
                "--out", str(out2)]) == 0
    assert read_instance(out2).n == 10


def test_unknown_family_is_invalid():
    assert run(["gen", "--family", "klein-bottle", "--n", "4"]) == 4
