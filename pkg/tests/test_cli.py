"""Command-line interface tests (all in-process via cli.main)."""

import json

import numpy as np
import pytest

from mubtest import cli
from mubtest.harness import CSV_COLUMNS, CalibrationFailed
from mubtest.states import random_mixed, save_state, tensor


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# Experiment subcommands
# ---------------------------------------------------------------------------


def test_identity_prints_csv(capsys):
    code, out, err = run(
        ["identity", "--trials", "6", "--epsilon", "0.5", "--seed", "3"], capsys
    )
    assert code == 0 and err == ""
    header, row = out.strip().splitlines()
    assert header == ",".join(CSV_COLUMNS)
    fields = row.split(",")
    assert fields[0] == "identity"
    assert fields[1] == "independent"  # default setting for identity
    assert fields[4] == "6"


def test_out_file_and_json(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, _ = run(
        [
            "mixedness", "--trials", "6", "--epsilon", "0.5", "--seed", "3",
            "--setting", "collective", "--format", "json", "--out", str(out_path),
        ],
        capsys,
    )
    assert code == 0
    rows = json.loads(out_path.read_text())
    assert rows[0]["tester"] == "mixedness"
    assert rows[0]["trials"] == 6


def test_sweep_multiple_epsilons(capsys):
    code, out, _ = run(
        [
            "sweep", "--tester", "identity", "--setting", "collective",
            "--epsilon", "1.0,0.5", "--trials", "5", "--seed", "2",
        ],
        capsys,
    )
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert len(rows) == 2
    assert [r.split(",")[3] for r in rows] == ["1", "0.5"]


def test_multi_epsilon_rejected_outside_sweep(capsys):
    code, _, err = run(["identity", "--epsilon", "1.0,0.5", "--trials", "5"], capsys)
    assert code == 2 and "sweep" in err


def test_collection_and_condindep_smoke(capsys):
    code, out, _ = run(
        [
            "collection", "--property", "identity", "--trials", "3",
            "--epsilon", "0.75", "--n-states", "4", "--seed", "8",
        ],
        capsys,
    )
    assert code == 0
    assert out.splitlines()[1].startswith("collection-identity,collective,2,0.75,3")

    code, out, _ = run(
        ["condindep", "--trials", "3", "--epsilon", "0.3", "--n-labels", "4", "--seed", "8"],
        capsys,
    )
    assert code == 0
    assert out.splitlines()[1].startswith("condindep,collective,2x2,0.3,3")


# ---------------------------------------------------------------------------
# Single-verdict mode on saved states
# ---------------------------------------------------------------------------


def test_verdict_on_state_files(tmp_path, capsys):
    rng = np.random.default_rng(0)
    rho = random_mixed(2, 2, rng)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_state(rho, str(a))
    save_state(rho, str(b))
    code, out, _ = run(
        [
            "identity", "--state-a", str(a), "--state-b", str(b),
            "--epsilon", "0.5", "--setting", "collective", "--seed", "1",
        ],
        capsys,
    )
    assert code == 0
    verdict = json.loads(out)
    assert verdict["answer"] == "Yes"
    assert verdict["setting"] == "collective"


def test_identity_state_a_requires_state_b(tmp_path, capsys):
    a = tmp_path / "a.json"
    save_state(random_mixed(2, 2, np.random.default_rng(0)), str(a))
    code, _, err = run(["identity", "--state-a", str(a)], capsys)
    assert code == 2 and err


def test_independence_verdict_on_state_file(tmp_path, capsys):
    rng = np.random.default_rng(1)
    rho = tensor(random_mixed(2, 2, rng), random_mixed(2, 2, rng))
    a = tmp_path / "prod.json"
    save_state(rho, str(a))
    code, out, _ = run(
        ["independence", "--state-a", str(a), "--layout", "2,2", "--epsilon", "1.0", "--seed", "1"],
        capsys,
    )
    assert code == 0
    assert json.loads(out)["answer"] == "Yes"


# ---------------------------------------------------------------------------
# Config file and overrides
# ---------------------------------------------------------------------------


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 123\ntrials = 7\nepsilon = 0.5\n")
    code, out, _ = run(
        ["identity", "--config", str(cfg), "--trials", "9", "--setting", "collective"],
        capsys,
    )
    assert code == 0
    fields = out.strip().splitlines()[1].split(",")
    assert fields[4] == "9"  # flag beats file
    assert fields[3] == "0.5"  # file beats default
    assert fields[9] == "123"


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("velocity = 9\n")
    code, _, err = run(["identity", "--config", str(cfg)], capsys)
    assert code == 2 and "velocity" in err


def test_const_override_scales_budget(capsys):
    argv = ["identity", "--trials", "2", "--epsilon", "0.5", "--seed", "4",
            "--setting", "independent"]
    _, out_a, _ = run(argv + ["--const-C", "8"], capsys)
    _, out_b, _ = run(argv + ["--const-C", "16"], capsys)
    copies_a = float(out_a.strip().splitlines()[1].split(",")[8])
    copies_b = float(out_b.strip().splitlines()[1].split(",")[8])
    assert copies_b == pytest.approx(2 * copies_a, rel=0.01)


# ---------------------------------------------------------------------------
# Error handling
# ---------------------------------------------------------------------------


def test_bad_epsilon_exits_2(capsys):
    code, _, err = run(["identity", "--epsilon", "1.5", "--trials", "5"], capsys)
    assert code == 2 and err


def test_bad_layout_exits_2(capsys):
    code, _, err = run(["independence", "--layout", "2,x", "--trials", "5"], capsys)
    assert code == 2 and err


def test_unreachable_fixture_exits_2(capsys):
    # mixedness at eps=0.8 would need a qubit state 1.6-far from uniform,
    # but pure states top out at trace distance 1.0
    code, _, err = run(["mixedness", "--epsilon", "0.8", "--trials", "5"], capsys)
    assert code == 2 and err


def test_calibration_failure_exits_3(monkeypatch, capsys):
    def boom(*a, **k):
        raise CalibrationFailed("ladder exhausted")

    monkeypatch.setattr(cli.harness, "calibrate", boom)
    code, _, err = run(["calibrate", "--tester", "identity"], capsys)
    assert code == 3 and "ladder" in err


def test_unknown_subcommand_raises_system_exit(capsys):
    with pytest.raises(SystemExit):
        cli.main(["teleport"])


# ---------------------------------------------------------------------------
# selftest and calibrate
# ---------------------------------------------------------------------------


def test_selftest_exits_0(capsys):
    code, out, _ = run(["selftest"], capsys)
    assert code == 0
    assert "PASS" in out


def test_calibrate_prints_json(capsys):
    code, out, _ = run(
        ["calibrate", "--tester", "identity", "--setting", "collective",
         "--trials", "20", "--seed", "11"],
        capsys,
    )
    assert code == 0
    result = json.loads(out)
    assert "collective_C" in result and result["worst_error"] <= 1 / 3
