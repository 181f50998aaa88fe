"""Command-line interface: dispatch, overrides, output contracts."""

import json

import pytest

from dpconsensus.cli import CliError, main, resolve_config

# Small setting shared by the CLI tests; keys exercise every section.
TINY = [
    "--set", "experiment.n_nodes=5",
    "--set", "experiment.points_per_node=20",
    "--set", "experiment.dimension=2",
    "--set", "experiment.horizon=8",
]


def run_cli(*argv) -> int:
    return main(list(argv))


def test_resolve_defaults_match_the_standard_experiment():
    resolved = resolve_config(None, [])
    assert resolved["experiment.n_nodes"] == 10
    assert resolved["experiment.points_per_node"] == 100
    assert resolved["privacy.epsilon"] == 4.0
    assert resolved["privacy.delta"] == 1e-3
    assert resolved["experiment.edge_prob"] == 0.6
    assert resolved["sweep.n_seeds"] == 20


def test_unknown_key_is_named():
    with pytest.raises(CliError, match="experiment.bogus"):
        resolve_config(None, ["experiment.bogus=1"])


def test_bad_value_is_named():
    with pytest.raises(CliError, match="experiment.horizon"):
        resolve_config(None, ["experiment.horizon=ten"])


def test_config_file_plus_overrides(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("[experiment]\nhorizon = 12\n\n[privacy]\nepsilon = 2.0\n")
    resolved = resolve_config(str(cfg), ["privacy.epsilon=8.0"])
    assert resolved["experiment.horizon"] == 12
    assert resolved["privacy.epsilon"] == 8.0  # override wins


def test_missing_config_file_is_a_validation_error(tmp_path, capsys):
    code = run_cli("run", "--config", str(tmp_path / "nope.cfg"))
    assert code == 1
    assert "nope.cfg" in capsys.readouterr().err


def test_unknown_command_is_a_validation_error(capsys):
    assert run_cli("frobnicate") == 1


def test_help_lists_configuration_keys(capsys):
    with pytest.raises(SystemExit) as exit_info:
        run_cli("--help")
    assert exit_info.value.code == 0
    out = capsys.readouterr().out
    for key in ("experiment.horizon", "privacy.epsilon", "sweep.values", "audit.n_samples"):
        assert key in out


def test_run_outputs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli("run", *TINY, "--seed", "42", "--output", str(a)) == 0
    assert run_cli("run", *TINY, "--seed", "42", "--output", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# dpconsensus")
    assert "# master_seed = 42" in lines[1]
    header_end = max(i for i, line in enumerate(lines) if line.startswith("#"))
    assert lines[header_end + 1] == "stage,t,normalized_error,consensus_dev,probe_error"
    assert any(line.startswith("2,") for line in lines)  # agreement rounds present


def test_run_seed_changes_the_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("run", *TINY, "--seed", "1", "--output", str(a))
    run_cli("run", *TINY, "--seed", "2", "--output", str(b))
    assert a.read_bytes() != b.read_bytes()


def test_schedule_command_writes_table_and_budget_line(tmp_path, capsys):
    out = tmp_path / "sched.csv"
    code = run_cli(
        "schedule", "--T", "1000", "--epsilon", "4", "--delta", "1e-3",
        "--output", str(out),
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "budget_check: pass=True" in printed
    lines = out.read_text().splitlines()
    assert any("budget_check pass=True" in line for line in lines if line.startswith("#"))
    data_lines = [line for line in lines if not line.startswith("#")]
    assert data_lines[0] == "t,step_size,noise_scale,sensitivity,spend"
    assert len(data_lines) == 1001


def test_sweep_command_writes_rows_and_summary(tmp_path):
    out = tmp_path / "sweep.csv"
    code = run_cli(
        "sweep", *TINY, "--axis", "T",
        "--set", "sweep.values=4,8",
        "--set", "sweep.n_seeds=2",
        "--output", str(out), "--seed", "7",
    )
    assert code == 0
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert summary["axis"] == "T"
    assert summary["master_seed"] == 7
    assert set(summary["per_value"]) == {"4.0", "8.0"}
    assert summary["config"]["sweep.values"] == [4.0, 8.0]
    again = tmp_path / "again.csv"
    run_cli(
        "sweep", *TINY, "--axis", "T",
        "--set", "sweep.values=4,8", "--set", "sweep.n_seeds=2",
        "--output", str(again), "--seed", "7",
    )
    assert again.read_bytes() == out.read_bytes()


def test_audit_command_reports_the_tail(tmp_path):
    out = tmp_path / "audit.json"
    code = run_cli(
        "audit", *TINY, "--samples", "1000", "--T", "6",
        "--output", str(out), "--seed", "3",
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["n_samples"] == 1000
    assert payload["pass"] is True
    assert payload["exceed_rate"] <= payload["bound"]
    assert payload["max_deterministic_part"] <= payload["alpha"] / 2.0 * (1 + 1e-12)
    assert payload["config"]["experiment.horizon"] == 6
    assert payload["master_seed"] == 3


def test_bound_command_compares_bound_and_simulation(tmp_path):
    out = tmp_path / "bound.json"
    code = run_cli(
        "bound", *TINY, "--set", "bound.n_runs=50", "--output", str(out), "--seed", "5"
    )
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["pass"] is True
    assert payload["empirical_mean"] <= payload["total"]
    assert set(payload["terms"]) == {"init", "grad", "trans", "floor"}
    assert payload["total"] == pytest.approx(sum(payload["terms"].values()))


def test_set_flag_requires_key_value(capsys):
    assert run_cli("run", "--set", "horizon") == 1
    assert "--set" in capsys.readouterr().err
