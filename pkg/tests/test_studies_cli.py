"""Study runners, CSV emission, and the command-line interface."""

import numpy as np

from spinqds.cli import main
from spinqds.config import parse_model
from spinqds.studies import (
    StudyResult,
    emit_csv,
    emit_plot_data,
    emit_superoperator_csv,
    read_csv,
    run_compatibility_study,
    run_convergence_study,
    run_cp_sweep,
    run_dual_check,
    run_ito_check,
    run_study,
)

SIGMA_X_MODEL = """
model {
  local_dim = 2
  lattice_dim = 1
  flavor = gns_form
  shell {
    level = 0
    sites = [[0]]
    matrix = [[0+0i, 1+0i], [1+0i, 0+0i]]
  }
}
"""

TWO_SHELL_MODEL = """
model {
  local_dim = 2
  lattice_dim = 1
  flavor = algebra_form
  shell { level = 1
          sites = [[1]]
          matrix = [[0i, 1+0i], [1+0i, 0i]] }
  shell { level = 2
          sites = [[-2], [2]]
          matrix = [[0.3+0i,0i,0i,0.5+0.1i],
                    [0i,0.2+0i,0i,0i],
                    [0i,0i,0.1+0i,0i],
                    [0.5-0.1i,0i,0i,0.4+0i]] }
}
"""


def spec_with_study(model_text, study_text):
    return parse_model(model_text + "\nstudy {\n" + study_text + "\n}")


# --- convergence -------------------------------------------------------------------


def test_convergence_sigma_x_first_order():
    spec = spec_with_study(SIGMA_X_MODEL, """
        type = convergence
        t_final = 0.5
        step_counts = [64, 128, 256]
        observables = 2
    """)
    result = run_convergence_study(spec, seed=0)
    assert result.passed()
    assert abs(result.summary["fitted_order"] - 1.0) <= 0.15
    assert len(result.records) == 6


def test_convergence_zero_shell_reports_exact():
    spec = spec_with_study(SIGMA_X_MODEL.replace("1+0i", "0+0i"), """
        type = convergence
        t_final = 0.5
        step_counts = [64, 128, 256]
    """)
    result = run_convergence_study(spec, seed=0)
    assert result.passed()
    assert result.summary["exact"] is True


def test_convergence_algebra_flavor_two_shells():
    spec = spec_with_study(TWO_SHELL_MODEL, """
        type = convergence
        t_final = 0.4
        step_counts = [32, 64, 128]
        observables = 1
    """)
    result = run_convergence_study(spec, seed=1)
    assert result.passed()
    assert abs(result.summary["fitted_order"] - 1.0) <= 0.15


# --- compatibility ------------------------------------------------------------------


def test_compatibility_two_levels_passes_and_control_fails():
    spec = spec_with_study(TWO_SHELL_MODEL, """
        type = compatibility
        t_final = 0.5
        step_counts = [32]
        levels = [1, 2]
        negative_control = true
    """)
    result = run_compatibility_study(spec, seed=0)
    assert result.passed()
    control = [c for c in result.checks if c["role"] == "negative_control"]
    assert len(control) == 1 and control[0]["passed"]
    mismatches = [r["mismatch"] for r in result.records if r["role"] == "check"]
    assert max(mismatches) <= 1e-10


# --- cp sweep ------------------------------------------------------------------------


def test_cp_sweep_contains_report_fields():
    spec = spec_with_study(SIGMA_X_MODEL.replace("gns_form", "algebra_form"), """
        type = cp_sweep
        times = [0.1, 0.3, 1.0]
    """)
    result = run_cp_sweep(spec, seed=0)
    assert result.passed()
    assert {r["t"] for r in result.records} == {0.1, 0.3, 1.0}
    assert all(r["min_choi_eigenvalue"] >= -1e-10 for r in result.records)


# --- dual and ito ----------------------------------------------------------------------


def test_dual_check_passes():
    spec = spec_with_study(SIGMA_X_MODEL, "type = dual_check\n step_counts = [16]")
    result = run_dual_check(spec, seed=0)
    assert result.passed()
    assert all(r["defect"] <= 1e-12 for r in result.records)


def test_ito_check_flags_corruption():
    spec = spec_with_study(SIGMA_X_MODEL, "type = ito_check")
    result = run_ito_check(spec, seed=0)
    assert result.passed()
    control = [c for c in result.checks if c["role"] == "negative_control"]
    assert control and control[0]["passed"]
    bad = [r for r in result.records if r["role"] == "negative_control"][0]
    assert abs(bad["defect"] - result.summary["corrupted_expected"]) < 1e-12


# --- CSV emission -------------------------------------------------------------------------


def test_emit_csv_round_trip(tmp_path):
    spec = spec_with_study(SIGMA_X_MODEL, "type = dual_check\n step_counts = [8]")
    result = run_study(spec, seed=3)
    path = emit_csv(result, tmp_path / "results.csv")
    parsed = read_csv(path)
    originals = sorted(result.records, key=lambda r: r["name"])
    parsed = sorted(parsed, key=lambda r: r["name"])
    assert len(parsed) == len(originals)
    for row, orig in zip(parsed, originals):
        for key in result.columns:
            assert row[key] == orig[key]


def test_emit_csv_empty_result_is_header_only(tmp_path):
    result = StudyResult("convergence", {}, ["study", "steps", "error"])
    path = emit_csv(result, tmp_path / "empty.csv")
    assert path.read_text(encoding="utf-8").strip() == "study,steps,error"


def test_emit_csv_is_deterministic(tmp_path):
    spec = spec_with_study(SIGMA_X_MODEL, """
        type = convergence
        t_final = 0.5
        step_counts = [32, 64, 128]
    """)
    first = emit_csv(run_study(spec, seed=7), tmp_path / "a.csv").read_bytes()
    second = emit_csv(run_study(spec, seed=7), tmp_path / "b.csv").read_bytes()
    assert first == second


def test_emit_csv_rows_sorted_by_steps(tmp_path):
    spec = spec_with_study(SIGMA_X_MODEL, """
        type = convergence
        t_final = 0.5
        step_counts = [32, 64, 128]
        observables = 1
    """)
    rows = read_csv(emit_csv(run_study(spec, seed=0), tmp_path / "r.csv"))
    assert [r["steps"] for r in rows] == [128, 32, 64]  # lexicographic on cells
    assert all("," not in str(r["steps"]) for r in rows)


def test_complex_cells_round_trip(tmp_path):
    result = StudyResult("convergence", {}, ["study", "value"])
    result.add_record(value=complex(1.5, -2.25))
    path = emit_csv(result, tmp_path / "c.csv")
    text = path.read_text(encoding="utf-8")
    assert '"1.5,-2.25"' in text
    assert read_csv(path)[0]["value"] == complex(1.5, -2.25)


def test_superoperator_csv(tmp_path):
    mat = np.array([[1 + 2j, 0], [0.5j, -1.0]])
    path = emit_superoperator_csv(mat, tmp_path / "m.csv")
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith('"1.0,2.0"')


def test_plot_data_two_columns(tmp_path):
    spec = spec_with_study(SIGMA_X_MODEL, """
        type = convergence
        t_final = 0.5
        step_counts = [32, 64, 128]
        observables = 1
    """)
    result = run_study(spec, seed=0)
    paths = emit_plot_data(result, tmp_path)
    assert len(paths) == 1
    rows = read_csv(paths[0])
    assert list(rows[0].keys()) == ["h", "error"]
    assert len(rows) == 3


# --- CLI -------------------------------------------------------------------------------------


def write_config(tmp_path, study_text, model_text=SIGMA_X_MODEL):
    path = tmp_path / "model.cfg"
    path.write_text(model_text + "\nstudy {\n" + study_text + "\n}", encoding="utf-8")
    return path


def test_cli_validate_ok(tmp_path, capsys):
    cfg = write_config(tmp_path, "type = ito_check")
    assert main(["validate", str(cfg)]) == 0
    assert "OK" in capsys.readouterr().out


def test_cli_validate_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("model { local_dim = banana }\nstudy { type = ito_check }")
    assert main(["validate", str(path)]) == 2
    assert "local_dim" in capsys.readouterr().err


def test_cli_run_writes_outputs_and_exits_zero(tmp_path, capsys):
    cfg = write_config(tmp_path, """
        type = convergence
        t_final = 0.5
        step_counts = [32, 64, 128]
        observables = 1
    """)
    out = tmp_path / "out"
    code = main(["run", str(cfg), "--out", str(out), "--seed", "5"])
    assert code == 0
    for name in ("results.csv", "checks.csv", "timings.csv", "superoperator.csv",
                 "curve_observable0.csv"):
        assert (out / name).exists()
    printed = capsys.readouterr().out
    assert "[PASS]" in printed


def test_cli_run_capacity_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, "type = cp_sweep", model_text=TWO_SHELL_MODEL.replace(
        "algebra_form", "gns_form"))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "capacity" in capsys.readouterr().err.lower()


def test_cli_report_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, "type = dual_check\n step_counts = [8]")
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "checks passed" in printed


def test_cli_report_missing_dir(tmp_path, capsys):
    assert main(["report", str(tmp_path / "nope")]) == 2


def test_cli_seeded_runs_are_reproducible(tmp_path):
    cfg = write_config(tmp_path, """
        type = convergence
        t_final = 0.5
        step_counts = [32, 64, 128]
        observables = 2
    """)
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", str(cfg), "--out", str(out1), "--seed", "9"]) == 0
    assert main(["run", str(cfg), "--out", str(out2), "--seed", "9"]) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    assert (out1 / "checks.csv").read_bytes() == (out2 / "checks.csv").read_bytes()


def test_cli_schema_prints_document(capsys):
    assert main(["schema"]) == 0
    assert "Grammar" in capsys.readouterr().out


# --- shipped configs ---------------------------------------------------------------------------


def test_shipped_configs_validate():
    from pathlib import Path

    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert len(configs) >= 3
    for cfg in configs:
        assert main(["validate", str(cfg)]) == 0


def test_shipped_dual_config_runs(tmp_path):
    from pathlib import Path

    cfg = Path(__file__).parent.parent / "configs" / "flip_dual_and_ito.cfg"
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
