import csv
import json
from pathlib import Path

import pytest

from maxent_phs.cli import EXIT_INVARIANT, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def scenario(name):
    return str(SCENARIOS / name)


def write_doc(tmp_path, doc, name="doc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def report_values(text):
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["quantity", "value"]
    return {key: value for key, value in rows[1:]}


def test_coin_toss_two_bits(capsys):
    assert main(["entropy", scenario("coin_toss.json")]) == EXIT_OK
    values = report_values(capsys.readouterr().out)
    assert float(values["entropy_bits"]) == pytest.approx(2.0, abs=1e-12)


def test_skewed_coin_and_output_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["entropy", scenario("coin_skewed.json"), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    report = json.loads((out / "entropy.json").read_text())
    assert report["entropy_bits"] == pytest.approx(1.75, abs=1e-12)
    rows = read_csv(out / "distribution.csv")
    assert rows[0][-1] == "probability"
    assert sum(float(r[-1]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-15)


def test_json_format_report(capsys):
    assert main(["entropy", scenario("ising_target.json"), "--format", "json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["targets"]["energy"] == -2.0
    assert report["entropy_legendre"] == pytest.approx(report["entropy"], rel=1e-10)


def test_sweep_table(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["entropy", scenario("ising_canonical.json"), "--out", str(out), "--quiet"]) == EXIT_OK
    assert capsys.readouterr().out == ""
    rows = read_csv(out / "sweep.csv")
    assert rows[0][0] == "T" and [float(r[0]) for r in rows[1:]] == [0.5, 1.0, 2.0, 4.0]
    energies = [float(r[rows[0].index("mean_energy")]) for r in rows[1:]]
    assert energies == sorted(energies)


def test_ideal_gas_table(tmp_path, capsys):
    doc = {"version": 1, "constants": {"k": 1.0, "h": 1.0},
           "system": {"ideal_gas": {"N": 10, "V": 2.0, "m_atom": 1.0}},
           "ensemble": {"kind": "canonical", "intensives": {"T": [1.0, 2.0]}}}
    assert main(["entropy", write_doc(tmp_path, doc)]) == EXIT_OK
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    header = rows[0]
    for r in rows[1:]:
        T, P = float(r[header.index("T")]), float(r[header.index("P")])
        assert P * 2.0 == pytest.approx(10 * T, rel=1e-12)


def test_entropy_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["entropy", scenario("ising_target.json"), "--out", str(out), "--quiet"]) == EXIT_OK
        outs.append((out / "entropy.json").read_bytes())
    assert outs[0] == outs[1]


def test_adiabatic_piston_run(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", scenario("adiabatic_piston.json"), "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["violations"] == []
    assert summary["terminal_state"]["volume"] == pytest.approx(2.0, rel=1e-14)
    rows = read_csv(out / "ledger.csv")
    assert "T_V_two_thirds" in rows[0] and len(rows) == 102


def test_resistor_heating_run(capsys):
    assert main(["simulate", scenario("resistor_heating.json")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["min_sigma_i"] >= 0.0
    assert summary["entropy_production_integral"] > 0.0
    assert summary["max_balance_ratio"] <= 1e-9


def test_coupling_run(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", scenario("coupling.json"), "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["terminal_relative_gap"] <= 1e-6
    assert summary["energy_drift"] <= 1e-8
    assert (out / "coupling.csv").exists()


def test_simulate_json_ledger(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", scenario("resistor_heating.json"), "--out", str(out), "--format", "json",
                 "--quiet"]) == EXIT_OK
    table = json.loads((out / "ledger.json").read_text())
    assert table["columns"][0] == "time" and len(table["rows"]) == 2001


def test_invariant_failure_exit_code(tmp_path, capsys):
    doc = json.loads((SCENARIOS / "adiabatic_piston.json").read_text())
    doc["simulate"]["checks"]["adiabat_rtol"] = 1e-300
    assert main(["simulate", write_doc(tmp_path, doc)]) == EXIT_INVARIANT
    assert "InvariantViolation" in capsys.readouterr().err


def test_skew_negative_control(capsys):
    assert main(["verify", scenario("skew_negative.json")]) == EXIT_INVARIANT


def test_verify_suite_by_name(capsys):
    assert main(["verify", "skew", "--seed", "3"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_zero_dt_is_usage_error(tmp_path, capsys):
    doc = json.loads((SCENARIOS / "adiabatic_piston.json").read_text())
    doc["simulate"]["dt"] = 0
    assert main(["simulate", write_doc(tmp_path, doc), "--error-json"]) == EXIT_USAGE
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == EXIT_USAGE and "dt" in err["message"]


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 1,\n  "system": }')
    assert main(["entropy", str(path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "line 2" in err


def test_missing_file_and_unknown_suite(tmp_path, capsys):
    assert main(["entropy", str(tmp_path / "none.json")]) == EXIT_USAGE
    assert main(["verify", "nonsense"]) == EXIT_USAGE


def test_out_of_range_target_is_solver_error(tmp_path, capsys):
    doc = json.loads((SCENARIOS / "ising_target.json").read_text())
    doc["constraints"]["free"]["energy"] = -100.0
    assert main(["entropy", write_doc(tmp_path, doc)]) == EXIT_SOLVER


def test_bad_k_override(capsys):
    assert main(["entropy", scenario("coin_toss.json"), "--k", "-1"]) == EXIT_USAGE


def test_argparse_usage_error(capsys):
    assert main(["entropy"]) == EXIT_USAGE


def test_thread_limit_environment(monkeypatch, capsys):
    monkeypatch.setenv("MAXENT_PHS_THREADS", "1")
    assert main(["entropy", scenario("coin_toss.json")]) == EXIT_OK
    monkeypatch.setenv("MAXENT_PHS_THREADS", "zero")
    assert main(["entropy", scenario("coin_toss.json")]) == EXIT_USAGE
