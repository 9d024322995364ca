import csv
import io
import json
import subprocess
import sys

import pytest

from pfdavg.cli import EXIT_ENGINE, EXIT_INPUT, EXIT_OK, main
from pfdavg.model import Method, PfdResult, load_case, params_to_dict
from pfdavg.report import (
    ComparisonRow,
    EngineError,
    SilBand,
    emit,
    parse_methods,
    run_case,
    sil_band,
)

from conftest import make_params


@pytest.mark.parametrize("pfd,band", [
    (1e-5, SilBand.SIL4), (0.0, SilBand.SIL4), (9.99e-5, SilBand.SIL4),
    (1e-4, SilBand.SIL3), (1e-3, SilBand.SIL2), (4.3e-4, SilBand.SIL3),
    (1e-2, SilBand.SIL1), (5.59e-2, SilBand.SIL1), (1e-1, SilBand.BELOW_SIL1), (1.0, SilBand.BELOW_SIL1),
])
def test_sil_band(pfd, band):
    assert sil_band(pfd) is band


def test_parse_methods():
    assert parse_methods("all") == [Method.ANALYTIC, Method.FAULTTREE, Method.MARKOV, Method.PETRI]
    assert parse_methods("markov,analytic") == [Method.ANALYTIC, Method.MARKOV]
    with pytest.raises(ValueError):
        parse_methods("montecarlo")
    with pytest.raises(ValueError):
        parse_methods("")


def test_run_case_deterministic_methods():
    row = run_case(load_case("iii"), "analytic,faulttree,markov", name="iii")
    assert set(row.results) == {Method.ANALYTIC, Method.FAULTTREE, Method.MARKOV}
    assert row.sil(Method.MARKOV) is SilBand.SIL3
    dev = row.deviations["analytic/markov"]
    mk = row.results[Method.MARKOV].value
    assert dev == pytest.approx(row.results[Method.ANALYTIC].value / mk - 1.0)
    assert row.warnings == []


def test_run_case_with_petri():
    row = run_case(load_case("i"), "all", name="i", histories=20000, seed=3)
    res = row.results[Method.PETRI]
    assert res.ci90_halfwidth > 0
    assert "petri/markov" not in row.deviations and "markov/petri" in row.deviations


def test_degenerate_zero_rates():
    row = run_case(make_params(lambda_d=0.0), "all", histories=100)
    for method in row.results:
        assert row.results[method].value == 0.0
        assert row.sil(method) is SilBand.SIL4
        assert "degenerate: PFDavg is 0" in row.result_warnings(method)
    assert row.deviations == {}


def test_validity_warning_on_analytic_only():
    row = run_case(load_case("ii"), "analytic,markov", name="ii")
    assert any("lambda_DUU*T0" in w for w in row.result_warnings(Method.ANALYTIC))
    assert row.result_warnings(Method.MARKOV) == []


def test_engine_error_is_tagged(monkeypatch):
    import pfdavg.report as report

    def boom(params):
        raise RuntimeError("kaput")

    monkeypatch.setattr(report, "pfd_avg_markov", boom)
    with pytest.raises(EngineError) as info:
        run_case(load_case("i"), "markov")
    assert info.value.method is Method.MARKOV


def _row():
    return ComparisonRow("x", {
        Method.MARKOV: PfdResult(1.234567891e-3, Method.MARKOV),
        Method.PETRI: PfdResult(1.3e-3, Method.PETRI, ci90_halfwidth=2.5e-5),
    })


def test_emit_csv():
    rows = list(csv.reader(io.StringIO(emit([_row()], "csv"))))
    assert rows[0] == ["case", "method", "pfd_avg", "ci90", "sil", "warnings"]
    assert rows[1] == ["x", "markov", "1.23457e-03", "", "SIL2", ""]
    assert rows[2] == ["x", "petri", "1.30000e-03", "2.50000e-05", "SIL2", ""]


def test_emit_json_round_trip():
    doc = json.loads(emit([_row()], "json"))
    assert doc[0]["case"] == "x"
    assert doc[0]["results"][0]["pfd_avg"] == 1.234567891e-3
    assert doc[0]["results"][1]["ci90"] == 2.5e-5
    assert doc[0]["results"][0]["ci90"] is None


def test_emit_rejects():
    with pytest.raises(ValueError):
        emit([], "csv")
    with pytest.raises(ValueError):
        emit([_row()], "xml")


# -- command line --------------------------------------------------------------

def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_run_csv(capsys):
    code, out, _ = _run(["run", "--case", "iii", "--method", "analytic,markov"], capsys)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "case,method,pfd_avg,ci90,sil,warnings"
    assert lines[1].startswith("iii,analytic,4.310")
    assert lines[2].startswith("iii,markov,4.28")


def test_cli_run_all_cases_json(capsys):
    code, out, _ = _run(["run", "--case", "all", "--method", "analytic", "--format", "json"], capsys)
    assert code == EXIT_OK
    assert [r["case"] for r in json.loads(out)] == ["i", "ii", "iii", "iv", "v", "vi"]


def test_cli_input_file(tmp_path, capsys):
    path = tmp_path / "plant.json"
    path.write_text(json.dumps(params_to_dict(load_case("v"))))
    code, out, _ = _run(["run", "--input", str(path), "--method", "analytic"], capsys)
    assert code == EXIT_OK
    assert out.splitlines()[1].startswith("plant,analytic,5.49")


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(colour="red"),
    lambda d: d.pop("m"),
    lambda d: d.update(dc=2.0),
    lambda d: d.update(t0_hours=1000.0),
])
def test_cli_bad_input_file(tmp_path, capsys, mutate):
    data = params_to_dict(load_case("v"))
    mutate(data)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    code, _, err = _run(["run", "--input", str(path)], capsys)
    assert code == EXIT_INPUT
    assert "error:" in err


@pytest.mark.parametrize("argv", [
    ["run", "--case", "vii"],
    ["run"],
    ["run", "--case", "i", "--method", "guess"],
    ["run", "--case", "i", "--histories", "1"],
    ["frobnicate"],
])
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == EXIT_INPUT


def test_cli_engine_failure(monkeypatch, capsys):
    import pfdavg.report as report

    monkeypatch.setattr(report, "pfd_avg_fault_tree", lambda p: 1 / 0)
    code, _, err = _run(["run", "--case", "i", "--method", "faulttree"], capsys)
    assert code == EXIT_ENGINE
    assert "faulttree" in err


def test_cli_validate(capsys):
    code, out, _ = _run(["validate", "--case", "all"], capsys)
    assert code == EXIT_OK
    lines = out.splitlines()
    flagged = [line.split(":")[0] for line in lines if "WARN" in line]
    assert flagged == ["case ii", "case iv", "case vi"]
    assert "0.213" in lines[1]


def test_cli_seed_from_environment(monkeypatch, tmp_path, capsys):
    argv = ["run", "--case", "iii", "--method", "petri", "--histories", "5000"]
    monkeypatch.setenv("PFD_SEED", "123")
    _, env_out, _ = _run(argv, capsys)
    monkeypatch.delenv("PFD_SEED")
    _, flag_out, _ = _run(argv + ["--seed", "123"], capsys)
    _, default_out, _ = _run(argv, capsys)
    assert env_out == flag_out != default_out


def test_cli_trace(tmp_path, capsys):
    trace = tmp_path / "trace.txt"
    code, _, _ = _run(["run", "--case", "iv", "--method", "petri", "--histories", "100",
                       "--trace", str(trace)], capsys)
    assert code == EXIT_OK
    text = trace.read_text()
    assert text.startswith("# case iv, history 0, seed 42\n")
    assert text.rstrip().splitlines()[-1].startswith("fraction ")


def test_cli_petri_output_independent_of_workers(tmp_path):
    outs = []
    for workers in ("1", "2"):
        path = tmp_path / f"w{workers}.csv"
        subprocess.run([sys.executable, "-m", "pfdavg", "run", "--case", "v", "--method", "petri",
                        "--histories", "10000", "--workers", workers, "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_cli_reproduce_deterministic_engines(capsys):
    code, out, _ = _run(["reproduce", "--skip-petri"], capsys)
    lines = out.splitlines()
    assert lines[-1].endswith("checks passed")
    assert any(line.startswith("[PASS] analytic case vi") for line in lines)
    assert code in (EXIT_OK, 3)
