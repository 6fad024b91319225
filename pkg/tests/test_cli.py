import subprocess
import sys

import pytest

from idnet.cli import BAD_INPUT, MISMATCH, OK, main
from idnet.formats import load_spec, reference_spec, save_spec


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)] if argv[0] in ("run", "calibrate") else list(argv))


def test_run_builtin_writes_tables(tmp_path, capsys):
    assert run(tmp_path, "run", "adoptive_transfer") == OK
    assert "PASS" in capsys.readouterr().out
    for suffix in (".csv", ".events.csv", ".result.toml"):
        assert (tmp_path / f"adoptive_transfer{suffix}").exists()
    head = (tmp_path / "adoptive_transfer.csv").read_text().splitlines()[0]
    assert head == "t,naive,th1,th2,anti_id,macrophage,cyt_a,cyt_b,cyt_c,antigen"


def test_run_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "free_antigen_heal", "--out", str(a)]) == OK
    assert main(["run", "--scenario", "free_antigen_heal", "--out", str(b)]) == OK
    for f in sorted(p.name for p in a.iterdir()):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_zero_dose_is_bad_input(tmp_path):
    assert run(tmp_path, "run", "adoptive_transfer", "--dose", "0") == BAD_INPUT


def test_expected_mismatch_exit_code(tmp_path):
    # without the transfer the healthy state persists, so the disease expectation fails
    assert run(tmp_path, "run", "adoptive_transfer", "--dose", "1e-6") == MISMATCH


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "no_such_scenario"],
        ["run"],
        ["run", "baseline", "--dt", "0"],
        ["run", "baseline", "--horizon", "-1"],
        ["frobnicate"],
        ["scan", "adoptive_transfer", "--param", "th1", "--grid", "1:0.1:5"],
        ["scan", "adoptive_transfer", "--param", "th1", "--grid", "nonsense"],
        ["run", "baseline", "--spec", "/nonexistent/spec.toml"],
    ],
)
def test_bad_input_exit_codes(tmp_path, argv):
    assert run(tmp_path, *argv) == BAD_INPUT


def test_malformed_spec_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    text = (tmp_path / "ok.toml")
    save_spec(reference_spec(), text)
    bad.write_text(text.read_text().replace("[death]", "[death]\nbogus_species = 1.0", 1))
    assert main(["steady", "--spec", str(bad)]) == BAD_INPUT
    assert "bad.toml:" in capsys.readouterr().err


def test_naive_fraction_adds_bolus(tmp_path):
    assert run(tmp_path, "run", "adoptive_transfer", "--naive-fraction", "0.5") in (OK, MISMATCH)
    rows = (tmp_path / "adoptive_transfer.events.csv").read_text().splitlines()[1:]
    assert sorted(r.split(",")[2] for r in rows) == ["naive", "th1"]
    assert run(tmp_path, "run", "baseline", "--naive-fraction", "0.5") == BAD_INPUT


def test_scenario_file(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('name = "mine"\ninit = "th2"\nhorizon = 300.0\nexpected = "EndsTH2"\n')
    assert run(tmp_path, "run", str(f)) == OK
    assert (tmp_path / "mine.csv").exists()


def test_steady_and_loops(tmp_path, capsys):
    assert main(["steady"]) == OK
    out = capsys.readouterr().out
    assert "[th1]" in out and "[th2]" in out
    assert main(["loops"]) == OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]
    assert len(lines) == 5 and all("[PASS]" in ln for ln in lines)


def test_scan_prints_pattern(tmp_path, capsys):
    assert main(["scan", "adoptive_transfer", "--param", "th1", "--grid", "0.1:100:4", "--out", str(tmp_path)]) == OK
    out = capsys.readouterr().out
    assert out.startswith("magnitude,label,response")
    assert "pattern " in out
    assert (tmp_path / "adoptive_transfer.scan.csv").exists()


def test_calibrate_failure_is_mismatch(tmp_path):
    assert run(tmp_path, "calibrate", "--budget", "0") == MISMATCH


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "idnet", "loops"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_spec_round_trip_through_cli(tmp_path):
    f = tmp_path / "ref.toml"
    save_spec(reference_spec(), f)
    assert load_spec(f) == reference_spec()
    assert main(["loops", "--spec", str(f)]) == OK
