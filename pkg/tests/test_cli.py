import csv
import io
import json
import subprocess
import sys

import pytest

from gaussi.cli import main
from gaussi.report import PosteriorReport

EXAMPLE1 = "X1 = Normal(50, 2)\nX2 = Normal(2 * X1 - 5, 1)\nX3 = Normal(1 * X2 - 10, 4)\nreturn X1, X2, X3\n"


@pytest.fixture
def program(tmp_path):
    def write(text, name="p.gpp"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_text_report(capsys, program):
    code, out, _ = run_cli(capsys, "run", program(EXAMPLE1))
    assert code == 0
    assert "X1 50\n" in out and "X2 95\n" in out and "X3 85\n" in out
    assert "  4 9 13\n" in out


def test_run_prob_wide_interval(capsys, program):
    code, out, _ = run_cli(capsys, "run", program(EXAMPLE1), "--prob", "X1:-1e9:1e9", "--format", "json")
    assert code == 0
    report = PosteriorReport.from_json(out)
    assert report.probabilities[0][3] == 1.0


def test_run_density_and_mi(capsys, program):
    code, out, _ = run_cli(capsys, "run", program(EXAMPLE1), "--density", "X2:80:110:7",
                           "--mi", "X1,X2", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["section", "key1", "key2", "value"]
    assert sum(r[0] == "density" for r in rows) == 7
    assert any(r[0] == "metric" and r[1] == "mutual_information[X1;X2]" for r in rows)


def test_twelve_significant_digits(capsys, program):
    code, out, _ = run_cli(capsys, "run", program("X = Normal(1, 3)\nY = X / 3\nreturn Y\n"))
    assert "Y 0.333333333333\n" in out


def test_json_round_trip(capsys, program, tmp_path):
    out_path = tmp_path / "r.json"
    code, _, _ = run_cli(capsys, "run", program(EXAMPLE1), "--prob", "X3:80:90",
                         "--density", "X1:45:55:5", "--format", "json", "--out", str(out_path))
    assert code == 0
    text = out_path.read_text()
    report = PosteriorReport.from_json(text)
    assert PosteriorReport.from_json(report.to_json()) == report
    assert json.loads(text)["mean"] == [50.0, 95.0, 85.0]


def test_empty_return_is_validation_error(capsys, program):
    code, _, err = run_cli(capsys, "run", program("X = Normal(0,1)\nreturn\n"))
    assert code == 1 and "return at least one" in err


def test_parse_error_exit_code(capsys, program):
    code, _, err = run_cli(capsys, "run", program("X = Normal(0\nreturn X\n"))
    assert code == 1 and ":1:" in err


def test_runtime_error_exit_code_with_location(capsys, program):
    code, _, err = run_cli(capsys, "run", program("X = Normal(0,1)\nY = X * 0\ncondition(Y, 3)\nreturn X\n"))
    assert code == 2 and "3:1" in err


def test_missing_file_is_runtime_error(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", str(tmp_path / "nope.gpp"))
    assert code == 2


def test_bad_flags_exit_one(capsys, program):
    assert run_cli(capsys, "run", program(EXAMPLE1), "--prob", "X1")[0] == 1
    assert run_cli(capsys, "frobnicate")[0] == 1


def test_check_valid(capsys, program):
    code, out, err = run_cli(capsys, "check", program(EXAMPLE1))
    assert (code, out, err) == (0, "", "")


def test_check_duplicate(capsys, program):
    code, _, err = run_cli(capsys, "check", program("X = Normal(0,1)\nX = Normal(0,1)\nreturn X\n"))
    assert code == 1 and err.count("\n") == 1 and "duplicate" in err


def test_check_unknown_condition_target(capsys, program):
    code, _, err = run_cli(capsys, "check", program("X = Normal(0,1)\ncondition(Ghost, 1)\nreturn X\n"))
    assert code == 1 and "Ghost" in err


def test_casestudy_case1(capsys):
    code, out, _ = run_cli(capsys, "casestudy", "--case", "1", "--format", "json")
    report = PosteriorReport.from_json(out)
    assert code == 0
    assert report.names == ("male_21_30_0",)
    assert report.mean[0] == pytest.approx(483000, rel=1e-12)
    assert report.cov[0][0] == pytest.approx(90, rel=1e-9)
    assert report.details["observed[male_21_30_average]"] == 472000


def test_casestudy_dp_emits_program(capsys, tmp_path):
    target = tmp_path / "case1dp.gpp"
    code, out, _ = run_cli(capsys, "casestudy", "--dp", "--emit-program", str(target))
    assert code == 0
    assert "Normal(0, 1442533240." in target.read_text()
    assert run_cli(capsys, "check", str(target))[0] == 0


@pytest.mark.parametrize("case", [1, 2, 3])
@pytest.mark.parametrize("dp", [False, True])
def test_casestudy_programs_pass_check(capsys, tmp_path, case, dp):
    target = tmp_path / "p.gpp"
    argv = ["casestudy", "--case", str(case), "--emit-program", str(target)] + (["--dp"] if dp else [])
    assert run_cli(capsys, *argv)[0] == 0
    assert run_cli(capsys, "check", str(target))[0] == 0


def test_casestudy_bad_dataset(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    code, _, err = run_cli(capsys, "casestudy", "--dataset", str(bad))
    assert code == 1 and "missing columns" in err


def test_casestudy_bad_victim(capsys):
    assert run_cli(capsys, "casestudy", "--victim", "nobody[0]")[0] == 1


def test_bench_csv(capsys):
    code, out, _ = run_cli(capsys, "bench", "--sizes", "10,50", "--repetitions", "2")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert [int(r["n"]) for r in rows] == [10, 50]
    assert all(float(r["mean_seconds"]) > 0 and float(r["stddev"]) >= 0 for r in rows)


def test_module_entry_point(program):
    proc = subprocess.run([sys.executable, "-m", "gaussi", "run", program(EXAMPLE1)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "X2 95" in proc.stdout
