import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from delaysys import load_rtds, random_rtds, save_rtds
from delaysys.cli import build_parser, main
from delaysys.benchmarks import hot_shower

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = ["h2", "gram", "balreal", "balred", "bode", "sigma", "step", "bench", "random"]


def help_text(args, monkeypatch, capsys):
    monkeypatch.setenv("COLUMNS", "100")
    assert main(args + ["--help"]) == 0
    return capsys.readouterr().out


@pytest.mark.parametrize("cmd", [None] + COMMANDS)
def test_help_golden(cmd, monkeypatch, capsys):
    text = help_text([cmd] if cmd else [], monkeypatch, capsys)
    golden = GOLDEN / f"help_{cmd or 'main'}.txt"
    assert text == golden.read_text()


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_documents_every_flag(cmd, monkeypatch, capsys):
    text = help_text([cmd], monkeypatch, capsys)
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.option_strings and action.help:
            assert action.help.split("(")[0].split("%")[0].strip()[:20] in " ".join(text.split())


@pytest.fixture
def files(tmp_path, example):
    save_rtds(example, tmp_path / "ex.json")
    save_rtds(hot_shower(h=0.5)[0], tmp_path / "hs.json")
    return tmp_path


def run(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_h2_hot_shower(files, capsys):
    code, out, _ = run(capsys, "h2", files / "hs.json", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    exact = hot_shower(h=0.5)[1]
    assert abs(doc["h2_norm"] - exact) / exact < 1e-6
    assert doc["converged"] is True and doc["evaluations"] > 0


def test_h2_text_format(files, capsys):
    code, out, _ = run(capsys, "h2", files / "hs.json")
    assert code == 0
    assert out.splitlines()[0].split() == ["h2_norm", "0.91809"]


def test_gram_csv_and_json(files, capsys):
    code, out, _ = run(capsys, "gram", files / "ex.json", "-o", files / "g.csv")
    assert code == 0
    assert "Wc =" in out and "Wo =" in out
    rows = list(csv.reader(open(files / "g.csv")))
    assert rows[0] == ["gramian", "row", "col_1", "col_2"]
    assert [r[0] for r in rows[1:]] == ["wc", "wc", "wo", "wo"]
    # 17 significant digits in machine output
    assert len(rows[1][2].lstrip("-").replace(".", "").lstrip("0")) >= 16

    code, _, _ = run(capsys, "gram", files / "ex.json", "--which", "o", "-o", files / "g.json")
    doc = json.loads((files / "g.json").read_text())
    assert doc["wc"] is None and len(doc["wo"]) == 2
    assert doc["freq_interval"] == [0.0, None]


def test_balreal_outputs(files, capsys):
    code, out, _ = run(capsys, "balreal", files / "ex.json", "-o", files / "bal.json",
                       "--info", files / "info.json", "--hsv", files / "hsv.csv",
                       "--plot", files / "hsv.png")
    assert code == 0
    bal = load_rtds(files / "bal.json")
    assert bal.dims == (2, 1, 1)
    assert (files / "info.json").exists() and (files / "hsv.png").stat().st_size > 0
    assert out.startswith("hsv 1.9806 0.15733")


def test_balred_info_reuse(files, capsys):
    info = files / "info.json"
    code, out, _ = run(capsys, "balred", files / "ex.json", "--order", 1, "--info", info,
                       "-o", files / "r1.json")
    assert code == 0 and "info_reused false" in out and info.exists()
    code, out, _ = run(capsys, "balred", files / "ex.json", "--order", 1, "--info", info,
                       "-o", files / "r1b.json")
    assert code == 0
    assert "info_reused true" in out and "quadrature_evaluations 0" in out
    assert (files / "r1.json").read_text() == (files / "r1b.json").read_text()


def test_balred_freq_int_info_mismatch(files, capsys):
    info = files / "info.json"
    run(capsys, "balred", files / "ex.json", "--order", 1, "--info", info, "-o", files / "r.json")
    code, _, err = run(capsys, "balred", files / "ex.json", "--order", 1, "--info", info,
                       "--freq-int", 1, "inf", "-o", files / "r.json")
    assert code == 3
    assert err.startswith("error: code=3 kind=data type=InfoMismatchError")


def test_bode_sigma_csv(files, capsys):
    code, out, _ = run(capsys, "bode", files / "ex.json", "--wmin", 0.1, "--wmax", 10, "--points", 5)
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["omega", "mag_db_1_1", "phase_deg_1_1"]
    assert len(rows) == 6
    code, out, _ = run(capsys, "sigma", files / "ex.json", files / "hs.json", "--points", 3,
                       "-o", files / "s.csv", "--plot", files / "s.png")
    rows = list(csv.reader(open(files / "s.csv")))
    assert rows[0] == ["system", "omega", "sv_1"]
    assert {r[0] for r in rows[1:]} == {"example", "hot_shower_h0.5"}
    assert (files / "s.png").exists()


def test_bode_complex(files, capsys):
    code, out, _ = run(capsys, "bode", files / "hs.json", "--points", 2, "--complex")
    assert out.splitlines()[0] == "omega,re_1_1,im_1_1"


def test_step_overlay(files, capsys):
    code, out, _ = run(capsys, "step", files / "ex.json", files / "hs.json", "--tfinal", 2,
                       "--points", 3, "--plot", files / "step.png")
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["system", "t", "y_1_1"]
    assert len(rows) == 7
    assert (files / "step.png").exists()


def test_random_deterministic(files, capsys):
    for name in ("a.json", "b.json"):
        assert run(capsys, "random", "--n", 4, "--seed", 9, "-o", files / name)[0] == 0
    assert (files / "a.json").read_text() == (files / "b.json").read_text()
    assert load_rtds(files / "a.json").renamed(None) == random_rtds(4, 9).renamed(None)


def test_bench_report(files, capsys):
    code, out, _ = run(capsys, "bench", "HS", "--task", "h2", "--param", "h=0.3")
    assert code == 0
    assert json.loads(out)["relative_error"] < 1e-6
    code, out, _ = run(capsys, "bench", "--list")
    assert out.split()[0] == "HS"


@pytest.mark.filterwarnings("ignore:balancing is rank deficient")
def test_bench_reduce_writes_system(files, capsys):
    code, out, _ = run(capsys, "bench", "HR2", "--task", "reduce:2", "--param", "n=12",
                       "--reduced", files / "red.json", "-o", files / "rep.json")
    # HR2 is registered with 100 states
    assert code == 3
    code, _, _ = run(capsys, "bench", "HR2", "--task", "reduce:2", "--sparse", "--rel-tol", "1e-4",
                     "--abs-tol", "1e-3", "--reduced", files / "red.json", "-o", files / "rep.json")
    assert code == 0
    assert load_rtds(files / "red.json").dims == (2, 1, 1)
    assert json.loads((files / "rep.json").read_text())["order"] == 2


def test_bench_sweep_csv(files, capsys):
    code, _, err = run(capsys, "bench", "--sweep", "h2", "--max-n", 2, "--seeds", 2,
                       "-o", files / "t.csv", "--plot", files / "t.png")
    assert code == 0
    rows = list(csv.reader(open(files / "t.csv")))
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert "scaling_exponent" in err


@pytest.mark.parametrize("args", [
    ["h2"],
    ["nosuch"],
    ["h2", "x.json", "--rel-tol", "-1"],
    ["h2", "x.json", "--freq-int", "3", "1"],
    ["balred", "x.json", "-o", "y.json"],
    ["balred", "x.json", "--order", "0", "-o", "y.json"],
    ["bode", "x.json", "--wmin", "10", "--wmax", "1"],
    ["bench"],
    ["bench", "HS", "--sweep", "h2"],
    ["bench", "HS", "--task", "bode"],
    ["random", "--n", "3"],
])
def test_usage_errors(args, capsys):
    code, _, err = run(capsys, *args)
    assert code == 2
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: code=2 kind=usage")


def test_data_errors(files, capsys):
    (files / "bad.json").write_text("{")
    for args in (["h2", files / "missing.json"], ["h2", files / "bad.json"],
                 ["balred", files / "ex.json", "--order", 5, "-o", files / "o.json"],
                 ["bench", "Ex3"]):
        code, _, err = run(capsys, *args)
        assert code == 3
        assert len(err.strip().splitlines()) == 1 and "kind=data" in err


def test_feedthrough_is_data_error(files, capsys):
    from delaysys import make_rtds
    save_rtds(make_rtds([(0, [[-1.0]])], [(0, [[1.0]])], [(0, [[1.0]])], [(0, [[1.0]])]), files / "d.json")
    code, _, err = run(capsys, "h2", files / "d.json")
    assert code == 3 and "IllPosedNormError" in err


def test_numerical_error(files, capsys):
    from delaysys import make_rtds
    save_rtds(make_rtds([(0, [[0.0]])], [(0, [[1.0]])], [(0, [[1.0]])]), files / "int.json")
    code, _, err = run(capsys, "h2", files / "int.json")
    assert code == 4
    assert err.startswith("error: code=4 kind=numerical")


def test_threads_flag(files, capsys):
    code, a, _ = run(capsys, "--threads", 1, "sigma", files / "ex.json", "--points", 7)
    code, b, _ = run(capsys, "--threads", 3, "sigma", files / "ex.json", "--points", 7)
    assert a == b


def test_freq_int_inf(files, capsys):
    code, out, _ = run(capsys, "h2", files / "hs.json", "--freq-int", "0", "inf", "--format", "json")
    full = json.loads(out)["h2_norm"]
    code, out, _ = run(capsys, "h2", files / "hs.json", "--freq-int", "1", "inf", "--format", "json")
    assert json.loads(out)["h2_norm"] < full
    assert not math.isnan(full) and np.isfinite(full)
