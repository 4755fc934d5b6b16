import io
import math

import numpy as np
import pytest

from delaysys import QuadOptions, RtdsError, h2_norm, random_rtds, save_rtds
from delaysys.benchmarks import (BenchmarkDataMissing, get_entry, heated_rod, heated_rod_safe_gain,
                                 hot_shower, hot_shower_h2, load_benchmark, registry, run_benchmark,
                                 scaling_exponent, timing_sweep, two_resonance, write_timing_csv)
from delaysys.simulation import settled_step_response
from delaysys.freqresp import transfer


def test_hot_shower_closed_form():
    assert hot_shower_h2(1, 1, 1, 0.5) ** 2 == pytest.approx(0.5 * math.cos(0.5) / (1 - math.sin(0.5)))


@pytest.mark.parametrize("kw", [{"a": -1.0}, {"h": 0.0}, {"a": 1.0, "h": 1.6}])
def test_hot_shower_validation(kw):
    with pytest.raises(RtdsError):
        hot_shower(**kw)


def test_heated_rod_structure():
    sys = heated_rod(50)
    assert sys.dims == (50, 1, 1)
    assert sys.delay_counts == (1, 0, 0, 0)
    a0 = sys.a.matrices[0]
    assert np.count_nonzero(np.triu(a0, 2)) == 0
    assert abs(heated_rod_safe_gain(50)) > 0


def test_heated_rod_stable_step():
    sys = heated_rod(20)
    r = settled_step_response(sys)
    assert abs(r.outputs[-1, 0, 0] - transfer(sys, 0.0)[0, 0].real) < 1e-3


def test_two_resonance_peaks():
    sys = two_resonance()
    g = [abs(transfer(sys, w)[0, 0]) for w in (0.2, 1.0, 5.0, 30.0, 80.0)]
    assert g[1] > g[2] and g[3] > g[2] and g[3] > g[4]


def test_registry_ids():
    ids = [e.id for e in registry()]
    assert ids == ["HS", "Ex2b", "Ex3", "HE", "HR2", "HR4", "MS", "P8V", "Ex1", "SOSPD"]
    assert get_entry("hr2").id == "HR2"
    with pytest.raises(RtdsError):
        get_entry("nope")


def test_file_benchmark_needs_data(monkeypatch):
    monkeypatch.delenv("DELAYSYS_BENCH_DIR", raising=False)
    with pytest.raises(BenchmarkDataMissing, match="supply data file"):
        load_benchmark("P8V")


def test_file_benchmark_dimension_check(tmp_path):
    path = tmp_path / "P8V.json"
    save_rtds(random_rtds(4, 0), path)
    with pytest.raises(RtdsError, match="expected"):
        load_benchmark("P8V", path)


@pytest.mark.filterwarnings("ignore:balancing is rank deficient")
def test_file_benchmark_from_env(tmp_path, monkeypatch):
    from delaysys import make_rtds
    rng = np.random.default_rng(0)
    a0 = -3 * np.eye(23) + 0.1 * rng.normal(size=(23, 23))
    sys = make_rtds([(0, a0), (0.005, 0.1 * np.eye(23))], [(0, rng.normal(size=(23, 1)))],
                    [(0, rng.normal(size=(1, 23)))], name="P8V")
    save_rtds(sys, tmp_path / "P8V.json")
    monkeypatch.setenv("DELAYSYS_BENCH_DIR", str(tmp_path))
    report = run_benchmark("P8V", "reduce:3")
    assert report["reduced_system"].dims == (3, 1, 1)
    assert len(report["hsv"]) == 23


def test_run_benchmark_hot_shower():
    rep = run_benchmark("HS", "h2", h=0.3)
    assert rep["relative_error"] < 1e-6
    assert rep["analytic_h2"] == pytest.approx(hot_shower_h2(1, 1, 1, 0.3))


def test_run_benchmark_bad_task():
    with pytest.raises(RtdsError):
        run_benchmark("HS", "reduce")
    with pytest.raises(RtdsError):
        run_benchmark("HS", "bode")


def test_hr2_sparse_relaxed():
    rep = run_benchmark("HR2", "h2", QuadOptions(sparse=True, rel_tol=1e-4, abs_tol=1e-3))
    dense = h2_norm(heated_rod(100, name="HR2"), QuadOptions(rel_tol=1e-4, abs_tol=1e-3))
    assert rep["h2"] == pytest.approx(dense, rel=1e-9)


def test_timing_sweep_small():
    rows = timing_sweep("h2", [1, 2, 3], seeds=2)
    assert [r["n"] for r in rows] == [1, 2, 3]
    assert all(r["runs"] == 2 and r["mean_time"] > 0 for r in rows)
    buf = io.StringIO()
    write_timing_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,runs,mean_time,std_time,relative_time,failures,mean_evaluations"
    assert float(lines[1].split(",")[4]) == 1.0
    with pytest.raises(ValueError):
        timing_sweep("bode", [1])


def test_scaling_exponent():
    rows = [{"n": n, "mean_time": 1e-3 * n ** 2} for n in (10, 20, 40, 80)]
    assert scaling_exponent(rows) == pytest.approx(2.0)
    assert math.isnan(scaling_exponent(rows[:1]))


@pytest.mark.slow
def test_heated_rod_large_sparse():
    sys = heated_rod(10000)
    val, diag = h2_norm(sys, QuadOptions(sparse=True, rel_tol=1e-4, abs_tol=1e-3), full_output=True)
    assert math.isfinite(val) and val > 0
    assert diag["converged"]
