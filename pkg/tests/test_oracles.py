import math

import numpy as np
import pytest

from delaysys import h2_norm, make_rtds, random_rtds
from delaysys.benchmarks import hot_shower
from oracles import (OracleRefusal, compare, direct_transfer, lyapunov_gramians, rel_error,
                     trapezoid_h2)

from conftest import hurwitz_delay_free


def _scalar():
    return make_rtds([(0, [[-1.0]])], [(0, [[1.0]])], [(0, [[1.0]])])


def test_scalar_lyapunov():
    ref = lyapunov_gramians(_scalar())
    assert ref.wc[0, 0] == pytest.approx(0.5, rel=1e-14)
    assert ref.wo[0, 0] == pytest.approx(0.5, rel=1e-14)


def test_lyapunov_residual():
    sys = hurwitz_delay_free(5, 4)
    a, b, c = sys.a.matrices[0], sys.b.matrices[0], sys.c.matrices[0]
    ref = lyapunov_gramians(sys)
    res_c = a @ ref.wc + ref.wc @ a.T + b @ b.T
    res_o = a.T @ ref.wo + ref.wo @ a + c.T @ c
    assert np.abs(res_c).max() <= 1e-10 * max(1.0, np.abs(b @ b.T).max())
    assert np.abs(res_o).max() <= 1e-10 * max(1.0, np.abs(c.T @ c).max())


def test_direct_transfer_scalar():
    for w in (0.0, 1.0, 10.0):
        assert direct_transfer(_scalar(), w)[0, 0] == pytest.approx(1 / (1j * w + 1), rel=1e-14)


def test_trapezoid_scalar():
    ref = trapezoid_h2(_scalar(), points=1_000_000)
    assert ref.value == pytest.approx(1 / math.sqrt(2), rel=1e-5)
    assert ref.tail_bound < 1e-6


def test_trapezoid_hot_shower():
    sys, exact = hot_shower()
    assert trapezoid_h2(sys).value == pytest.approx(exact, rel=1e-5)


def test_refuses_delays():
    with pytest.raises(OracleRefusal):
        lyapunov_gramians(hot_shower()[0])


def test_refuses_unstable():
    sys = make_rtds([(0, [[0.5]])], [(0, [[1.0]])], [(0, [[1.0]])])
    with pytest.raises(OracleRefusal):
        lyapunov_gramians(sys)


def test_refuses_feedthrough():
    sys = make_rtds([(0, [[-1.0]])], [(0, [[1.0]])], [(0, [[1.0]])], [(0, [[1.0]])])
    with pytest.raises(OracleRefusal):
        trapezoid_h2(sys, points=10_000)


def test_refuses_fast_decay():
    sys = make_rtds([(0, [[-1.0, 1.0], [0.0, -1.0]])], [(0, [[0.0], [1.0]])], [(0, [[1.0, 0.0]])])
    with pytest.raises(OracleRefusal, match="decays"):
        trapezoid_h2(sys, points=10_000)


def test_compare_report():
    report = compare("x", 1.0, 1.0 + 1e-9, 1e-8)
    assert report.ok and "ok" in str(report)
    assert not compare("x", 1.0, 1.1, 1e-8).ok
    assert rel_error(0.0, 0.0) == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_trapezoid_agrees_random(seed):
    sys = random_rtds(20, seed)
    ref = trapezoid_h2(sys, points=300_000)
    assert rel_error(ref.value, h2_norm(sys)) <= 1e-4
