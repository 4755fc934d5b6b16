import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaysys import make_rtds, random_rtds
from delaysys.freqresp import (FreqResponse, SingularResolventError, bode_data, default_grid,
                               eval_sum, eval_sum_batch, freq_grid, g_ab, g_ca, sigma_data,
                               transfer, write_bode_csv, write_freqresp_csv, write_sigma_csv)
from oracles import direct_transfer, rel_error


def test_example_dc_gain(example):
    # G(0) = C (-(A0 + A1))^{-1} B
    a = np.array([[-2.0, -0.5], [-0.5, -0.5]])
    expect = np.array([[2.0, 0.2]]) @ np.linalg.solve(-a, np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(transfer(example, 0.0), expect, rtol=1e-14)


def test_scalar_closed_form():
    sys = make_rtds([(0, [[-1.0]])], [(0.3, [[2.0]])], [(0, [[1.0]])], [(0.1, [[0.5]])])
    for w in (0.0, 0.7, 12.0):
        expect = 2 * np.exp(-0.3j * w) / (1j * w + 1) + 0.5 * np.exp(-0.1j * w)
        assert abs(transfer(sys, w)[0, 0] - expect) < 1e-14


@given(st.integers(1, 12), st.integers(0, 500), st.floats(0.0, 200.0))
@settings(max_examples=40, deadline=None)
def test_transfer_matches_direct_inverse(n, seed, w):
    sys = random_rtds(n, seed)
    assert rel_error(direct_transfer(sys, w), transfer(sys, w)) < 1e-9


def test_factors_consistent(example):
    for w in (0.1, 1.0, 10.0):
        lhs = eval_sum(example.c, w) @ g_ab(example, w)
        rhs = g_ca(example, w) @ eval_sum(example.b, w)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-13)


def test_eval_sum_batch(example):
    ws = np.array([0.0, 0.5, 3.0])
    batch = eval_sum_batch(example.a, ws)
    for k, w in enumerate(ws):
        np.testing.assert_allclose(batch[k], eval_sum(example.a, w), atol=1e-15)


def test_singular_resolvent_reports_frequency():
    # pure integrator: jwI - A(jw) vanishes at w = 0
    sys = make_rtds([(0, [[0.0]])], [(0, [[1.0]])], [(0, [[1.0]])])
    with pytest.raises(SingularResolventError) as info:
        transfer(sys, 0.0)
    assert info.value.omega == 0.0
    assert isinstance(info.value, ArithmeticError)


def test_default_grid():
    g = default_grid()
    assert len(g) == 400 and g[0] == pytest.approx(1e-2) and g[-1] == pytest.approx(1e2)


def test_freq_grid_threads_agree(example):
    ws = default_grid(1e-2, 1e2, 50)
    one = freq_grid(example, ws, threads=1).values
    many = freq_grid(example, ws, threads=4).values
    assert np.array_equal(one, many)


@pytest.mark.parametrize("ws", [[1.0, 0.5], [], [[1.0]], [0.0, np.inf]])
def test_freq_grid_rejects_bad_grid(example, ws):
    with pytest.raises(ValueError):
        freq_grid(example, ws)


def test_sigma_descending():
    sys = random_rtds(4, 3)
    fr = freq_grid(sys, default_grid(1e-1, 10, 20))
    sv = sigma_data(fr)
    assert sv.shape == (20, 3)
    assert np.all(np.diff(sv, axis=1) <= 1e-12)


def test_bode_phase_unwrapped():
    # pure delay e^{-jw}: phase keeps falling linearly past -180 degrees
    sys = make_rtds([(0, [[-1.0]])], [(1.0, [[1.0]])], [(0, [[1.0]])])
    ws = np.linspace(0.01, 20, 2000)
    _, phase = bode_data(freq_grid(sys, ws))
    expect = -np.degrees(ws + np.arctan(ws))
    np.testing.assert_allclose(phase[:, 0, 0], expect, atol=1e-9)


def _read(buf):
    return list(csv.reader(io.StringIO(buf.getvalue())))


def test_csv_headers_and_precision():
    sys = random_rtds(3, 0)
    fr = freq_grid(sys, [0.5, 2.0])
    buf = io.StringIO()
    write_freqresp_csv(fr, buf)
    rows = _read(buf)
    assert rows[0][:5] == ["omega", "re_1_1", "im_1_1", "re_2_1", "im_2_1"]
    assert len(rows[0]) == 1 + 2 * 9
    g = fr.values
    assert float(rows[1][1]) == g[0, 0, 0].real
    assert float(rows[2][4]) == g[1, 1, 0].imag

    buf = io.StringIO()
    write_bode_csv(fr, buf)
    assert _read(buf)[0][:3] == ["omega", "mag_db_1_1", "phase_deg_1_1"]
    buf = io.StringIO()
    write_sigma_csv(fr, buf)
    assert _read(buf)[0] == ["omega", "sv_1", "sv_2", "sv_3"]


def test_csv_multiple_systems(example, tmp_path):
    ws = [0.1, 1.0]
    frs = [freq_grid(example, ws), freq_grid(example.renamed("copy"), ws)]
    path = tmp_path / "s.csv"
    write_sigma_csv(frs, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["system", "omega", "sv_1"]
    assert [r[0] for r in rows[1:]] == ["example", "example", "copy", "copy"]


def test_response_requires_increasing():
    fr = freq_grid(make_rtds([(0, [[-1.0]])], [(0, [[1.0]])], [(0, [[1.0]])]), [1.0, 2.0])
    with pytest.raises(ValueError):
        FreqResponse(fr.samples[::-1])
