import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qesn import circuit, response
from qesn.circuit import QesnConfig

SMALL = QesnConfig(n_q=4, c=1)


# probes


def test_step_probe():
    x = response.gen_probe("step", 100)
    assert np.all(x[:50] == 0) and np.all(x[50:] == 1)


def test_ramp_probe():
    assert np.allclose(response.gen_probe("ramp", 3), [0, 0.5, 1])


@given(st.integers(2, 400), st.floats(2, 50), st.floats(0, 0.5))
def test_sinusoid_in_unit_interval(length, period, amp):
    x = response.gen_probe("sinusoid", length, period=period, amplitude=amp)
    assert x.min() >= 0 and x.max() <= 1


@pytest.mark.parametrize("kind,params", [("square", {}), ("step", {"transition": 0}), ("ramp", {"slope": -1}), ("sinusoid", {"period": 0})])
def test_invalid_probe(kind, params):
    with pytest.raises(ValueError):
        response.gen_probe(kind, 50, **params)


# rise time


def test_instant_jump():
    f = np.zeros((60, 3))
    f[30:] = [0.2, 0.5, 0.3]
    assert response.rise_time(f, 30) <= 1


@pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
def test_exponential_settling(scale):
    transition, eps = 20, 0.02
    t = np.arange(120)
    row = np.where(t >= transition, scale * (1 - 2.0 ** -(t - transition).clip(0)), 0.0)
    f = row[:, None]
    want = math.ceil(math.log2(scale / eps))
    assert abs(response.rise_time(f, transition, eps) - want) <= 1


def test_unsettled_series():
    f = np.zeros((60, 1))
    f[-1] = 1.0
    assert response.rise_time(f, 30) is None


# harmonics


def test_pure_tone_has_no_harmonics():
    t = np.arange(200)
    f = np.sin(2 * np.pi * t / 20)[:, None]
    assert response.harmonic_fraction(f, 20)[0] < 1e-20


def test_second_harmonic_fraction():
    t = np.arange(200)
    f = (np.sin(2 * np.pi * t / 20) + 0.5 * np.sin(4 * np.pi * t / 20))[:, None]
    # energies 1 : 0.25
    assert math.isclose(response.harmonic_fraction(f, 20)[0], 0.2, rel_tol=1e-9)


def test_flat_columns_ignored():
    t = np.arange(200)
    f = np.stack([np.sin(2 * np.pi * t / 20), 1e-9 * np.sin(4 * np.pi * t / 20)], axis=1)
    assert response.harmonic_fraction(f, 20)[1] == 0.0


# sampling and sparsity bookkeeping


def test_sample_counts_rows_sum_to_one():
    p = np.array([[0.5, 0.5, 0, 0], [0.1, 0.2, 0.3, 0.4]])
    s = response.sample_counts(p, 1000, np.random.default_rng(0))
    assert np.allclose(s.sum(axis=1), 1)
    assert np.all(s[0, 2:] == 0)


def test_entangling_fraction():
    w0 = circuit.init_weights(QesnConfig(n_q=12, kappa=0.0))
    w1 = circuit.init_weights(QesnConfig(n_q=12, kappa=1.0))
    assert response.entangling_gate_fraction(w0, False) == 0.0
    assert response.entangling_gate_fraction(w1, False) == 18 / 24
    assert response.entangling_gate_fraction(w1, True) == 1.0


# sweeps


@pytest.fixture(scope="module")
def small_sweep():
    return response.sparsity_sweep(config=SMALL, length=60, shots=2000, washout=5)


def test_sweep_has_twelve_cells(small_sweep):
    assert len(small_sweep.cells) == 12
    labels = sorted({c.label for c in small_sweep.cells})
    assert labels == ["0%", "100% (decoupled)", "29%", "42%"]


def test_sweep_decoupled_is_instant(small_sweep):
    cell = small_sweep.cell("step", "100% (decoupled)")
    assert cell.drop_cnot and cell.rise_time <= 1
    assert "CNOT" not in cell.gate_counts and "CRZ" not in cell.gate_counts


def test_sweep_entangled_has_memory(small_sweep):
    for label in ("0%", "29%", "42%"):
        assert small_sweep.cell("step", label).rise_time >= 2


def test_sweep_report_json(small_sweep):
    doc = json.loads(small_sweep.to_json())
    assert len(doc["cells"]) == 12
    assert doc["settings"]["transition"] == 30


def test_cell_csv_layout(small_sweep):
    lines = response.cell_csv(small_sweep.cells[0]).splitlines()
    assert lines[0] == "t,00,01,10,11,z_exp_0,z_exp_1"
    assert len(lines) == 61


def test_sweep_independent_of_workers():
    a = response.sparsity_sweep(("ramp",), (0.0, 1.0), config=SMALL, length=40, shots=500, washout=5)
    b = response.sparsity_sweep(("ramp",), (0.0, 1.0), config=SMALL, length=40, shots=500, washout=5, workers=2)
    assert a.to_json() == b.to_json()
    for ca, cb in zip(a.cells, b.cells):
        assert np.array_equal(ca.sampled, cb.sampled)


def test_repeat_block_sweep():
    rep = response.repeat_block_sweep(n_c_values=(1, 2, 3), config=QesnConfig(n_q=4, c=1, kappa=0.29), length=60, shots=1000, washout=5)
    assert len(rep.cells) == 9
    base = rep.cell("ramp", "n_c=1").gate_counts
    for n_c in (2, 3):
        counts = rep.cell("ramp", f"n_c={n_c}").gate_counts
        assert counts == {k: n_c * v for k, v in base.items()}
    d = np.abs(rep.cell("sinusoid", "n_c=1").probabilities - rep.cell("sinusoid", "n_c=3").probabilities).sum()
    assert d > 1e-6
    assert isinstance(rep.flags, list)


def test_plot_is_svg(small_sweep):
    svg = response.cell_plot(small_sweep.cells[0])
    assert svg.startswith("<svg") and svg.count("<polyline") == 2 + 4
