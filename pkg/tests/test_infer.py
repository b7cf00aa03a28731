import math

import numpy as np
import pytest

from qbind.circuit import CircuitSpec, build_model, init_params
from qbind.errors import InputError
from qbind.infer import (
    BatchInput,
    ShotConfig,
    metrics,
    predict_batch,
    predict_block_diagonal,
    predict_full,
    predict_noisy,
    predict_noisy_many,
    predict_shots,
)
from qbind.qcore import Gate, NoiseSpec, StateVector

from conftest import random_state

EMPTY9 = CircuitSpec(9, (), 0)


def state_with_y0(y0):
    amps = np.zeros(512)
    amps[0], amps[1] = math.sqrt(y0), math.sqrt(1 - y0)
    return StateVector(9, amps)


def test_full_readout_arithmetic():
    assert predict_full(EMPTY9, [], StateVector.basis(9, 0)) == 100.0
    assert predict_full(EMPTY9, [], StateVector.basis(9, 1)) == -100.0
    assert abs(predict_full(EMPTY9, [], state_with_y0(0.5))) < 1e-12
    assert abs(predict_full(EMPTY9, [], state_with_y0(0.45)) - (-10.0)) < 1e-12


def test_full_rejects_unnormalised():
    with pytest.raises(InputError):
        predict_full(EMPTY9, [], np.full(512, 0.1))


def test_shots_degenerate_and_seeded():
    for n, seed in [(1, 0), (10, 3), (100000, 99)]:
        assert predict_shots(EMPTY9, [], StateVector.basis(9), ShotConfig(n, seed)) == 100.0
    x = state_with_y0(0.3)
    a = predict_shots(EMPTY9, [], x, ShotConfig(10000, 7))
    assert a == predict_shots(EMPTY9, [], x, ShotConfig(10000, 7))
    assert a != predict_shots(EMPTY9, [], x, ShotConfig(10000, 8))
    with pytest.raises(InputError):
        ShotConfig(0)


def test_shot_mean_converges_to_exact():
    c = build_model(2)
    theta = init_params(c.n_params, 5)
    x = random_state(np.random.default_rng(5), 9)
    exact = predict_full(c, theta, x)
    est = [predict_shots(c, theta, x, ShotConfig(100000, s)) for s in range(1000)]
    assert abs(np.mean(est) - exact) < 0.05


def test_zero_noise_matches_full(rng):
    c = build_model(2)
    theta = init_params(c.n_params, 1)
    x = random_state(rng, 9)
    assert abs(predict_noisy(c, theta, x, NoiseSpec(0, 0)) - predict_full(c, theta, x)) < 1e-9


def test_depolarized_single_qubit_model_reads_zero():
    c = CircuitSpec(1, (Gate("RX", 0, param_slot=0),), 1)
    assert abs(predict_noisy(c, [0.3], StateVector.basis(1), NoiseSpec(p_depol=0.75))) < 1e-13


def test_noise_shrinks_output_monotonically():
    c = CircuitSpec(1, tuple(Gate("RX", 0, param_slot=k) for k in range(6)), 6)
    theta = [0.1] * 6
    vals = [abs(predict_noisy(c, theta, StateVector.basis(1), NoiseSpec(0, p))) for p in np.linspace(0, 0.5, 11)]
    assert np.all(np.diff(vals) < 0)


def test_schrodinger_and_heisenberg_noisy_paths_agree(rng):
    c = build_model(1)
    theta = init_params(c.n_params, 2)
    xs = [random_state(rng, 9) for _ in range(2)]
    noise = NoiseSpec(0.001, 0.0005)
    many = predict_noisy_many(c, theta, xs, noise)
    for x, v in zip(xs, many):
        assert abs(predict_noisy(c, theta, x, noise) - v) < 1e-10


@pytest.mark.parametrize("width", [1, 2, 7, 16, 40])
def test_batch_equals_sequential_bitwise(rng, width):
    c = build_model(3)
    theta = init_params(c.n_params, 3)
    xs = [random_state(rng, 9) for _ in range(16)]
    seq = np.array([predict_full(c, theta, x) for x in xs])
    np.testing.assert_array_equal(predict_batch(c, theta, xs, width=width), seq)


def test_batch_small_cases(rng):
    c = build_model(1)
    theta = init_params(c.n_params, 0)
    x = random_state(rng, 9)
    assert predict_batch(c, theta, [x])[0] == predict_full(c, theta, x)
    a, b = predict_batch(c, theta, BatchInput(1, [x, x]))
    assert a == b
    assert predict_batch(c, theta, []).shape == (0,)


@pytest.mark.parametrize("m,count", [(0, 1), (1, 2), (2, 3), (2, 4)])
def test_block_diagonal_reference(rng, m, count):
    c = build_model(2)
    theta = init_params(c.n_params, 4)
    batch = BatchInput(m, [random_state(rng, 9) for _ in range(count)])
    ref = predict_block_diagonal(c, theta, batch)
    assert np.max(np.abs(ref - predict_batch(c, theta, batch))) < 1e-12


def test_batch_input_validation():
    with pytest.raises(InputError):
        BatchInput(1, [0, 0, 0])
    assert BatchInput.for_inputs(range(5)).m == 3


def test_metrics_examples():
    assert metrics([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]) == (0.0, pytest.approx(1.0))
    truth = np.array([0.5, -1.0, 3.0, 2.0])
    rmsd, pcc = metrics(2 * truth + 3, truth)
    assert rmsd > 0 and abs(pcc - 1) < 1e-12
    rmsd, pcc = metrics([0, 1, 2], [0, 2, 4])
    assert abs(rmsd - math.sqrt(5 / 3)) < 1e-12 and abs(pcc - 1) < 1e-12
    assert abs(rmsd - 1.29099) < 1e-5


def test_metrics_errors():
    with pytest.raises(InputError):
        metrics([1, 2], [1, 2, 3])
    with pytest.raises(InputError):
        metrics([1, 2], [3, 3])
