import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbind.circuit import build_model, init_params
from qbind.encode import EncodedSet
from qbind.errors import InputError, ProtocolError
from qbind.grad import forward_many, loss_and_grad
from qbind.train import (
    PHYS,
    TrainConfig,
    TrialReport,
    check_disjoint,
    dg_to_pkd,
    mse_loss,
    pkd_to_dg,
    run_protocol,
    select_best,
    train_one,
)

finite = st.floats(-20, 20)


def test_pkd_to_dg_values():
    assert pkd_to_dg(0.0) == 0.0
    # ln(10) * 1.987e-3 * 298 evaluated with mpmath at 30 digits
    assert abs(pkd_to_dg(1.0) - (-1.3634205007741923)) < 1e-14
    assert abs(pkd_to_dg(6.0) - (-8.18047)) < 1e-4
    assert abs(PHYS.rt_ln10 - 2.302585 * 1.987e-3 * 298) < 1e-6
    with pytest.raises(InputError):
        pkd_to_dg(float("inf"))


@given(finite, finite)
def test_pkd_to_dg_linear(a, b):
    assert abs(pkd_to_dg(a + b) - pkd_to_dg(a) - pkd_to_dg(b)) < 1e-12


@given(finite)
def test_dg_pkd_roundtrip(p):
    assert abs(dg_to_pkd(pkd_to_dg(p)) - p) < 1e-12


def test_mse_loss():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss([3.5, -1.5], [1.0, -4.0]) == 6.25
    assert mse_loss([1, 3], [0, 0]) == 5.0
    with pytest.raises(InputError):
        mse_loss([1], [1, 2])


def test_negative_gradient_is_a_descent_direction(teacher64):
    enc, y = teacher64
    c = build_model(2)
    theta = init_params(c.n_params, 9)
    amps = enc.amplitudes()
    _, grad, _ = loss_and_grad(c, theta, amps, y)
    d = -grad / np.linalg.norm(grad)
    eps = 1e-6
    f = lambda t: mse_loss(forward_many(c, t, amps), y)  # noqa: E731
    assert (f(theta + eps * d) - f(theta - eps * d)) / (2 * eps) < 0


def one_sample(enc):
    return EncodedSet(enc.ids[:1], enc.vectors[:1], enc.pkd[:1])


def test_single_sample_descent(teacher64):
    enc, _ = teacher64
    r = train_one(one_sample(enc), TrainConfig(1e-3, seed=0, n_units=1, max_steps=50, batch_size=1))
    assert r.final_train_rmsd**2 < r.initial_train_mse
    assert not r.diverged and len(r.loss_history) == 50


def test_zero_steps_keeps_initial_params(teacher64):
    enc, _ = teacher64
    r = train_one(enc, TrainConfig(1e-3, seed=4, n_units=1, max_steps=0))
    np.testing.assert_array_equal(r.params, init_params(18, 4))
    assert r.loss_history == []


def test_training_is_deterministic_and_checkpoints_identical(teacher64, tmp_path):
    enc, _ = teacher64
    cfg = TrainConfig(1e-3, seed=2, n_units=1, max_steps=20, batch_size=8)
    a = train_one(enc, cfg, out_dir=tmp_path / "a")
    b = train_one(enc, cfg, out_dir=tmp_path / "b")
    assert a.loss_history == b.loss_history
    assert (tmp_path / "a/checkpoint.json").read_bytes() == (tmp_path / "b/checkpoint.json").read_bytes()


def test_divergence_is_reported_not_raised(teacher64):
    enc, _ = teacher64
    r = train_one(enc, TrainConfig(1e308, seed=0, n_units=1, max_steps=10))
    assert r.diverged and math.isinf(r.final_train_rmsd)


def test_adam_option_runs(teacher64):
    enc, _ = teacher64
    r = train_one(enc, TrainConfig(0.05, seed=0, n_units=1, max_steps=30, optimizer="adam"))
    assert r.final_train_rmsd**2 < r.initial_train_mse


def test_train_config_validation():
    for kwargs in ({"learning_rate": 0}, {"learning_rate": 1e-3, "batch_size": 0},
                   {"learning_rate": 1e-3, "optimizer": "lbfgs"}):
        with pytest.raises(InputError):
            TrainConfig(**kwargs)


def test_unlabelled_data_rejected(teacher64):
    enc, _ = teacher64
    bad = EncodedSet(enc.ids[:2], enc.vectors[:2], [None, 1.0])
    with pytest.raises(InputError):
        train_one(bad, TrainConfig(1e-3, max_steps=1))


def fake(lr, seed, rmsd, diverged=False):
    return TrialReport(TrainConfig(lr, seed), rmsd, [], diverged=diverged)


def test_select_best_argmin_and_ties():
    reports = [fake(1e-5, 0, 2.0), fake(1e-6, 1, 1.5), fake(1e-7, 2, 1.7), fake(3e-5, 0, 0.1, diverged=True)]
    assert select_best(reports) is reports[1]
    tied = [fake(1e-5, 1, 1.0), fake(1e-6, 2, 1.0), fake(1e-6, 0, 1.0)]
    assert select_best(tied) is tied[2]
    with pytest.raises(ProtocolError):
        select_best([fake(1e-5, 0, float("inf"), diverged=True)])


def test_protocol_with_injected_trainer(teacher64):
    enc, _ = teacher64
    seen = []

    def trainer(dataset, cfg, circuit, out_dir):
        seen.append((cfg.learning_rate, cfg.seed))
        return fake(cfg.learning_rate, cfg.seed, 10.0 - cfg.seed + cfg.learning_rate)

    res = run_protocol(enc, 1, trainer=trainer)
    assert len(res.trials) == 12 and len(set(seen)) == 12
    assert (res.best.config.learning_rate, res.best.config.seed) == (1e-7, 2)
    assert res.table().count("\n") == 13


def test_disjoint_split_enforced():
    check_disjoint(["a", "b"], ["c"])
    with pytest.raises(InputError):
        check_disjoint(["a", "b"], ["b", "c"])
