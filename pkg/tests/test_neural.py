import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from camel.errors import DomainError, TrainingDivergedError, TransferError
from camel.neural import (
    Dataset, Network, NetworkSpec, TrainingConfig, init_from_base, init_network, load_network, msle,
    param_count, save_network, train,
)

from gradcheck import gradient_probes

SMALL = NetworkSpec(6, hidden_layers=3, hidden_width=24)


def _data(rng, n=200, d=6):
    x = rng.uniform(0, 1, (n, d))
    y = 10 + 40 * x[:, 0] * x[:, 1] + 5 * x[:, 2]
    return Dataset(x, y)


def test_zero_network_outputs_ln2():
    net = init_network(SMALL)
    zero = Network(SMALL, tuple(np.zeros_like(w) for w in net.weights), tuple(np.zeros_like(b) for b in net.biases))
    assert zero.forward(np.ones(6)) == pytest.approx(math.log(2), abs=1e-12)


def test_forward_is_deterministic(rng):
    net = init_network(SMALL, 3)
    x = rng.uniform(size=(5, 6))
    assert np.array_equal(net.forward(x), net.forward(x))


def test_param_count_matches_hand_formula():
    spec = NetworkSpec(131)
    assert param_count(spec) == 131 * 260 + 260 + 6 * (260 * 260 + 260) + 260 + 1


def test_forward_rejects_wrong_width():
    with pytest.raises(DomainError):
        init_network(SMALL).forward(np.zeros(5))


def test_msle_values():
    assert msle(30, 30) == 0
    assert msle(20, 30) == pytest.approx(math.log(31 / 21) ** 2, rel=1e-12)
    # frozen from ln(31/21)^2 and ln(41/31)^2
    assert msle(20, 30) == pytest.approx(0.151683, abs=5e-7)
    assert msle(40, 30) == pytest.approx(0.078168, abs=5e-7)
    assert msle(math.e - 1, math.e - 1) == 0


@pytest.mark.parametrize("pred,target", [(0, 1), (1, 0), (-1, 5)])
def test_msle_domain(pred, target):
    with pytest.raises(DomainError):
        msle(pred, target)


@given(st.integers(5, 60), st.data())
def test_msle_penalises_underestimates_more(y, data):
    d = data.draw(st.integers(1, y - 1))
    assert msle(y - d, y) > msle(y + d, y)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradient_small_networks(activation):
    errs = gradient_probes(NetworkSpec(6, 3, 16, activation), 30, seed=2)
    assert max(errs) < 1e-4


def test_overfits_single_point(rng):
    x = rng.uniform(size=(1, 6))
    data = Dataset(x, np.array([37.0]))
    net = train(init_network(NetworkSpec(6), 0), data, TrainingConfig(epochs=500))
    assert msle(net.forward(x[0]), 37.0) < 1e-3


def test_l2_shrinks_weights(rng):
    data = _data(rng)
    base = init_network(SMALL, 1)
    free = train(base, data, TrainingConfig(epochs=20, l2_lambda=0.0))
    tight = train(base, data, TrainingConfig(epochs=20, l2_lambda=10.0))
    assert tight.weight_norm2() < free.weight_norm2()


def test_loss_trend_down():
    for seed in range(5):
        data = _data(np.random.default_rng(seed))
        net = train(init_network(SMALL, seed), data, TrainingConfig(epochs=50, seed=seed))
        assert net.history[49] < net.history[0]


def test_training_is_bit_reproducible(rng):
    data = _data(rng)
    cfg = TrainingConfig(epochs=5, seed=9)
    a = train(init_network(SMALL, 4), data, cfg)
    b = train(init_network(SMALL, 4), data, cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def test_float32_training_is_reproducible(rng):
    data = _data(rng)
    cfg = TrainingConfig(epochs=5, seed=9, dtype="float32")
    a = train(init_network(SMALL, 4), data, cfg)
    b = train(init_network(SMALL, 4), data, cfg)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert a.history[-1] < a.history[0]


def test_train_returns_new_network(rng):
    data = _data(rng)
    base = init_network(SMALL, 1)
    before = [p.copy() for p in base.params()]
    out = train(base, data, TrainingConfig(epochs=2))
    assert out is not base
    assert all(np.array_equal(p, q) for p, q in zip(base.params(), before))


def test_divergence_names_epoch(rng):
    x = rng.uniform(size=(10, 6))
    x[3, 0] = np.inf
    with pytest.raises(TrainingDivergedError, match="epoch 1"), np.errstate(invalid="ignore"):
        train(init_network(SMALL), Dataset(x, np.full(10, 30.0)), TrainingConfig(epochs=3))


def test_empty_dataset():
    with pytest.raises(DomainError):
        train(init_network(SMALL), Dataset(np.zeros((0, 6)), np.zeros(0)), TrainingConfig(epochs=1))


def test_init_from_base_copies(rng):
    base = train(init_network(SMALL, 2), _data(rng), TrainingConfig(epochs=3))
    copy = init_from_base(base, SMALL)
    x = rng.uniform(size=(20, 6))
    assert np.array_equal(copy.forward(x), base.forward(x))
    out_before = base.forward(x)
    train(copy, _data(rng), TrainingConfig(epochs=3))
    assert np.array_equal(base.forward(x), out_before)


def test_init_from_base_spec_mismatch():
    with pytest.raises(TransferError):
        init_from_base(init_network(SMALL), NetworkSpec(6, hidden_layers=3, hidden_width=25))


def test_zero_epochs_is_identity(rng):
    base = init_network(SMALL, 2)
    assert train(base, _data(rng), TrainingConfig(epochs=0)) is base


def test_save_load_is_exact(tmp_path, rng):
    net = train(init_network(SMALL, 5), _data(rng), TrainingConfig(epochs=2))
    back = load_network(save_network(net, tmp_path / "n.jsonl"))
    x = rng.uniform(size=(30, 6))
    assert back.spec == net.spec
    assert all(np.array_equal(p, q) for p, q in zip(back.params(), net.params()))
    assert np.array_equal(back.forward(x), net.forward(x))


@pytest.mark.parametrize("kwargs", [{"learning_rate": 0}, {"beta1": 1.0}, {"batch_size": 0},
                                    {"dtype": "float16"}])
def test_bad_training_config(kwargs):
    with pytest.raises(DomainError):
        TrainingConfig(**kwargs)


def test_bad_spec():
    with pytest.raises(DomainError):
        NetworkSpec(0)
    with pytest.raises(DomainError):
        NetworkSpec(3, activation="sigmoid")
