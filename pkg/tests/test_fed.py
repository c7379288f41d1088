import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedtheft import cost, fed, nn
from fedtheft import rng as R
from fedtheft.dataio import Dataset
from fedtheft.partition import ClientShard


def flat_equal(a, b):
    return np.array_equal(nn.flatten(a), nn.flatten(b))


def log_rows(logs):
    # everything a RoundLog carries, as comparable plain values
    return [
        (e.round, e.lr, e.client_losses, e.test_loss, e.metrics.accuracy, e.metrics.auc, e.metrics.roc_points, e.cum_comm_bytes)
        for e in logs
    ]


# --- lr schedule --------------------------------------------------------------


def test_lr_schedule_values():
    assert fed.lr_schedule(0.01, 0.99, 0) == 0.01
    assert fed.lr_schedule(0.01, 1.0, 37) == 0.01
    assert abs(fed.lr_schedule(0.01, 0.99, 79) - 0.01 * 0.99**79) <= 1e-18
    assert abs(fed.lr_schedule(0.01, 0.99, 79) - 0.0045204) < 1e-7
    with pytest.raises(ValueError):
        fed.lr_schedule(0.01, 0.99, -1)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-5, 1.0), st.floats(0.5, 1.0), st.integers(0, 200))
def test_lr_schedule_nonincreasing(lr0, gamma, r):
    assert fed.lr_schedule(lr0, gamma, r + 1) <= fed.lr_schedule(lr0, gamma, r) <= lr0


def test_rounds_use_exponent_r_minus_1(small_split):
    cfg = fed.FedConfig(k_clients=2, rounds=3, local_epochs=1, lr0=0.02, lr_decay=0.5)
    _, logs = fed.run_federated(cfg, small_split.train, small_split.test)
    assert [e.lr for e in logs] == [0.02, 0.01, 0.005]


# --- config -------------------------------------------------------------------


def test_default_config_values():
    c = fed.FedConfig()
    assert (c.k_clients, c.rounds, c.local_epochs, c.lr0, c.lr_decay, c.noise_std, c.batch_size) == (
        3, 80, 3, 0.01, 0.99, 0.0, 64,
    )
    assert (c.seed, c.partition_mode, c.shards_per_client, c.weighted_avg) == (0, "iid", 1, False)


def test_reference_protocol_config():
    c = fed.FedConfig(k_clients=2, rounds=80, local_epochs=3, lr0=0.01)
    assert c.to_dict()["rounds"] == 80 and c.to_dict()["local_epochs"] == 3


@pytest.mark.parametrize(
    "kw",
    [
        {"k_clients": 0},
        {"rounds": 0},
        {"local_epochs": -1},
        {"lr0": 0.0},
        {"lr_decay": 0.0},
        {"lr_decay": 1.5},
        {"noise_std": -0.1},
        {"noise_std": float("nan")},
        {"batch_size": 0},
        {"shards_per_client": 0},
        {"partition_mode": "dirichlet"},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        fed.FedConfig(**kw)


# --- local training ---------------------------------------------------------


def tiny_train(n=20, d=3, seed=0):
    g = np.random.default_rng(seed)
    y = np.arange(n) % 2
    return Dataset(g.normal(size=(n, d)) + y[:, None], y, np.zeros((n, d), bool), [f"f{i}" for i in range(d)])


def test_local_train_zero_epochs_is_identity():
    data = tiny_train()
    start = nn.init_params(3, 0)
    out, loss = fed.local_train(start, ClientShard(0, np.arange(20)), data, 0, 0.1, 4, R.stream(0, 5))
    assert flat_equal(out, start) and math.isnan(loss)


def test_local_train_zero_lr_is_identity():
    data = tiny_train()
    start = nn.init_params(3, 0)
    out, loss = fed.local_train(start, ClientShard(0, np.arange(20)), data, 2, 0.0, 4, R.stream(0, 5))
    assert flat_equal(out, start) and math.isfinite(loss)


def test_local_train_single_batch_equals_manual_step():
    data = tiny_train()
    rows = np.arange(3, 17)
    start = nn.init_params(3, 1)
    out, loss = fed.local_train(start, ClientShard(0, rows), data, 1, 0.05, 64, R.stream(9, 5))
    perm = R.stream(9, 5).permutation(rows.size)
    x, y = data.features[rows][perm], data.labels[rows][perm]
    _, cache = nn.forward(start, x)
    manual = nn.sgd_step(start, nn.backward(start, cache, y), 0.05)
    assert flat_equal(out, manual)
    assert loss == nn.loss_from_logits(cache.logits, y)


def test_local_train_keeps_short_final_batch():
    data = tiny_train(n=10)
    start = nn.init_params(3, 2)
    calls = []
    real = nn.sgd_step

    def spy(p, g, lr):
        calls.append(1)
        return real(p, g, lr)

    nn_sgd, nn.sgd_step = nn.sgd_step, spy
    try:
        fed.local_train(start, ClientShard(0, np.arange(10)), data, 2, 0.1, 4, R.stream(0, 5))
    finally:
        nn.sgd_step = nn_sgd
    assert len(calls) == 2 * 3  # ceil(10 / 4) steps per epoch


def test_local_train_empty_shard():
    with pytest.raises(ValueError):
        fed.local_train(nn.zeros(3), ClientShard(4, np.array([], dtype=int)), tiny_train(), 1, 0.1, 4, R.stream(0))


# --- noise ----------------------------------------------------------------------


def test_noise_sigma_zero_is_identity_and_draws_nothing():
    p = nn.init_params(5, 0)
    g = R.stream(1, 6)
    assert fed.add_gaussian_noise(p, 0.0, g) is p
    assert g.random() == R.stream(1, 6).random()


def test_noise_moments():
    d = 900  # 128 * 900 + 8514 > 1e5 entries
    p = nn.zeros(d)
    noisy = nn.flatten(fed.add_gaussian_noise(p, 0.5, R.stream(3, 6)))
    n = noisy.size
    assert n >= 100_000
    assert abs(noisy.mean()) < 4 * 0.5 / math.sqrt(n)
    # sample variance has sd about sigma^2 * sqrt(2 / n)
    assert abs(noisy.var() - 0.25) < 4 * 0.25 * math.sqrt(2 / n)


def test_noise_deterministic_and_rejects_negative():
    p = nn.init_params(4, 0)
    a = fed.add_gaussian_noise(p, 0.1, R.stream(2, 6, 1, 0))
    b = fed.add_gaussian_noise(p, 0.1, R.stream(2, 6, 1, 0))
    c = fed.add_gaussian_noise(p, 0.1, R.stream(2, 6, 1, 1))
    assert flat_equal(a, b) and not flat_equal(a, c)
    with pytest.raises(ValueError):
        fed.add_gaussian_noise(p, -1.0, R.stream(0))


# --- fedavg ---------------------------------------------------------------------


def test_fedavg_identical_inputs_exact():
    p = nn.init_params(6, 3).map(lambda t: t + 0.1)
    for k in (1, 2, 3, 5, 7):
        assert flat_equal(fed.fedavg([p] * k), p)
        assert flat_equal(fed.fedavg([p] * k, weights=list(range(1, k + 1))), p)


def test_fedavg_arithmetic():
    d = 2
    zero = nn.zeros(d)
    two = zero.map(lambda t: t + 2.0)
    assert np.all(nn.flatten(fed.fedavg([zero, two])) == 1.0)
    assert np.all(nn.flatten(fed.fedavg([zero, two], weights=[3, 1])) == 0.5)
    assert flat_equal(fed.fedavg([zero, two], weights=[0, 1]), two)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32))
def test_fedavg_is_vector_mean(k, seed):
    ps = [nn.init_params(3, seed + i).map(lambda t: t + 0.01) for i in range(k)]
    # correctly rounded elementwise mean of the flattened vectors
    mean = np.array([math.fsum(col) / k for col in zip(*(nn.flatten(p) for p in ps))])
    assert np.abs(nn.flatten(fed.fedavg(ps)) - mean).max() <= 1e-15


def test_fedavg_errors():
    with pytest.raises(ValueError):
        fed.fedavg([])
    with pytest.raises(ValueError):
        fed.fedavg([nn.zeros(2), nn.zeros(3)])
    for w in ([1.0], [0.0, 0.0], [-1.0, 2.0], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            fed.fedavg([nn.zeros(2), nn.zeros(2)], weights=w)


# --- run_federated --------------------------------------------------------------


def test_single_client_one_round_is_centralized_training(small_split):
    cfg = fed.FedConfig(k_clients=1, rounds=1, local_epochs=2, seed=4)
    train = small_split.train
    final, logs = fed.run_federated(cfg, train, small_split.test)
    start = nn.init_params(train.d, R.derive_seed(4, R.INIT))
    manual, loss = fed.local_train(start, ClientShard(0, np.arange(train.n)), train, 2, 0.01, 64, R.stream(4, R.TRAIN, 1, 0))
    assert flat_equal(final, manual)
    assert logs[0].client_losses == [loss]


def test_reverse_schedule_bit_identical(small_split):
    cfg = fed.FedConfig(k_clients=3, rounds=3, local_epochs=1, noise_std=0.01, seed=2)
    a, la = fed.run_federated(cfg, small_split.train, small_split.test)
    b, lb = fed.run_federated(cfg, small_split.train, small_split.test, schedule=[2, 1, 0])
    c, lc = fed.run_federated(cfg, small_split.train, small_split.test, threads=3, schedule=[1, 2, 0])
    assert flat_equal(a, b) and flat_equal(a, c)
    assert log_rows(la) == log_rows(lb) == log_rows(lc)


def test_bad_schedule(small_split):
    with pytest.raises(ValueError):
        fed.run_federated(fed.FedConfig(k_clients=2, rounds=1), small_split.train, small_split.test, schedule=[0, 0])


def test_cumulative_bytes_match_cost_formula(small_split):
    cfg = fed.FedConfig(k_clients=2, rounds=4, local_epochs=1)
    _, logs = fed.run_federated(cfg, small_split.train, small_split.test)
    p = nn.param_count(small_split.train.d)
    assert [e.cum_comm_bytes for e in logs] == [cost.fl_cost(r, 2, p, 8) for r in range(1, 5)]
    assert logs[-1].cum_comm_bytes == cost.fl_cost(cfg.rounds, cfg.k_clients, p, fed.SIM_BYTES_PER_PARAM)


def test_round_logs_shape(small_split):
    cfg = fed.FedConfig(k_clients=3, rounds=2, local_epochs=1)
    seen = []
    _, logs = fed.run_federated(cfg, small_split.train, small_split.test, on_round=lambda e, p: seen.append(e.round))
    assert seen == [1, 2]
    assert all(len(e.client_losses) == 3 and math.isfinite(e.test_loss) for e in logs)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_round(small_split):
    cfg = fed.FedConfig(k_clients=2, rounds=5, local_epochs=1, noise_std=1e300)
    with pytest.raises(fed.DivergenceError) as info:
        fed.run_federated(cfg, small_split.train, small_split.test)
    assert info.value.round == 1


def test_weighted_and_noniid_modes_run(small_split):
    for mode in ("noniid_shards", "noniid_proportional"):
        cfg = fed.FedConfig(k_clients=2, rounds=1, local_epochs=1, partition_mode=mode, shards_per_client=2, weighted_avg=True)
        final, logs = fed.run_federated(cfg, small_split.train, small_split.test)
        assert final.is_finite() and len(logs) == 1


def test_dimension_and_shard_count_mismatch(small_split):
    with pytest.raises(ValueError):
        fed.run_federated(fed.FedConfig(k_clients=2, rounds=1), small_split.train, tiny_train(d=3))
    with pytest.raises(ValueError):
        fed.run_federated(
            fed.FedConfig(k_clients=2, rounds=1), small_split.train, small_split.test, shards=[ClientShard(0, np.arange(5))]
        )
