"""Federated training loop: local SGD on each client, optional Gaussian noise, FedAvg."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import metrics as _metrics
from . import nn
from . import rng as _rng
from .cost import fl_cost
from .dataio import Dataset
from .partition import PARTITION_MODES, ClientShard, make_partition

log = logging.getLogger(__name__)

# the simulator ships float64 parameters
SIM_BYTES_PER_PARAM = 8


class DivergenceError(FloatingPointError):
    def __init__(self, round_: int, detail: str):
        super().__init__(f"training diverged in round {round_}: {detail}")
        self.round = round_


@dataclass(frozen=True)
class FedConfig:
    k_clients: int = 3
    rounds: int = 80
    local_epochs: int = 3
    lr0: float = 0.01
    lr_decay: float = 0.99
    noise_std: float = 0.0
    batch_size: int = 64
    seed: int = 0
    partition_mode: str = "iid"
    shards_per_client: int = 1
    weighted_avg: bool = False

    def __post_init__(self):
        if self.k_clients < 1:
            raise ValueError(f"k_clients must be >= 1, got {self.k_clients}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.shards_per_client < 1:
            raise ValueError(f"shards_per_client must be >= 1, got {self.shards_per_client}")
        if self.partition_mode not in PARTITION_MODES:
            raise ValueError(f"partition_mode must be one of {PARTITION_MODES}, got {self.partition_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RoundLog:
    round: int
    lr: float
    client_losses: list[float]
    test_loss: float
    metrics: _metrics.Metrics
    cum_comm_bytes: int


def lr_schedule(lr0: float, gamma: float, r: int) -> float:
    """lr0 * gamma**r; round index r is zero-based, so r=0 gives lr0."""
    if r < 0:
        raise ValueError(f"round index must be >= 0, got {r}")
    return lr0 * gamma**r


def local_train(
    start: nn.MlpParams,
    shard: ClientShard,
    train: Dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[nn.MlpParams, float]:
    """Run ``epochs`` shuffled minibatch SGD passes over one client's rows.

    Returns the new parameters and the mean per-batch loss of the last epoch
    (NaN when ``epochs == 0``). The final short batch of each pass is kept.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if epochs == 0:
        return start, math.nan
    rows = np.asarray(shard.row_indices, dtype=np.int64)
    if rows.size == 0:
        raise ValueError(f"client {shard.client_id} has no rows to train on")
    x = train.features[rows]
    y = train.labels[rows]
    params = start
    losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(rows.size)
        losses = []
        for i in range(0, rows.size, batch_size):
            batch = order[i : i + batch_size]
            _, cache = nn.forward(params, x[batch])
            losses.append(nn.loss_from_logits(cache.logits, y[batch]))
            params = nn.sgd_step(params, nn.backward(params, cache, y[batch]), lr)
    return params, float(np.mean(losses))


def add_gaussian_noise(params: nn.MlpParams, sigma: float, rng: np.random.Generator) -> nn.MlpParams:
    """Add i.i.d. N(0, sigma^2) to every parameter; sigma == 0 draws nothing."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return params
    return params.map(lambda t: t + rng.normal(0.0, sigma, size=t.shape))


def fedavg(client_params: Sequence[nn.MlpParams], weights: Optional[Sequence[float]] = None) -> nn.MlpParams:
    """Elementwise mean of client parameters, plain by default or weighted.

    Computed as ``p0 + sum_k w_k * (p_k - p0)`` with normalized weights, summed
    in list order; identical inputs therefore come back bit-for-bit.
    """
    if not client_params:
        raise ValueError("fedavg needs at least one client")
    d = client_params[0].d
    for p in client_params:
        if [t.shape for t in p.tensors()] != nn.shapes(d):
            raise ValueError("client parameter shapes differ")
    k = len(client_params)
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (k,) or not np.isfinite(w).all() or (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be k nonnegative finite values, not all zero")
        w = w / w.sum()
    base = client_params[0].tensors()
    out = []
    for j, b in enumerate(base):
        acc = np.zeros_like(b)
        for wk, p in zip(w[1:], client_params[1:]):
            acc += wk * (p.tensors()[j] - b)
        out.append(b + acc)
    return nn.MlpParams(*out)


def client_shards(config: FedConfig, labels) -> list[ClientShard]:
    return make_partition(
        config.partition_mode,
        labels,
        config.k_clients,
        _rng.derive_seed(config.seed, _rng.PARTITION),
        config.shards_per_client,
    )


def run_federated(
    config: FedConfig,
    train: Dataset,
    test: Dataset,
    *,
    threads: int = 1,
    shards: Optional[list[ClientShard]] = None,
    schedule: Optional[Sequence[int]] = None,
    share_streams: bool = False,
    on_round: Optional[Callable[[RoundLog, nn.MlpParams], None]] = None,
) -> tuple[nn.MlpParams, list[RoundLog]]:
    """Train a global model for ``config.rounds`` rounds and evaluate it after each.

    ``shards`` overrides the partition derived from the config. ``schedule``
    is the order in which clients are launched; results do not depend on it
    because each client draws from its own stream keyed by (seed, round,
    client) and aggregation runs in client-id order. ``share_streams`` keys
    every client's stream as client 0, which makes clients holding identical
    shards train identically. ``on_round`` receives each round's log and the
    aggregated parameters.
    """
    if train.d != test.d:
        raise ValueError(f"train has d={train.d}, test has d={test.d}")
    if shards is None:
        shards = client_shards(config, train.labels)
    if len(shards) != config.k_clients:
        raise ValueError(f"{len(shards)} shards for k_clients={config.k_clients}")
    ids = sorted(range(len(shards)), key=lambda i: shards[i].client_id)
    order = list(schedule) if schedule is not None else ids
    if sorted(order) != list(range(len(shards))):
        raise ValueError("schedule must be a permutation of client positions")
    sizes = np.array([len(s) for s in shards], dtype=np.float64)

    p_count = nn.param_count(train.d)
    params = nn.init_params(train.d, _rng.derive_seed(config.seed, _rng.INIT))
    logs: list[RoundLog] = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def client_task(i: int, r: int, lr: float, start: nn.MlpParams):
        cid = 0 if share_streams else shards[i].client_id
        local, loss = local_train(
            start,
            shards[i],
            train,
            config.local_epochs,
            lr,
            config.batch_size,
            _rng.stream(config.seed, _rng.TRAIN, r, cid),
        )
        local = add_gaussian_noise(local, config.noise_std, _rng.stream(config.seed, _rng.NOISE, r, cid))
        return local, loss

    try:
        for r in range(1, config.rounds + 1):
            lr = lr_schedule(config.lr0, config.lr_decay, r - 1)
            if pool is None:
                results = {i: client_task(i, r, lr, params) for i in order}
            else:
                futures = {i: pool.submit(client_task, i, r, lr, params) for i in order}
                results = {i: f.result() for i, f in futures.items()}

            for i in ids:
                if not results[i][0].is_finite():
                    raise DivergenceError(r, f"client {shards[i].client_id} parameters are non-finite")
            weights = sizes[ids] if config.weighted_avg else None
            params = fedavg([results[i][0] for i in ids], weights)
            if not params.is_finite():
                raise DivergenceError(r, "aggregated parameters are non-finite")

            m, test_loss = _metrics.evaluate(params, test)
            if not math.isfinite(test_loss):
                raise DivergenceError(r, "test loss is non-finite")
            entry = RoundLog(
                round=r,
                lr=lr,
                client_losses=[results[i][1] for i in ids],
                test_loss=test_loss,
                metrics=m,
                cum_comm_bytes=fl_cost(r, config.k_clients, p_count, SIM_BYTES_PER_PARAM),
            )
            logs.append(entry)
            log.info(
                "round %d lr=%.5g test_loss=%.4f acc=%.4f auc=%.4f", r, lr, test_loss, m.accuracy, m.auc
            )
            if on_round is not None:
                on_round(entry, params)
    finally:
        if pool is not None:
            pool.shutdown()
    return params, logs
