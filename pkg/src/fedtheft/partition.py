"""Splitting the training rows across simulated clients."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

PARTITION_MODES = ("iid", "noniid_shards", "noniid_proportional")


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    row_indices: np.ndarray

    def __len__(self) -> int:
        return int(self.row_indices.size)


@dataclass(frozen=True)
class ClientCounts:
    client: int
    total: int
    label0: int
    label1: int


@dataclass(frozen=True)
class PartitionReport:
    rows: list[ClientCounts]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["client", "total", "label0", "label1"])
        for r in self.rows:
            w.writerow([r.client, r.total, r.label0, r.label1])
        return buf.getvalue()

    def to_text(self) -> str:
        header = ("Client", "Samples", "Label 0", "Label 1")
        body = [(f"Client {r.client}", str(r.total), str(r.label0), str(r.label1)) for r in self.rows]
        widths = [max(len(row[i]) for row in [header, *body]) for i in range(4)]
        fmt = "  ".join("{:<%d}" % widths[0] if i == 0 else "{:>%d}" % widths[i] for i in range(4))
        return "\n".join(fmt.format(*row) for row in [header, *body])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & ((1 << 64) - 1)))


def _shards(chunks) -> list[ClientShard]:
    return [ClientShard(k, np.sort(np.asarray(c, dtype=np.int64))) for k, c in enumerate(chunks)]


def partition_iid(n_rows: int, k: int, seed: int) -> list[ClientShard]:
    """Shuffle, then cut into k contiguous chunks; the first n % k clients get one extra row."""
    if k < 1:
        raise PartitionError(f"k must be >= 1, got {k}")
    if n_rows < k:
        raise PartitionError(f"cannot give {k} clients a row each from {n_rows} rows")
    return _shards(np.array_split(_rng(seed).permutation(n_rows), k))


def partition_noniid(labels, k: int, shards_per_client: int, seed: int) -> list[ClientShard]:
    """Label-skew partition: sort by label, cut into k*shards_per_client pieces, deal them out.

    Rows within a label are shuffled before cutting; shards are dealt to
    clients by a seeded draw without replacement.
    """
    y = np.asarray(labels, dtype=np.int64)
    if k < 1 or shards_per_client < 1:
        raise PartitionError(f"k and shards_per_client must be >= 1, got {k}, {shards_per_client}")
    n_shards = k * shards_per_client
    if y.size < n_shards:
        raise PartitionError(f"{y.size} rows cannot fill {n_shards} shards")
    g = _rng(seed)
    perm = g.permutation(y.size)
    order = perm[np.argsort(y[perm], kind="stable")]
    pieces = np.array_split(order, n_shards)
    deal = g.permutation(n_shards)
    chunks = [
        np.concatenate([pieces[s] for s in deal[c * shards_per_client : (c + 1) * shards_per_client]])
        for c in range(k)
    ]
    return _shards(chunks)


def partition_proportional(labels, k: int, seed: int) -> list[ClientShard]:
    """Stratified equal split: each label's rows are shuffled and cut into k chunks.

    Every client ends up with (nearly) the global label mix; remainders of
    each label go to the lowest-indexed clients.
    """
    y = np.asarray(labels, dtype=np.int64)
    if k < 1:
        raise PartitionError(f"k must be >= 1, got {k}")
    if y.size < k:
        raise PartitionError(f"cannot give {k} clients a row each from {y.size} rows")
    g = _rng(seed)
    chunks: list[list[np.ndarray]] = [[] for _ in range(k)]
    for label in np.unique(y):
        rows = np.flatnonzero(y == label)
        for c, part in enumerate(np.array_split(rows[g.permutation(rows.size)], k)):
            chunks[c].append(part)
    return _shards(np.concatenate(c) for c in chunks)


def make_partition(mode: str, labels, k: int, seed: int, shards_per_client: int = 1) -> list[ClientShard]:
    if mode == "iid":
        return partition_iid(len(labels), k, seed)
    if mode == "noniid_shards":
        return partition_noniid(labels, k, shards_per_client, seed)
    if mode == "noniid_proportional":
        return partition_proportional(labels, k, seed)
    raise PartitionError(f"unknown partition mode {mode!r}; expected one of {PARTITION_MODES}")


def partition_report(shards: list[ClientShard], labels) -> PartitionReport:
    y = np.asarray(labels, dtype=np.int64)
    rows = []
    for s in shards:
        idx = s.row_indices
        if idx.size and (idx.min() < 0 or idx.max() >= y.size):
            raise PartitionError(f"client {s.client_id}: row index out of range [0, {y.size})")
        ones = int(y[idx].sum())
        rows.append(ClientCounts(s.client_id, int(idx.size), int(idx.size) - ones, ones))
    return PartitionReport(rows)
