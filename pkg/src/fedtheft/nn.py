"""Three-layer MLP classifier: d -> 128 -> 64 -> 2, ReLU hidden units, softmax output.

Inputs are row-major batches (B x d), so a layer computes ``h @ W.T + b``
with ``W`` stored as (out, in). All arithmetic is float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import rng as _rng

HIDDEN1 = 128
HIDDEN2 = 64
N_CLASSES = 2
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

CHECKPOINT_MAGIC = b"FMLP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    def tensors(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def map(self, fn) -> "MlpParams":
        return MlpParams(*(fn(t) for t in self.tensors()))

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors())


# backprop output has the same six shapes
Gradients = MlpParams


@dataclass(frozen=True)
class ForwardCache:
    inputs: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def shapes(d: int) -> list[tuple[int, ...]]:
    return [(HIDDEN1, d), (HIDDEN1,), (HIDDEN2, HIDDEN1), (HIDDEN2,), (N_CLASSES, HIDDEN2), (N_CLASSES,)]


def param_count(d: int) -> int:
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return HIDDEN1 * d + HIDDEN1 + HIDDEN2 * HIDDEN1 + HIDDEN2 + N_CLASSES * HIDDEN2 + N_CLASSES


def zeros(d: int) -> MlpParams:
    return MlpParams(*(np.zeros(s) for s in shapes(d)))


def init_params(d: int, seed: int) -> MlpParams:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    g = _rng.stream(seed, _rng.INIT)
    out = []
    for s in shapes(d):
        if len(s) == 2:
            limit = np.sqrt(6.0 / s[1])
            out.append(g.uniform(-limit, limit, size=s))
        else:
            out.append(np.zeros(s))
    return MlpParams(*out)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d:
        raise ValueError(f"expected inputs of shape (B, {params.d}), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    z1 = x @ params.W1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.W2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ params.W3.T + params.b3
    probs = softmax(logits)
    return probs, ForwardCache(x, z1, a1, z2, a2, logits, probs)


def _check_labels(labels, b: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (b,):
        raise ValueError(f"expected {b} labels, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return y


def loss_ce(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true class.

    Equals the summed cross-entropy divided by the batch size. Probabilities
    are floored at the smallest normal float so a zero never reaches log.
    """
    p = np.asarray(probs, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError("non-finite probabilities")
    y = _check_labels(labels, p.shape[0])
    picked = p[np.arange(y.size), y]
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def loss_from_logits(logits: np.ndarray, labels) -> float:
    y = _check_labels(labels, logits.shape[0])
    return float(-np.mean(log_softmax(logits)[np.arange(y.size), y]))


def backward(params: MlpParams, cache: ForwardCache, labels) -> Gradients:
    """Exact gradients of the mean cross-entropy w.r.t. all six tensors."""
    b = cache.inputs.shape[0]
    if cache.inputs.shape[1] != params.d or cache.z1.shape != (b, params.W1.shape[0]):
        raise ValueError("forward cache does not match params")
    y = _check_labels(labels, b)

    dlogits = cache.probs.copy()
    dlogits[np.arange(b), y] -= 1.0
    dlogits /= b

    gW3 = dlogits.T @ cache.a2
    gb3 = dlogits.sum(axis=0)
    da2 = dlogits @ params.W3
    dz2 = da2 * (cache.z2 > 0)
    gW2 = dz2.T @ cache.a1
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ params.W2
    dz1 = da1 * (cache.z1 > 0)
    gW1 = dz1.T @ cache.inputs
    gb1 = dz1.sum(axis=0)
    return Gradients(gW1, gb1, gW2, gb2, gW3, gb3)


def sgd_step(params: MlpParams, grads: Gradients, lr: float) -> MlpParams:
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if not grads.is_finite():
        raise FloatingPointError("non-finite gradients")
    return MlpParams(*(p - lr * g for p, g in zip(params.tensors(), grads.tensors())))


def flatten(params: MlpParams) -> np.ndarray:
    """Concatenate W1, b1, W2, b2, W3, b3 in row-major order."""
    return np.concatenate([t.ravel() for t in params.tensors()])


def unflatten(vec: np.ndarray, d: int) -> MlpParams:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (param_count(d),):
        raise ValueError(f"expected a vector of length {param_count(d)} for d={d}, got shape {vec.shape}")
    out = []
    pos = 0
    for s in shapes(d):
        size = int(np.prod(s))
        out.append(vec[pos : pos + size].reshape(s).copy())
        pos += size
    return MlpParams(*out)


def save_checkpoint(params: MlpParams, path) -> None:
    """16-byte header (magic, version, d, reserved; u32 little-endian) then float64 LE payload."""
    header = CHECKPOINT_MAGIC + struct.pack("<III", CHECKPOINT_VERSION, params.d, 0)
    Path(path).write_bytes(header + flatten(params).astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    version, d, _ = struct.unpack("<III", raw[4:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    vec = np.frombuffer(raw[16:], dtype="<f8")
    if vec.size != param_count(d):
        raise ValueError(f"{path}: payload holds {vec.size} values, expected {param_count(d)}")
    return unflatten(vec.astype(np.float64), d)
