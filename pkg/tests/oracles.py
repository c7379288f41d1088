"""Reference computations the test suite checks the package against.

Nothing here calls into the code paths it is used to verify.
"""

import itertools
import math

import numpy as np


def relu(z):
    return np.where(z > 0, z, 0.0)


def mean_ce_from_logits(logits, y):
    """-(1/B) sum log softmax(logits)[y] with an explicit logsumexp; leading axes broadcast."""
    m = logits.max(axis=-1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))[..., 0]
    picked = np.take_along_axis(logits, np.broadcast_to(y[:, None], logits.shape[:-1] + (1,)), axis=-1)[..., 0]
    return (lse - picked).mean(axis=-1)


def straight_forward(W1, b1, W2, b2, W3, b3, x):
    """Layer-by-layer forward written as column-vector algebra, one sample at a time."""
    rows = []
    for xi in x:
        h1 = relu(W1 @ xi + b1)
        h2 = relu(W2 @ h1 + b2)
        o = W3 @ h2 + b3
        e = np.exp(o - o.max())
        rows.append(e / e.sum())
    return np.array(rows)


def scalar_forward(W1, b1, W2, b2, W3, b3, xi):
    """Pure-Python forward for one sample; no numpy arithmetic."""
    h1 = [max(0.0, sum(W1[i][j] * xi[j] for j in range(len(xi))) + b1[i]) for i in range(len(b1))]
    h2 = [max(0.0, sum(W2[i][j] * h1[j] for j in range(len(h1))) + b2[i]) for i in range(len(b2))]
    o = [sum(W3[i][j] * h2[j] for j in range(len(h2))) + b3[i] for i in range(len(b3))]
    m = max(o)
    e = [math.exp(v - m) for v in o]
    s = sum(e)
    return [v / s for v in e]


def fd_gradients(W1, b1, W2, b2, W3, b3, x, y, h=1e-5):
    """Central differences of the mean cross-entropy for every parameter entry.

    Each perturbed loss is re-evaluated from the layer the entry feeds into,
    vectorized over all entries of one tensor.
    """
    z1 = x @ W1.T + b1
    a1 = relu(z1)
    z2 = a1 @ W2.T + b2
    a2 = relu(z2)
    logits = a2 @ W3.T + b3

    def from_z1(z1p):
        return from_z2(relu(z1p) @ W2.T + b2)

    def from_z2(z2p):
        return from_logits(relu(z2p) @ W3.T + b3)

    def from_logits(lp):
        return mean_ce_from_logits(lp, y)

    def fd(base, src, shape, tail):
        # base: (B, n_out); src: (B, n_in) input multiplying the weight, or None for a bias
        n_out = base.shape[1]
        n_in = 1 if src is None else src.shape[1]
        out = np.empty(n_out * n_in)
        idx = 0
        for i in range(n_out):
            delta = np.ones((n_in, base.shape[0])) if src is None else src.T  # (n_in, B)
            plus = np.repeat(base[None], n_in, axis=0)
            minus = plus.copy()
            plus[:, :, i] += h * delta
            minus[:, :, i] -= h * delta
            out[idx : idx + n_in] = (tail(plus) - tail(minus)) / (2 * h)
            idx += n_in
        return out.reshape(shape)

    return (
        fd(z1, x, W1.shape, from_z1),
        fd(z1, None, b1.shape, from_z1),
        fd(z2, a1, W2.shape, from_z2),
        fd(z2, None, b2.shape, from_z2),
        fd(logits, a2, W3.shape, from_logits),
        fd(logits, None, b3.shape, from_logits),
    )


def max_rel_error(analytic, numeric, floor=1e-6):
    """max |a - n| / max(|a|, |n|, floor) over all entries.

    Central differences at h=1e-5 carry ~1e-10 absolute round-off, so the
    floor keeps entries below that noise from being judged relatively.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / den).max()))
    return worst


def pairwise_auc(scores, labels):
    """P(s+ > s-) + 0.5 P(s+ = s-) by enumerating every positive/negative pair."""
    pos = [s for s, t in zip(scores, labels) if t == 1]
    neg = [s for s, t in zip(scores, labels) if t == 0]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def pairwise_auc_np(scores, labels):
    s = np.asarray(scores, dtype=float)
    t = np.asarray(labels)
    p = s[t == 1][:, None]
    q = s[t == 0][None, :]
    return float(((p > q).sum() + 0.5 * (p == q).sum()) / (p.size * q.size))


def tally(preds, truths):
    tp = tn = fp = fn = 0
    for p, t in zip(preds, truths):
        if p == 1 and t == 1:
            tp += 1
        elif p == 0 and t == 0:
            tn += 1
        elif p == 1:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def f1_weighted_direct(preds, truths):
    """Support-weighted F1 from per-class precision/recall written out longhand."""
    total = 0.0
    support_sum = 0
    for cls in (0, 1):
        tp = sum(1 for p, t in zip(preds, truths) if p == cls and t == cls)
        fp = sum(1 for p, t in zip(preds, truths) if p == cls and t != cls)
        fn = sum(1 for p, t in zip(preds, truths) if p != cls and t == cls)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        support = sum(1 for t in truths if t == cls)
        total += support * f1
        support_sum += support
    return total / support_sum


def roc_by_threshold(scores, labels):
    """(fpr, tpr) for 'score >= thr' at every distinct score, descending, plus (0, 0)."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(labels)
    P = (t == 1).sum()
    N = (t == 0).sum()
    pts = [(0.0, 0.0)]
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        pts.append((float((pred & (t == 0)).sum() / N), float((pred & (t == 1)).sum() / P)))
    return pts
