"""Independent reference implementations used as test oracles.

Everything here is deliberately written in plain Python/numpy loops, separate
from the package's torch code paths, so each comparison is a genuine
two-route check.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def collapse_ctc_path(path, blank: int) -> list[int]:
    """Collapse adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return out


def ctc_brute_force_loss(probs: np.ndarray, target: list[int]) -> float:
    """-log of the total probability over all alignments, by enumeration.

    probs: (T, K+1) per-column probability rows, blank at the last index.
    """
    t, k1 = probs.shape
    blank = k1 - 1
    total = 0.0
    for path in itertools.product(range(k1), repeat=t):
        if collapse_ctc_path(path, blank) == list(target):
            p = 1.0
            for step, cls in enumerate(path):
                p *= probs[step, cls]
            total += p
    if total <= 0.0:
        return math.inf
    return -math.log(total)


def cross_entropy_scalar(logits: np.ndarray, target: list[int]) -> float:
    """Mean per-row -log softmax probability, computed with scalar loops."""
    total = 0.0
    for row, cls in zip(logits, target):
        m = max(row)
        denom = sum(math.exp(v - m) for v in row)
        total += -(row[cls] - m - math.log(denom))
    return total / len(target)


def entropy_loss_scalar(maps: np.ndarray) -> float:
    """Normalized rollout entropy via scalar loops; 0*log 0 contributes 0."""
    l, s = maps.shape
    acc = 0.0
    for row in maps:
        for p in row:
            if p > 0.0:
                acc += p * math.log(p)
    return -acc / (l * math.log(1.0 + s))


def sharpen_scalar(row: list[float], alpha: float) -> list[float]:
    """exp(alpha x) - 1 renormalization with scalar math."""
    num = [math.exp(alpha * x) - 1.0 for x in row]
    denom = sum(num)
    return [v / denom for v in num]


def temperature_softmax_scalar(row: list[float], alpha: float) -> list[float]:
    """Plain temperature softmax, the flattening contrast case."""
    num = [math.exp(alpha * x) for x in row]
    denom = sum(num)
    return [v / denom for v in num]


def rollout_by_matrix_power(a0: np.ndarray, nmat: np.ndarray, j: int) -> np.ndarray:
    """A_0 N^j computed through an explicit matrix power."""
    return a0 @ np.linalg.matrix_power(nmat, j)


def layer_norm_np(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                  eps: float = 1e-5) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * weight + bias


def gelu_np(x: np.ndarray) -> np.ndarray:
    from scipy.special import erf
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def full_attention_layer_np(x: np.ndarray, weights: dict[str, np.ndarray]) -> np.ndarray:
    """Unwindowed post-norm transformer layer in numpy.

    Matches the package layer when the window spans the whole sequence.
    weights keys follow the checkpoint names minus their prefix:
    q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, ln1_w, ln1_b, ln2_w, ln2_b,
    ff1_w, ff1_b, ff2_w, ff2_b, plus integer 'heads'.
    """
    l, c = x.shape
    h = weights["heads"]
    dh = c // h
    q = (x @ weights["q_w"] + weights["q_b"]).reshape(l, h, dh).transpose(1, 0, 2)
    k = (x @ weights["k_w"] + weights["k_b"]).reshape(l, h, dh).transpose(1, 0, 2)
    v = (x @ weights["v_w"] + weights["v_b"]).reshape(l, h, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(l, c)
    y = layer_norm_np(x + ctx @ weights["o_w"] + weights["o_b"],
                      weights["ln1_w"], weights["ln1_b"])
    ff = gelu_np(y @ weights["ff1_w"] + weights["ff1_b"]) @ weights["ff2_w"] + weights["ff2_b"]
    return layer_norm_np(y + ff, weights["ln2_w"], weights["ln2_b"])


def central_difference_grads(loss_fn, params, step: float = 1e-5) -> list[np.ndarray]:
    """Finite-difference gradient of loss_fn() w.r.t. each torch parameter.

    Perturbs every element in place; loss_fn must re-run the full forward.
    """
    grads = []
    for p in params:
        flat = p.detach().view(-1)
        g = np.zeros(flat.numel())
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + step
            up = float(loss_fn())
            flat[i] = orig - step
            down = float(loss_fn())
            flat[i] = orig
            g[i] = (up - down) / (2.0 * step)
        grads.append(g.reshape(tuple(p.shape)))
    return grads
