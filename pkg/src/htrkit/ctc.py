"""CTC loss by log-space forward-backward, plus greedy decoding and a
path-enumeration oracle.

Blank is class 0 everywhere; charset characters start at id 1. The loss for
one sample is nll = -log sum over all frame paths collapsing to the target,
where collapse merges adjacent repeats then drops blanks.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np

from .tensor import Tensor, record

BLANK = 0


def extended_label(target) -> np.ndarray:
    """Interleave blanks around the target: length 2U+1, blanks at even slots."""
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        raise ValueError("empty target")
    ext = np.full(2 * target.size + 1, BLANK, dtype=np.int64)
    ext[1::2] = target
    return ext


def ctc_tables(logp: np.ndarray, ext: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """alpha/beta in log space; both include the emission at their own frame,
    so sum_s exp(alpha[t,s] + beta[t,s] - logp[t, ext[s]]) = P(target) for all t."""
    T = logp.shape[0]
    S = ext.size
    # states allowed to skip from s-2: labelled, and different from ext[s-2]
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])

    emit = logp[:, ext]  # (T, S)
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.full(S, -np.inf)
        step[1:] = prev[:-1]
        jump = np.full(S, -np.inf)
        jump[2:] = np.where(skip[2:], prev[:-2], -np.inf)
        alpha[t] = emit[t] + np.logaddexp(np.logaddexp(stay, step), jump)

    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.full(S, -np.inf)
        step[:-1] = nxt[1:]
        jump = np.full(S, -np.inf)
        # skipping from s to s+2 is the reverse of the alpha skip into s+2
        jump[:-2] = np.where(skip[2:], nxt[2:], -np.inf)
        beta[t] = emit[t] + np.logaddexp(np.logaddexp(stay, step), jump)

    return alpha, beta


def _posteriors(logp, ext, alpha, beta, log_total) -> np.ndarray:
    """gamma[t, k] = P(state emitting class k at frame t | target)."""
    T, K1 = logp.shape
    emit = logp[:, ext]
    q = alpha + beta
    w = np.zeros_like(q)
    finite = q > -np.inf
    w[finite] = np.exp(q[finite] - emit[finite] - log_total)
    gamma = np.zeros((T, K1))
    for s, k in enumerate(ext):
        gamma[:, k] += w[:, s]
    return gamma


def ctc_loss(logp: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Negative log-likelihood and its gradient w.r.t. pre-softmax logits.

    Infeasible targets (too few frames for the required emissions) give
    (+inf, zeros) with a warning instead of raising; corrupt labels should
    degrade a training step, not kill the run.
    """
    logp = np.asarray(logp, dtype=np.float64)
    ext = extended_label(target)
    alpha, beta = ctc_tables(logp, ext)
    S = ext.size
    tail = alpha[-1, S - 2:] if S > 1 else alpha[-1, S - 1:]
    log_total = float(np.logaddexp.reduce(tail))
    if log_total == -np.inf:
        warnings.warn("infeasible CTC target: zero-probability alignment set")
        return np.inf, np.zeros_like(logp)
    gamma = _posteriors(logp, ext, alpha, beta, log_total)
    grad = np.exp(logp) - gamma
    return -log_total, grad


def ctc_loss_batch(logp: Tensor, targets) -> Tensor:
    """Mean per-sample CTC loss over a (B, T, K+1) log-probability tensor.

    Differentiable: the adjoint w.r.t. log-probabilities is -gamma / B per
    sample (zero for infeasible samples).
    """
    data = logp.data
    b = data.shape[0]
    losses = np.empty(b)
    gammas = np.zeros_like(data, dtype=np.float64)
    for i, target in enumerate(targets):
        sample = np.asarray(data[i], dtype=np.float64)
        ext = extended_label(target)
        alpha, beta = ctc_tables(sample, ext)
        S = ext.size
        tail = alpha[-1, S - 2:] if S > 1 else alpha[-1, S - 1:]
        log_total = float(np.logaddexp.reduce(tail))
        if log_total == -np.inf:
            warnings.warn("infeasible CTC target: zero-probability alignment set")
            losses[i] = np.inf
        else:
            losses[i] = -log_total
            gammas[i] = _posteriors(sample, ext, alpha, beta, log_total)
    out = Tensor(np.asarray(losses.mean(), dtype=data.dtype))

    def bw(g):
        return ((g * (-gammas / b)).astype(data.dtype, copy=False),)

    return record(out, (logp,), bw)


def ctc_brute_force(logp: np.ndarray, target) -> float:
    """nll by exhaustive enumeration of all (K+1)^T frame paths."""
    logp = np.asarray(logp, dtype=np.float64)
    T, K1 = logp.shape
    if K1 ** T > 10 ** 7:
        raise ValueError(f"enumeration of {K1}^{T} paths exceeds the 1e7 guard")
    groups = _collapse_groups(T, K1)
    p = np.exp(logp)
    idx = groups.get(tuple(int(c) for c in np.asarray(target)))
    if idx is None:
        return np.inf
    paths = _all_paths(T, K1)[idx]
    probs = p[np.arange(T), paths].prod(axis=1)
    total = probs.sum()
    return np.inf if total == 0.0 else float(-np.log(total))


def _collapse(path) -> tuple[int, ...]:
    out = []
    prev = None
    for c in path:
        if c != prev:
            if c != BLANK:
                out.append(int(c))
            prev = c
    return tuple(out)


_PATH_CACHE: dict[tuple[int, int], np.ndarray] = {}
_GROUP_CACHE: dict[tuple[int, int], dict] = {}


def _all_paths(T: int, K1: int) -> np.ndarray:
    key = (T, K1)
    if key not in _PATH_CACHE:
        _PATH_CACHE[key] = np.array(list(itertools.product(range(K1), repeat=T)),
                                    dtype=np.int64)
    return _PATH_CACHE[key]


def _collapse_groups(T: int, K1: int) -> dict:
    key = (T, K1)
    if key not in _GROUP_CACHE:
        groups: dict[tuple, list[int]] = {}
        for i, path in enumerate(_all_paths(T, K1)):
            groups.setdefault(_collapse(path), []).append(i)
        _GROUP_CACHE[key] = {c: np.array(ix) for c, ix in groups.items()}
    return _GROUP_CACHE[key]


def greedy_ids(logp: np.ndarray) -> list[int]:
    """Best-path decode to label ids: per-frame argmax, collapse, strip blanks."""
    frames = np.asarray(logp).argmax(axis=-1)
    return list(_collapse(frames))


def greedy_decode(logp: np.ndarray, charset) -> str:
    """Best-path decode to text; charset.chars[i-1] is the character for id i."""
    return "".join(charset.chars[i - 1] for i in greedy_ids(logp))
