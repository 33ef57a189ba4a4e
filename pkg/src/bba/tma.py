"""Stage 2: train a freshly initialised target model against the bridge.

The bridge model's softmax outputs seed a per-sample pseudo-label bank. The
target model minimises KL(bank || target) plus polarity-aware self-labeling
and information-maximisation terms. At every epoch end the bank is
momentum-mixed with the target model's current predictions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import EPS, SGD, Model, backward_and_step, entropy, kl_divergence, safe_log, softmax, softmax_backward
from .polarity import PolarityMap

log = logging.getLogger(__name__)

__all__ = [
    "PolarityMap", "PseudoLabelBank", "TmaConfig", "TmaResult", "init_bank", "update_bank",
    "align_loss", "polarity_marginals", "polarized_im_loss", "polarized_sl_loss",
    "tma_objective", "run_tma",
]


@dataclass
class TmaConfig:
    gamma: float = 1.0
    delta: float = 0.3
    alpha_t: float = 0.9
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-2
    init_seed: int | None = None  # None: derived from the run seed
    reverse_kl: bool = False  # KL(target || bank) instead of KL(bank || target)

    def validate(self):
        if self.gamma < 0 or self.delta < 0:
            raise ValueError("tma.gamma and tma.delta must be >= 0")
        if not 0.0 <= self.alpha_t <= 1.0:
            raise ValueError("tma.alpha_t must lie in [0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("tma.epochs/batch_size/lr invalid")


@dataclass
class PseudoLabelBank:
    soft: np.ndarray  # N x K

    def hard(self, ids=None):
        rows = self.soft if ids is None else self.soft[ids]
        return np.argmax(rows, axis=1)


@dataclass
class TmaResult:
    target: Model
    bank: PseudoLabelBank
    history: list = field(default_factory=list)


def init_bank(bridge: Model, target_X) -> PseudoLabelBank:
    # one sample at a time: a batched matmul may round differently per row
    X = np.asarray(target_X, dtype=np.float64)
    if len(X) == 0:
        return PseudoLabelBank(np.zeros((0, bridge.num_classes)))
    return PseudoLabelBank(np.concatenate([softmax(bridge.forward(X[i:i + 1])[1]) for i in range(len(X))]))


def update_bank(bank: PseudoLabelBank, ids, probs, alpha_t) -> PseudoLabelBank:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= len(bank.soft)):
        raise IndexError("update_bank: unknown sample id")
    rows = alpha_t * bank.soft[ids] + (1.0 - alpha_t) * np.asarray(probs)
    bank.soft[ids] = rows / rows.sum(axis=1, keepdims=True)
    return bank


def align_loss(bank_rows, probs, with_grad=False, reverse=False):
    """Mean KL(bank || probs) over rows (KL(probs || bank) with ``reverse``)."""
    bank_rows = np.atleast_2d(bank_rows)
    probs = np.atleast_2d(probs)
    B = probs.shape[0]
    if reverse:
        value = float(np.mean(kl_divergence(probs, bank_rows)))
        if with_grad:
            return value, (safe_log(probs) - safe_log(bank_rows) + 1.0) / B
        return value
    value = float(np.mean(kl_divergence(bank_rows, probs)))
    if with_grad:
        return value, -bank_rows / (np.maximum(probs, EPS) * B)
    return value


def polarity_marginals(probs, pmap: PolarityMap):
    """(p_pos, p_neg); for a batch, an N x 2 array."""
    e = np.asarray(probs, dtype=np.float64) @ pmap.group_matrix().T
    if e.ndim == 1:
        return float(e[0]), float(e[1])
    return e


def polarized_im_loss(probs, pmap: PolarityMap, with_grad=False):
    """Information maximisation at class and polarity level.

    mean_i [H(p_i) + H(e_i)] - H(mean_i p_i) - H(mean_i e_i), where e_i are the
    polarity marginals. Minimising it sharpens each prediction and spreads the
    batch over classes and over polarities.
    """
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    B = P.shape[0]
    G = pmap.group_matrix()
    E = P @ G.T
    pbar = P.mean(axis=0)
    ebar = E.mean(axis=0)
    value = float(np.mean(entropy(P) + entropy(E)) - entropy(pbar) - entropy(ebar))
    if not with_grad:
        return value
    # the +1 terms of d(p log p) are dropped: they are constant per row and vanish through softmax
    d_sample = -(safe_log(P) + safe_log(E) @ G)
    d_batch = safe_log(pbar) + safe_log(ebar) @ G
    return value, (d_sample + d_batch[None, :]) / B


def polarized_sl_loss(probs, labels, pmap: PolarityMap, polarity_labels=None, with_grad=False):
    """Mean of -log p[label] - log e[polarity_label].

    ``polarity_labels`` defaults to the polarity group of each hard label.
    """
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    B = P.shape[0]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if polarity_labels is None:
        polarity_labels = pmap.group_of(labels)
    polarity_labels = np.atleast_1d(np.asarray(polarity_labels, dtype=np.int64))
    G = pmap.group_matrix()
    E = P @ G.T
    rows = np.arange(B)
    pk = np.maximum(P[rows, labels], EPS)
    pe = np.maximum(E[rows, polarity_labels], EPS)
    value = float(np.mean(-np.log(pk) - np.log(pe)))
    if not with_grad:
        return value
    grad = -(G[polarity_labels] / pe[:, None])
    grad[rows, labels] -= 1.0 / pk
    return value, grad / B


def tma_objective(model: Model, x, bank_rows, pmap: PolarityMap, gamma, delta, reverse_kl=False):
    """L_tma = L_align + gamma * L_sl_pol + delta * L_im_pol for one batch."""
    _, z, acts = model.forward(x, cache=True)
    p = softmax(z)
    hard = np.argmax(bank_rows, axis=1)
    pol = np.argmax(bank_rows @ pmap.group_matrix().T, axis=1)
    l_al, g_al = align_loss(bank_rows, p, with_grad=True, reverse=reverse_kl)
    dp = g_al
    l_sl = l_im = 0.0
    if gamma:
        l_sl, g_sl = polarized_sl_loss(p, hard, pmap, pol, with_grad=True)
        dp = dp + gamma * g_sl
    if delta:
        l_im, g_im = polarized_im_loss(p, pmap, with_grad=True)
        dp = dp + delta * g_im
    loss = l_al + gamma * l_sl + delta * l_im
    grads = model.backward(acts, softmax_backward(p, dp))
    return loss, grads, {"L_align": l_al, "L_sl": l_sl, "L_im": l_im, "L_tma": loss}


def run_tma(bridge: Model, target_X, pmap: PolarityMap, cfg: TmaConfig | None = None, seed=0,
            target_labels=None, eval_set=None) -> TmaResult:
    """Train a new target model from scratch; only it is used for inference."""
    cfg = cfg or TmaConfig()
    cfg.validate()
    X = np.asarray(target_X, dtype=np.float64)
    bank = init_bank(bridge, X)
    target = Model(bridge.layer_dims, bridge.activation, seed=cfg.init_seed if cfg.init_seed is not None else seed + 1)
    opt = SGD(cfg.lr, cfg.momentum, cfg.weight_decay)
    batch_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    history = []
    for epoch in range(cfg.epochs):
        order = batch_rng.permutation(len(X))
        sums = {"L_align": 0.0, "L_sl": 0.0, "L_im": 0.0, "L_tma": 0.0}
        nb = 0
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            rows = bank.soft[idx]
            parts = {}

            def objective(m):
                loss, grads, p = tma_objective(m, xb, rows, pmap, cfg.gamma, cfg.delta, cfg.reverse_kl)
                parts.update(p)
                return loss, grads

            try:
                backward_and_step(target, objective, opt)
            except FloatingPointError as exc:
                raise FloatingPointError(f"TMA diverged at epoch {epoch}, batch {nb}: {exc}") from exc
            for k in sums:
                sums[k] += parts[k]
            nb += 1
        probs = target.predict_proba(X)
        agreement = float(np.mean(np.argmax(probs, axis=1) == bank.hard()))
        update_bank(bank, np.arange(len(X)), probs, cfg.alpha_t)
        row = {"epoch": epoch, **{k: v / max(nb, 1) for k, v in sums.items()}, "agreement": agreement}
        if target_labels is not None:
            row["bank_acc"] = float(np.mean(bank.hard() == target_labels))
        if eval_set is not None:
            ex, ey = eval_set
            row["target_acc"] = float(np.mean(target.predict(ex) == ey))
        history.append(row)
        log.debug("tma epoch %d: %s", epoch, row)
    return TmaResult(target, bank, history)
