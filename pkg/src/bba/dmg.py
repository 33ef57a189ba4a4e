"""Stage 1: bridge-model generation.

A student copy of the source model is trained on the unlabeled target set
with clustered hard labels (self-labeling) and clustered soft labels
(distillation), on both the clean and a block-masked view of each image.
Its classifier head stays frozen. The teacher starts as the source model and
tracks the student's feature extractor by EMA after every optimizer step;
pseudo-labels are recomputed from the teacher once per epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clustering import cluster_pseudo_labels
from .masking import mask_batch
from .nn import EPS, SGD, Model, add_grads, backward_and_step, softmax, softmax_backward

log = logging.getLogger(__name__)


@dataclass
class DmgConfig:
    lam: float = 0.9
    alpha_e: float = 0.999
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    block_size: int = 4
    n_range: tuple = (4, 8)
    keep_selected: bool = False  # literal M * x masking instead of zeroing the blocks
    tau: float = 1.0
    rounds: int = 1
    use_cluster: bool = True  # False: raw argmax labels, self-labeling loss only
    use_mask: bool = True

    def validate(self):
        if self.lam < 0:
            raise ValueError("dmg.lam must be >= 0")
        if not 0.0 < self.alpha_e <= 1.0:
            raise ValueError("dmg.alpha_e must lie in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("dmg.epochs/batch_size/lr invalid")
        if self.tau <= 0 or self.rounds < 1:
            raise ValueError("dmg.tau must be > 0 and dmg.rounds >= 1")
        if len(self.n_range) != 2 or self.n_range[0] > self.n_range[1]:
            raise ValueError("dmg.n_range must be an ordered pair")


@dataclass
class DmgResult:
    bridge: Model
    teacher: Model
    history: list = field(default_factory=list)


def ema_update(teacher: Model, student: Model, alpha_e: float, names=None) -> Model:
    """teacher <- alpha_e * teacher + (1 - alpha_e) * student, in place.

    Only the feature-extractor parameters by default.
    """
    if teacher.layer_dims != student.layer_dims:
        raise ValueError("ema_update needs identically shaped models")
    for name in names if names is not None else teacher.feature_names():
        teacher.params[name] = alpha_e * teacher.params[name] + (1.0 - alpha_e) * student.params[name]
    return teacher


def sl_loss(probs_x, probs_xm, labels, with_grad=False):
    """Mean CE against hard labels on the clean view plus the masked view.

    ``probs_xm`` may be None, in which case only the clean view counts.
    """
    labels = np.asarray(labels, dtype=np.int64)
    views = [probs_x] if probs_xm is None else [probs_x, probs_xm]
    total = 0.0
    grads = []
    for p in views:
        B = p.shape[0]
        picked = p[np.arange(B), labels]
        total += float(np.mean(-np.log(np.maximum(picked, EPS))))
        if with_grad:
            g = np.zeros_like(p)
            g[np.arange(B), labels] = -1.0 / (np.maximum(picked, EPS) * B)
            grads.append(g)
    if with_grad:
        return total, grads
    return total


def kd_loss(probs_x, probs_xm, soft, with_grad=False):
    """Mean soft-label cross-entropy on the clean view plus the masked view."""
    soft = np.asarray(soft, dtype=np.float64)
    views = [probs_x] if probs_xm is None else [probs_x, probs_xm]
    total = 0.0
    grads = []
    for p in views:
        B = p.shape[0]
        safe = np.maximum(p, EPS)
        total += float(np.mean(-(soft * np.log(safe)).sum(axis=1)))
        if with_grad:
            grads.append(-soft / (safe * B))
    if with_grad:
        return total, grads
    return total


def dmg_objective(student: Model, x, xm, hard, soft, lam, use_kd=True):
    """L_dmg = L_kd + lam * L_sl for one batch; returns (loss, grads, parts).

    ``xm`` None means no masked view; ``use_kd`` False drops the distillation term.
    """
    _, zx, ax = student.forward(x, cache=True)
    px = softmax(zx)
    pm = am = None
    if xm is not None:
        _, zm, am = student.forward(xm, cache=True)
        pm = softmax(zm)
    l_sl, g_sl = sl_loss(px, pm, hard, with_grad=True)
    if use_kd:
        l_kd, g_kd = kd_loss(px, pm, soft, with_grad=True)
    else:
        l_kd, g_kd = 0.0, [np.zeros_like(g) for g in g_sl]
    dps = [gk + lam * gs for gk, gs in zip(g_kd, g_sl)]
    grads = student.backward(ax, softmax_backward(px, dps[0]))
    if pm is not None:
        grads = add_grads(grads, student.backward(am, softmax_backward(pm, dps[1])))
    loss = l_kd + lam * l_sl
    return loss, grads, {"L_kd": l_kd, "L_sl": l_sl, "L_dmg": loss}


def teacher_pseudo_labels(teacher: Model, X, cfg: DmgConfig):
    """(hard, soft) labels from the teacher's features for the whole target set."""
    feats, logits = teacher.forward(X)
    probs = softmax(logits)
    if cfg.use_cluster:
        pl = cluster_pseudo_labels(feats, probs, rounds=cfg.rounds, tau=cfg.tau)
        return pl.hard, pl.soft, pl.argmax
    argmax = np.argmax(probs, axis=1)
    return argmax, probs, argmax


def run_dmg(source: Model, target_X, cfg: DmgConfig | None = None, seed=0,
            target_labels=None, eval_set=None, image_shape=(16, 16)) -> DmgResult:
    """Train the bridge model. ``target_labels`` / ``eval_set`` only feed the log."""
    cfg = cfg or DmgConfig()
    cfg.validate()
    X = np.asarray(target_X, dtype=np.float64)
    student = source.copy()
    student.frozen = {"classifier"}
    teacher = source.copy()
    opt = SGD(cfg.lr, cfg.momentum, cfg.weight_decay)
    ss = np.random.SeedSequence(seed, spawn_key=(2,))
    batch_rng, mask_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    Hh, Ww = image_shape
    history = []
    for epoch in range(cfg.epochs):
        hard, soft, argmax = teacher_pseudo_labels(teacher, X, cfg)
        order = batch_rng.permutation(len(X))
        sums = {"L_kd": 0.0, "L_sl": 0.0, "L_dmg": 0.0}
        nb = 0
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            xm = mask_batch(xb, Hh, Ww, cfg.block_size, cfg.n_range, mask_rng,
                            cfg.keep_selected) if cfg.use_mask else None
            parts = {}

            def objective(m):
                loss, grads, p = dmg_objective(m, xb, xm, hard[idx], soft[idx], cfg.lam,
                                               use_kd=cfg.use_cluster)
                parts.update(p)
                return loss, grads

            try:
                backward_and_step(student, objective, opt)
            except FloatingPointError as exc:
                raise FloatingPointError(f"DMG diverged at epoch {epoch}, batch {nb}: {exc}") from exc
            ema_update(teacher, student, cfg.alpha_e)
            for k in sums:
                sums[k] += parts[k]
            nb += 1
        row = {"epoch": epoch, **{k: v / max(nb, 1) for k, v in sums.items()}}
        if target_labels is not None:
            row["pl_acc"] = float(np.mean(hard == target_labels))
            row["argmax_acc"] = float(np.mean(argmax == target_labels))
        if eval_set is not None:
            ex, ey = eval_set
            row["target_acc"] = float(np.mean(student.predict(ex) == ey))
        history.append(row)
        log.debug("dmg epoch %d: %s", epoch, row)
    return DmgResult(student, teacher, history)
