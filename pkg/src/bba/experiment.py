"""Experimental protocol: source-only, oracle, BBA and the ablation ladder.

Every run is driven by one root seed; each consumer draws from its own named
child stream (see :func:`stream_seed`) so a stage re-run in isolation sees
exactly the same randomness as in a full run.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ShiftConfig, default_polarity, generate_domain_pair
from .dmg import DmgConfig, run_dmg, sl_loss
from .metrics import confusion, report
from .nn import SGD, Model, backward_and_step, softmax, softmax_backward
from .polarity import PolarityMap
from .tma import TmaConfig, run_tma

LADDER = ("baseline", "+cluster", "+mask", "+L_align", "+L_pol")


def stream_seed(root: int, name: str) -> int:
    """Deterministic 32-bit seed for the named sub-stream of ``root``."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.05
    batch_size: int = 64
    momentum: float = 0.9

    def validate(self, section="source"):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ValueError(f"{section}: epochs/batch_size/lr/momentum invalid")


@dataclass
class ExperimentConfig:
    data: ShiftConfig = field(default_factory=ShiftConfig)
    source: TrainConfig = field(default_factory=TrainConfig)
    oracle: TrainConfig = field(default_factory=TrainConfig)
    dmg: DmgConfig = field(default_factory=DmgConfig)
    tma: TmaConfig = field(default_factory=TmaConfig)
    polarity: PolarityMap = field(default_factory=default_polarity)
    hidden: tuple = (64, 32)
    seeds: tuple = (0, 1, 2, 3, 4)
    output_dir: str = "runs"

    def layer_dims(self, input_dim, num_classes):
        return [input_dim, *self.hidden, num_classes]

    def validate(self):
        self.data.validate()
        self.source.validate("source")
        self.oracle.validate("oracle")
        self.dmg.validate()
        self.tma.validate()
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")


@dataclass
class Domains:
    source_train: Dataset
    source_test: Dataset
    target_train: Dataset
    target_test: Dataset


def make_domains(cfg: ExperimentConfig, seed: int) -> Domains:
    data_cfg = dataclasses.replace(cfg.data, seed=stream_seed(seed, "data"))
    s_tr, t_tr = generate_domain_pair(data_cfg, "train")
    s_te, t_te = generate_domain_pair(data_cfg, "test")
    return Domains(s_tr, s_te, t_tr, t_te)


def train_supervised(X, y, layer_dims, tcfg: TrainConfig, seed: int) -> Model:
    """Plain cross-entropy training with shuffled mini-batches."""
    model = Model(layer_dims, seed=stream_seed(seed, "init"))
    opt = SGD(tcfg.lr, tcfg.momentum)
    rng = np.random.default_rng(stream_seed(seed, "batching"))
    for _ in range(tcfg.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]

            def objective(m, xb=X[idx], yb=y[idx]):
                _, z, acts = m.forward(xb, cache=True)
                p = softmax(z)
                loss, (dp,) = sl_loss(p, None, yb, with_grad=True)
                return loss, m.backward(acts, softmax_backward(p, dp))

            backward_and_step(model, objective, opt)
    return model


def evaluate(model: Model, ds: Dataset):
    return report(confusion(model.predict(ds.images), ds.labels, ds.num_classes))


def train_source(cfg: ExperimentConfig, dom: Domains, seed: int) -> Model:
    dims = cfg.layer_dims(dom.source_train.images.shape[1], dom.source_train.num_classes)
    return train_supervised(dom.source_train.images, dom.source_train.labels, dims, cfg.source,
                            stream_seed(seed, "source"))


def train_oracle(cfg: ExperimentConfig, dom: Domains, seed: int) -> Model:
    dims = cfg.layer_dims(dom.target_train.images.shape[1], dom.target_train.num_classes)
    return train_supervised(dom.target_train.images, dom.target_train.labels, dims, cfg.oracle,
                            stream_seed(seed, "oracle"))


def adapt_dmg(cfg: ExperimentConfig, source: Model, dom: Domains, seed: int, dmg_cfg=None):
    t = dom.target_train
    return run_dmg(source, t.images, dmg_cfg or cfg.dmg, seed=stream_seed(seed, "dmg"),
                   target_labels=t.labels, eval_set=(dom.target_test.images, dom.target_test.labels),
                   image_shape=(t.height, t.width))


def adapt_tma(cfg: ExperimentConfig, bridge: Model, dom: Domains, seed: int, tma_cfg=None):
    tma_cfg = tma_cfg or cfg.tma
    if tma_cfg.init_seed is None:
        tma_cfg = dataclasses.replace(tma_cfg, init_seed=stream_seed(seed, "tma-init"))
    t = dom.target_train
    return run_tma(bridge, t.images, cfg.polarity, tma_cfg, seed=stream_seed(seed, "tma"),
                   target_labels=t.labels, eval_set=(dom.target_test.images, dom.target_test.labels))


def ladder_configs(cfg: ExperimentConfig):
    """(name, dmg config, tma config or None) for each additive ablation rung."""
    base = dataclasses.replace(cfg.dmg, use_cluster=False, use_mask=False)
    clus = dataclasses.replace(cfg.dmg, use_cluster=True, use_mask=False)
    mask = dataclasses.replace(cfg.dmg, use_cluster=True, use_mask=True)
    align = dataclasses.replace(cfg.tma, gamma=0.0, delta=0.0)
    return [
        ("baseline", base, None),
        ("+cluster", clus, None),
        ("+mask", mask, None),
        ("+L_align", mask, align),
        ("+L_pol", mask, cfg.tma),
    ]


def run_ablation_seed(cfg: ExperimentConfig, seed: int, dom: Domains | None = None,
                      source: Model | None = None) -> dict:
    """Target-test accuracy of every ladder rung for one seed."""
    dom = dom or make_domains(cfg, seed)
    source = source or train_source(cfg, dom, seed)
    out = {}
    bridges = {}
    for name, dcfg, tcfg in ladder_configs(cfg):
        key = (dcfg.use_cluster, dcfg.use_mask)
        if key not in bridges:
            bridges[key] = adapt_dmg(cfg, source, dom, seed, dcfg).bridge
        model = bridges[key] if tcfg is None else adapt_tma(cfg, bridges[key], dom, seed, tcfg).target
        out[name] = evaluate(model, dom.target_test).accuracy
    return out


def run_protocol_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Source-only, oracle, bridge and BBA reports on the target test set."""
    dom = make_domains(cfg, seed)
    source = train_source(cfg, dom, seed)
    oracle = train_oracle(cfg, dom, seed)
    dmg = adapt_dmg(cfg, source, dom, seed)
    tma = adapt_tma(cfg, dmg.bridge, dom, seed)
    return {
        "source_test": evaluate(source, dom.source_test),
        "source_only": evaluate(source, dom.target_test),
        "oracle": evaluate(oracle, dom.target_test),
        "bridge": evaluate(dmg.bridge, dom.target_test),
        "bba": evaluate(tma.target, dom.target_test),
        "dmg_history": dmg.history,
        "tma_history": tma.history,
    }


SWEEP_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
SWEEP_PARAMS = {"lam": "dmg", "gamma": "tma", "delta": "tma"}


def run_sweep_seed(cfg: ExperimentConfig, seed: int, param: str, values=SWEEP_GRID,
                   dom: Domains | None = None, source: Model | None = None) -> dict:
    """BBA target-test accuracy for each value of one loss weight, others at their defaults."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    dom = dom or make_domains(cfg, seed)
    source = source or train_source(cfg, dom, seed)
    bridge = None if param == "lam" else adapt_dmg(cfg, source, dom, seed).bridge
    out = {}
    for v in values:
        if param == "lam":
            b = adapt_dmg(cfg, source, dom, seed, dataclasses.replace(cfg.dmg, lam=float(v))).bridge
            model = adapt_tma(cfg, b, dom, seed).target
        else:
            model = adapt_tma(cfg, bridge, dom, seed, dataclasses.replace(cfg.tma, **{param: float(v)})).target
        out[float(v)] = evaluate(model, dom.target_test).accuracy
    return out
