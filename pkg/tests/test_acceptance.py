"""Acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary
(and to stdout with ``-s``).
"""

import json
import time
from pathlib import Path

import numpy as np

from bba.cli import main
from bba.clustering import cluster_pseudo_labels, fused_distance
from bba.dmg import ema_update
from bba.masking import apply_mask, sample_mask
from bba.metrics import confusion, report
from bba.nn import Model, entropy, grad_check
from bba.polarity import PolarityMap
from bba.tma import polarity_marginals, polarized_im_loss, polarized_sl_loss
from conftest import record, seed_mean
from helpers import bayes_accuracy, blobs, loss_objectives, noisy_prior
from test_clustering import brute_fused
from test_metrics import brute_force

PMAP = PolarityMap((0, 1, 2, 3), (4, 5, 6, 7))


def check(cid, title, passed, detail):
    record(cid, title, passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {cid} {title}: {detail}")
    assert passed, detail


def test_c1_gradients():
    t0 = time.perf_counter()
    model, fns = loss_objectives(seed=0, n=16, k=8)
    errs = {name: grad_check(fn, model, eps=1e-5, max_per_param=10**6) for name, fn in fns.items()}
    secs = time.perf_counter() - t0
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f"; {secs:.1f}s"
    check("C1", "gradient check < 1e-4", worst < 1e-4 and secs < 30, detail)


def test_c2_clustering():
    hard, prior = [], []
    for seed in range(5):
        X, y, centres = blobs(seed, n_blobs=8, per_blob=50)
        assert bayes_accuracy(X, y, centres) >= 0.99
        P = noisy_prior(y, 8, 0.7, seed=1000 + seed)
        pl = cluster_pseudo_labels(X, P)
        hard.append(np.mean(pl.hard == y))
        prior.append(np.mean(pl.argmax == y))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 9))
        p, q = rng.normal(size=dim), rng.normal(size=dim)
        worst = max(worst, abs(fused_distance(p, q) - brute_fused(p, q)))
    ok = np.mean(hard) >= np.mean(prior) and worst <= 1e-12
    check("C2", "clustering oracle", ok,
          f"hard {np.mean(hard):.4f} vs prior {np.mean(prior):.4f}; fused-distance max diff {worst:.1e}")


def test_c3_ema_law():
    alpha = 0.999
    worst = 0.0
    for steps in (1, 10, 100):
        teacher, student = Model([20, 16, 8, 8], seed=1), Model([20, 16, 8, 8], seed=2)
        rng = np.random.default_rng(steps)
        for m in (teacher, student):
            for k in ("b0", "b1"):
                m.params[k] = rng.normal(size=m.params[k].shape)
        gap0 = {k: teacher.params[k] - student.params[k] for k in teacher.feature_names()}
        for _ in range(steps):
            ema_update(teacher, student, alpha)
        for k, g in gap0.items():
            expected = alpha ** steps * g
            rel = np.abs((teacher.params[k] - student.params[k]) - expected) / np.abs(expected)
            worst = max(worst, float(rel.max()))
    check("C3", "EMA closed form", worst < 1e-12, f"max relative error {worst:.1e} over t in 1, 10, 100")


def test_c4_masking():
    rng = np.random.default_rng(0)
    bad_count = bad_idem = 0
    for i in range(1000):
        n_range = (4, 8) if i % 2 else (0, 16)
        x = rng.normal(size=(16, 16)) + 10.0  # strictly nonzero pixels
        m = sample_mask(16, 16, 4, n_range, rng)
        y = apply_mask(x, m)
        bad_count += int((y == 0).sum() != m.n_blocks * 16)
        bad_idem += int(apply_mask(y, m).tobytes() != y.tobytes())
    check("C4", "masking exactness", bad_count == 0 and bad_idem == 0,
          f"{bad_count} count mismatches, {bad_idem} idempotence failures in 1000 masks")


def _class_im(P):
    return float(np.mean(entropy(P)) - entropy(P.mean(axis=0)))


def _polarity_im(P):
    E = polarity_marginals(P, PMAP)
    return float(np.mean(entropy(E)) - entropy(E.mean(axis=0)))


def _polarity_sl(P, ye):
    E = polarity_marginals(P, PMAP)
    return float(np.mean(-np.log(E[np.arange(len(P)), ye])))


def test_c5_polarity_invariance():
    rng = np.random.default_rng(0)
    class_dev = within_dev = sum_dev = split_dev = 0.0
    for _ in range(200):
        P = rng.dirichlet(np.ones(8), size=6)
        y = rng.integers(0, 8, 6)
        full = rng.permutation(8)
        inv = np.argsort(full)  # new column j holds old class full[j]; old class c moves to inv[c]
        Pp, yp = P[:, full], inv[y]
        class_dev = max(class_dev, abs(_class_im(Pp) - _class_im(P)))
        ce, cep = np.mean(-np.log(P[np.arange(6), y])), np.mean(-np.log(Pp[np.arange(6), yp]))
        class_dev = max(class_dev, abs(cep - ce))
        within = np.concatenate([rng.permutation(4), 4 + rng.permutation(4)])
        Pw, yw = P[:, within], np.argsort(within)[y]
        ye = PMAP.group_of(y)
        within_dev = max(within_dev, abs(_polarity_im(Pw) - _polarity_im(P)),
                         abs(_polarity_sl(Pw, PMAP.group_of(yw)) - _polarity_sl(P, ye)),
                         abs(polarized_im_loss(Pw, PMAP) - polarized_im_loss(P, PMAP)),
                         abs(polarized_sl_loss(Pw, yw, PMAP) - polarized_sl_loss(P, y, PMAP)))
        split_dev = max(split_dev, abs(polarized_im_loss(P, PMAP) - _class_im(P) - _polarity_im(P)))
        E = polarity_marginals(P, PMAP)
        sum_dev = max(sum_dev, float(np.abs(E.sum(axis=1) - 1).max()))
    # cross-group permutation: swap class 1 (positive) with class 4 (negative)
    P = np.array([[0.5, 0.3, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0],
                  [0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.4]])
    swap = np.array([0, 4, 2, 3, 1, 5, 6, 7])
    cross_im = abs(_polarity_im(P[:, swap]) - _polarity_im(P))
    cross_sl = abs(polarized_sl_loss(P[:, swap], [0, 0], PMAP) - polarized_sl_loss(P, [0, 0], PMAP))
    class_same = abs(_class_im(P[:, swap]) - _class_im(P))
    ok = (class_dev <= 1e-12 and within_dev <= 1e-12 and split_dev <= 1e-12 and sum_dev <= 1e-9
          and cross_im >= 1e-3 and cross_sl >= 1e-3 and class_same <= 1e-12)
    check("C5", "polarity invariance", ok,
          f"class-perm dev {class_dev:.1e}, within-group dev {within_dev:.1e}, "
          f"cross-group change IM {cross_im:.3f} / SL {cross_sl:.3f}, marginal-sum dev {sum_dev:.1e}")


def test_c6_metrics_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    identity_ok = True
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        n = int(rng.integers(1, 201))
        y, p = rng.integers(0, k, n), rng.integers(0, k, n)
        r = report(confusion(p, y, k))
        worst = max(worst, float(np.max(np.abs(np.array(r.row()) - brute_force(p, y, k)))))
        identity_ok &= r.accuracy == r.weighted[1]
    check("C6", "metrics oracle", worst <= 1e-12 and identity_ok,
          f"max deviation {worst:.1e}; accuracy == weighted recall: {identity_ok}")


def test_c7_end_to_end(benchmark):
    so, bridge = seed_mean(benchmark, "source_only"), seed_mean(benchmark, "bridge")
    bba, oracle = seed_mean(benchmark, "bba"), seed_mean(benchmark, "oracle")
    secs = benchmark["seconds"]
    ok = oracle >= bba >= so + 0.05 and bba >= bridge and secs < 600
    check("C7", "adaptation gain", ok,
          f"source-only {100 * so:.2f}, bridge {100 * bridge:.2f}, BBA {100 * bba:.2f}, "
          f"oracle {100 * oracle:.2f} (5 seeds, {secs:.0f}s incl. ladder)")


def test_c8_ablation_ladder(benchmark):
    from bba.experiment import LADDER
    means = [100 * seed_mean(benchmark, name) for name in LADDER]
    drops = [b - a for a, b in zip(means, means[1:])]
    check("C8", "ablation ladder", min(drops) >= -1.0,
          " -> ".join(f"{n} {m:.2f}" for n, m in zip(LADDER, means)))


def _snapshot(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "manifest.json":
                m = json.loads(data)
                m.pop("timings")
                data = json.dumps(m, sort_keys=True).encode()
            out[str(p.relative_to(root))] = data
    return out


def _run_all(out: Path, capsys) -> str:
    d = out / "seed_0"
    commands = [
        ["gen-data"], ["train-source"], ["adapt", "--stage", "dmg"], ["adapt", "--stage", "tma"],
        ["adapt", "--oracle"], ["ablation"],
    ]
    printed = []
    for cmd in commands:
        assert main([*cmd, "--out", str(out), "--seed", "0"]) == 0
        printed.append(capsys.readouterr().out.replace(str(out), "<out>"))
    assert main(["evaluate", "--checkpoint", str(d / "target.ckpt"), "--dataset", str(d / "target_test.bds")]) == 0
    assert main(["report", "--out", str(out)]) == 0
    printed.append(capsys.readouterr().out)
    return "".join(printed)


def test_c9_determinism(tmp_path, capsys):
    out_a = _run_all(tmp_path / "a", capsys)
    out_b = _run_all(tmp_path / "b", capsys)
    snap_a, snap_b = _snapshot(tmp_path / "a"), _snapshot(tmp_path / "b")
    differing = sorted(k for k in snap_a.keys() | snap_b.keys() if snap_a.get(k) != snap_b.get(k))
    ok = not differing and out_a == out_b
    check("C9", "determinism", ok,
          f"{len(snap_a)} artifacts compared, differing: {differing or 'none'}; stdout identical: {out_a == out_b}")
