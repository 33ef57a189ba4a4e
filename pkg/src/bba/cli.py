"""Command-line front end for the experimental protocol.

Artifacts for each seed live under ``<output_dir>/seed_<seed>/``::

    source_train.bds source_test.bds target_train.bds target_test.bds
    source.ckpt bridge.ckpt target.ckpt oracle.ckpt
    dmg_log.csv tma_log.csv report_<stage>.csv manifest.json

``ablation.csv``, ``sweep_<param>.csv`` and ``summary.csv`` are written at the top of the output
directory. The output directory comes from ``--out``, else ``$BBA_OUTPUT_DIR``,
else the config's ``output_dir``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from .clustering import run_standalone
from .data import load_dataset, save_dataset
from .experiment import (
    LADDER, SWEEP_GRID, SWEEP_PARAMS, Domains, ExperimentConfig, adapt_dmg, adapt_tma, evaluate,
    make_domains, run_ablation_seed, run_sweep_seed, train_oracle, train_source,
)
from .metrics import COLUMNS, MetricsReport
from .nn import load_checkpoint, save_checkpoint

log = logging.getLogger("bba")

ENV_OUTPUT = "BBA_OUTPUT_DIR"
SPLITS = ("source_train", "source_test", "target_train", "target_test")


class MissingArtifact(FileNotFoundError):
    pass


def seed_dir(out_dir, seed) -> Path:
    return Path(out_dir) / f"seed_{seed}"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{what} not found at {path}")
    return path


def _rel(path: Path, base: Path) -> str:
    return str(path.relative_to(base))


def _load_manifest(d: Path) -> dict:
    p = d / "manifest.json"
    if p.exists():
        return json.loads(p.read_text())
    return {"checkpoints": {}, "datasets": {}, "reports": {}, "logs": {}, "timings": {}}


def _save_manifest(d: Path, cfg: ExperimentConfig, seed: int, manifest: dict) -> None:
    manifest["config_hash"] = config_mod.config_hash(cfg)
    manifest["seed"] = seed
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_report(path: Path, reports: dict[str, MetricsReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", *COLUMNS])
        for name, rep in reports.items():
            w.writerow([name, *(repr(float(v)) for v in rep.row())])


def _write_log(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _load_domains(d: Path) -> Domains:
    return Domains(*(load_dataset(_require(d / f"{name}.bds", f"{name} dataset")) for name in SPLITS))


def _seeds(cfg, seeds):
    return list(cfg.seeds if seeds is None else seeds)


def cmd_gen_data(cfg: ExperimentConfig, out_dir, seeds=None) -> list[Path]:
    """Write the four dataset files for every seed."""
    written = []
    for seed in _seeds(cfg, seeds):
        d = seed_dir(out_dir, seed)
        d.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        dom = make_domains(cfg, seed)
        manifest = _load_manifest(d)
        for name in SPLITS:
            path = d / f"{name}.bds"
            save_dataset(getattr(dom, name), path)
            manifest["datasets"][name] = _rel(path, d)
            written.append(path)
        manifest["timings"]["gen_data"] = time.perf_counter() - t0
        _save_manifest(d, cfg, seed, manifest)
    return written


def cmd_train_source(cfg: ExperimentConfig, out_dir, seeds=None) -> dict:
    """Supervised training on labeled source; reports source-test and target-test metrics."""
    results = {}
    for seed in _seeds(cfg, seeds):
        d = seed_dir(out_dir, seed)
        dom = _load_domains(d)
        t0 = time.perf_counter()
        model = train_source(cfg, dom, seed)
        save_checkpoint(d / "source.ckpt", model, cfg.polarity, {"stage": "source", "seed": seed})
        reports = {"source_test": evaluate(model, dom.source_test),
                   "source_only": evaluate(model, dom.target_test)}
        _write_report(d / "report_source.csv", reports)
        manifest = _load_manifest(d)
        manifest["checkpoints"]["source"] = "source.ckpt"
        manifest["reports"]["source"] = "report_source.csv"
        manifest["timings"]["train_source"] = time.perf_counter() - t0
        _save_manifest(d, cfg, seed, manifest)
        results[seed] = reports
        log.info("seed %d: source test acc %.4f, target acc %.4f", seed,
                 reports["source_test"].accuracy, reports["source_only"].accuracy)
    return results


def cmd_adapt(cfg: ExperimentConfig, out_dir, stage="both", oracle=False, seeds=None) -> dict:
    """Run DMG and/or TMA (or the oracle protocol) and report on the target test set."""
    if stage not in ("dmg", "tma", "both"):
        raise ValueError(f"unknown stage {stage!r}")
    results = {}
    for seed in _seeds(cfg, seeds):
        d = seed_dir(out_dir, seed)
        dom = _load_domains(d)
        manifest = _load_manifest(d)
        reports = {}
        if oracle:
            t0 = time.perf_counter()
            model = train_oracle(cfg, dom, seed)
            save_checkpoint(d / "oracle.ckpt", model, cfg.polarity, {"stage": "oracle", "seed": seed})
            reports["oracle"] = evaluate(model, dom.target_test)
            _write_report(d / "report_oracle.csv", {"oracle": reports["oracle"]})
            manifest["checkpoints"]["oracle"] = "oracle.ckpt"
            manifest["reports"]["oracle"] = "report_oracle.csv"
            manifest["timings"]["oracle"] = time.perf_counter() - t0
        else:
            if stage in ("dmg", "both"):
                source, _, _ = load_checkpoint(_require(d / "source.ckpt", "source checkpoint"))
                t0 = time.perf_counter()
                res = adapt_dmg(cfg, source, dom, seed)
                save_checkpoint(d / "bridge.ckpt", res.bridge, cfg.polarity, {"stage": "dmg", "seed": seed})
                _write_log(d / "dmg_log.csv", res.history)
                reports["bridge"] = evaluate(res.bridge, dom.target_test)
                _write_report(d / "report_bridge.csv", {"bridge": reports["bridge"]})
                manifest["checkpoints"]["bridge"] = "bridge.ckpt"
                manifest["reports"]["bridge"] = "report_bridge.csv"
                manifest["logs"]["dmg"] = "dmg_log.csv"
                manifest["timings"]["dmg"] = time.perf_counter() - t0
            if stage in ("tma", "both"):
                bridge, _, _ = load_checkpoint(_require(d / "bridge.ckpt", "bridge checkpoint"))
                t0 = time.perf_counter()
                res = adapt_tma(cfg, bridge, dom, seed)
                save_checkpoint(d / "target.ckpt", res.target, cfg.polarity, {"stage": "tma", "seed": seed})
                _write_log(d / "tma_log.csv", res.history)
                reports["bba"] = evaluate(res.target, dom.target_test)
                _write_report(d / "report_target.csv", {"bba": reports["bba"]})
                manifest["checkpoints"]["target"] = "target.ckpt"
                manifest["reports"]["target"] = "report_target.csv"
                manifest["logs"]["tma"] = "tma_log.csv"
                manifest["timings"]["tma"] = time.perf_counter() - t0
        _save_manifest(d, cfg, seed, manifest)
        results[seed] = reports
    return results


def cmd_evaluate(checkpoint, dataset) -> MetricsReport:
    model, _, _ = load_checkpoint(checkpoint)
    return evaluate(model, load_dataset(dataset))


def cmd_ablation(cfg: ExperimentConfig, out_dir, seeds=None) -> dict:
    """Additive ladder over all seeds; writes ``ablation.csv`` (rungs x seeds + mean)."""
    seeds = _seeds(cfg, seeds)
    table = {name: {} for name in LADDER}
    for seed in seeds:
        d = seed_dir(out_dir, seed)
        dom = _load_domains(d)
        src_path = d / "source.ckpt"
        source = load_checkpoint(src_path)[0] if src_path.exists() else train_source(cfg, dom, seed)
        for name, acc in run_ablation_seed(cfg, seed, dom, source).items():
            table[name][seed] = acc
    out = Path(out_dir) / "ablation.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", *(f"seed_{s}" for s in seeds), "mean"])
        for name in LADDER:
            vals = [table[name][s] for s in seeds]
            w.writerow([name, *(repr(v) for v in vals), repr(float(np.mean(vals)))])
    return table


def cmd_sweep(cfg: ExperimentConfig, out_dir, param, values=None, seeds=None) -> dict:
    """Loss-weight sensitivity; writes ``sweep_<param>.csv`` (values x seeds + mean)."""
    seeds = _seeds(cfg, seeds)
    values = [float(v) for v in (values or SWEEP_GRID)]
    table = {v: {} for v in values}
    for seed in seeds:
        d = seed_dir(out_dir, seed)
        dom = _load_domains(d)
        src_path = d / "source.ckpt"
        source = load_checkpoint(src_path)[0] if src_path.exists() else train_source(cfg, dom, seed)
        for v, acc in run_sweep_seed(cfg, seed, param, values, dom, source).items():
            table[v][seed] = acc
    with open(Path(out_dir) / f"sweep_{param}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([param, *(f"seed_{s}" for s in seeds), "mean"])
        for v in values:
            vals = [table[v][s] for s in seeds]
            w.writerow([repr(v), *(repr(a) for a in vals), repr(float(np.mean(vals)))])
    return table


def _read_report(path: Path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        return {row["method"]: [float(row[c]) for c in COLUMNS] for row in csv.DictReader(fh)}


ROW_NAMES = {"source_only": "Source only", "oracle": "Oracle", "bridge": "Bridge (DMG)", "bba": "BBA"}


def cmd_report(out_dir) -> str:
    """Average per-seed reports into one Acc | macro P R F1 | weighted P R F1 table."""
    out_dir = Path(out_dir)
    per_method: dict[str, list[list[float]]] = {}
    for d in sorted(out_dir.glob("seed_*")):
        for path in sorted(d.glob("report_*.csv")):
            for method, vals in _read_report(path).items():
                if method in ROW_NAMES:
                    per_method.setdefault(method, []).append(vals)
    if not per_method:
        raise MissingArtifact(f"no per-seed reports under {out_dir}")
    lines = [f"{'Method':<14}{'n':>3} {'Acc':>7} | {'macro P':>7} {'R':>6} {'F1':>6} | {'wtd P':>6} {'R':>6} {'F1':>6}"]
    rows = []
    for method in ROW_NAMES:
        if method not in per_method:
            continue
        mean = 100 * np.mean(per_method[method], axis=0)
        rows.append([ROW_NAMES[method], len(per_method[method]), *mean])
        lines.append(f"{ROW_NAMES[method]:<14}{len(per_method[method]):>3} {mean[0]:7.2f} | "
                     f"{mean[1]:7.2f} {mean[2]:6.2f} {mean[3]:6.2f} | {mean[4]:6.2f} {mean[5]:6.2f} {mean[6]:6.2f}")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n_seeds", *COLUMNS])
        for r in rows:
            w.writerow([r[0], r[1], *(f"{v:.4f}" for v in r[2:])])
    ablation = out_dir / "ablation.csv"
    if ablation.exists():
        lines.append("")
        with open(ablation, newline="") as fh:
            for row in csv.DictReader(fh):
                lines.append(f"{row['method']:<14}{100 * float(row['mean']):7.2f}")
    return "\n".join(lines)


def _resolve_out(args, cfg):
    return args.out or os.environ.get(ENV_OUTPUT) or cfg.output_dir


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bba", description="Source-free adaptation experiments on synthetic gratings")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (defaults if omitted)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, action="append", dest="seeds", help="restrict to this seed (repeatable)")

    common(sub.add_parser("gen-data", help="generate source/target train/test datasets"))
    common(sub.add_parser("train-source", help="train the source model (source-only baseline)"))
    sp = sub.add_parser("adapt", help="run DMG and/or TMA, or the oracle protocol")
    common(sp)
    sp.add_argument("--stage", choices=("dmg", "tma", "both"), default="both")
    sp.add_argument("--oracle", action="store_true", help="train on labeled target data instead")
    common(sub.add_parser("ablation", help="run the additive ablation ladder"))
    sp = sub.add_parser("sweep", help="sensitivity of BBA accuracy to one loss weight")
    common(sp)
    sp.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    sp.add_argument("--values", type=float, nargs="+", help=f"grid (default {' '.join(map(str, SWEEP_GRID))})")
    sp = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp = sub.add_parser("report", help="aggregate per-seed reports")
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp = sub.add_parser("cluster", help="standalone fused-distance clustering on text matrices")
    sp.add_argument("--features", required=True)
    sp.add_argument("--probs", required=True)
    sp.add_argument("--hard-out", required=True)
    sp.add_argument("--soft-out", required=True)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--tau", type=float, default=1.0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "evaluate":
            rep = cmd_evaluate(args.checkpoint, args.dataset)
            print(rep.table(Path(args.checkpoint).stem))
            return 0
        if args.command == "cluster":
            pl = run_standalone(args.features, args.probs, args.hard_out, args.soft_out, args.rounds, args.tau)
            print(f"clustered {len(pl.hard)} samples")
            return 0
        cfg = config_mod.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
        out = _resolve_out(args, cfg)
        if args.command == "gen-data":
            for path in cmd_gen_data(cfg, out, args.seeds):
                print(path)
        elif args.command == "train-source":
            for seed, reps in cmd_train_source(cfg, out, args.seeds).items():
                print(f"seed {seed}: source test {reps['source_test'].accuracy:.4f}  "
                      f"target (source only) {reps['source_only'].accuracy:.4f}")
        elif args.command == "adapt":
            for seed, reps in cmd_adapt(cfg, out, args.stage, args.oracle, args.seeds).items():
                print(f"seed {seed}: " + "  ".join(f"{k} {r.accuracy:.4f}" for k, r in reps.items()))
        elif args.command == "ablation":
            table = cmd_ablation(cfg, out, args.seeds)
            for name in LADDER:
                print(f"{name:<10} {100 * np.mean(list(table[name].values())):7.2f}")
        elif args.command == "sweep":
            table = cmd_sweep(cfg, out, args.param, args.values, args.seeds)
            for v, accs in table.items():
                print(f"{args.param}={v:<6g} {100 * np.mean(list(accs.values())):7.2f}")
        elif args.command == "report":
            print(cmd_report(out))
        return 0
    except config_mod.ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - one-line error contract
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
