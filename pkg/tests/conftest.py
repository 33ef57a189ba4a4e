import numpy as np
import pytest

from bba.nn import Model

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(cid, title, passed, detail=""):
    ACCEPTANCE[cid] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    """8-class model on 6-dim inputs with two tanh layers."""
    return Model([6, 5, 4, 8], seed=7)


@pytest.fixture(scope="session")
def domains0():
    from bba.experiment import ExperimentConfig, make_domains
    return make_domains(ExperimentConfig(), 0)


@pytest.fixture(scope="session")
def source0(domains0):
    from bba.experiment import ExperimentConfig, train_source
    return train_source(ExperimentConfig(), domains0, 0)


@pytest.fixture(scope="session")
def benchmark():
    """Default-config protocol plus ablation ladder over five seeds, computed once.

    Returns per-seed dicts of target-test accuracies plus the DMG / TMA logs
    of the full pipeline and the align-only rung, and the wall-clock seconds.
    """
    import time

    from bba.experiment import (
        ExperimentConfig, adapt_dmg, adapt_tma, evaluate, ladder_configs, make_domains, train_oracle,
        train_source,
    )

    cfg = ExperimentConfig()
    t0 = time.perf_counter()
    runs = []
    for seed in cfg.seeds:
        dom = make_domains(cfg, seed)
        source = train_source(cfg, dom, seed)
        row = {
            "seed": seed,
            "source_test": evaluate(source, dom.source_test).accuracy,
            "source_only": evaluate(source, dom.target_test).accuracy,
            "oracle": evaluate(train_oracle(cfg, dom, seed), dom.target_test).accuracy,
        }
        dmg_runs = {}
        for name, dcfg, tcfg in ladder_configs(cfg):
            key = (dcfg.use_cluster, dcfg.use_mask)
            if key not in dmg_runs:
                dmg_runs[key] = adapt_dmg(cfg, source, dom, seed, dcfg)
            if tcfg is None:
                model = dmg_runs[key].bridge
                row[f"{name}_dmg_history"] = dmg_runs[key].history
            else:
                res = adapt_tma(cfg, dmg_runs[key].bridge, dom, seed, tcfg)
                model = res.target
                row[f"{name}_tma_history"] = res.history
            row[name] = evaluate(model, dom.target_test).accuracy
        row["bridge"] = row["+mask"]
        row["bba"] = row["+L_pol"]
        runs.append(row)
    return {"runs": runs, "seconds": time.perf_counter() - t0, "config": cfg}


def seed_mean(bench, key):
    return float(np.mean([r[key] for r in bench["runs"]]))
