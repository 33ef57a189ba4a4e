"""Full protocol for one seed: source only, bridge, final target model, oracle.

Takes a few seconds. The command-line tool runs the same thing for every
seed and writes checkpoints and CSV reports.
"""

from bba.experiment import ExperimentConfig, run_ablation_seed, run_protocol_seed

cfg = ExperimentConfig()
out = run_protocol_seed(cfg, seed=0)
print(f"source model on source test: {100 * out['source_test'].accuracy:.2f}")
for key, name in (("source_only", "source only"), ("bridge", "bridge"), ("bba", "BBA"), ("oracle", "oracle")):
    print(out[key].table(name).splitlines()[-1])

print("\nper-epoch bridge-stage log (first and last epoch):")
for row in (out["dmg_history"][0], out["dmg_history"][-1]):
    print({k: round(v, 4) for k, v in row.items()})

print("\nablation ladder, target-test accuracy:")
for rung, acc in run_ablation_seed(cfg, seed=0).items():
    print(f"  {rung:<9} {100 * acc:.2f}")
