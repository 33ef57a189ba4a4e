"""Check every training loss against central finite differences.

The network and all losses are written by hand, so this is the first thing
to run after touching any of them.
"""

import numpy as np

from bba.dmg import dmg_objective
from bba.nn import Model, grad_check
from bba.polarity import PolarityMap
from bba.tma import tma_objective

rng = np.random.default_rng(0)
model = Model([10, 12, 9, 8], seed=0)
x = rng.normal(size=(16, 10))
x_masked = x * (rng.random(x.shape) > 0.3)
hard = rng.integers(0, 8, 16)
soft = rng.dirichlet(np.ones(8), size=16)
bank = rng.dirichlet(np.ones(8), size=16)
pmap = PolarityMap.halves(8)

# stage-one objective: distillation on soft labels plus weighted self-labeling, clean and masked views
err = grad_check(lambda m: dmg_objective(m, x, x_masked, hard, soft, lam=0.9)[:2], model)
print(f"bridge-stage loss      max relative error {err:.2e}")

# stage-two objective: KL to the bank plus polarity-aware self-labeling and IM terms
err = grad_check(lambda m: tma_objective(m, x, bank, pmap, gamma=1.0, delta=0.3)[:2], model)
print(f"target-stage loss      max relative error {err:.2e}")
