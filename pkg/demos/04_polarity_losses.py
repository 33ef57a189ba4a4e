"""Why the polarity terms matter.

Class-level entropy cannot tell apart predictions that differ only by which
classes carry the mass. Adding polarity marginals separates a mistake that
stays inside the right polarity group from one that crosses over.
"""

import numpy as np

from bba.nn import entropy
from bba.polarity import PolarityMap
from bba.tma import polarity_marginals, polarized_im_loss, polarized_sl_loss

pmap = PolarityMap((0, 1, 2, 3), (4, 5, 6, 7))
same_side = np.array([[0.3, 0.6, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0]])
crossed = np.array([[0.3, 0.1, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0]])

for name, p in (("same side", same_side), ("crossed", crossed)):
    print(f"{name:<10} class entropy {entropy(p[0]):.4f}  marginals {np.round(polarity_marginals(p[0], pmap), 3)}"
          f"  polarized SL {polarized_sl_loss(p, [0], pmap):.4f}")

# batch-level IM: two confident predictions, on different vs the same polarity
print("IM, opposite polarities:", round(polarized_im_loss(np.eye(8)[[0, 5]], pmap), 4))
print("IM, same polarity:      ", round(polarized_im_loss(np.eye(8)[[0, 2]], pmap), 4))
