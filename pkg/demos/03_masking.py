"""What a block mask does to a target image."""

import numpy as np

from bba.data import ShiftConfig, generate_domain_pair
from bba.masking import apply_mask, sample_mask

_, target = generate_domain_pair(ShiftConfig(samples_per_class=1))
image = target.images[0].reshape(16, 16)
mask = sample_mask(16, 16, 4, (4, 8), np.random.default_rng(1))

print(f"{mask.n_blocks} of 16 blocks selected; selected cells:")
for row in mask.grid:
    print("".join("#" if v else "." for v in row))

masked = apply_mask(image, mask)
print(f"zeroed pixels: {(masked == 0).sum()} (= {mask.n_blocks} x 16)")
print("literal product keeps only the selected blocks:",
      np.count_nonzero(apply_mask(image, mask, keep_selected=True)), "pixels survive")
