"""Two-stage source-free domain adaptation on a synthetic benchmark.

Pure numpy: a small dense network with hand-written backprop, fused-distance
pseudo-label clustering, block masking, the two adaptation stages and the
evaluation metrics.
"""

from .clustering import cluster_pseudo_labels, fused_distance
from .data import Dataset, ShiftConfig, generate_domain_pair, load_dataset, save_dataset
from .dmg import DmgConfig, run_dmg
from .experiment import ExperimentConfig
from .metrics import confusion, report
from .nn import Model, grad_check, load_checkpoint, save_checkpoint, softmax
from .polarity import PolarityMap
from .tma import TmaConfig, run_tma

__version__ = "0.1.0"
