"""Core computations for splinelens.

Networks and their BN parameters, batch statistics, folded-hyperplane
geometry, exact 2-D partition tracing, concentration maps, mini-batch jitter,
training and the verification battery.
"""

from .batchnorm import BatchStats, DegenerateStatisticError, compute_stats
from .datasets import DatasetError, LabeledDataset, make_dataset
from .netfile import load_network, save_network
from .network import BNState, NetworkError, NetworkSpec, forward
from .partition import Partition2D, PartitionError, trace

__all__ = [
    "BatchStats",
    "BNState",
    "DatasetError",
    "DegenerateStatisticError",
    "LabeledDataset",
    "NetworkError",
    "NetworkSpec",
    "Partition2D",
    "PartitionError",
    "compute_stats",
    "forward",
    "load_network",
    "make_dataset",
    "save_network",
    "trace",
]
