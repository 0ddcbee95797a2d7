"""Self-supervised contrastive pretraining for network-flow classification.

The package splits into small layers: `numgrad` (tensors, ops, autodiff,
optimizer, checkpoints), `dataio` (schemas, CSV loading, min-max/one-hot
encoding, splits), `augment` (random masking views), `model` (1D-conv
encoder and heads), `sscl` (the contrastive objective and both training
loops), `metrics` (weighted classification metrics), `transfer`
(cross-schema alignment), and `cli` (the `flowcl` command).
"""

from . import augment, dataio, metrics, model, numgrad, sscl, synth, transfer
from .errors import FlowclError
from .seeding import substream

__version__ = "0.1.0"

__all__ = [
    "FlowclError",
    "__version__",
    "augment",
    "dataio",
    "metrics",
    "model",
    "numgrad",
    "sscl",
    "substream",
    "synth",
    "transfer",
]
