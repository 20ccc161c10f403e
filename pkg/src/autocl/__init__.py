"""Automated discovery of contrastive learning strategies for time series.

The package searches an 18-way discrete strategy space (augmentations,
embedding transforms, pair construction, loss family) with a REINFORCE
controller, probing each sampled strategy with a one-epoch encoder update and
keeping only strategies whose filtered reward improves on the running best.
Kept candidates are then fully pretrained in parallel and ranked on
validation data.
"""

__version__ = "0.1.0"
