"""Dilated convolutional encoder for multivariate series.

The encoder maps a batch (B, T, c) to per-timestep embeddings (B, T, out_dim):
an input projection into the hidden width, a stack of residual blocks

    h <- h + relu(conv1d_dilated(h, W_i, b_i, dilation=2^(i mod 10)))

with kernel size 3 and exponentially growing dilation, then an output
projection. Parameters live in plain numpy arrays; `bind` attaches them to a
tape once so several forward passes in one step share the same leaves and
gradients accumulate across passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nm
from .checkpoint import load_arrays, save_arrays
from .errors import ConfigError
from .space import Strategy

KERNEL_SIZE = 3
# dilations repeat after 2^9 = 512, enough to cover windows of a few thousand steps
DILATION_CYCLE = 10


@dataclass(frozen=True)
class EncoderConfig:
    in_channels: int = 1
    hidden: int = 64
    depth: int = 10
    out_dim: int = 320

    def validate(self) -> None:
        for name in ("in_channels", "hidden", "depth", "out_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"encoder {name} must be a positive integer, got {value!r}")

    def to_json_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "hidden": self.hidden,
            "depth": self.depth,
            "out_dim": self.out_dim,
        }


def block_dilation(i: int) -> int:
    return 2 ** (i % DILATION_CYCLE)


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_bound(name: str, config: EncoderConfig) -> float:
    """Half-width of the uniform range used to draw the named weight."""
    c, h, d = config.in_channels, config.hidden, config.out_dim
    if name == "in_proj_w":
        return float(np.sqrt(6.0 / (c + h)))
    if name == "out_proj_w":
        return float(np.sqrt(6.0 / (h + d)))
    if name.startswith("block"):
        fan = KERNEL_SIZE * h
        return float(np.sqrt(6.0 / (fan + fan)))
    raise ConfigError(f"unknown weight name {name!r}")


@dataclass
class EncoderParams:
    config: EncoderConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def flat_norm(self) -> float:
        total = sum(float(np.sum(v * v)) for v in self.arrays.values())
        return float(np.sqrt(total))


def init_encoder(config: EncoderConfig, seed: int) -> EncoderParams:
    config.validate()
    rng = np.random.default_rng(seed)
    c, h = config.in_channels, config.hidden
    arrays: dict[str, np.ndarray] = {}
    arrays["in_proj_w"] = _uniform_init(rng, (c, h), c, h)
    arrays["in_proj_b"] = np.zeros(h)
    for i in range(config.depth):
        fan = KERNEL_SIZE * h
        arrays[f"block{i}_w"] = _uniform_init(rng, (KERNEL_SIZE, h, h), fan, fan)
        arrays[f"block{i}_b"] = np.zeros(h)
    arrays["out_proj_w"] = _uniform_init(rng, (h, config.out_dim), h, config.out_dim)
    arrays["out_proj_b"] = np.zeros(config.out_dim)
    return EncoderParams(config, arrays)


class BoundEncoder:
    """Encoder parameters attached to a tape as trainable leaves.

    All forward passes through the same BoundEncoder share leaves, so one
    backward sweep sums gradients over every pass (both views of a pair).
    """

    def __init__(self, params: EncoderParams, tape: nm.Tape):
        params.config.validate()
        self.config = params.config
        self.tape = tape
        self.leaves: dict[str, nm.Tensor] = {
            name: tape.leaf(arr, name=name) for name, arr in params.arrays.items()
        }

    def forward(self, x: np.ndarray | nm.Tensor) -> nm.Tensor:
        if isinstance(x, nm.Tensor):
            xt = x
        else:
            x = np.asarray(x, dtype=np.float64)
            if x.ndim != 3:
                raise ConfigError(f"encoder input must be (batch, time, channels), got shape {x.shape}")
            xt = self.tape.constant(x, name="x")
        if xt.data.shape[-1] != self.config.in_channels:
            raise ConfigError(
                f"encoder expects {self.config.in_channels} input channels, got {xt.data.shape[-1]}"
            )
        h = nm.add(nm.matmul(xt, self.leaves["in_proj_w"]), self.leaves["in_proj_b"])
        for i in range(self.config.depth):
            conv = nm.conv1d_dilated(
                h, self.leaves[f"block{i}_w"], self.leaves[f"block{i}_b"], dilation=block_dilation(i)
            )
            h = nm.add(h, nm.relu(conv))
        return nm.add(nm.matmul(h, self.leaves["out_proj_w"]), self.leaves["out_proj_b"])

    def export(self) -> EncoderParams:
        return EncoderParams(self.config, {k: v.data.copy() for k, v in self.leaves.items()})


def encode(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Inference-only forward pass; returns a plain (B, T, out_dim) array."""
    tape = nm.Tape()
    return BoundEncoder(params, tape).forward(x).data


def transform_embeddings(
    h: nm.Tensor, strategy: Strategy, rng: np.random.Generator | None = None
) -> nm.Tensor:
    """Apply embedding-space augmentation then normalization, in that order.

    Jitter and mask draws are recorded as constants, so gradients flow only
    through the embeddings themselves.
    """
    tape = h.tape
    needs_rng = strategy.emb_jitter_p > 0.0 or strategy.emb_mask_p > 0.0
    if needs_rng and rng is None:
        raise ConfigError("embedding jitter/mask requires a random generator")
    if strategy.emb_jitter_p > 0.0:
        noise = rng.normal(0.0, strategy.emb_jitter_p, size=h.data.shape)
        h = nm.add(h, tape.constant(noise, name="emb_jitter"))
    if strategy.emb_mask_p > 0.0:
        keep = (rng.random(h.data.shape[:-1]) >= strategy.emb_mask_p).astype(np.float64)
        h = nm.multiply(h, tape.constant(keep[..., None], name="emb_mask"))
    if strategy.norm == "layer":
        h = nm.layer_norm(h, 1.0, 0.0)
    elif strategy.norm == "l2":
        h = nm.l2_normalize(h)
    elif strategy.norm != "none":
        raise ConfigError(f"unknown normalization {strategy.norm!r}")
    return h


def save_encoder(path: str | Path, params: EncoderParams) -> None:
    save_arrays(path, "encoder", params.config.to_json_dict(), params.arrays)


def load_encoder(path: str | Path) -> EncoderParams:
    config_dict, arrays = load_arrays(path, kind="encoder")
    config = EncoderConfig(**config_dict)
    expected = set(init_encoder(config, 0).arrays)
    if set(arrays) != expected:
        raise ConfigError(f"encoder checkpoint arrays do not match config {config_dict}")
    return EncoderParams(config, arrays)
