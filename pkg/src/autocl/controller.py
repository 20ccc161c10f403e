"""Policy network that samples strategies branch by branch.

A learnable context vector e is projected through tanh(W e); each branch owns
a linear head whose softmax gives a categorical distribution over that
branch's options. Sampling records the log-probability nodes on a live tape
so a later REINFORCE update can reuse them without re-running the forward
pass (the environment step between sample and update is the expensive part).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

from . import numerics as nm
from .checkpoint import load_arrays, save_arrays
from .errors import ConfigError
from .space import FULL_SPACE, SpaceSpec, Strategy, canonicalize, decode

DEFAULT_DIM = 320
DEFAULT_LR = 0.0001


@dataclass
class ControllerParams:
    spec: SpaceSpec
    d: int
    arrays: dict[str, np.ndarray]

    def copy(self) -> "ControllerParams":
        return ControllerParams(self.spec, self.d, {k: v.copy() for k, v in self.arrays.items()})


def init_controller(spec: SpaceSpec = FULL_SPACE, d: int = DEFAULT_DIM, seed: int = 0) -> ControllerParams:
    if d < 1:
        raise ConfigError(f"controller dimension must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (d + d))
    arrays: dict[str, np.ndarray] = {
        "e": rng.normal(0.0, 0.1, size=d),
        "w": rng.uniform(-bound, bound, size=(d, d)),
    }
    for k, width in enumerate(spec.widths):
        b = np.sqrt(6.0 / (d + width))
        arrays[f"branch{k}_w"] = rng.uniform(-b, b, size=(d, width))
        arrays[f"branch{k}_b"] = np.zeros(width)
    return ControllerParams(spec, d, arrays)


def _forward(params: ControllerParams, tape: nm.Tape):
    leaves = {name: tape.leaf(arr, name=name) for name, arr in params.arrays.items()}
    e_col = nm.reshape(leaves["e"], (params.d, 1))
    hidden = nm.transpose(nm.tanh(nm.matmul(leaves["w"], e_col)), (1, 0))  # (1, d)
    probs = []
    for k in range(len(params.spec.widths)):
        logits = nm.add(nm.matmul(hidden, leaves[f"branch{k}_w"]), leaves[f"branch{k}_b"])
        probs.append(nm.softmax(logits))
    return leaves, probs


def branch_probs(params: ControllerParams) -> list[np.ndarray]:
    """Current per-branch categorical distributions (pure function of params)."""
    _, probs = _forward(params, nm.Tape())
    return [p.data[0].copy() for p in probs]


@dataclass
class SampleRecord:
    """One sampled strategy plus the live log-probability nodes backing it."""

    strategy: Strategy
    indices: tuple[int, ...]
    log_probs: list[float]
    score: nm.Tensor  # sum of branch log-probabilities, on a live tape
    leaves: dict[str, nm.Tensor]

    @property
    def joint_log_prob(self) -> float:
        return float(sum(self.log_probs))


def sample_strategy(params: ControllerParams, rng: np.random.Generator) -> SampleRecord:
    """Draw one option per branch; canonicalize only after recording log-probs,
    so the policy gradient matches the raw draws."""
    tape = nm.Tape()
    leaves, probs = _forward(params, tape)
    indices = []
    lp_nodes = []
    for k, p in enumerate(probs):
        vec = p.data[0]
        idx = int(rng.choice(len(vec), p=vec / vec.sum()))
        indices.append(idx)
        onehot = np.zeros((1, len(vec)))
        onehot[0, idx] = 1.0
        lp_nodes.append(nm.log(nm.sum_(nm.multiply(p, tape.constant(onehot)))))
    score = nm.reshape(reduce(nm.add, lp_nodes), ())
    strategy = canonicalize(decode(indices, params.spec))
    return SampleRecord(
        strategy=strategy,
        indices=tuple(indices),
        log_probs=[float(n.data) for n in lp_nodes],
        score=score,
        leaves=leaves,
    )


def reinforce_update(params: ControllerParams, record: SampleRecord, delta: float, lr: float = DEFAULT_LR) -> None:
    """One gradient-ascent step on delta * sum(log p) using the recorded nodes."""
    if lr <= 0:
        raise ConfigError(f"controller learning rate must be positive, got {lr}")
    if delta == 0.0:
        return
    grads = nm.backward(record.score)
    for name, leaf in record.leaves.items():
        params.arrays[name] += lr * delta * grads[leaf]


def save_controller(path: str | Path, params: ControllerParams) -> None:
    config = {"d": params.d, "widths": list(params.spec.widths)}
    save_arrays(path, "controller", config, params.arrays)


def load_controller(path: str | Path, spec: SpaceSpec = FULL_SPACE) -> ControllerParams:
    config, arrays = load_arrays(path, kind="controller")
    if list(config["widths"]) != list(spec.widths):
        raise ConfigError(
            f"controller checkpoint widths {config['widths']} do not match the space {list(spec.widths)}"
        )
    return ControllerParams(spec, int(config["d"]), arrays)
