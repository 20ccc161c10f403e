"""Strategy data model: the 18-way discrete search space, encoding, presets.

A contrastive learning strategy (CLS) fixes six augmentation strengths and
their application order, two embedding-transform strengths and a
normalization, the pair-construction flags (temporal, cross-scale, pooling
kernel and operator, adjacency), and the loss family (type, similarity,
temperature). The controller samples one option index per branch; ``instance``
contrast is always on and is not a branch.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError

P_GRID: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95)
AUG_ORDER_OPTIONS: tuple[int, ...] = (1, 2, 3, 4, 5)
NORM_OPTIONS: tuple[str, ...] = ("none", "layer", "l2")
BOOL_OPTIONS: tuple[bool, ...] = (False, True)
KERNEL_OPTIONS: tuple[int, ...] = (0, 2, 3, 5)
POOL_OPTIONS: tuple[str, ...] = ("avg", "max")
LOSS_OPTIONS: tuple[str, ...] = ("infonce", "triplet")
SIM_OPTIONS: tuple[str, ...] = ("dot", "cos", "dist")
TEMPERATURE_OPTIONS: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class Strategy:
    resize_p: float = 0.0
    rescale_p: float = 0.0
    jitter_p: float = 0.0
    point_mask_p: float = 0.0
    freq_mask_p: float = 0.0
    crop_p: float = 0.0
    aug_order: int = 1
    emb_jitter_p: float = 0.0
    emb_mask_p: float = 0.0
    norm: str = "none"
    instance: bool = True
    temporal: bool = False
    cross_scale: bool = False
    kernel: int = 0
    pool: str = "avg"
    adjacent: bool = False
    loss_type: str = "infonce"
    sim: str = "dot"
    temperature: float = 1.0

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


_FIELD_NAMES = tuple(f.name for f in dc_fields(Strategy))

# branch order mirrors the Strategy field order with `instance` (fixed) removed
BRANCHES: tuple[tuple[str, tuple], ...] = (
    ("resize_p", P_GRID),
    ("rescale_p", P_GRID),
    ("jitter_p", P_GRID),
    ("point_mask_p", P_GRID),
    ("freq_mask_p", P_GRID),
    ("crop_p", P_GRID),
    ("aug_order", AUG_ORDER_OPTIONS),
    ("emb_jitter_p", P_GRID),
    ("emb_mask_p", P_GRID),
    ("norm", NORM_OPTIONS),
    ("temporal", BOOL_OPTIONS),
    ("cross_scale", BOOL_OPTIONS),
    ("kernel", KERNEL_OPTIONS),
    ("pool", POOL_OPTIONS),
    ("adjacent", BOOL_OPTIONS),
    ("loss_type", LOSS_OPTIONS),
    ("sim", SIM_OPTIONS),
    ("temperature", TEMPERATURE_OPTIONS),
)

_FULL_OPTIONS = dict(BRANCHES)


@dataclass(frozen=True)
class SpaceSpec:
    """An ordered list of (branch name, option list) pairs plus the base
    strategy whose fields fill every dimension a restricted space leaves out."""

    branches: tuple[tuple[str, tuple], ...] = BRANCHES
    base: Strategy = Strategy()

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(len(opts) for _, opts in self.branches)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.branches)

    def restrict(self, free: dict[str, Sequence], base: Strategy) -> "SpaceSpec":
        """Keep only ``free`` branches (with option subsets); fix the rest to ``base``."""
        branches = []
        for name, options in BRANCHES:
            if name not in free:
                continue
            subset = tuple(free[name])
            for opt in subset:
                if opt not in options:
                    raise ConfigError(f"{name} option {opt!r} not in the full space")
            branches.append((name, subset))
        missing = set(free) - {n for n, _ in BRANCHES}
        if missing:
            raise ConfigError(f"unknown branch names: {sorted(missing)}")
        return SpaceSpec(tuple(branches), validate(base))


FULL_SPACE = SpaceSpec()


def _check_field(name: str, value):
    """Normalize one field value; raise naming the field when off grid."""
    options = _FULL_OPTIONS.get(name)
    if name == "instance":
        if value is not True:
            raise ConfigError("instance must be true")
        return True
    if options is P_GRID or options is TEMPERATURE_OPTIONS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} off grid: {value!r}")
        value = float(value)
        if value not in options:
            raise ConfigError(f"{name} off grid: {value!r}")
        return value
    if options is BOOL_OPTIONS:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean, got {value!r}")
        return value
    if options in (AUG_ORDER_OPTIONS, KERNEL_OPTIONS):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} off grid: {value!r}")
        if value not in options:
            raise ConfigError(f"{name} off grid: {value!r}")
        return value
    if value not in options:
        raise ConfigError(f"{name} must be one of {options}, got {value!r}")
    return value


def canonicalize(strategy: Strategy) -> Strategy:
    """Force dead flags off: adjacency needs temporal, cross-scale needs pooling."""
    updates = {}
    if not strategy.temporal and strategy.adjacent:
        updates["adjacent"] = False
    if strategy.kernel == 0 and strategy.cross_scale:
        updates["cross_scale"] = False
    if not strategy.instance:
        updates["instance"] = True
    return replace(strategy, **updates) if updates else strategy


def validate(strategy: Strategy) -> Strategy:
    """Return the canonical form of ``strategy`` or raise naming the bad field."""
    checked = {name: _check_field(name, getattr(strategy, name)) for name in _FIELD_NAMES}
    return canonicalize(Strategy(**checked))


def strategy_from_dict(d: dict) -> Strategy:
    """Parse the flat JSON object form; unknown or missing keys are rejected."""
    if not isinstance(d, dict):
        raise ConfigError("strategy must be a JSON object")
    unknown = set(d) - set(_FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown strategy keys: {sorted(unknown)}")
    missing = set(_FIELD_NAMES) - set(d)
    if missing:
        raise ConfigError(f"missing strategy keys: {sorted(missing)}")
    return validate(Strategy(**d))


def encode(strategy: Strategy, spec: SpaceSpec = FULL_SPACE) -> list[int]:
    """Map a strategy to per-branch option indices (canonical form first)."""
    s = validate(strategy)
    indices = []
    for name, options in spec.branches:
        value = getattr(s, name)
        try:
            indices.append(options.index(value))
        except ValueError:
            raise ConfigError(f"{name} off grid for this space: {value!r}") from None
    return indices


def decode(indices: Sequence[int], spec: SpaceSpec = FULL_SPACE) -> Strategy:
    """Inverse of encode over ``spec``; free dims override the base strategy."""
    if len(indices) != len(spec.branches):
        raise ConfigError(f"expected {len(spec.branches)} indices, got {len(indices)}")
    values = {}
    for (name, options), idx in zip(spec.branches, indices):
        idx = int(idx)
        if not 0 <= idx < len(options):
            raise ConfigError(f"index {idx} out of range for {name}")
        values[name] = options[idx]
    return canonicalize(replace(spec.base, **values))


def space_size(mode: str = "paper") -> int:
    """Total number of strategies; 'paper' groups pair construction as 32
    options, 'full' counts its five binaries/choices independently (128)."""
    aug = 5 * 11**6
    emb = 3 * 11**2
    loss = 2 * 3 * 5
    if mode == "paper":
        return aug * emb * 32 * loss
    if mode == "full":
        return aug * emb * 128 * loss
    raise ConfigError(f"unknown space_size mode {mode!r}")


def random_strategy(seed, spec: SpaceSpec = FULL_SPACE) -> Strategy:
    """Uniform independent choice per branch, canonicalized; deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    indices = [int(rng.integers(len(options))) for _, options in spec.branches]
    return decode(indices, spec)


def default_strategy() -> Strategy:
    """Everything off: no augmentations, no transform, instance contrast only."""
    return Strategy()


def ggs_preset() -> Strategy:
    """The generally-good strategy: the fixed row recommended for reuse."""
    return Strategy(
        resize_p=0.2,
        rescale_p=0.3,
        jitter_p=0.0,
        point_mask_p=0.2,
        freq_mask_p=0.0,
        crop_p=0.2,
        aug_order=3,
        emb_jitter_p=0.7,
        emb_mask_p=0.1,
        norm="none",
        instance=True,
        temporal=False,
        cross_scale=False,
        kernel=5,
        pool="avg",
        adjacent=False,
        loss_type="infonce",
        sim="dist",
        temperature=1.0,
    )
