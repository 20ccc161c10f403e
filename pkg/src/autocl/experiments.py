"""Paired ablation studies over the strategy search.

Three studies, each producing a JSON-ready report with the seeds, the config
hash, per-run summaries, and a boolean verdict:

- filter ablation: reward filtering on vs. accept-everything, paired seeds;
  verdict is whether the filtered arm reaches a higher mean best validation
  reward.
- speed ablation: one-epoch probes vs. multi-epoch probes at identical step
  counts; verdict is a wallclock speedup of at least 5x.
- space ablation: the full strategy space vs. a restriction to the raw data
  augmentation branches; verdict is that the full space does at least as well
  on average, and the restricted trace is checked to never leave its subspace.

Reports are bit-reproducible for fixed seeds apart from wallclock fields.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SearchView
from .errors import ConfigError
from .search import SearchConfig, SearchResult, config_hash, run_candidate_search, write_trace
from .space import BRANCHES, SpaceSpec, Strategy

MIN_ABLATION_SEEDS = 5
MIN_SPEED_ITERS = 50
SPEED_TARGET = 5.0

DATA_AUG_BRANCH_NAMES = (
    "resize_p",
    "rescale_p",
    "jitter_p",
    "point_mask_p",
    "freq_mask_p",
    "crop_p",
    "aug_order",
)


def data_aug_space(base: Strategy | None = None) -> SpaceSpec:
    """The search space cut down to raw-signal augmentation choices only."""
    options = dict(BRANCHES)
    free = {name: options[name] for name in DATA_AUG_BRANCH_NAMES}
    return SpaceSpec().restrict(free, base or Strategy())


def _check_seeds(seeds: Sequence[int]) -> list[int]:
    seeds = [int(s) for s in seeds]
    if len(seeds) < MIN_ABLATION_SEEDS:
        raise ConfigError(f"ablations need at least {MIN_ABLATION_SEEDS} seeds, got {len(seeds)}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("ablation seeds must be distinct")
    return seeds


def _best_reward(result: SearchResult) -> float:
    if result.r_star is None:
        return float("nan")
    return float(result.r_star)


def _maybe_write_trace(out_dir, name: str, result: SearchResult, paths: list) -> None:
    if out_dir is None:
        return
    path = Path(out_dir) / f"{name}.trace.jsonl"
    write_trace(path, result.trace)
    paths.append(str(path))


def run_filter_ablation(
    view: SearchView, cfg: SearchConfig, seeds: Sequence[int], out_dir=None
) -> dict:
    """Paired searches with and without reward filtering."""
    seeds = _check_seeds(seeds)
    t0 = time.perf_counter()
    runs = []
    trace_paths: list = []
    for seed in seeds:
        filtered = run_candidate_search(view, replace(cfg, seed=seed, filtering=True))
        unfiltered = run_candidate_search(view, replace(cfg, seed=seed, filtering=False))
        _maybe_write_trace(out_dir, f"filter_seed{seed}_on", filtered, trace_paths)
        _maybe_write_trace(out_dir, f"filter_seed{seed}_off", unfiltered, trace_paths)
        runs.append(
            {
                "seed": seed,
                "filtered_best": _best_reward(filtered),
                "unfiltered_best": _best_reward(unfiltered),
                "filtered_accept_rate": float(
                    np.mean([r["accepted"] for r in filtered.trace])
                ),
            }
        )
    filtered_mean = float(np.mean([r["filtered_best"] for r in runs]))
    unfiltered_mean = float(np.mean([r["unfiltered_best"] for r in runs]))
    return {
        "name": "filter_ablation",
        "task": cfg.task,
        "seeds": seeds,
        "config_hash": config_hash(cfg),
        "runs": runs,
        "filtered_mean": filtered_mean,
        "unfiltered_mean": unfiltered_mean,
        "verdict": filtered_mean > unfiltered_mean,
        "trace_paths": trace_paths,
        "wallclock_ms": (time.perf_counter() - t0) * 1000.0,
    }


def run_speed_ablation(
    view: SearchView, cfg: SearchConfig, slow_epochs: int = 20, out_dir=None
) -> dict:
    """One-epoch probes against `slow_epochs`-epoch probes at equal steps."""
    if cfg.max_iters < MIN_SPEED_ITERS:
        raise ConfigError(f"speed ablation needs at least {MIN_SPEED_ITERS} search steps")
    if slow_epochs < 2:
        raise ConfigError("slow arm must run more than one probe epoch")
    t0 = time.perf_counter()
    fast = run_candidate_search(view, replace(cfg, probe_epochs=1))
    t1 = time.perf_counter()
    slow = run_candidate_search(view, replace(cfg, probe_epochs=slow_epochs))
    t2 = time.perf_counter()
    trace_paths: list = []
    _maybe_write_trace(out_dir, "speed_fast", fast, trace_paths)
    _maybe_write_trace(out_dir, "speed_slow", slow, trace_paths)
    fast_ms = (t1 - t0) * 1000.0
    slow_ms = (t2 - t1) * 1000.0
    speedup = slow_ms / fast_ms if fast_ms > 0 else float("inf")
    return {
        "name": "speed_ablation",
        "task": cfg.task,
        "iters": cfg.max_iters,
        "slow_epochs": slow_epochs,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "fast_ms": fast_ms,
        "slow_ms": slow_ms,
        "speedup": speedup,
        "fast_best": _best_reward(fast),
        "slow_best": _best_reward(slow),
        "verdict": speedup >= SPEED_TARGET,
        "trace_paths": trace_paths,
        "wallclock_ms": (t2 - t0) * 1000.0,
    }


def run_space_ablation(
    view: SearchView, cfg: SearchConfig, seeds: Sequence[int], out_dir=None
) -> dict:
    """Full search space against the data-augmentation-only restriction."""
    seeds = _check_seeds(seeds)
    restricted_space = data_aug_space()
    t0 = time.perf_counter()
    runs = []
    trace_paths: list = []
    restricted_clean = True
    for seed in seeds:
        full = run_candidate_search(view, replace(cfg, seed=seed))
        restricted = run_candidate_search(view, replace(cfg, seed=seed, space=restricted_space))
        _maybe_write_trace(out_dir, f"space_seed{seed}_full", full, trace_paths)
        _maybe_write_trace(out_dir, f"space_seed{seed}_augonly", restricted, trace_paths)
        for record in restricted.trace:
            s = record["strategy"]
            if s["norm"] != "none" or s["emb_jitter_p"] != 0.0 or s["emb_mask_p"] != 0.0:
                restricted_clean = False
        runs.append(
            {
                "seed": seed,
                "full_best": _best_reward(full),
                "restricted_best": _best_reward(restricted),
            }
        )
    full_mean = float(np.mean([r["full_best"] for r in runs]))
    restricted_mean = float(np.mean([r["restricted_best"] for r in runs]))
    return {
        "name": "space_ablation",
        "task": cfg.task,
        "seeds": seeds,
        "config_hash": config_hash(cfg),
        "runs": runs,
        "full_mean": full_mean,
        "restricted_mean": restricted_mean,
        "restricted_space_clean": restricted_clean,
        "verdict": full_mean >= restricted_mean and restricted_clean,
        "trace_paths": trace_paths,
        "wallclock_ms": (time.perf_counter() - t0) * 1000.0,
    }


def strip_report_wallclock(report: dict) -> dict:
    """Drop timing fields so reports can be compared across repeat runs."""
    drop = {"wallclock_ms", "fast_ms", "slow_ms", "speedup"}
    return {k: v for k, v in report.items() if k not in drop}


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
