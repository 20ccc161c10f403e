"""Two-phase strategy search.

Phase 1 samples a strategy from the controller, probes it with one epoch of
encoder SGD, scores the probed encoder on the validation split, and converts
the raw reward R into a filtered signal

    delta = alpha * (R - R_star + epsilon)

where R_star is the best reward seen so far (the first step scores against
itself, so delta_1 = alpha * epsilon and the first strategy is always kept).
The controller always receives the REINFORCE update; the encoder replacement
and the candidate append happen only when delta > 0.

Phase 2 retrains every surviving candidate from a fresh encoder with Adam and
ranks them by validation score; workers run in separate processes, each
seeded with ``seed XOR candidate_index`` so results do not depend on
scheduling. Merging follows candidate index order and failed workers simply
drop their candidate.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from hashlib import sha256
from pathlib import Path

import numpy as np

from . import numerics as nm
from .augment import make_view_pair
from .contrast import strategy_loss
from .controller import (
    ControllerParams,
    init_controller,
    reinforce_update,
    sample_strategy,
)
from .data import DatasetBundle, SearchView, TestView
from .downstream import (
    anomaly_threshold,
    compute_anomaly_scores,
    eval_anomaly,
    eval_classification,
    eval_forecasting,
    instance_embed,
)
from .encoder import BoundEncoder, EncoderConfig, EncoderParams, init_encoder, transform_embeddings
from .errors import ConfigError, DataError, NumericError
from .space import (
    FULL_SPACE,
    SpaceSpec,
    Strategy,
    canonicalize,
    encode,
    strategy_from_dict,
    validate,
)

EPSILON_DEFAULTS = {"classification": 0.001, "forecast": 0.0001, "anomaly": 0.001}
WORST_REWARD = {"classification": 0.0, "forecast": -10.0, "anomaly": 0.0}
GGS_MAX_TOPK = 32


@dataclass
class SearchConfig:
    """Knobs for both search phases; defaults follow the reference setup."""

    task: str = "classification"
    alpha: float = 10.0
    epsilon: float | None = None  # task default when None
    max_iters: int = 500
    encoder_lr: float = 0.001
    controller_lr: float = 0.0001
    controller_dim: int = 320
    max_input_len: int = 2000
    batch_size: int = 16
    eval_batch: int = 64
    pretrain_iters: int = 50
    pretrain_lr: float = 0.001
    workers: int = 1
    seed: int = 0
    filtering: bool = True
    probe_epochs: int = 1
    encoder: EncoderConfig | None = None
    space: SpaceSpec = field(default_factory=lambda: FULL_SPACE)
    probe_window: int = 128
    forecast_context: int = 128
    forecast_horizon: int = 48
    forecast_max_cuts: int = 256
    anomaly_window: int = 64
    anomaly_delay: int = 7

    @property
    def resolved_epsilon(self) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return EPSILON_DEFAULTS[self.task]

    def check(self) -> "SearchConfig":
        if self.task not in EPSILON_DEFAULTS:
            raise ConfigError(f"unknown task {self.task!r}")
        positive = {
            "alpha": self.alpha,
            "max_iters": self.max_iters,
            "encoder_lr": self.encoder_lr,
            "controller_lr": self.controller_lr,
            "controller_dim": self.controller_dim,
            "max_input_len": self.max_input_len,
            "eval_batch": self.eval_batch,
            "pretrain_lr": self.pretrain_lr,
            "workers": self.workers,
            "probe_window": self.probe_window,
            "forecast_context": self.forecast_context,
            "forecast_horizon": self.forecast_horizon,
            "forecast_max_cuts": self.forecast_max_cuts,
            "anomaly_window": self.anomaly_window,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.probe_epochs < 1:
            raise ConfigError("probe_epochs must be at least 1")
        if self.resolved_epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.pretrain_iters < 0:
            raise ConfigError("pretrain_iters must be non-negative")
        if self.anomaly_delay < 0:
            raise ConfigError("anomaly_delay must be non-negative")
        return self

    def to_json_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if key == "space":
                out[key] = list(self.space.names)
            elif key == "encoder":
                out[key] = None if self.encoder is None else self.encoder.to_json_dict()
            else:
                out[key] = value
        return out


def config_hash(cfg: SearchConfig) -> str:
    payload = json.dumps(cfg.to_json_dict(), sort_keys=True)
    return sha256(payload.encode("utf-8")).hexdigest()[:16]


def resolve_encoder_config(cfg: SearchConfig, n_channels: int) -> EncoderConfig:
    if cfg.encoder is None:
        return EncoderConfig(in_channels=n_channels)
    if cfg.encoder.in_channels != n_channels:
        raise ConfigError(
            f"encoder expects {cfg.encoder.in_channels} channels, data has {n_channels}"
        )
    return cfg.encoder


# --- rewards -------------------------------------------------------------------


def embed_instances(params: EncoderParams, x: np.ndarray, batch: int = 64) -> np.ndarray:
    """Max-pooled embeddings for a stack of instances, computed in batches."""
    from .encoder import encode as run_encoder

    chunks = []
    for start in range(0, len(x), batch):
        h = run_encoder(params, x[start : start + batch])
        chunks.append(instance_embed(h))
    return np.concatenate(chunks, axis=0)


def _truncate(x: np.ndarray, max_len: int) -> np.ndarray:
    return x[:, :max_len] if x.shape[1] > max_len else x


def _forecast_cuts(start: int, stop: int, context: int, horizon: int, limit: int) -> np.ndarray:
    """Cut points t whose context window ends at t and whose target fits before
    `stop`; evenly subsampled down to `limit` points."""
    lo = max(context - 1, start)
    hi = stop - horizon
    if hi <= lo:
        raise DataError("series too short for the forecast context and horizon")
    cuts = np.arange(lo, hi)
    if len(cuts) > limit:
        keep = np.unique(np.round(np.linspace(0, len(cuts) - 1, limit)).astype(int))
        cuts = cuts[keep]
    return cuts


def _forecast_samples(
    params: EncoderParams, series: np.ndarray, cuts: np.ndarray, cfg: SearchConfig
) -> tuple[np.ndarray, np.ndarray]:
    context, horizon = cfg.forecast_context, cfg.forecast_horizon
    windows = np.stack([series[t - context + 1 : t + 1] for t in cuts])
    feats = embed_instances(params, windows, cfg.eval_batch)
    targets = np.stack([series[t + 1 : t + 1 + horizon].reshape(-1) for t in cuts])
    return feats, targets


def _anomaly_eval(
    params: EncoderParams,
    train_series: np.ndarray,
    eval_series: np.ndarray,
    eval_labels: np.ndarray,
    cfg: SearchConfig,
) -> dict:
    train_scores = compute_anomaly_scores(params, train_series, cfg.anomaly_window)
    eval_scores = compute_anomaly_scores(params, eval_series, cfg.anomaly_window)
    threshold = anomaly_threshold(train_scores)
    return eval_anomaly(eval_scores, eval_labels, delay=cfg.anomaly_delay, threshold=threshold)


def compute_reward(params: EncoderParams, view: SearchView, cfg: SearchConfig) -> tuple[float, dict]:
    """Score a frozen encoder on the validation split of `view`.

    Any numeric failure or non-finite outcome collapses to the task's worst
    reward with a flag, so the search loop never has to special-case it.
    """
    task = cfg.task
    try:
        with _quiet_numerics():
            return _reward_inner(params, view, cfg)
    except NumericError as exc:
        return WORST_REWARD[task], {"flags": [f"numeric_failure: {exc}"]}


def _quiet_numerics():
    """Overflow inside a guarded region surfaces as NumericError, not a warning."""
    return np.errstate(over="ignore", invalid="ignore", divide="ignore")


def _reward_inner(params: EncoderParams, view: SearchView, cfg: SearchConfig) -> tuple[float, dict]:
    task = cfg.task
    if task == "classification":
        train = embed_instances(params, _truncate(view.train_x, cfg.max_input_len), cfg.eval_batch)
        val = embed_instances(params, _truncate(view.val_x, cfg.max_input_len), cfg.eval_batch)
        if not (np.isfinite(train).all() and np.isfinite(val).all()):
            return WORST_REWARD[task], {"flags": ["non_finite_embeddings"]}
        metrics = eval_classification(train, view.train_y, val, view.val_y)
        reward = metrics["acc"]
    elif task == "forecast":
        train_cuts = _forecast_cuts(
            0, view.train_end, cfg.forecast_context, cfg.forecast_horizon, cfg.forecast_max_cuts
        )
        val_cuts = _forecast_cuts(
            view.train_end - 1,
            view.series.shape[0],
            cfg.forecast_context,
            cfg.forecast_horizon,
            cfg.forecast_max_cuts,
        )
        train_x, train_y = _forecast_samples(params, view.series, train_cuts, cfg)
        val_x, val_y = _forecast_samples(params, view.series, val_cuts, cfg)
        if not (np.isfinite(train_x).all() and np.isfinite(val_x).all()):
            return WORST_REWARD[task], {"flags": ["non_finite_embeddings"]}
        try:
            metrics = eval_forecasting(train_x, train_y, val_x, val_y, val_x, val_y)
        except NumericError:
            metrics = eval_forecasting(
                train_x, train_y, val_x, val_y, val_x, val_y, lam_grid=(10.0, 100.0, 1000.0)
            )
            metrics["flags"] = ["ridge_fallback"]
        reward = -metrics["mse"]
    else:
        metrics = _anomaly_eval(
            params,
            view.series[: view.train_end],
            view.series[view.train_end :],
            view.val_labels,
            cfg,
        )
        reward = metrics["f1"]
    if not math.isfinite(reward):
        return WORST_REWARD[task], {"flags": ["non_finite_reward"]}
    return float(reward), metrics


def reward_delta(reward: float, r_star: float, cfg: SearchConfig) -> float:
    return cfg.alpha * (reward - r_star + cfg.resolved_epsilon)


# --- encoder training ------------------------------------------------------------


def probe_inputs(view: SearchView, cfg: SearchConfig) -> np.ndarray:
    """Raw training material for contrastive updates: instances as-is, or
    non-overlapping windows carved from the train segment of a series."""
    if view.task == "classification":
        x = view.train_x
    else:
        length = min(cfg.probe_window, view.train_end)
        n_win = view.train_end // length
        x = view.series[: n_win * length].reshape(n_win, length, -1)
    if len(x) < 2:
        raise DataError("contrastive training needs at least two instances or windows")
    return x


def _window_batch(x: np.ndarray, max_len: int, rng: np.random.Generator) -> np.ndarray:
    if x.shape[1] <= max_len:
        return x
    starts = rng.integers(0, x.shape[1] - max_len + 1, size=len(x))
    return np.stack([inst[s : s + max_len] for inst, s in zip(x, starts)])


def contrast_step_loss(
    work: EncoderParams, xb: np.ndarray, strategy: Strategy, rng: np.random.Generator
) -> tuple[nm.Tensor, dict[str, nm.Tensor]]:
    """One forward pass over a batch: augment, encode both views, transform,
    and score the contrastive objective. Returns the loss and the leaves."""
    pair = make_view_pair(xb, strategy, rng)
    tape = nm.Tape()
    enc = BoundEncoder(work, tape)
    h1 = enc.forward(pair.view1)
    h2 = enc.forward(pair.view2)
    span1 = (slice(None), slice(pair.align1, pair.align1 + pair.common_len))
    span2 = (slice(None), slice(pair.align2, pair.align2 + pair.common_len))
    z1 = transform_embeddings(nm.slice_(h1, span1), strategy, rng)
    z2 = transform_embeddings(nm.slice_(h2, span2), strategy, rng)
    return strategy_loss(z1, z2, strategy), enc.leaves


def probe_encoder(
    params: EncoderParams,
    strategy: Strategy,
    view: SearchView,
    cfg: SearchConfig,
    rng: np.random.Generator,
) -> tuple[EncoderParams, bool]:
    """SGD on a deep copy, `cfg.probe_epochs` passes over the data; (params,
    False) signals a non-finite loss or exploded weights, leaving the caller's
    encoder untouched."""
    work = params.copy()
    x = probe_inputs(view, cfg)
    for _ in range(cfg.probe_epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(order), cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            if len(chunk) < 2:
                continue
            xb = _window_batch(x[chunk], cfg.max_input_len, rng)
            try:
                with _quiet_numerics():
                    loss, leaves = contrast_step_loss(work, xb, strategy, rng)
                    grads = nm.backward(loss)
            except NumericError:
                return work, False
            if not np.isfinite(loss.data).all():
                return work, False
            for name, leaf in leaves.items():
                work.arrays[name] = work.arrays[name] - cfg.encoder_lr * grads[leaf]
    for arr in work.arrays.values():
        if not np.isfinite(arr).all():
            return work, False
    return work, True


class AdamState:
    def __init__(self, arrays: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(
        self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float
    ) -> None:
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        self.t += 1
        for name, g in grads.items():
            self.m[name] = beta1 * self.m[name] + (1 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1 - beta2) * g * g
            m_hat = self.m[name] / (1 - beta1**self.t)
            v_hat = self.v[name] / (1 - beta2**self.t)
            arrays[name] = arrays[name] - lr * m_hat / (np.sqrt(v_hat) + eps)


def pretrain_encoder(
    params: EncoderParams,
    strategy: Strategy,
    view: SearchView,
    cfg: SearchConfig,
    iters: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[EncoderParams, list[float]]:
    """Adam(0.9, 0.999, 1e-8) for `iters` optimizer steps on random batches."""
    iters = cfg.pretrain_iters if iters is None else iters
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    work = params.copy()
    x = probe_inputs(view, cfg)
    adam = AdamState(work.arrays)
    losses: list[float] = []
    for _ in range(iters):
        take = min(cfg.batch_size, len(x))
        idx = rng.choice(len(x), size=take, replace=False)
        xb = _window_batch(x[idx], cfg.max_input_len, rng)
        try:
            with _quiet_numerics():
                loss, leaves = contrast_step_loss(work, xb, strategy, rng)
        except NumericError as exc:
            raise NumericError(f"contrastive pretraining diverged: {exc}") from exc
        value = float(loss.data)
        if not math.isfinite(value):
            raise NumericError("contrastive pretraining produced a non-finite loss")
        grads = nm.backward(loss)
        adam.step(work.arrays, {name: grads[leaf] for name, leaf in leaves.items()}, cfg.pretrain_lr)
        losses.append(value)
    return work, losses


# --- phase 1 ---------------------------------------------------------------------


@dataclass
class SearchState:
    config: SearchConfig
    controller: ControllerParams
    encoder: EncoderParams
    rng: np.random.Generator
    r_star: float | None = None
    step: int = 0
    candidates: dict = field(default_factory=dict)  # encode tuple -> record
    trace: list = field(default_factory=list)
    probe_ms: list = field(default_factory=list)
    reward_ms: list = field(default_factory=list)


def init_search_state(cfg: SearchConfig, n_channels: int) -> SearchState:
    cfg.check()
    enc_config = resolve_encoder_config(cfg, n_channels)
    return SearchState(
        config=cfg,
        controller=init_controller(cfg.space, d=cfg.controller_dim, seed=cfg.seed),
        encoder=init_encoder(enc_config, seed=cfg.seed),
        rng=np.random.default_rng(cfg.seed),
    )


def phase1_step(state: SearchState, view: SearchView) -> dict:
    """Sample, probe, score, filter, update; returns the trace record."""
    cfg = state.config
    t0 = time.perf_counter()
    record = sample_strategy(state.controller, state.rng)
    strategy = record.strategy

    probed, ok = probe_encoder(state.encoder, strategy, view, cfg, state.rng)
    t1 = time.perf_counter()
    if ok:
        reward, _metrics = compute_reward(probed, view, cfg)
    else:
        reward = WORST_REWARD[cfg.task]
    t2 = time.perf_counter()

    baseline = state.r_star if state.r_star is not None else reward
    delta = reward_delta(reward, baseline, cfg)
    reinforce_update(state.controller, record, delta, cfg.controller_lr)

    accepted = (delta > 0) or not cfg.filtering
    if accepted:
        if ok:
            state.encoder = probed
        key = tuple(encode(strategy, cfg.space))
        entry = state.candidates.get(key)
        if entry is None or reward > entry["val_reward"]:
            state.candidates[key] = {
                "strategy": strategy.to_json_dict(),
                "val_reward": reward,
                "encoding": list(key),
                "step": state.step + 1,
            }
        state.r_star = reward if state.r_star is None else max(state.r_star, reward)

    state.step += 1
    state.probe_ms.append((t1 - t0) * 1000.0)
    state.reward_ms.append((t2 - t1) * 1000.0)
    entry = {
        "step": state.step,
        "strategy": strategy.to_json_dict(),
        "raw_reward": float(reward),
        "delta": float(delta),
        "accepted": bool(accepted),
        "wallclock_ms": (time.perf_counter() - t0) * 1000.0,
    }
    state.trace.append(entry)
    return entry


@dataclass
class SearchResult:
    config: SearchConfig
    candidates: list
    trace: list
    controller: ControllerParams
    encoder: EncoderParams
    r_star: float | None
    warnings: list
    timing: dict


def sorted_candidates(candidates: dict) -> list:
    return sorted(candidates.values(), key=lambda c: (-c["val_reward"], tuple(c["encoding"])))


def run_candidate_search(view: SearchView, cfg: SearchConfig) -> SearchResult:
    if view.task != cfg.task:
        raise ConfigError(f"view holds {view.task!r} data, config says {cfg.task!r}")
    state = init_search_state(cfg, _view_channels(view))
    t0 = time.perf_counter()
    for _ in range(cfg.max_iters):
        phase1_step(state, view)
    total_ms = (time.perf_counter() - t0) * 1000.0
    warnings = []
    if not state.candidates:
        warnings.append("no candidates accepted during search")
    predicted = cfg.max_iters * (
        float(np.mean(state.probe_ms or [0.0])) + float(np.mean(state.reward_ms or [0.0]))
    )
    timing = {
        "total_ms": total_ms,
        "mean_probe_ms": float(np.mean(state.probe_ms or [0.0])),
        "mean_reward_ms": float(np.mean(state.reward_ms or [0.0])),
        "predicted_ms": predicted,
        "ratio": total_ms / predicted if predicted > 0 else float("nan"),
    }
    return SearchResult(
        config=cfg,
        candidates=sorted_candidates(state.candidates),
        trace=state.trace,
        controller=state.controller,
        encoder=state.encoder,
        r_star=state.r_star,
        warnings=warnings,
        timing=timing,
    )


def _view_channels(view: SearchView) -> int:
    if view.task == "classification":
        return view.train_x.shape[-1]
    return view.series.shape[-1]


# --- phase 2 ---------------------------------------------------------------------


def _phase2_worker(payload: dict) -> dict:
    """Retrain one candidate from scratch; runs in a separate process."""
    index = payload["index"]
    try:
        cfg: SearchConfig = payload["config"]
        view: SearchView = payload["view"]
        strategy = validate(strategy_from_dict(payload["strategy"]))
        worker_seed = cfg.seed ^ index
        enc_config = resolve_encoder_config(cfg, _view_channels(view))
        params = init_encoder(enc_config, seed=worker_seed)
        rng = np.random.default_rng(worker_seed)
        t0 = time.perf_counter()
        trained, losses = pretrain_encoder(params, strategy, view, cfg, rng=rng)
        t1 = time.perf_counter()
        score, metrics = compute_reward(trained, view, cfg)
        t2 = time.perf_counter()
        return {
            "index": index,
            "val_score": score,
            "metrics": {k: v for k, v in metrics.items() if k != "flags"},
            "flags": list(metrics.get("flags", [])),
            "final_loss": losses[-1] if losses else None,
            "arrays": trained.arrays,
            "train_ms": (t1 - t0) * 1000.0,
            "eval_ms": (t2 - t1) * 1000.0,
            "error": None,
        }
    except Exception as exc:  # worker failure excludes the candidate
        return {"index": index, "error": f"{type(exc).__name__}: {exc}"}


@dataclass
class EvaluationResult:
    ranking: list  # dicts sorted by val score, failures excluded
    failed: list
    best: dict | None
    best_encoder: EncoderParams | None
    timing: dict


def evaluate_candidates(
    candidates: list, view: SearchView, cfg: SearchConfig
) -> EvaluationResult:
    """Full pretraining for every candidate, K processes at a time."""
    cfg.check()
    payloads = []
    for index, cand in enumerate(candidates):
        strategy = cand["strategy"] if isinstance(cand, dict) else cand
        if isinstance(strategy, Strategy):
            strategy = strategy.to_json_dict()
        payloads.append({"index": index, "strategy": strategy, "view": view, "config": cfg})
    if not payloads:
        raise ConfigError("no candidates to evaluate")

    t0 = time.perf_counter()
    if cfg.workers == 1:
        raw = [_phase2_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            raw = list(pool.map(_phase2_worker, payloads))
    total_ms = (time.perf_counter() - t0) * 1000.0

    raw.sort(key=lambda r: r["index"])  # merge in candidate order
    succeeded = [r for r in raw if r["error"] is None]
    failed = [{"index": r["index"], "error": r["error"]} for r in raw if r["error"] is not None]
    enc_config = resolve_encoder_config(cfg, _view_channels(view))

    ranking = []
    for r in succeeded:
        ranking.append(
            {
                "index": r["index"],
                "strategy": payloads[r["index"]]["strategy"],
                "val_score": r["val_score"],
                "metrics": r["metrics"],
                "flags": r["flags"],
                "final_loss": r["final_loss"],
            }
        )
    ranking.sort(key=lambda r: (-r["val_score"], r["index"]))

    best = ranking[0] if ranking else None
    best_encoder = None
    if best is not None:
        arrays = next(r["arrays"] for r in succeeded if r["index"] == best["index"])
        best_encoder = EncoderParams(enc_config, arrays)

    train_times = [r["train_ms"] for r in succeeded] or [0.0]
    eval_times = [r["eval_ms"] for r in succeeded] or [0.0]
    rounds = math.ceil(len(payloads) / cfg.workers)
    predicted = rounds * (float(np.mean(train_times)) + float(np.mean(eval_times)))
    timing = {
        "total_ms": total_ms,
        "mean_train_ms": float(np.mean(train_times)),
        "mean_eval_ms": float(np.mean(eval_times)),
        "predicted_ms": predicted,
        "ratio": total_ms / predicted if predicted > 0 else float("nan"),
        "workers": cfg.workers,
    }
    return EvaluationResult(ranking, failed, best, best_encoder, timing)


# --- final report helpers ----------------------------------------------------------


def held_out_metrics(params: EncoderParams, bundle: DatasetBundle, cfg: SearchConfig) -> dict:
    """Test-split metrics for a frozen encoder; the only reader of test labels."""
    full: TestView = bundle.test_view()
    if cfg.task == "classification":
        train = embed_instances(params, _truncate(full.train_x, cfg.max_input_len), cfg.eval_batch)
        test = embed_instances(params, _truncate(full.test_x, cfg.max_input_len), cfg.eval_batch)
        return eval_classification(train, full.train_y, test, full.test_y)
    if cfg.task == "forecast":
        train_cuts = _forecast_cuts(
            0, full.train_end, cfg.forecast_context, cfg.forecast_horizon, cfg.forecast_max_cuts
        )
        val_cuts = _forecast_cuts(
            full.train_end - 1, full.val_end, cfg.forecast_context, cfg.forecast_horizon,
            cfg.forecast_max_cuts,
        )
        test_cuts = _forecast_cuts(
            full.val_end - 1, full.series.shape[0], cfg.forecast_context, cfg.forecast_horizon,
            cfg.forecast_max_cuts,
        )
        train_x, train_y = _forecast_samples(params, full.series, train_cuts, cfg)
        val_x, val_y = _forecast_samples(params, full.series, val_cuts, cfg)
        test_x, test_y = _forecast_samples(params, full.series, test_cuts, cfg)
        return eval_forecasting(train_x, train_y, val_x, val_y, test_x, test_y)
    return _anomaly_eval(
        params,
        full.series[: full.train_end],
        full.series[full.val_end :],
        full.labels[full.val_end :],
        cfg,
    )


# --- generalized strategy composition ------------------------------------------------


def compose_ggs(
    topk_sets: list,
    evaluate_fn,
    drop_threshold: float = 0.01,
    space: SpaceSpec = FULL_SPACE,
) -> tuple[Strategy, dict]:
    """Merge per-task top-K strategies into one generalized strategy.

    Every cross-task triple is ranked by how many sub-dimensions all three
    members agree on; the winning triple's shared options are fixed, and each
    remaining dimension is resolved by single-option substitution scored with
    `evaluate_fn(strategy) -> per-task scores`. Options whose score drops more
    than `drop_threshold` below the best on any task are discarded; the
    surviving option with the highest mean score wins.
    """
    if len(topk_sets) != 3:
        raise ConfigError(f"expected top-K sets for exactly three tasks, got {len(topk_sets)}")
    normalized = []
    for strategies in topk_sets:
        if not strategies:
            raise ConfigError("each task needs at least one candidate strategy")
        if len(strategies) > GGS_MAX_TOPK:
            raise ConfigError(f"top-K sets are capped at {GGS_MAX_TOPK} strategies")
        normalized.append(
            [
                canonicalize(validate(s if isinstance(s, Strategy) else strategy_from_dict(s)))
                for s in strategies
            ]
        )

    encoded = [[(tuple(encode(s, space)), s) for s in group] for group in normalized]
    best_triple = None
    best_key = None
    for (ea, sa), (eb, sb), (ec, sc) in itertools.product(*encoded):
        agreement = sum(1 for a, b, c in zip(ea, eb, ec) if a == b == c)
        key = (-agreement, ea + eb + ec)
        if best_key is None or key < best_key:
            best_key = key
            best_triple = ((ea, sa), (eb, sb), (ec, sc))
    (ea, sa), (eb, sb), (ec, sc) = best_triple
    agreement = -best_key[0]

    options = dict(space.branches)
    cache: dict[tuple, tuple] = {}

    def scored(strategy: Strategy) -> tuple:
        key = tuple(encode(strategy, space))
        if key not in cache:
            scores = tuple(float(v) for v in evaluate_fn(strategy))
            if len(scores) != 3:
                raise ConfigError("evaluate_fn must return one score per task")
            cache[key] = scores
        return cache[key]

    draft = sa  # provisional values for not-yet-resolved dimensions
    resolutions = []
    for pos, name in enumerate(space.names):
        if ea[pos] == eb[pos] == ec[pos]:
            draft = replace(draft, **{name: getattr(sa, name)})
            continue
        values = []
        for source in (sa, sb, sc):
            v = getattr(source, name)
            if v not in values:
                values.append(v)
        values.sort(key=options[name].index)
        trials = {}
        for v in values:
            trials[v] = scored(validate(replace(draft, **{name: v})))
        best_per_task = [max(t[i] for t in trials.values()) for i in range(3)]
        survivors = [
            v
            for v in values
            if all(trials[v][i] >= best_per_task[i] - drop_threshold for i in range(3))
        ]
        fallback = not survivors
        if fallback:
            survivors = values
        winner = min(survivors, key=lambda v: (-float(np.mean(trials[v])), options[name].index(v)))
        draft = replace(draft, **{name: winner})
        resolutions.append(
            {
                "dimension": name,
                "options": [str(v) for v in values],
                "winner": str(winner),
                "scores": {str(v): list(trials[v]) for v in values},
                "fallback": fallback,
            }
        )

    final = canonicalize(validate(draft))
    report = {
        "agreement": agreement,
        "triple": [s.to_json_dict() for s in (sa, sb, sc)],
        "resolutions": resolutions,
        "evaluations": len(cache),
    }
    return final, report


# --- artifacts -----------------------------------------------------------------------


def trace_lines(trace: list) -> list[str]:
    return [json.dumps(rec, sort_keys=True) for rec in trace]


def write_trace(path: str | Path, trace: list) -> None:
    Path(path).write_text("\n".join(trace_lines(trace)) + "\n", encoding="utf-8", newline="\n")


def read_trace(path: str | Path) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc}") from exc
    records = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"trace line {i + 1} is not valid JSON: {exc}") from exc
    return records


def strip_wallclock(records: list) -> list:
    return [{k: v for k, v in rec.items() if k != "wallclock_ms"} for rec in records]


def write_candidates(path: str | Path, candidates: list) -> None:
    payload = {"candidates": candidates}
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def read_candidates(path: str | Path) -> list:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read candidates {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"candidates file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "candidates" not in payload:
        raise DataError("candidates file must hold a {'candidates': [...]} object")
    out = []
    for cand in payload["candidates"]:
        strategy = validate(strategy_from_dict(cand["strategy"]))
        out.append({**cand, "strategy": strategy.to_json_dict()})
    return out


def write_strategy(path: str | Path, strategy: Strategy) -> None:
    Path(path).write_text(
        json.dumps(strategy.to_json_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def read_strategy(path: str | Path) -> Strategy:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read strategy {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"strategy file is not valid JSON: {exc}") from exc
    return validate(strategy_from_dict(payload))
