"""Service operations: one function per endpoint, shared with the CLI.

All filesystem layout decisions live here. A search run directory holds
trace.jsonl, candidates.json, encoder.ckpt, controller.ckpt, and run.json;
run.json carries enough context (task, data address, config) for the GGS
composition to re-score strategies on each task later.
"""

from __future__ import annotations

import json
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from ..controller import save_controller
from ..data import DatasetBundle, load_dataset, synth_bundle
from ..downstream import metric_records
from ..encoder import EncoderConfig, init_encoder, load_encoder, save_encoder
from ..errors import DataError
from ..experiments import run_filter_ablation, run_space_ablation, run_speed_ablation, write_report
from ..search import (
    SearchConfig,
    compose_ggs,
    compute_reward,
    config_hash,
    evaluate_candidates,
    held_out_metrics,
    pretrain_encoder,
    read_candidates,
    read_strategy,
    resolve_encoder_config,
    run_candidate_search,
    write_candidates,
    write_strategy,
    write_trace,
)
from ..space import ggs_preset, strategy_from_dict, validate
from . import models as m

SYNTH_PREFIX = "synth:"
RUN_MANIFEST = "run.json"


def resolve_bundle(data: str, task: str, data_seed: int = 0) -> DatasetBundle:
    """Map a data address (filesystem path or synth:<name>) to a bundle."""
    if data.startswith(SYNTH_PREFIX):
        name = data[len(SYNTH_PREFIX) :]
        bundle = synth_bundle(name, seed=data_seed)
        if bundle.task != task:
            raise DataError(f"synthetic dataset {name!r} serves task {bundle.task!r}, not {task!r}")
        return bundle
    return load_dataset(data, task, seed=data_seed)


def build_config(
    knobs: m.SearchKnobs,
    task: str,
    n_channels: int,
    *,
    iters: int = 50,
    seed: int = 0,
    workers: int = 1,
    pretrain_iters: int = 50,
) -> SearchConfig:
    kwargs = {}
    for name in (
        "alpha",
        "epsilon",
        "encoder_lr",
        "controller_lr",
        "controller_dim",
        "max_input_len",
        "batch_size",
        "probe_window",
        "forecast_context",
        "forecast_horizon",
        "forecast_max_cuts",
        "anomaly_window",
        "anomaly_delay",
        "pretrain_lr",
        "filtering",
    ):
        value = getattr(knobs, name)
        if value is not None:
            kwargs[name] = value
    encoder = None
    if knobs.encoder is not None:
        encoder = EncoderConfig(
            in_channels=n_channels,
            hidden=knobs.encoder.hidden,
            depth=knobs.encoder.depth,
            out_dim=knobs.encoder.out_dim,
        )
    return SearchConfig(
        task=task,
        max_iters=iters,
        seed=seed,
        workers=workers,
        pretrain_iters=pretrain_iters,
        encoder=encoder,
        **kwargs,
    ).check()


def config_from_json(payload: dict) -> SearchConfig:
    """Rebuild a search config from run.json; the space always reverts to the
    full grid, which is all downstream consumers need."""
    names = {f.name for f in dc_fields(SearchConfig)} - {"space", "encoder"}
    kwargs = {k: v for k, v in payload.items() if k in names}
    encoder = payload.get("encoder")
    return SearchConfig(
        **kwargs, encoder=None if encoder is None else EncoderConfig(**encoder)
    ).check()


def _ensure_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_search(req: m.SearchRequest) -> m.SearchResponse:
    bundle = resolve_bundle(req.data, req.task, req.data_seed)
    cfg = build_config(req.knobs, req.task, bundle.n_channels, iters=req.iters, seed=req.seed)
    result = run_candidate_search(bundle.search_view(), cfg)

    paths = {}
    if req.out_dir is not None:
        out = _ensure_dir(req.out_dir)
        write_trace(out / "trace.jsonl", result.trace)
        write_candidates(out / "candidates.json", result.candidates)
        save_encoder(out / "encoder.ckpt", result.encoder)
        save_controller(out / "controller.ckpt", result.controller)
        manifest = {
            "task": req.task,
            "data": req.data,
            "data_seed": req.data_seed,
            "seed": req.seed,
            "iters": req.iters,
            "config": cfg.to_json_dict(),
            "config_hash": config_hash(cfg),
        }
        (out / RUN_MANIFEST).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        paths = {
            "out_dir": str(out),
            "trace_path": str(out / "trace.jsonl"),
            "candidates_path": str(out / "candidates.json"),
            "encoder_path": str(out / "encoder.ckpt"),
            "run_path": str(out / RUN_MANIFEST),
        }

    return m.SearchResponse(
        task=req.task,
        steps=len(result.trace),
        r_star=result.r_star,
        candidates=[m.CandidateModel(**c) for c in result.candidates],
        warnings=result.warnings,
        config_hash=config_hash(cfg),
        timing=result.timing,
        **paths,
    )


def run_evaluate(req: m.EvaluateRequest) -> m.EvaluateResponse:
    candidates = read_candidates(req.candidates)
    bundle = resolve_bundle(req.data, req.task, req.data_seed)
    cfg = build_config(
        req.knobs,
        req.task,
        bundle.n_channels,
        seed=req.seed,
        workers=req.workers,
        pretrain_iters=req.pretrain_iters,
    )
    out = evaluate_candidates(candidates, bundle.search_view(), cfg)

    test = None
    if out.best_encoder is not None:
        test = held_out_metrics(out.best_encoder, bundle, cfg)

    paths = {}
    if req.out_dir is not None:
        out_dir = _ensure_dir(req.out_dir)
        payload = {
            "ranking": out.ranking,
            "failed": out.failed,
            "test_metrics": test,
            "timing": {k: v for k, v in out.timing.items() if k == "workers"},
        }
        (out_dir / "evaluation.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        paths["evaluation_path"] = str(out_dir / "evaluation.json")
        if out.best_encoder is not None:
            save_encoder(out_dir / "best_encoder.ckpt", out.best_encoder)
            paths["checkpoint_path"] = str(out_dir / "best_encoder.ckpt")

    return m.EvaluateResponse(
        task=req.task,
        ranking=[m.RankedCandidate(**r) for r in out.ranking],
        failed=out.failed,
        best=m.RankedCandidate(**out.best) if out.best else None,
        test_metrics=test,
        timing=out.timing,
        **paths,
    )


def _load_strategy_argument(source: str):
    if source == "ggs":
        return ggs_preset()
    return read_strategy(source)


def run_pretrain(req: m.PretrainRequest) -> m.PretrainResponse:
    strategy = _load_strategy_argument(req.strategy)
    bundle = resolve_bundle(req.data, req.task, req.data_seed)
    cfg = build_config(
        req.knobs, req.task, bundle.n_channels, seed=req.seed, pretrain_iters=req.iters
    )
    view = bundle.search_view()
    params = init_encoder(resolve_encoder_config(cfg, bundle.n_channels), seed=req.seed)
    trained, losses = pretrain_encoder(
        params, strategy, view, cfg, rng=np.random.default_rng(req.seed)
    )
    out_path = Path(req.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    save_encoder(out_path, trained)
    return m.PretrainResponse(
        task=req.task,
        strategy=strategy.to_json_dict(),
        iters=req.iters,
        final_loss=losses[-1] if losses else None,
        mean_loss=float(np.mean(losses)) if losses else None,
        checkpoint_path=str(out_path),
    )


def _read_manifest(run_dir: str) -> dict:
    path = Path(run_dir) / RUN_MANIFEST
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"search run manifest missing at {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"search run manifest at {path} is not valid JSON: {exc}") from exc


def run_ggs(req: m.GgsRequest) -> m.GgsResponse:
    contexts = []
    topk_sets = []
    for run_dir in req.from_dirs:
        manifest = _read_manifest(run_dir)
        cfg = config_from_json(manifest["config"])
        cfg.pretrain_iters = req.pretrain_iters
        cfg.seed = req.seed
        bundle = resolve_bundle(manifest["data"], manifest["task"], manifest.get("data_seed", 0))
        contexts.append((bundle.search_view(), cfg, bundle.n_channels))
        candidates = read_candidates(Path(run_dir) / "candidates.json")
        if not candidates:
            raise DataError(f"no candidates recorded under {run_dir}")
        topk_sets.append([c["strategy"] for c in candidates[: req.topk]])

    def evaluate_fn(strategy):
        scores = []
        for view, cfg, channels in contexts:
            params = init_encoder(resolve_encoder_config(cfg, channels), seed=cfg.seed)
            trained, _ = pretrain_encoder(
                params, strategy, view, cfg, rng=np.random.default_rng(cfg.seed)
            )
            score, _ = compute_reward(trained, view, cfg)
            scores.append(score)
        return scores

    final, report = compose_ggs(topk_sets, evaluate_fn, req.drop_threshold)

    out_path = None
    if req.out is not None:
        path = Path(req.out)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        write_strategy(path, final)
        out_path = str(path)

    return m.GgsResponse(
        strategy=final.to_json_dict(),
        agreement=report["agreement"],
        resolutions=report["resolutions"],
        evaluations=report["evaluations"],
        out_path=out_path,
    )


def run_report(req: m.ReportRequest) -> m.ReportResponse:
    params = load_encoder(req.checkpoint)
    bundle = resolve_bundle(req.data, req.task, req.data_seed)
    cfg = build_config(req.knobs, req.task, bundle.n_channels)
    _, val_metrics = compute_reward(params, bundle.search_view(), cfg)
    test = held_out_metrics(params, bundle, cfg)
    records = metric_records(req.task, "val", val_metrics) + metric_records(
        req.task, "test", test
    )
    return m.ReportResponse(
        task=req.task, val_metrics=val_metrics, test_metrics=test, records=records
    )


def run_ablate(req: m.AblateRequest) -> m.AblateResponse:
    bundle = resolve_bundle(req.data, req.task, req.data_seed)
    cfg = build_config(req.knobs, req.task, bundle.n_channels, iters=req.iters, seed=req.seed)
    view = bundle.search_view()
    seeds = req.seeds if req.seeds is not None else [0, 1, 2, 3, 4]
    out_dir = str(_ensure_dir(req.out_dir)) if req.out_dir is not None else None

    if req.mode == "no-filter":
        report = run_filter_ablation(view, cfg, seeds, out_dir=out_dir)
    elif req.mode == "full-pretrain":
        report = run_speed_ablation(view, cfg, slow_epochs=req.slow_epochs, out_dir=out_dir)
    else:
        report = run_space_ablation(view, cfg, seeds, out_dir=out_dir)

    report_path = None
    if out_dir is not None:
        report_path = str(Path(out_dir) / f"{report['name']}.json")
        write_report(report_path, report)
    return m.AblateResponse(mode=req.mode, report=report, report_path=report_path)


def validate_strategy_payload(payload: dict) -> dict:
    """Round a raw strategy dict through the core validator."""
    return validate(strategy_from_dict(payload)).to_json_dict()
