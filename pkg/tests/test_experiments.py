"""Ablation study plumbing: pairing, verdict arithmetic, report shape."""

from __future__ import annotations

import numpy as np
import pytest

from autocl.data import synth_classification
from autocl.encoder import EncoderConfig
from autocl.errors import ConfigError
from autocl.experiments import (
    DATA_AUG_BRANCH_NAMES,
    data_aug_space,
    run_filter_ablation,
    run_space_ablation,
    run_speed_ablation,
    strip_report_wallclock,
    write_report,
)
from autocl.search import SearchConfig, read_trace
from autocl.space import Strategy, decode

MICRO_ENC = EncoderConfig(in_channels=1, hidden=4, depth=1, out_dim=4)


def micro_view(seed=0):
    return synth_classification(
        n_per_class=5, t=12, n_classes=2, noise=0.4, seed=seed, ratios=(0.6, 0.2, 0.2)
    ).search_view()


def micro_cfg(**kw) -> SearchConfig:
    base = dict(
        task="classification",
        max_iters=2,
        batch_size=6,
        encoder=MICRO_ENC,
        controller_dim=16,
        seed=0,
    )
    base.update(kw)
    return SearchConfig(**base)


def test_data_aug_space_keeps_only_signal_branches():
    space = data_aug_space()
    assert space.names == DATA_AUG_BRANCH_NAMES
    widths = dict(zip(space.names, space.widths))
    assert widths["resize_p"] == 11
    assert widths["aug_order"] == 5
    sampled = decode([5, 0, 0, 0, 0, 3, 2], space)
    assert sampled.norm == "none"
    assert sampled.emb_jitter_p == 0.0
    assert sampled.loss_type == "infonce"


def test_seed_guards():
    view = micro_view()
    cfg = micro_cfg()
    with pytest.raises(ConfigError):
        run_filter_ablation(view, cfg, seeds=[1, 2, 3, 4])
    with pytest.raises(ConfigError):
        run_space_ablation(view, cfg, seeds=[1, 1, 2, 3, 4])


def test_filter_ablation_report(tmp_path):
    view = micro_view()
    report = run_filter_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5], out_dir=tmp_path)
    assert report["name"] == "filter_ablation"
    assert len(report["runs"]) == 5
    assert [r["seed"] for r in report["runs"]] == [1, 2, 3, 4, 5]
    assert report["verdict"] == (report["filtered_mean"] > report["unfiltered_mean"])
    assert len(report["config_hash"]) == 16
    assert len(report["trace_paths"]) == 10
    first = read_trace(report["trace_paths"][0])
    assert first[0]["step"] == 1
    for run in report["runs"]:
        assert 0.0 <= run["filtered_accept_rate"] <= 1.0


def test_filter_ablation_unfiltered_accepts_all(tmp_path):
    view = micro_view()
    report = run_filter_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5], out_dir=tmp_path)
    off_paths = [p for p in report["trace_paths"] if p.endswith("_off.trace.jsonl")]
    for path in off_paths:
        assert all(rec["accepted"] for rec in read_trace(path))


def test_filter_ablation_is_reproducible():
    view = micro_view()
    a = run_filter_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5])
    b = run_filter_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5])
    assert strip_report_wallclock(a) == strip_report_wallclock(b)


def test_speed_ablation_guards():
    view = micro_view()
    with pytest.raises(ConfigError):
        run_speed_ablation(view, micro_cfg(max_iters=10))
    with pytest.raises(ConfigError):
        run_speed_ablation(view, micro_cfg(max_iters=50), slow_epochs=1)


def test_speed_ablation_report(tmp_path):
    view = micro_view()
    report = run_speed_ablation(view, micro_cfg(max_iters=50), slow_epochs=3, out_dir=tmp_path)
    assert report["name"] == "speed_ablation"
    assert report["iters"] == 50
    assert report["slow_epochs"] == 3
    assert report["slow_ms"] > report["fast_ms"] > 0
    assert report["speedup"] == pytest.approx(report["slow_ms"] / report["fast_ms"])
    assert isinstance(report["verdict"], bool)
    assert np.isfinite(report["fast_best"]) and np.isfinite(report["slow_best"])
    assert len(report["trace_paths"]) == 2


def test_space_ablation_report():
    view = micro_view()
    report = run_space_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5])
    assert report["name"] == "space_ablation"
    assert report["restricted_space_clean"] is True
    assert report["verdict"] == (
        report["full_mean"] >= report["restricted_mean"] and report["restricted_space_clean"]
    )
    assert len(report["runs"]) == 5


def test_space_ablation_restricted_traces_stay_in_subspace(tmp_path):
    view = micro_view()
    report = run_space_ablation(view, micro_cfg(), seeds=[1, 2, 3, 4, 5], out_dir=tmp_path)
    aug_paths = [p for p in report["trace_paths"] if "augonly" in p]
    assert len(aug_paths) == 5
    for path in aug_paths:
        for rec in read_trace(path):
            s = rec["strategy"]
            assert s["norm"] == "none"
            assert s["emb_jitter_p"] == 0.0
            assert s["emb_mask_p"] == 0.0
            assert s["cross_scale"] is False


def test_strip_report_wallclock():
    report = {"verdict": True, "wallclock_ms": 12.0, "fast_ms": 1.0, "slow_ms": 5.0, "speedup": 5.0}
    assert strip_report_wallclock(report) == {"verdict": True}


def test_write_report_round_trip(tmp_path):
    import json

    path = tmp_path / "report.json"
    write_report(path, {"verdict": True, "runs": [1, 2]})
    assert json.loads(path.read_text()) == {"verdict": True, "runs": [1, 2]}
