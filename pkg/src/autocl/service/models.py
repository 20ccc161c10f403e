"""Request and response schemas for the service endpoints.

Strategy payloads travel as plain dicts and are validated by the core space
module, which owns the option grids; the schemas here enforce structure and
basic ranges only.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

Task = Literal["classification", "forecast", "anomaly"]
AblationMode = Literal["no-filter", "full-pretrain", "data-aug-only"]


class StrictModel(BaseModel):
    """Unknown fields are typos, not extensions; reject them."""

    model_config = ConfigDict(extra="forbid")


class EncoderOverrides(StrictModel):
    hidden: int = Field(default=64, ge=1)
    depth: int = Field(default=10, ge=1)
    out_dim: int = Field(default=320, ge=1)


class SearchKnobs(StrictModel):
    """Optional overrides for the search configuration."""

    alpha: float | None = Field(default=None, gt=0)
    epsilon: float | None = Field(default=None, ge=0)
    encoder_lr: float | None = Field(default=None, gt=0)
    controller_lr: float | None = Field(default=None, gt=0)
    controller_dim: int | None = Field(default=None, ge=2)
    max_input_len: int | None = Field(default=None, ge=2)
    batch_size: int | None = Field(default=None, ge=2)
    probe_window: int | None = Field(default=None, ge=2)
    forecast_context: int | None = Field(default=None, ge=2)
    forecast_horizon: int | None = Field(default=None, ge=1)
    forecast_max_cuts: int | None = Field(default=None, ge=2)
    anomaly_window: int | None = Field(default=None, ge=2)
    anomaly_delay: int | None = Field(default=None, ge=0)
    pretrain_lr: float | None = Field(default=None, gt=0)
    filtering: bool | None = None
    encoder: EncoderOverrides | None = None


class SearchRequest(StrictModel):
    task: Task
    data: str  # filesystem path or synth:<name>
    iters: int = Field(default=50, ge=1)
    seed: int = 0
    data_seed: int = 0
    out_dir: str | None = None
    knobs: SearchKnobs = Field(default_factory=SearchKnobs)


class CandidateModel(BaseModel):
    strategy: dict
    val_reward: float
    encoding: list[int]
    step: int


class SearchResponse(BaseModel):
    task: Task
    steps: int
    r_star: float | None
    candidates: list[CandidateModel]
    warnings: list[str]
    config_hash: str
    timing: dict
    out_dir: str | None = None
    trace_path: str | None = None
    candidates_path: str | None = None
    encoder_path: str | None = None
    run_path: str | None = None


class EvaluateRequest(StrictModel):
    candidates: str  # path to a candidates.json
    data: str
    task: Task
    workers: int = Field(default=1, ge=1)
    pretrain_iters: int = Field(default=50, ge=0)
    seed: int = 0
    data_seed: int = 0
    out_dir: str | None = None
    knobs: SearchKnobs = Field(default_factory=SearchKnobs)


class RankedCandidate(BaseModel):
    index: int
    strategy: dict
    val_score: float
    metrics: dict
    flags: list[str]
    final_loss: float | None


class EvaluateResponse(BaseModel):
    task: Task
    ranking: list[RankedCandidate]
    failed: list[dict]
    best: RankedCandidate | None
    test_metrics: dict | None
    timing: dict
    checkpoint_path: str | None = None
    evaluation_path: str | None = None


class PretrainRequest(StrictModel):
    strategy: str  # path to a strategy JSON file, or the literal "ggs"
    data: str
    task: Task
    iters: int = Field(default=200, ge=0)
    seed: int = 0
    data_seed: int = 0
    out: str
    knobs: SearchKnobs = Field(default_factory=SearchKnobs)


class PretrainResponse(BaseModel):
    task: Task
    strategy: dict
    iters: int
    final_loss: float | None
    mean_loss: float | None
    checkpoint_path: str


class GgsRequest(StrictModel):
    from_dirs: list[str] = Field(min_length=3, max_length=3)
    topk: int = Field(default=3, ge=1, le=32)
    drop_threshold: float = Field(default=0.01, ge=0)
    pretrain_iters: int = Field(default=20, ge=0)
    seed: int = 0
    out: str | None = None


class GgsResponse(BaseModel):
    strategy: dict
    agreement: int
    resolutions: list[dict]
    evaluations: int
    out_path: str | None = None


class ReportRequest(StrictModel):
    checkpoint: str
    data: str
    task: Task
    data_seed: int = 0
    knobs: SearchKnobs = Field(default_factory=SearchKnobs)


class ReportResponse(BaseModel):
    task: Task
    val_metrics: dict
    test_metrics: dict
    records: list[dict]


class AblateRequest(StrictModel):
    mode: AblationMode
    data: str
    task: Task
    iters: int = Field(default=10, ge=1)
    seeds: list[int] | None = None  # defaults to [0..4]
    slow_epochs: int = Field(default=20, ge=2)
    seed: int = 0
    data_seed: int = 0
    out_dir: str | None = None
    knobs: SearchKnobs = Field(default_factory=SearchKnobs)


class AblateResponse(BaseModel):
    mode: AblationMode
    report: dict
    report_path: str | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
