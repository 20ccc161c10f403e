"""Command line client for the search service.

Each subcommand builds the same request model the HTTP endpoint accepts and
runs the operation in process, printing the response JSON to stdout. Failures
print {"error": {...}} to stderr and exit with 2 (config), 3 (data), or
4 (numeric). Setting AUTOCL_SEED overrides --seed everywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from pydantic import ValidationError

from . import __version__
from .errors import AutoCLError, ConfigError
from .service import models as m
from .service import ops


def _resolve_seed(args: argparse.Namespace) -> int:
    env = os.environ.get("AUTOCL_SEED")
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"AUTOCL_SEED must be an integer, got {env!r}") from None


def _parse_knobs(raw: str | None) -> m.SearchKnobs:
    if raw is None:
        return m.SearchKnobs()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--knobs must be a JSON object: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("--knobs must be a JSON object")
    return m.SearchKnobs(**payload)


def _parse_seeds(raw: str | None) -> list[int] | None:
    if raw is None:
        return None
    try:
        return [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"--seeds must be comma separated integers, got {raw!r}") from None


def _add_common(parser: argparse.ArgumentParser, *, data: bool = True) -> None:
    if data:
        parser.add_argument("--task", required=True, choices=("classification", "forecast", "anomaly"))
        parser.add_argument("--data", required=True, help="dataset path or synth:<name>")
        parser.add_argument("--data-seed", type=int, default=0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--knobs", default=None, help="JSON object of config overrides")


def _cmd_search(args: argparse.Namespace) -> m.SearchResponse:
    req = m.SearchRequest(
        task=args.task,
        data=args.data,
        iters=args.iters,
        seed=_resolve_seed(args),
        data_seed=args.data_seed,
        out_dir=args.out_dir,
        knobs=_parse_knobs(args.knobs),
    )
    return ops.run_search(req)


def _cmd_evaluate(args: argparse.Namespace) -> m.EvaluateResponse:
    req = m.EvaluateRequest(
        candidates=args.candidates,
        data=args.data,
        task=args.task,
        workers=args.workers,
        pretrain_iters=args.pretrain_iters,
        seed=_resolve_seed(args),
        data_seed=args.data_seed,
        out_dir=args.out_dir,
        knobs=_parse_knobs(args.knobs),
    )
    return ops.run_evaluate(req)


def _cmd_pretrain(args: argparse.Namespace) -> m.PretrainResponse:
    req = m.PretrainRequest(
        strategy=args.strategy,
        data=args.data,
        task=args.task,
        iters=args.iters,
        seed=_resolve_seed(args),
        data_seed=args.data_seed,
        out=args.out,
        knobs=_parse_knobs(args.knobs),
    )
    return ops.run_pretrain(req)


def _cmd_ggs(args: argparse.Namespace) -> m.GgsResponse:
    req = m.GgsRequest(
        from_dirs=args.from_dirs,
        topk=args.topk,
        drop_threshold=args.drop_threshold,
        pretrain_iters=args.pretrain_iters,
        seed=_resolve_seed(args),
        out=args.out,
    )
    return ops.run_ggs(req)


def _cmd_report(args: argparse.Namespace) -> m.ReportResponse:
    req = m.ReportRequest(
        checkpoint=args.checkpoint,
        data=args.data,
        task=args.task,
        data_seed=args.data_seed,
        knobs=_parse_knobs(args.knobs),
    )
    return ops.run_report(req)


def _cmd_ablate(args: argparse.Namespace) -> m.AblateResponse:
    req = m.AblateRequest(
        mode=args.mode,
        data=args.data,
        task=args.task,
        iters=args.iters,
        seeds=_parse_seeds(args.seeds),
        slow_epochs=args.slow_epochs,
        seed=_resolve_seed(args),
        data_seed=args.data_seed,
        out_dir=args.out_dir,
        knobs=_parse_knobs(args.knobs),
    )
    return ops.run_ablate(req)


def _cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autocl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"autocl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the strategy search and save candidates")
    _add_common(p)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("evaluate", help="fully pretrain candidates and rank them")
    _add_common(p)
    p.add_argument("--candidates", required=True, help="path to a candidates.json")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--pretrain-iters", type=int, default=50)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("pretrain", help="pretrain an encoder with a fixed strategy")
    _add_common(p)
    p.add_argument("--strategy", required=True, help="strategy JSON path or the literal 'ggs'")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--out", required=True, help="encoder checkpoint destination")
    p.set_defaults(handler=_cmd_pretrain)

    p = sub.add_parser("ggs", help="compose one strategy from three task searches")
    p.add_argument("--from-dirs", nargs=3, required=True, metavar="RUN_DIR")
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--drop-threshold", type=float, default=0.01)
    p.add_argument("--pretrain-iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_cmd_ggs)

    p = sub.add_parser("report", help="score a saved encoder on val and test splits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", required=True, choices=("classification", "forecast", "anomaly"))
    p.add_argument("--data", required=True)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--knobs", default=None)
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("ablate", help="run one of the built in ablation studies")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=("no-filter", "full-pretrain", "data-aug-only"))
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seeds", default=None, help="comma separated, default 0,1,2,3,4")
    p.add_argument("--slow-epochs", type=int, default=20)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        response = args.handler(args)
    except ValidationError as exc:
        print(json.dumps({"error": {"kind": "config", "message": str(exc)}}), file=sys.stderr)
        return 2
    except AutoCLError as exc:
        print(json.dumps({"error": {"kind": exc.kind, "message": str(exc)}}), file=sys.stderr)
        return exc.exit_code
    if response is not None:
        print(response.model_dump_json(indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
