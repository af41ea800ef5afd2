"""Command-line surface: plan, run, report.

Exit codes: 0 success, 2 config error, 3 backend error, 4 provider error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import BackendError, DomainError, ProtocolError, ProviderError
from .geo import GeoBox
from .pipeline import STAGES, SurveyConfig, SurveyRun
from .planner import AreaOfInterest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_PROVIDER = 4


def load_config(path: str, aoi_override: str | None = None) -> tuple[SurveyConfig, str]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    base_dir = os.path.dirname(os.path.abspath(path))
    config = SurveyConfig.from_dict(doc, base_dir)
    if aoi_override:
        parts = [float(v) for v in aoi_override.split(",")]
        if len(parts) != 4:
            raise DomainError("--aoi expects south,west,north,east")
        s, w, n, e = parts
        config = SurveyConfig(
            **{**config.__dict__, "aoi": AreaOfInterest(name="cli-aoi", boundary=GeoBox(s, w, n, e))}
        )
    workdir = os.path.join(base_dir, doc.get("workdir", "survey"))
    return config, workdir


def cmd_plan(args) -> int:
    config, workdir = load_config(args.config, args.aoi)
    run = SurveyRun(config, workdir)
    if args.dry_run:
        from .planner import enumerate_tiles

        plan = enumerate_tiles(config.aoi, config.zoom)
        print(f"would plan {len(plan.tiles)} tiles at zoom {config.zoom}")
        return EXIT_OK
    stats = run.plan()
    unit = (config.costs or {}).get("street_image_usd", 0.007)
    projected = stats["street_images"] * unit
    print(f"tiles: {stats['tiles']}")
    print(f"street samples: {stats['street_samples']}")
    print(f"projected street-only cost: {stats['street_images']} images, {projected:.3f} USD")
    return EXIT_OK


def cmd_run(args) -> int:
    config, workdir = load_config(args.config, args.aoi)
    if args.workers:
        config = SurveyConfig(**{**config.__dict__, "workers": args.workers})
    run = SurveyRun(config, workdir)
    stages = [args.stage] if args.stage else list(STAGES)
    if args.dry_run:
        print(f"would run stages: {', '.join(stages)}")
        return EXIT_OK
    for stage in stages:
        stats = run.run_stage(stage)
        if stats.get("skipped"):
            print(f"{stage}: up to date")
        else:
            detail = " ".join(f"{k}={v}" for k, v in sorted(stats.items()))
            print(f"{stage}: {detail}")
    return EXIT_OK


def cmd_report(args) -> int:
    config, workdir = load_config(args.config, args.aoi)
    run = SurveyRun(config, workdir)
    if args.dry_run:
        print(f"would write report artifacts to {workdir}")
        return EXIT_OK
    stats = run.report()
    print(f"trees: {stats['trees']}")
    print(f"hotspots: {stats['hotspots']}")
    cost = stats["cost"]
    reduction = cost["reduction_factor"]
    print(
        "cost: street-only {so} images vs {cs} combined street images"
        " (reduction {r})".format(
            so=cost["street_only_images"],
            cs=cost["combined_street_images"],
            r="n/a" if reduction is None else f"{reduction:.3f}",
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="palmsurvey", description="Aerial + street-view palm tree survey pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("plan", cmd_plan), ("run", cmd_run), ("report", cmd_report)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="survey config JSON")
        p.add_argument("--aoi", help="override AOI as south,west,north,east")
        p.add_argument("--dry-run", action="store_true")
        p.set_defaults(fn=fn)
        if name == "run":
            p.add_argument("--stage", choices=STAGES, help="run one stage (default: all)")
            p.add_argument("--workers", type=int, help="backend worker pool width")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, ProtocolError) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except ProviderError as e:
        print(f"provider error: {e}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
