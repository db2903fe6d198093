"""Command-line entry point.

Batch commands over one JSON config document:

    synthbank gen-data --config run.json      generate/prepare the microdata
    synthbank encode   --config run.json      discretize into codes
    synthbank synth    --config run.json      run the private synthesizer
    synthbank decode   --config run.json      map codes back to values
    synthbank eval     --config run.json      score utility, write reports
    synthbank pipeline --config run.json      all of the above
    synthbank compare  --config run.json      both strategies, paired report

Stage commands expect the previous stages' artifacts in the output
directory. Flags override the corresponding config fields.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .pipeline import (
    Pipeline,
    PipelineConfig,
    PipelineConfigError,
    compare_strategies,
)

_STAGE_COMMANDS = {
    "gen-data": ("gen_data",),
    "encode": ("encode",),
    "synth": ("synthesize",),
    "decode": ("decode",),
    "eval": ("evaluate",),
    "pipeline": ("gen_data", "encode", "synthesize", "decode", "evaluate"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthbank",
        description="Differentially private synthetic banking microdata pipeline.",
        epilog=(
            "Config keys: application (fi|yield|credit), strategy (cbp|data_driven), "
            "mechanism.name (mst|aim|pac), mechanism.selection_fraction, mechanism.rounds, "
            "mechanism.workload, mechanism.pac.{k,eta,delta_k}, privacy.{epsilon,delta} "
            "(null for the noiseless diagnostic mode), decode.{mode,bandwidth,grid_points}, "
            "input.datagen.* or input.files.*, rule_overrides.<column>, n_synthetic, "
            "seed, output."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*_STAGE_COMMANDS, "compare"):
        cmd = sub.add_parser(name, help=f"run the {name} step")
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--out", help="override the output directory")
        cmd.add_argument("--mechanism", help="override mechanism.name")
        cmd.add_argument("--strategy", help="override the strategy")
        cmd.add_argument("--epsilon", type=float, help="override privacy.epsilon")
        cmd.add_argument("--delta", type=float, help="override privacy.delta")
    return parser


def _apply_overrides(config: PipelineConfig, args) -> PipelineConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output"] = args.out
    if args.mechanism is not None:
        updates["mechanism"] = args.mechanism
    if args.strategy is not None:
        updates["strategy"] = args.strategy
    if args.epsilon is not None:
        updates["epsilon"] = args.epsilon
    if args.delta is not None:
        updates["delta"] = args.delta
    config = dataclasses.replace(config, **updates)
    errors = []
    if config.mechanism not in ("mst", "aim", "pac"):
        errors.append(
            f"mechanism.name: unknown value {config.mechanism!r} (allowed: mst, aim, pac)"
        )
    if config.strategy not in ("cbp", "data_driven"):
        errors.append(
            f"strategy: unknown value {config.strategy!r} (allowed: cbp, data_driven)"
        )
    if errors:
        raise PipelineConfigError(errors)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = PipelineConfig.from_json(args.config)
        config = _apply_overrides(config, args)
    except PipelineConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "compare":
            comparison = compare_strategies(config)
            for metric, row in comparison["rows"].items():
                print(
                    f"{metric}: cbp={row['cbp']} data_driven={row['data_driven']} "
                    f"winner={row['winner']}"
                )
            return 0
        pipeline = Pipeline(config)
        for step in _STAGE_COMMANDS[args.command]:
            getattr(pipeline, step)()
        if pipeline.report is not None:
            metrics = pipeline.report["metrics"]
            print(f"application: {config.application} ({config.strategy}, {config.mechanism})")
            print(f"relative_error: {metrics.get('relative_error')}")
        print(f"artifacts written to {config.output}")
        return 0
    except Exception as exc:
        stage = args.command
        print(f"stage '{stage}' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
