"""Command-line interface.

Subcommands mirror the pipeline stages so each one can be exercised and
tested on its own:

    gen      generate a synthetic channel dataset
    cluster  cluster users from a channel dataset
    learn    full pipeline (cluster, learn, evaluate, write outputs)
    eval     evaluate an existing codebook file against channels
    sweep    learn codebooks over a range of sizes
    oracle   report EGC / exhaustive / aligned oracle gains

All subcommands read one JSON config (see README) with flag overrides.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .codebook import PhaseGrid, codebook_objective, load_codebook
from .clustering import cluster_users, power_features, save_assignment, sensing_codebook
from .errors import (
    ConfigurationError,
    DatasetFormatError,
    DimensionError,
    PipelineError,
    SearchSpaceError,
)
from .pipeline import (
    ExperimentConfig,
    load_channels,
    oracle_report,
    run_pipeline,
    sweep_codebook_size,
    write_csv,
)
from .scenario import export_channels
from .utils import derive_seed
from .validation import channel_matrix

DEFAULT_SWEEP_SIZES = (1, 2, 4, 6, 8, 16)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-codebook",
        description="Learn RIS reflection codebooks from receive-power feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--threads", type=int, help="parallel learning tasks")
        p.add_argument("--beams", type=int, help="override codebook size N")
        p.add_argument("--q", type=int, help="override phase-shifter bits")
        p.add_argument("--levels", type=_int_list, help="override level sizes, e.g. 32,8")
        p.add_argument("--channels", help="override channels file path")

    for name in ("gen", "cluster", "learn", "eval", "sweep", "oracle"):
        p = sub.add_parser(name)
        common(p)
        if name == "eval":
            p.add_argument("--codebook", required=True, help="codebook JSON file")
        if name == "sweep":
            p.add_argument(
                "--sizes", type=_int_list,
                default=DEFAULT_SWEEP_SIZES, help="codebook sizes, e.g. 1,2,4,8",
            )
        if name == "oracle":
            p.add_argument("--exhaustive", action="store_true",
                           help="include the exhaustive-search oracle")
            p.add_argument("--json-out", help="also write the report as JSON")
    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.beams is not None:
        overrides["n_beams"] = args.beams
    if args.q is not None:
        overrides["bits"] = args.q
    if args.levels is not None:
        overrides["level_sizes"] = args.levels
    if getattr(args, "channels", None) is not None:
        overrides["channels_file"] = args.channels
    return replace(config, **overrides) if overrides else config


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(config: ExperimentConfig) -> int:
    dataset = load_channels(config)
    out = _out_dir(config)
    path = out / "channels.json"
    export_channels(path, dataset, config_hash=config.config_hash())
    print(f"wrote {path} ({dataset.num_users} users, M={dataset.num_elements})")
    return 0


def cmd_cluster(config: ExperimentConfig) -> int:
    dataset = load_channels(config)
    users = channel_matrix(dataset)
    grid = PhaseGrid(config.bits)
    sensing = sensing_codebook(
        users.shape[1], config.sensing_beams, grid,
        seed=derive_seed(config.seed, "cluster", "sensing"),
    )
    rng = np.random.default_rng(derive_seed(config.seed, "cluster", "noise"))
    features = power_features(users, sensing, config.feature_noise, rng)
    assignment = cluster_users(
        features, config.n_beams, seed=derive_seed(config.seed, "cluster", "kmeans")
    )
    out = _out_dir(config)
    save_assignment(
        out / "assignment.csv", assignment, out / "centroids.json",
        sensing, config_hash=config.config_hash(),
    )
    sizes = np.bincount(assignment.labels, minlength=config.n_beams)
    print(f"wrote {out / 'assignment.csv'} (cluster sizes: {sizes.tolist()})")
    return 0


def cmd_learn(config: ExperimentConfig) -> int:
    if config.out_dir is None:
        config = replace(config, out_dir="out")
    bundle = run_pipeline(config)
    for key, value in sorted(bundle.objectives.items()):
        print(f"{key}: {value:.6f}")
    print(f"outputs in {config.out_dir}")
    return 0


def cmd_eval(config: ExperimentConfig, codebook_path: str) -> int:
    codebook = load_codebook(codebook_path)
    dataset = load_channels(config)
    users = channel_matrix(dataset)
    objective = codebook_objective(codebook, users)
    print(f"codebook_objective: {objective:.6f}")
    out = _out_dir(config)
    rows = [("config_hash", config.config_hash()),
            ("codebook_file", codebook_path),
            ("n_beams", codebook.num_beams),
            ("objective", float(objective))]
    write_csv(out / "eval.csv", rows, ["metric", "value"],
              config_hash=config.config_hash())
    print(f"wrote {out / 'eval.csv'}")
    return 0


def cmd_sweep(config: ExperimentConfig, sizes) -> int:
    if config.out_dir is None:
        config = replace(config, out_dir="out")
    table = sweep_codebook_size(config, sizes)
    for row in table:
        print(
            f"N={row['n_beams']}: learned={row['learned_objective']:.6f} "
            f"dft={row['dft_objective']:.6f} egc={row['egc_mean']:.6f}"
        )
    return 0


def cmd_oracle(config: ExperimentConfig, include_exhaustive: bool,
               json_out: str | None) -> int:
    dataset = load_channels(config)
    users = channel_matrix(dataset)
    grid = PhaseGrid(config.bits)
    report = oracle_report(
        users, grid,
        include_exhaustive=include_exhaustive,
        guard=config.exhaustive_guard,
    )
    for entry in report["per_user"]:
        line = f"user {entry['user']}: egc={entry['egc']:.6f}"
        if include_exhaustive:
            line += f" exhaustive={entry['exhaustive_gain']:.6f}"
        line += f" aligned={entry['aligned_gain']:.6f}"
        print(line)
    line = f"mean: egc={report['egc_mean']:.6f}"
    if include_exhaustive:
        line += f" exhaustive={report['exhaustive_mean']:.6f}"
    line += f" aligned={report['aligned_mean']:.6f}"
    print(line)
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
        print(f"wrote {json_out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "gen":
            return cmd_gen(config)
        if args.command == "cluster":
            return cmd_cluster(config)
        if args.command == "learn":
            return cmd_learn(config)
        if args.command == "eval":
            return cmd_eval(config, args.codebook)
        if args.command == "sweep":
            return cmd_sweep(config, args.sizes)
        if args.command == "oracle":
            return cmd_oracle(config, args.exhaustive, args.json_out)
    except (ConfigurationError, DimensionError, DatasetFormatError,
            SearchSpaceError, PipelineError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
