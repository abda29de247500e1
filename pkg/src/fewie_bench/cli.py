"""Command-line interface.

Subcommands:
    run       execute an experiment config and persist a run directory
    validate  audit an episode manifest against a corpus
    table     tabulate finished runs into CSV + markdown
    sample    write an episode manifest without evaluating anything

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 infeasible
sampling.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fewie_bench.corpus import load_corpus
from fewie_bench.errors import FewieBenchError, InfeasibleEpisodeError
from fewie_bench.harness import RunManifest, emit_table, load_config, run_experiment
from fewie_bench.sampler import EpisodeSpec, read_manifest, sample_run, validate_episode, write_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="fewie-bench", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="YAML experiment config")
    run.add_argument("--output-dir", help="override output_dir")
    run.add_argument("--seed", type=int, help="override sampling seed")
    run.add_argument("--n-episodes", type=int, help="override episode count")
    run.add_argument("--readout", choices=["lr", "nn", "nc"], help="override readout kind")

    validate = sub.add_parser("validate", help="audit an episode manifest")
    validate.add_argument("corpus")
    validate.add_argument("manifest")
    _corpus_flags(validate)

    table = sub.add_parser("table", help="tabulate finished run directories")
    table.add_argument("run_dirs", nargs="+")
    table.add_argument("--out-dir", default=".", help="where to write results.csv/.md")

    sample = sub.add_parser("sample", help="write an episode manifest only")
    sample.add_argument("corpus")
    sample.add_argument("--n", type=int, required=True, help="classes per episode")
    sample.add_argument("--k", type=int, required=True, help="support shots per class")
    sample.add_argument("--k-query", type=int, default=1, help="query shots per class")
    sample.add_argument("--episodes", type=int, required=True)
    sample.add_argument("--seed", type=int, required=True)
    sample.add_argument("--cl-extra", action="store_true",
                        help="reserve an extra support shot per class (K=1 contrastive)")
    sample.add_argument("--out", default="episodes.jsonl")
    _corpus_flags(sample)
    return parser


def _corpus_flags(parser):
    parser.add_argument("--format", choices=["conll", "jsonl"], default="conll")
    parser.add_argument("--token-col", type=int, default=0)
    parser.add_argument("--tag-col", type=int, default=-1)
    parser.add_argument("--max-length", type=int, default=128)


def _cmd_run(args) -> int:
    import dataclasses

    config = load_config(args.config)
    overrides = {}
    if args.output_dir is not None:
        overrides["output_dir"] = Path(args.output_dir)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_episodes is not None:
        overrides["n_episodes"] = args.n_episodes
    if args.readout is not None:
        overrides["readout_kind"] = args.readout
    if overrides:
        config = dataclasses.replace(config, **overrides)

    manifest = run_experiment(config)
    for result in manifest.scenarios:
        print(f"{manifest.dataset_label} {result.n_ways}-way {result.k_shots}-shot "
              f"(K'={result.k_query}): mean F1 {result.mean_f1:.4f} "
              f"+/- {result.ci95_half_width:.4f} over {result.n_episodes} episodes")
    if manifest.errors:
        for entry in manifest.errors:
            print(f"scenario {entry['scenario']} failed: "
                  f"{entry['error_type']}: {entry['message']}", file=sys.stderr)
        if any(entry["infeasible"] for entry in manifest.errors):
            return EXIT_INFEASIBLE
        return EXIT_DATA
    print(f"run manifest: {Path(config.output_dir) / 'run_manifest.json'}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    corpus = load_corpus(args.corpus, args.format, token_col=args.token_col,
                         tag_col=args.tag_col, max_length=args.max_length)
    entries = read_manifest(args.manifest)
    total = 0
    for episode_index, episode in entries:
        for violation in validate_episode(corpus, episode):
            print(f"episode {episode_index}: {violation}")
            total += 1
    if total:
        print(f"{total} violation(s) across {len(entries)} episode(s)")
        return EXIT_DATA
    print(f"{len(entries)} episode(s) valid")
    return EXIT_OK


def _cmd_table(args) -> int:
    manifests = [RunManifest.load(run_dir) for run_dir in args.run_dirs]
    csv_text, md_text = emit_table(manifests)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(csv_text, encoding="utf-8")
    (out_dir / "results.md").write_text(md_text, encoding="utf-8")
    print(md_text, end="")
    return EXIT_OK


def _cmd_sample(args) -> int:
    corpus = load_corpus(args.corpus, args.format, token_col=args.token_col,
                         tag_col=args.tag_col, max_length=args.max_length)
    spec = EpisodeSpec(args.n, args.k, args.k_query, seed=args.seed, cl_extra=args.cl_extra)
    episodes = sample_run(corpus, spec, args.episodes)
    write_manifest(episodes, args.out)
    print(f"wrote {len(episodes)} episode(s) to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    handlers = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "table": _cmd_table,
        "sample": _cmd_sample,
    }
    try:
        return handlers[args.command](args)
    except InfeasibleEpisodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FewieBenchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
