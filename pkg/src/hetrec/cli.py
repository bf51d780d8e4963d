"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime or convergence error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .baselines import InteractionMatrixView, most_popular
from .errors import ConfigError, DataError, HetrecError, UnknownUserError
from .evaluation import dataset_stats, split_stats
from .experiment import (
    MODELS,
    ExperimentConfig,
    make_split,
    run_experiment,
    run_optimize,
    summarize,
)
from .graph import WeightVector, build_graph
from .io import load_schema, load_weights, read_interactions, write_json
from .ppr import SolverConfig, batch_pagerank, build_transition
from .recommender import ExcludeInteracted, Mode, RankedList, RecommendationRequest, rank

logger = logging.getLogger("hetrec")


class UsageError(ConfigError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="hetrec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hetrec {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("stats", help="dataset statistics")
    s.add_argument("--dataset", required=True, type=Path)
    s.add_argument("--schema", required=True, type=Path)
    s.add_argument("--config", type=Path, help="experiment config; adds a per-partition table")
    s.add_argument("--user-tag", default="user")
    s.add_argument("--out-dir", type=Path, help="also write stats.json here")

    o = sub.add_parser("optimize", help="learn edge weights with the genetic algorithm")
    _experiment_args(o)
    o.add_argument("--seeds", type=positive_int, help="number of independent GA runs (default: config seeds)")
    o.add_argument("--undirected", action="store_true", help="tie in/out weights per interaction")
    o.add_argument("--out-dir", type=Path, required=True)

    e = sub.add_parser("evaluate", help="evaluate models on the test split")
    _experiment_args(e)
    e.add_argument("--model", action="append", choices=MODELS, help="repeatable; overrides config models")
    e.add_argument("--weights", action="append", default=[], metavar="[MODEL=]PATH")
    e.add_argument("--sample-fraction", type=float)
    e.add_argument("--sample-seeds", type=positive_int, default=1)
    e.add_argument("--out-dir", type=Path)

    r = sub.add_parser("recommend", help="top-k recommendations for users")
    r.add_argument("--dataset", required=True, type=Path)
    r.add_argument("--schema", required=True, type=Path)
    r.add_argument("--weights", type=Path, help="weight file (default: uniform)")
    r.add_argument("--user", action="append", default=[])
    r.add_argument("--users-file", type=Path, help="one user id per line")
    r.add_argument("--target-tag", required=True)
    r.add_argument("--user-tag", default="user")
    r.add_argument("--k", type=positive_int, default=10)
    r.add_argument("--mode", choices=[m.value for m in Mode], default="direct")
    r.add_argument("--neighbors", type=positive_int, default=90)
    r.add_argument("--alpha", type=float, default=0.3)
    r.add_argument("--exclude-interacted", action="append", metavar="INTERACTION", default=None)
    r.add_argument("--fallback-popular", action="store_true")
    r.add_argument("--out", type=Path, help="CSV output path (default: stdout)")

    d = sub.add_parser("dump-graph", help="canonical edge listing of the built graph")
    d.add_argument("--dataset", required=True, type=Path)
    d.add_argument("--schema", required=True, type=Path)
    return p


def _experiment_args(p):
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--schema", type=Path)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--neighbors", type=positive_int)
    p.add_argument("--k", type=positive_int, action="append", help="cutoff; repeatable")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(
        dataset=args.dataset,
        schema=args.schema,
        alpha=args.alpha,
        mode=Mode(args.mode) if args.mode else None,
        neighbors=args.neighbors,
        cutoffs=args.k,
    )


def cmd_stats(args) -> int:
    registry = load_schema(args.schema)
    records = read_interactions(args.dataset)
    if not records:
        raise DataError(f"{args.dataset}: no interaction rows")
    stats = dataset_stats(records, registry, args.user_tag)
    out = sys.stdout
    print(f"users        {stats.users}", file=out)
    print(f"objects      {stats.objects}", file=out)
    print(f"interactions {stats.interactions}", file=out)
    print(f"sparsity     {stats.sparsity:.3f}", file=out)
    print(file=out)
    print(f"{'interaction':<28}{'count':>8}{'share':>9}", file=out)
    for name, n in stats.per_type.items():
        print(f"{name:<28}{n:>8}{n / stats.interactions:>9.2%}", file=out)
    doc = stats.as_dict()
    if args.config:
        cfg = ExperimentConfig.load(args.config).with_overrides(dataset=args.dataset, schema=args.schema)
        split = make_split(cfg, records, registry)
        rows = split_stats(split, cfg.split["interaction"])
        print(file=out)
        print(f"{'interaction':<28}{'partition':<12}{'count':>8}{'share':>9}", file=out)
        for row in rows:
            print(f"{row['interaction']:<28}{row['partition']:<12}{row['count']:>8}{row['share']:>9.2%}", file=out)
        doc["partitions"] = rows
    if args.out_dir:
        write_json(doc, args.out_dir / "stats.json")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    seeds = cfg.seeds
    if args.seeds is not None:
        seeds = seeds[: args.seeds] if len(seeds) >= args.seeds else list(range(args.seeds))
    doc, result = run_optimize(cfg, args.out_dir, seeds, args.undirected)
    fit = summarize(result.best_fitness)
    print(f"best validation fitness over {len(seeds)} run(s): mean {fit['mean']:.4f} std {fit['std']:.4f}")
    print(f"weights written to {args.out_dir / 'weights.json'} ({len(doc)} entries)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    if args.model:
        cfg = cfg.with_overrides(models=args.model)
    if args.weights:
        weights = dict(cfg.weights)
        for spec in args.weights:
            model, sep, path = spec.partition("=")
            if not sep:
                model, path = "graph-weighted", spec
            if model not in MODELS:
                raise UsageError(f"--weights: unknown model {model!r}")
            weights[model] = Path(path)
        cfg = cfg.with_overrides(weights=weights)

    if args.sample_fraction is None:
        reports = run_experiment(cfg, args.out_dir)
        _print_reports(reports.values())
        return 0

    per_model: dict[str, dict[str, list[float]]] = {}
    for seed in range(args.sample_seeds):
        out = args.out_dir / f"sample_seed{seed}" if args.out_dir else None
        reports = run_experiment(cfg, out, sample=(args.sample_fraction, seed))
        print(f"# sample fraction {args.sample_fraction}, seed {seed}")
        _print_reports(reports.values())
        for name, rep in reports.items():
            for metric, value in rep.aggregates.items():
                per_model.setdefault(name, {}).setdefault(metric, []).append(value)
    summary = {
        name: {metric: summarize(values) for metric, values in metrics.items()}
        for name, metrics in per_model.items()
    }
    print("# mean/std over samples")
    for name, metrics in summary.items():
        cells = "  ".join(f"{m}={s['mean']:.4f}/{s['std']:.4f}" for m, s in metrics.items())
        print(f"{name:<18}{cells}")
    if args.out_dir:
        write_json({"fraction": args.sample_fraction, "seeds": args.sample_seeds, "models": summary},
                   args.out_dir / "summary.json")
    return 0


def _print_reports(reports) -> None:
    for rep in reports:
        cells = "  ".join(f"{m}={v:.4f}" for m, v in rep.aggregates.items())
        print(f"{rep.model:<18}{cells}  (cases={len(rep.cases)}, fallback={rep.fallback})")


def cmd_recommend(args) -> int:
    registry = load_schema(args.schema)
    records = read_interactions(args.dataset)
    graph = build_graph(records, registry)
    weights = load_weights(args.weights, registry) if args.weights else WeightVector.uniform(registry)
    config = SolverConfig(alpha=args.alpha)

    users = list(args.user)
    if args.users_file:
        try:
            users += [line.strip() for line in args.users_file.read_text().splitlines() if line.strip()]
        except OSError as exc:
            raise DataError(f"cannot read {args.users_file}: {exc}") from None
    if not users:
        raise UsageError("give at least one --user or a --users-file")

    filters = (ExcludeInteracted(args.exclude_interacted),) if args.exclude_interacted is not None else ()
    template = RecommendationRequest(
        user_id="",
        target_tag=args.target_tag,
        k=args.k,
        mode=Mode(args.mode),
        neighbor_count=args.neighbors,
        filters=filters,
        user_tag=args.user_tag,
    )
    known = [u for u in users if graph.get_index(args.user_tag, u) is not None]
    unknown = [u for u in users if graph.get_index(args.user_tag, u) is None]
    if unknown and not args.fallback_popular:
        raise UnknownUserError(unknown[0])

    t0 = time.perf_counter()
    matrix = build_transition(graph, weights)
    solved = batch_pagerank(matrix, [graph.index_of(args.user_tag, u) for u in known], config)
    lists: dict[str, RankedList] = {}
    for u, sv in zip(known, solved):
        logger.info("user %s: %d iterations, residual %.2e", u, sv.iterations, sv.residual)
        lists[u] = rank(graph, sv, template.for_user(u))
    if unknown:
        view = InteractionMatrixView(records, registry, args.user_tag)
        for u in unknown:
            logger.info("user %s not in graph, using most popular", u)
            lists[u] = most_popular(view, args.target_tag, template.for_user(u))
    logger.info("solved %d users in %.3fs", len(known), time.perf_counter() - t0)

    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "rank", "item_id", "score"])
        for u in users:
            for r, (item, score) in enumerate(lists[u], start=1):
                w.writerow([u, r, item, repr(float(score))])
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_dump_graph(args) -> int:
    graph = build_graph(read_interactions(args.dataset), load_schema(args.schema))
    sys.stdout.write(graph.dump())
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "dump-graph": cmd_dump_graph,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except HetrecError as exc:
        print(f"hetrec: error: {exc}", file=sys.stderr)
        return exc.exit_code
