"""Experiment configuration and end-to-end runs (evaluate, optimize)."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .baselines import InteractionMatrixView, most_popular, ubknn_recommend
from .errors import ConfigError, UnknownUserError
from .evaluation import (
    EvalSplit,
    MetricsReport,
    holdout_leave_one_out,
    holdout_temporal,
    split_leave_one_out,
    split_temporal,
    subsample_training,
    score_lists,
)
from .ga import FitnessContext, GaConfig, GeneLayout, MultiSeedResult, evolve_seeds
from .graph import EdgeTypeRegistry, HeterogeneousGraph, InteractionRecord, WeightVector, build_graph
from .io import atomic_write, file_sha256, load_json, load_weights, read_interactions, load_schema, write_json
from .ppr import SolverConfig, build_transition
from .recommender import (
    ExcludeInteracted,
    FilterRule,
    Mode,
    RankedList,
    RecommendationRequest,
    RequirePrerequisite,
    interaction_map,
    recommend_many,
)

logger = logging.getLogger(__name__)

MODELS = ("popular", "ubknn", "graph-uniform", "graph-weighted", "graph-undirected", "graph-userstudy")
WEIGHTED_MODELS = ("graph-weighted", "graph-undirected", "graph-userstudy")


def parse_filters(specs: Sequence[Mapping]) -> tuple[FilterRule, ...]:
    rules = []
    for spec in specs:
        kind = spec.get("kind")
        interactions = spec.get("interactions")
        if kind == "exclude_interacted":
            rules.append(ExcludeInteracted(interactions))
        elif kind == "require_prerequisite":
            if "prerequisites" not in spec:
                raise ConfigError("require_prerequisite filter needs a 'prerequisites' map")
            rules.append(RequirePrerequisite(spec["prerequisites"], interactions))
        else:
            raise ConfigError(f"unknown filter kind {kind!r}")
    return tuple(rules)


@dataclass
class ExperimentConfig:
    dataset: Path
    schema: Path
    target_tag: str
    split: dict
    models: list[str] = field(default_factory=lambda: ["popular", "graph-uniform"])
    weights: dict[str, Path] = field(default_factory=dict)
    cutoffs: list[int] = field(default_factory=lambda: [5, 10])
    user_tag: str = "user"
    alpha: float = 0.3
    mode: Mode = Mode.DIRECT
    neighbors: int = 90
    ubknn_neighbors: int = 60
    neighbor_interactions: list[str] | None = None
    filters: list[dict] = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    ga: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
        base = Path(base_dir)
        known = {f for f in cls.__dataclass_fields__ if f != "raw"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {', '.join(sorted(unknown))}")
        for key in ("dataset", "schema", "target_tag", "split"):
            if key not in doc:
                raise ConfigError(f"experiment config is missing {key!r}")
        kw = dict(doc)
        kw["dataset"] = base / doc["dataset"]
        kw["schema"] = base / doc["schema"]
        kw["weights"] = {m: base / p for m, p in doc.get("weights", {}).items()}
        kw["mode"] = Mode(doc.get("mode", "direct"))
        cfg = cls(**kw, raw=dict(doc))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        return cls.from_dict(load_json(path, "experiment config"), path.parent)

    def validate(self) -> None:
        bad = [m for m in self.models if m not in MODELS]
        if bad:
            raise ConfigError(f"unknown models {bad}; choose from {', '.join(MODELS)}")
        if not self.cutoffs or min(self.cutoffs) < 1:
            raise ConfigError("cutoffs must be positive integers")
        if self.split.get("kind") not in ("leave_one_out", "temporal"):
            raise ConfigError("split.kind must be 'leave_one_out' or 'temporal'")
        if "interaction" not in self.split:
            raise ConfigError("split.interaction is required")
        parse_filters(self.filters)
        self.solver_config()
        self.ga_config()

    def with_overrides(self, **changes) -> ExperimentConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        raw = dict(self.raw)
        for k, v in changes.items():
            raw[k] = _jsonable(v)
        cfg = replace(self, **changes, raw=raw)
        cfg.validate()
        return cfg

    def solver_config(self) -> SolverConfig:
        return SolverConfig(alpha=self.alpha, **self.solver)

    def ga_config(self, seed: int | None = None) -> GaConfig:
        known = set(GaConfig.__dataclass_fields__)
        cfg = GaConfig(**{k: v for k, v in self.ga.items() if k in known})
        return cfg if seed is None else replace(cfg, seed=seed)

    @property
    def seeds(self) -> list[int]:
        return list(self.ga.get("seeds", [0, 1, 2, 3, 4]))

    def request(self, k: int | None = None) -> RecommendationRequest:
        return RecommendationRequest(
            user_id="",
            target_tag=self.target_tag,
            k=k or max(self.cutoffs),
            mode=self.mode,
            neighbor_count=self.neighbors,
            filters=parse_filters(self.filters),
            user_tag=self.user_tag,
            neighbor_interactions=self.neighbor_interactions,
        )

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Mode):
        return value.value
    if isinstance(value, Mapping):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def make_split(cfg: ExperimentConfig, records: Sequence[InteractionRecord], registry: EdgeTypeRegistry) -> EvalSplit:
    s = cfg.split
    if s["kind"] == "leave_one_out":
        return split_leave_one_out(records, s["interaction"], s.get("tag", cfg.target_tag), registry, cfg.user_tag)
    return split_temporal(
        records, s["interaction"], s.get("fraction", 0.1), s.get("tag", cfg.target_tag), registry, cfg.user_tag
    )


class Experiment:
    """Loaded data, split and derived structures shared by every model of a run."""

    def __init__(
        self,
        config: ExperimentConfig,
        records: Sequence[InteractionRecord] | None = None,
        registry: EdgeTypeRegistry | None = None,
        sample: tuple[float, int] | None = None,
    ):
        self.config = config
        self.timings: dict[str, float] = {}
        t0 = time.perf_counter()
        self.registry = registry if registry is not None else load_schema(config.schema)
        self.records = list(records) if records is not None else read_interactions(config.dataset)
        self.timings["load"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        split = make_split(config, self.records, self.registry)
        if sample is not None:
            # resample the training part, then carve validation from the sample
            fraction, seed = sample
            sampled = subsample_training(split.train, fraction, seed)
            split = _resplit(config, split, sampled, self.registry)
        self.split = split
        self.timings["split"] = time.perf_counter() - t0

    @cached_property
    def train_graph(self) -> HeterogeneousGraph:
        return build_graph(self.split.train, self.registry)

    @cached_property
    def validation_graph(self) -> HeterogeneousGraph:
        return build_graph(self.split.validation_train, self.registry)

    @cached_property
    def view(self) -> InteractionMatrixView:
        catalog = [(v.tag, v.id) for v in self.train_graph.vertices if v.tag == self.config.target_tag]
        return InteractionMatrixView(self.split.train, self.registry, self.config.user_tag, catalog)

    def weights_for(self, model: str, weights: WeightVector | None = None) -> WeightVector:
        if model == "graph-uniform":
            return WeightVector.uniform(self.registry)
        if weights is not None:
            return weights
        path = self.config.weights.get(model)
        if path is None:
            raise ConfigError(f"model {model!r} needs a weight file")
        return load_weights(path, self.registry)

    def recommend(self, model: str, weights: WeightVector | None = None) -> list[RankedList]:
        """One list per test case, in test-case order."""
        cfg = self.config
        request = cfg.request()
        cases = self.split.test
        if model == "popular":
            return [most_popular(self.view, cfg.target_tag, request.for_user(c.user_id)) for c in cases]
        if model == "ubknn":
            return [
                ubknn_recommend(self.view, c.user_id, cfg.ubknn_neighbors, request.for_user(c.user_id))
                for c in cases
            ]

        graph = self.train_graph
        matrix = build_transition(graph, self.weights_for(model, weights))
        known = sorted({c.user_id for c in cases if graph.get_index(cfg.user_tag, c.user_id) is not None})
        neighbor_items = None
        if cfg.mode is Mode.NEIGHBORS:
            neighbor_items = interaction_map(graph, cfg.user_tag, cfg.target_tag, cfg.neighbor_interactions)
        lists = recommend_many(
            graph, matrix, [request.for_user(u) for u in known], cfg.solver_config(), neighbor_items
        )
        by_user = dict(zip(known, lists))
        out = []
        for c in cases:
            if c.user_id in by_user:
                out.append(by_user[c.user_id])
            else:
                logger.info("%s: user %s not in training graph, using most popular", model, c.user_id)
                fb = most_popular(self.view, cfg.target_tag, request.for_user(c.user_id))
                out.append(RankedList(fb.user_id, fb.items, fb.flags | {"fallback_popular"}))
        return out

    def evaluate(self, model: str, weights: WeightVector | None = None, name: str | None = None) -> MetricsReport:
        t0 = time.perf_counter()
        report = score_lists(name or model, self.split.test, self.recommend(model, weights), self.config.cutoffs)
        self.timings[f"evaluate:{name or model}"] = time.perf_counter() - t0
        return report

    def fitness_context(self, undirected: bool = False) -> FitnessContext:
        ga = self.config.ga
        cutoff = ga.get("fitness_cutoff", max(self.config.cutoffs))
        return FitnessContext(
            graph=self.validation_graph,
            validation=self.split.validation,
            request=self.config.request(cutoff),
            layout=GeneLayout(self.registry, undirected=undirected),
            solver=self.config.solver_config(),
            metric=ga.get("fitness_metric", "mrr"),
            cutoff=cutoff,
        )

    def optimize(self, seeds: Sequence[int] | None = None, undirected: bool = False) -> tuple[MultiSeedResult, GeneLayout]:
        t0 = time.perf_counter()
        ctx = self.fitness_context(undirected)
        result = evolve_seeds(ctx, self.config.ga_config(), seeds if seeds is not None else self.config.seeds)
        self.timings["optimize"] = time.perf_counter() - t0
        return result, ctx.layout


def _resplit(cfg: ExperimentConfig, split: EvalSplit, train: list[InteractionRecord], registry) -> EvalSplit:
    """Replace the training part of ``split`` and re-derive validation from it."""
    s = cfg.split
    tag = s.get("tag", cfg.target_tag)
    if s["kind"] == "leave_one_out":
        vt, val = holdout_leave_one_out(train, s["interaction"], tag, registry, cfg.user_tag)
    else:
        vt, val = holdout_temporal(
            train, s["interaction"], s.get("fraction", 0.1), tag, registry, cfg.user_tag, allow_empty=True
        )
    return EvalSplit(train, split.test, vt, val, split.user_tag, split.registry)


# -- output writers ------------------------------------------------------------


def manifest(cfg: ExperimentConfig, timings: Mapping[str, float], **extra) -> dict:
    doc = {
        "tool": "hetrec",
        "version": __version__,
        "config_hash": cfg.hash(),
        "config": cfg.raw,
        "dataset_sha256": file_sha256(cfg.dataset) if Path(cfg.dataset).exists() else None,
        "schema_sha256": file_sha256(cfg.schema) if Path(cfg.schema).exists() else None,
        "timings_seconds": {k: round(v, 4) for k, v in timings.items()},
    }
    doc.update(extra)
    return doc


def write_reports(reports: Sequence[MetricsReport], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json({"models": [r.summary() for r in reports]}, out_dir / "report.json")
    with atomic_write(out_dir / "per_user.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "model", "cutoff", "rr", "hit"])
        for r in reports:
            w.writerows((u, m, k, repr(float(rr)), hit) for u, m, k, rr, hit in r.rows())


def write_history(history, path: Path) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "best_fitness", "mean_fitness"])
        w.writerows((g.generation, repr(g.best_fitness), repr(g.mean_fitness)) for g in history)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    sample: tuple[float, int] | None = None,
) -> dict[str, MetricsReport]:
    """Evaluate every configured model on the test cases.

    Weight files are resolved before any computation; nothing is written
    unless every model succeeds.
    """
    weights: dict[str, WeightVector] = {}
    for model in cfg.models:
        if model in WEIGHTED_MODELS:
            path = cfg.weights.get(model)
            if path is None:
                raise ConfigError(f"model {model!r} needs an entry under 'weights'")
            weights[model] = load_weights(path, load_schema(cfg.schema))

    exp = Experiment(cfg, sample=sample)
    reports = {m: exp.evaluate(m, weights.get(m)) for m in cfg.models}
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_reports(list(reports.values()), out_dir)
        extra = {"sample": {"fraction": sample[0], "seed": sample[1]}} if sample else {}
        write_json(manifest(cfg, exp.timings, **extra), out_dir / "manifest.json")
    return reports


def run_optimize(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    seeds: Sequence[int] | None = None,
    undirected: bool = False,
) -> tuple[dict[str, float], MultiSeedResult]:
    """Run the GA once per seed and return the averaged weight document."""
    exp = Experiment(cfg)
    seeds = list(seeds) if seeds is not None else cfg.seeds
    result, layout = exp.optimize(seeds, undirected)
    doc = layout.to_dict(result.mean_genome)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(doc, out_dir / "weights.json")
        for s, run in zip(seeds, result.runs):
            name = "history.csv" if len(seeds) == 1 else f"history_seed{s}.csv"
            write_history(run.history, out_dir / name)
        ga = cfg.ga_config()
        extra = {
            "seeds": seeds,
            "undirected": undirected,
            "ga": {
                "population_size": ga.population_size,
                "parents_mating": ga.parents_mating,
                "mutation_gene_fraction": ga.mutation_gene_fraction,
                "mutation_range": list(ga.mutation_range),
                "gene_range": list(ga.gene_range),
                "max_generations": ga.max_generations,
                "stopping_rule": f"stop after {ga.patience} generations without best-fitness improvement",
            },
            "runs": [
                {
                    "seed": s,
                    "best_fitness": run.best_fitness,
                    "generations": len(run.history),
                    "weights": layout.to_dict(run.best_genome),
                }
                for s, run in zip(seeds, result.runs)
            ],
            "validation_cases": len(exp.split.validation),
        }
        write_json(manifest(cfg, exp.timings, **extra), out_dir / "manifest.json")
    return doc, result


def summarize(values: Sequence[float]) -> dict[str, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    values = list(values)
    return {"mean": statistics.fmean(values), "std": statistics.stdev(values) if len(values) > 1 else 0.0}
