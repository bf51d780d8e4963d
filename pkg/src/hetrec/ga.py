"""Genetic search over per-edge-type weights.

A genome holds one positive weight per registered edge type (or one per
interaction when in/out weights are tied). Each generation keeps the best
``parents_mating`` genomes unchanged and refills the population with
uniform-crossover children of consecutive parent pairs, each with a fixed
number of genes perturbed and clamped to the gene range.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .evaluation import METRICS, TestCase
from .graph import Direction, EdgeTypeRegistry, HeterogeneousGraph, WeightVector
from .ppr import SolverConfig, batch_pagerank, build_transition
from .recommender import Mode, RecommendationRequest, interaction_map, rank

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 10
    parents_mating: int = 4
    mutation_gene_fraction: float = 0.1
    mutation_range: tuple[float, float] = (-0.3, 0.3)
    gene_range: tuple[float, float] = (0.01, 2.0)
    max_generations: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mutation_range", tuple(float(x) for x in self.mutation_range))
        object.__setattr__(self, "gene_range", tuple(float(x) for x in self.gene_range))
        if not self.population_size >= self.parents_mating >= 2:
            raise ConfigError("need population_size >= parents_mating >= 2")
        if not 0.0 < self.mutation_gene_fraction <= 1.0:
            raise ConfigError("mutation_gene_fraction must lie in (0, 1]")
        lo, hi = self.mutation_range
        if lo > hi:
            raise ConfigError(f"bad mutation range {self.mutation_range}")
        gmin, gmax = self.gene_range
        if not 0.0 < gmin <= gmax:
            raise ConfigError(f"gene range must satisfy 0 < min <= max, got {self.gene_range}")
        if self.max_generations < 1 or self.patience < 0:
            raise ConfigError("max_generations must be >= 1 and patience >= 0")

    def mutation_count(self, gene_count: int) -> int:
        # round half up, and always mutate at least one gene
        return min(gene_count, max(1, math.floor(self.mutation_gene_fraction * gene_count + 0.5)))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class GeneLayout:
    """Maps genome positions to weight-vector entries."""

    def __init__(self, registry: EdgeTypeRegistry, undirected: bool = False):
        self.undirected = undirected
        if undirected:
            self.names = list(registry.interactions)
            self.parts = [
                [(name, d) for d in (Direction.IN, Direction.OUT) if registry.has(name, d)]
                for name in self.names
            ]
        else:
            self.names = [t.key for t in registry]
            self.parts = [[t.parts[0]] for t in registry]

    def __len__(self) -> int:
        return len(self.names)

    def to_weights(self, genome: Sequence[float]) -> WeightVector:
        if len(genome) != len(self):
            raise ConfigError(f"genome has {len(genome)} genes, layout expects {len(self)}")
        return WeightVector({p: float(g) for g, parts in zip(genome, self.parts) for p in parts})

    def to_dict(self, genome: Sequence[float]) -> dict[str, float]:
        """Weight-file document: bare interaction keys when undirected."""
        if self.undirected:
            return {name: float(g) for name, g in zip(self.names, genome)}
        return self.to_weights(genome).as_dict()


def init_population(config: GaConfig, gene_count: int) -> np.ndarray:
    if gene_count < 1:
        raise ConfigError("gene_count must be >= 1")
    lo, hi = config.gene_range
    return np.stack([_rng(config.seed, 0, i).uniform(lo, hi, gene_count) for i in range(config.population_size)])


def select_parents(population: np.ndarray, fitness: Sequence[float], config: GaConfig) -> tuple[np.ndarray, list[int]]:
    """Top ``parents_mating`` genomes by fitness, best first; ties keep lower index."""
    fit = [(-math.inf if math.isnan(f) else f) for f in fitness]
    order = sorted(range(len(fit)), key=lambda i: (-fit[i], i))[: config.parents_mating]
    return population[order], order


def crossover_uniform(parent_a: np.ndarray, parent_b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    parent_a, parent_b = np.asarray(parent_a), np.asarray(parent_b)
    if parent_a.shape != parent_b.shape:
        raise ValueError(f"parent length mismatch: {parent_a.shape} vs {parent_b.shape}")
    return np.where(rng.random(parent_a.shape) < 0.5, parent_a, parent_b)


def mutate(genome: np.ndarray, config: GaConfig, rng: np.random.Generator) -> np.ndarray:
    child = np.array(genome, dtype=np.float64)
    m = config.mutation_count(len(child))
    idx = rng.choice(len(child), size=m, replace=False)
    child[idx] += rng.uniform(*config.mutation_range, size=m)
    return np.clip(child, *config.gene_range)


@dataclass(frozen=True)
class Generation:
    generation: int
    best_fitness: float
    mean_fitness: float


@dataclass
class GaResult:
    best_genome: np.ndarray
    best_fitness: float
    history: list[Generation]
    config: GaConfig
    populations: list[np.ndarray] = field(default_factory=list, repr=False)


def _evaluate(fitness: Callable, genomes: np.ndarray, threads: int) -> list[float]:
    if threads > 1 and len(genomes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return [float(f) for f in pool.map(fitness, list(genomes))]
    return [float(fitness(g)) for g in genomes]


def evolve(
    fitness: Callable[[np.ndarray], float],
    config: GaConfig,
    gene_count: int | None = None,
    threads: int | None = None,
    keep_populations: bool = False,
) -> GaResult:
    """Maximise ``fitness`` until the best value stalls for ``patience`` generations.

    ``fitness`` may be a FitnessContext, in which case the gene count comes
    from its layout. Children get their own RNG stream keyed by
    (seed, generation, slot), so results do not depend on thread count.
    """
    if gene_count is None:
        gene_count = len(fitness.layout)
    if threads is None:
        threads = int(os.environ.get("HETREC_THREADS", "1") or 1)

    population = init_population(config, gene_count)
    scores = _evaluate(fitness, population, threads)
    history: list[Generation] = []
    populations = []
    best_fit, best_genome, stale = -math.inf, population[0], 0
    n_parents = config.parents_mating

    for gen in range(config.max_generations):
        if gen > 0:
            parents, order = select_parents(population, scores, config)
            children = []
            for slot in range(config.population_size - n_parents):
                rng = _rng(config.seed, gen, slot)
                a, b = parents[slot % n_parents], parents[(slot + 1) % n_parents]
                children.append(mutate(crossover_uniform(a, b, rng), config, rng))
            children = np.array(children).reshape(-1, gene_count)
            population = np.vstack([parents, children])
            scores = [scores[i] for i in order] + _evaluate(fitness, children, threads)

        if keep_populations:
            populations.append(population.copy())
        i_best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        history.append(Generation(gen, scores[i_best], math.fsum(scores) / len(scores)))
        logger.info("generation %d: best %.5f mean %.5f", gen, history[-1].best_fitness, history[-1].mean_fitness)
        if scores[i_best] > best_fit:
            best_fit, best_genome, stale = scores[i_best], population[i_best].copy(), 0
        else:
            stale += 1
        if stale >= config.patience:
            break

    return GaResult(best_genome, best_fit, history, config, populations)


@dataclass
class FitnessContext:
    """Validation ranking quality of a genome on a fixed training graph."""

    graph: HeterogeneousGraph
    validation: Sequence[TestCase]
    request: RecommendationRequest
    layout: GeneLayout
    solver: SolverConfig = field(default_factory=SolverConfig)
    metric: str = "mrr"
    cutoff: int | None = None
    threads: int | None = None
    cases: list[tuple[int, TestCase]] = field(init=False, repr=False)
    skipped: int = field(init=False, default=0)

    def __post_init__(self):
        if self.metric not in ("mrr", "ndcg", "map"):
            raise ConfigError(f"unknown fitness metric {self.metric!r}")
        if self.cutoff is None:
            self.cutoff = self.request.k
        if not self.validation:
            raise ConfigError("validation set is empty; fitness is undefined")
        self.cases = []
        for case in self.validation:
            idx = self.graph.get_index(self.request.user_tag, case.user_id)
            if idx is None:
                self.skipped += 1
            else:
                self.cases.append((idx, case))
        if not self.cases:
            raise ConfigError("no validation user is present in the training graph")
        if self.skipped:
            logger.info("fitness: %d validation cases skipped (user not in graph)", self.skipped)
        self.neighbor_items = None
        if self.request.mode is Mode.NEIGHBORS:
            self.neighbor_items = interaction_map(
                self.graph, self.request.user_tag, self.request.target_tag, self.request.neighbor_interactions
            )

    def __call__(self, genome) -> float:
        return evaluate_fitness(genome, self)


def evaluate_fitness(genome, context: FitnessContext) -> float:
    weights = context.layout.to_weights(genome)
    matrix = build_transition(context.graph, weights)
    users = sorted({idx for idx, _ in context.cases})
    solved = dict(zip(users, batch_pagerank(matrix, users, context.solver, threads=context.threads)))
    metric = METRICS[context.metric]
    k = max(context.request.k, context.cutoff)
    values = []
    for idx, case in context.cases:
        req = replace(context.request, user_id=case.user_id, k=k)
        ranked = rank(context.graph, solved[idx], req, context.neighbor_items)
        values.append(metric(ranked, case.items, context.cutoff))
    return math.fsum(values) / len(values)


@dataclass
class MultiSeedResult:
    runs: list[GaResult]
    mean_genome: np.ndarray

    @property
    def best_fitness(self) -> list[float]:
        return [r.best_fitness for r in self.runs]


def evolve_seeds(fitness: Callable, config: GaConfig, seeds: Sequence[int], **kwargs) -> MultiSeedResult:
    """Independent runs per seed; the reported genome is the mean of the best genomes."""
    runs = [evolve(fitness, replace(config, seed=s), **kwargs) for s in seeds]
    return MultiSeedResult(runs, np.mean([r.best_genome for r in runs], axis=0))
