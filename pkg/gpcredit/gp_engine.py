import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from dataset import Dataset
from errors import ConfigurationError
from expr_tree import (
    OPERATORS,
    ConstNode,
    ExprTree,
    FeatureNode,
    FunctionNode,
    Node,
    eval_tree,
    evaluate,
    iter_subtrees,
    replace_subtree,
)
from fitness import FitnessFunction, FitnessKind, Metrics
from models import EvolutionParams

logger = logging.getLogger(__name__)

FitnessHandle = Callable[[ExprTree, Dataset], float]
GenerationCallback = Callable[[int, float, float], None]


class ClassLabel(str, Enum):
    MINORITY = "minority"
    MAJORITY = "majority"


@dataclass(frozen=True)
class Individual:
    """A tree with its cached training fitness"""
    tree: ExprTree
    fitness: float


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one evolution run"""
    best_tree: ExprTree
    best_fitness: float
    train_fitness_trace: Tuple[Tuple[float, float], ...]   # (best, mean) per generation
    seed: int
    fitness_kind: Optional[FitnessKind] = None
    test_metrics: Optional[Metrics] = None

    def with_test_metrics(self, metrics: Metrics) -> "RunRecord":
        return replace(self, test_metrics=metrics)


# -- classification -----------------------------------------------------------

def classify(tree: ExprTree, x: Sequence[float]) -> ClassLabel:
    """Minority when the tree output is >= 0, majority otherwise"""
    return ClassLabel.MINORITY if eval_tree(tree, x) >= 0 else ClassLabel.MAJORITY


def predict_minority(tree: ExprTree, features: np.ndarray) -> np.ndarray:
    """Boolean minority prediction for every row of a feature matrix"""
    return evaluate(tree, features) >= 0


# -- tree generation ----------------------------------------------------------

def _random_terminal(rng: np.random.Generator, n_features: int) -> Node:
    choice = int(rng.integers(n_features + 1))
    if choice == n_features:
        return ConstNode(float(rng.uniform(-1.0, 1.0)))
    return FeatureNode(choice)


def _random_function(rng: np.random.Generator) -> str:
    return OPERATORS[int(rng.integers(len(OPERATORS)))]


def _build(depth_left: int, method: str, rng: np.random.Generator, n_features: int, root: bool) -> Node:
    if depth_left == 0:
        return _random_terminal(rng, n_features)
    # Roots are always functions so no initial program is a bare terminal
    if method == "grow" and not root:
        choice = int(rng.integers(len(OPERATORS) + n_features + 1))
        if choice >= len(OPERATORS):
            return _random_terminal(rng, n_features)
    op = _random_function(rng)
    left = _build(depth_left - 1, method, rng, n_features, root=False)
    right = _build(depth_left - 1, method, rng, n_features, root=False)
    return FunctionNode(op, (left, right))


def generate_tree(params: EvolutionParams,
                  rng: np.random.Generator,
                  n_features: int,
                  method: str = "half",
                  depth: Optional[int] = None) -> ExprTree:
    """
    Generate a random tree.

    Args:
        params: Evolution parameters (init_depth_range bounds the depth)
        rng: Run generator
        n_features: Number of attributes available to feature terminals
        method: "full", "grow" or "half" (either, with probability 1/2)
        depth: Target depth; drawn uniformly from init_depth_range when omitted

    Returns:
        A tree of exactly `depth` for "full", at most `depth` for "grow"
    """
    if n_features < 1:
        raise ConfigurationError("Trees need at least one feature")
    if method == "half":
        method = "full" if rng.integers(2) else "grow"
    if method not in ("full", "grow"):
        raise ConfigurationError(f"Unknown initialization method '{method}'")
    if depth is None:
        low, high = params.init_depth_range
        depth = int(rng.integers(low, high + 1))
    return ExprTree(_build(depth, method, rng, n_features, root=True))


def ramped_half_and_half(n: int,
                         params: EvolutionParams,
                         n_features: int,
                         rng: np.random.Generator) -> List[ExprTree]:
    """Initial population cycling through every depth in the init range, alternating full and grow"""
    low, high = params.init_depth_range
    depths = list(range(low, high + 1))
    trees = []
    for i in range(n):
        depth = depths[i % len(depths)]
        method = "full" if (i // len(depths)) % 2 == 0 else "grow"
        trees.append(generate_tree(params, rng, n_features, method=method, depth=depth))
    return trees


# -- genetic operators --------------------------------------------------------

def _pick_point(tree: ExprTree, rng: np.random.Generator):
    points = list(iter_subtrees(tree))
    return points[int(rng.integers(len(points)))]


def subtree_crossover(a: ExprTree, b: ExprTree, rng: np.random.Generator, max_depth: int = 17) -> ExprTree:
    """
    Replace a random subtree of `a` with a random subtree of `b`.

    Offspring deeper than max_depth are rejected in favour of `a`; parents
    are never modified.
    """
    path, _ = _pick_point(a, rng)
    _, donor = _pick_point(b, rng)
    child = replace_subtree(a, path, donor)
    if child.depth > max_depth:
        return a
    return child


def subtree_mutation(a: ExprTree, params: EvolutionParams, rng: np.random.Generator, n_features: int) -> ExprTree:
    """Replace a random subtree of `a` with a freshly grown tree"""
    path, _ = _pick_point(a, rng)
    fresh = generate_tree(params, rng, n_features, method="grow")
    child = replace_subtree(a, path, fresh.root)
    if child.depth > params.max_depth:
        return a
    return child


def tournament_select(pop: Sequence[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Best of k individuals sampled with replacement; the first sampled wins ties"""
    if not pop:
        raise ConfigurationError("Cannot select from an empty population")
    if not 1 <= k <= len(pop):
        raise ConfigurationError(f"Tournament size {k} must be between 1 and population size {len(pop)}")
    picks = rng.integers(0, len(pop), size=k)
    winner = pop[int(picks[0])]
    for index in picks[1:]:
        contender = pop[int(index)]
        if contender.fitness > winner.fitness:
            winner = contender
    return winner


# -- parallel evaluation ------------------------------------------------------

_WORKER_STATE = {}


def _init_worker(train: Dataset, fitness_fn: FitnessHandle) -> None:
    _WORKER_STATE["train"] = train
    _WORKER_STATE["fitness_fn"] = fitness_fn


def _evaluate_in_worker(tree: ExprTree) -> float:
    return _WORKER_STATE["fitness_fn"](tree, _WORKER_STATE["train"])


class GPEngine:
    """Generational GP with elitism, tournament selection, subtree crossover and mutation"""

    def __init__(self, params: EvolutionParams, jobs: int = 1):
        self.params = params
        self.jobs = max(1, jobs)
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    @contextmanager
    def _evaluator(self, train: Dataset, fitness_fn: FitnessHandle) -> Iterator[Callable[[List[ExprTree]], List[float]]]:
        if self.jobs == 1:
            yield lambda trees: [fitness_fn(tree, train) for tree in trees]
            return
        with ProcessPoolExecutor(max_workers=self.jobs, initializer=_init_worker,
                                 initargs=(train, fitness_fn)) as executor:
            def evaluate_all(trees: List[ExprTree]) -> List[float]:
                chunksize = max(1, len(trees) // (self.jobs * 4))
                # map yields in submission order, so worker count never changes results
                return list(executor.map(_evaluate_in_worker, trees, chunksize=chunksize))
            yield evaluate_all

    def _breed(self, population: List[Individual], rng: np.random.Generator,
               n_features: int, n_children: int) -> List[Tuple[ExprTree, Optional[Individual]]]:
        """Offspring trees, paired with the parent when an operator fell back to it"""
        params = self.params
        offspring = []
        while len(offspring) < n_children:
            parent = tournament_select(population, params.tournament_size, rng)
            if rng.random() < params.p_crossover:
                donor = tournament_select(population, params.tournament_size, rng)
                child = subtree_crossover(parent.tree, donor.tree, rng, params.max_depth)
            else:
                child = subtree_mutation(parent.tree, params, rng, n_features)
            offspring.append((child, parent if child is parent.tree else None))
        return offspring

    def evolve(self, train: Dataset, fitness_fn: FitnessHandle,
               callback: Optional[GenerationCallback] = None,
               seed_trees: Sequence[ExprTree] = ()) -> RunRecord:
        """
        Run the generational loop on a training set.

        Args:
            train: Training data with both classes present
            fitness_fn: Handle scoring a tree on the training data (higher is better)
            callback: Optional hook called with (generation, best, mean) after each generation
            seed_trees: Trees that take the first places of the initial population

        Returns:
            RunRecord with the best-of-run tree and per-generation (best, mean) fitness
        """
        train.require_both_classes("evolution")
        params = self.params
        rng = np.random.default_rng(params.seed)
        n_features = train.attribute_count
        kind = getattr(fitness_fn, "kind", None)

        self.logger.info(
            f"Evolution started - Seed: {params.seed} - Fitness: {kind.value if kind else 'custom'} - "
            f"Population: {params.population_size} - Generations: {params.generations}"
        )

        with self._evaluator(train, fitness_fn) as evaluate_all:
            trees = ramped_half_and_half(params.population_size, params, n_features, rng)
            planted = list(seed_trees)[:params.population_size]
            trees[:len(planted)] = planted
            population = [Individual(t, f) for t, f in zip(trees, evaluate_all(trees))]
            best = self._first_best(population)
            trace = [self._record(0, population, callback)]

            for generation in range(1, params.generations + 1):
                # Stable sort: among equal fitness the earlier individual is kept
                ranked = sorted(range(len(population)), key=lambda i: -population[i].fitness)
                elites = [population[i] for i in ranked[:params.elitism_count]]
                offspring = self._breed(population, rng, n_features, params.population_size - len(elites))

                fresh = [tree for tree, cached in offspring if cached is None]
                scores = iter(evaluate_all(fresh))
                children = [
                    cached if cached is not None else Individual(tree, next(scores))
                    for tree, cached in offspring
                ]
                population = elites + children

                generation_best = self._first_best(population)
                if generation_best.fitness > best.fitness:
                    best = generation_best
                trace.append(self._record(generation, population, callback))

        self.logger.info(
            f"Evolution finished - Seed: {params.seed} - Best fitness: {best.fitness:.6f} - "
            f"Tree size: {best.tree.size} - Depth: {best.tree.depth}"
        )
        return RunRecord(
            best_tree=best.tree,
            best_fitness=best.fitness,
            train_fitness_trace=tuple(trace),
            seed=params.seed,
            fitness_kind=kind,
        )

    @staticmethod
    def _first_best(population: List[Individual]) -> Individual:
        best = population[0]
        for individual in population[1:]:
            if individual.fitness > best.fitness:
                best = individual
        return best

    def _record(self, generation: int, population: List[Individual],
                callback: Optional[GenerationCallback]) -> Tuple[float, float]:
        scores = np.array([individual.fitness for individual in population])
        best, mean = float(scores.max()), float(scores.mean())
        self.logger.debug(f"Generation {generation} - Best: {best:.6f} - Mean: {mean:.6f}")
        if callback:
            callback(generation, best, mean)
        return best, mean


def evolve(train: Dataset, fitness_fn: FitnessHandle, params: EvolutionParams,
           jobs: int = 1, callback: Optional[GenerationCallback] = None,
           seed_trees: Sequence[ExprTree] = ()) -> RunRecord:
    """Convenience wrapper around GPEngine.evolve"""
    if isinstance(fitness_fn, FitnessKind):
        fitness_fn = FitnessFunction(fitness_fn)
    return GPEngine(params, jobs=jobs).evolve(train, fitness_fn, callback=callback, seed_trees=seed_trees)
