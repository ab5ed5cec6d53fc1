"""Pilot-assignment strategies: random, greedy, exhaustive (genie) and genetic."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from xlmimo import kernels
from xlmimo.channel import ChannelStatistics
from xlmimo.config import ScenarioConfig
from xlmimo.estimation import PilotAssignment, cost_weights


class AssignmentError(RuntimeError):
    pass


class CostFunction:
    """Average-NMSE cost shared by the genie and GA searches.

    Evaluates candidate matrices of shape (B, K) with the compiled kernel
    when available; ``evaluations`` counts the candidates scored.
    """

    def __init__(self, stats: ChannelStatistics, cfg: ScenarioConfig):
        self.R = np.ascontiguousarray(stats.R)
        self.p = cfg.ue_powers
        self.tau_p = cfg.tau_p
        self.sigma2 = cfg.noise_power
        self.weights = cost_weights(stats)
        self.evaluations = 0

    def __call__(self, candidates) -> np.ndarray:
        candidates = np.atleast_2d(candidates)
        self.evaluations += candidates.shape[0]
        return kernels.assignment_costs(self.R, self.p, self.tau_p, self.sigma2, self.weights, candidates)


def random_pa(K: int, tau_p: int, rng: np.random.Generator) -> PilotAssignment:
    return PilotAssignment(rng.integers(0, tau_p, size=K), tau_p)


def greedy_pa(stats: ChannelStatistics, tau_p: int, metric: str = "strongest") -> PilotAssignment:
    """Orthogonal pilots for the first ``tau_p`` UEs, then one UE at a time
    the pilot whose current holders have the least NLoS gain.

    ``metric="strongest"`` measures that gain at the UE's strongest SA;
    ``"sum"`` sums it over all SAs.
    """
    K = stats.K
    beta = stats.beta
    beta_nlos = stats.beta_nlos
    pilots = np.empty(K, dtype=np.int64)
    first = min(tau_p, K)
    pilots[:first] = np.arange(first)
    for k in range(first, K):
        if metric == "strongest":
            l_k = int(np.argmax(beta[k]))
            gain = beta_nlos[:k, l_k]
        else:
            gain = beta_nlos[:k].sum(axis=1)
        load = np.zeros(tau_p)
        np.add.at(load, pilots[:k], gain)
        pilots[k] = int(np.argmin(load))
    return PilotAssignment(pilots, tau_p)


def genie_search_space(K: int, tau_p: int, fix_first: bool = True) -> np.ndarray:
    """All assignments in lexicographic order, optionally with UE 0 on pilot 0."""
    if fix_first and K >= 1:
        rest = np.array(list(itertools.product(range(tau_p), repeat=K - 1)), dtype=np.int64)
        rest = rest.reshape(tau_p ** (K - 1), K - 1)
        return np.hstack([np.zeros((rest.shape[0], 1), dtype=np.int64), rest])
    return np.array(list(itertools.product(range(tau_p), repeat=K)), dtype=np.int64).reshape(tau_p**K, K)


def genie_pa(
    stats: ChannelStatistics,
    cfg: ScenarioConfig,
    fix_first: bool = True,
    chunk: int = 65536,
) -> tuple[PilotAssignment, float]:
    """Exhaustive search for the minimum-cost assignment.

    Relabelling pilots leaves the cost unchanged, so UE 0 is pinned to
    pilot 0 by default. Ties resolve to the lexicographically smallest
    assignment.
    """
    K, tau_p = stats.K, cfg.tau_p
    if tau_p**K > cfg.exhaustive_budget:
        raise AssignmentError(
            f"exhaustive search over {tau_p}^{K} assignments exceeds the budget of "
            f"{cfg.exhaustive_budget}; use the GA method instead"
        )
    cost = CostFunction(stats, cfg)
    space = genie_search_space(K, tau_p, fix_first)
    best_cost = np.inf
    best = space[0]
    for start in range(0, space.shape[0], chunk):
        block = space[start : start + chunk]
        c = cost(block)
        i = int(np.argmin(c))
        if c[i] < best_cost:
            best_cost = float(c[i])
            best = block[i]
    return PilotAssignment(best, tau_p), best_cost


@dataclass
class GAResult:
    assignment: PilotAssignment
    cost: float
    history: list[float] = field(default_factory=list)
    evaluations: int = 0


def _crossover(parent_a: np.ndarray, parent_b: np.ndarray, point: int) -> np.ndarray:
    """Genes before ``point`` (0-based) from ``parent_a``, the rest from ``parent_b``."""
    child = parent_b.copy()
    child[:point] = parent_a[:point]
    return child


def _mutate(child: np.ndarray, tau_p: int, p_mut: float, rng: np.random.Generator) -> np.ndarray:
    if tau_p < 2 or p_mut == 0.0:
        return child
    flip = rng.random(child.size) < p_mut
    if np.any(flip):
        # uniform over the tau_p - 1 other pilots
        shift = rng.integers(1, tau_p, size=int(flip.sum()))
        child[flip] = (child[flip] + shift) % tau_p
    return child


def ga_pa(
    stats: ChannelStatistics,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    initial_population: np.ndarray | None = None,
) -> GAResult:
    """Genetic-algorithm pilot assignment minimising the average-NMSE cost.

    Each generation breeds ``A`` offspring from pairs of distinct parents
    drawn among the ``elite`` lowest-cost candidates (single-point
    crossover with the cut uniform over 1-based positions 2..K, then per-gene
    mutation). The best candidate ever evaluated is returned;
    ``history[i]`` is the best-so-far cost after iteration ``i + 1``.
    """
    K, tau_p = stats.K, cfg.tau_p
    A, elite, p_mut = cfg.ga_population, cfg.ga_elite, cfg.ga.p_mut
    cost = CostFunction(stats, cfg)

    if initial_population is None:
        population = rng.integers(0, tau_p, size=(A, K))
    else:
        population = np.array(initial_population, dtype=np.int64).reshape(-1, K)
        if population.shape[0] != A:
            raise ValueError(f"initial population must have {A} candidates")
    costs = cost(population)
    order = np.argsort(costs, kind="stable")
    population, costs = population[order], costs[order]
    best, best_cost = population[0].copy(), float(costs[0])
    history = [best_cost]

    for _ in range(1, cfg.ga.n_it):
        offspring = np.empty_like(population)
        for a in range(A):
            i, j = rng.choice(elite, size=2, replace=False)
            point = int(rng.integers(1, K)) if K > 1 else K
            child = _crossover(population[i], population[j], point)
            offspring[a] = _mutate(child, tau_p, p_mut, rng)
        costs = cost(offspring)
        order = np.argsort(costs, kind="stable")
        population, costs = offspring[order], costs[order]
        if costs[0] < best_cost:
            best, best_cost = population[0].copy(), float(costs[0])
        history.append(best_cost)

    return GAResult(PilotAssignment(best, tau_p), best_cost, history, cost.evaluations)


def assign_pilots(
    method: str, stats: ChannelStatistics, cfg: ScenarioConfig, rng: np.random.Generator | None = None
) -> PilotAssignment:
    if method == "random":
        return random_pa(stats.K, cfg.tau_p, rng)
    if method == "greedy":
        return greedy_pa(stats, cfg.tau_p, cfg.greedy_metric)
    if method == "genie":
        return genie_pa(stats, cfg)[0]
    if method == "ga":
        return ga_pa(stats, cfg, rng).assignment
    raise ValueError(f"unknown pilot-assignment method: {method}")
