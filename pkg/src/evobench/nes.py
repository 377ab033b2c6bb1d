"""Subpopulation evolution strategy over flat weight genomes.

The architecture is fixed; only a real-valued genome (present connection
weights plus biases, in the stable flatten order) evolves.  Each generation
the population is randomly split into l subpopulations.  Within a block the
lowest-cost member is the elite and the mean of the remaining members is a
virtual parent; repeated max-mean arithmetical crossover of that single pair
produces the block's offspring, each object variable blended with its own
fresh alpha ~ U[0,1]:

    child1_i = alpha_i * elite_i + (1 - alpha_i) * virtual_i
    child2_i = (1 - alpha_i) * elite_i + alpha_i * virtual_i

Offspring are then perturbed by time-variant Gaussian mutation with one step
size per offspring, sigma(t) = 1 - r ** ((1 - t/T) ** gamma), which decays to
exactly zero at the final generation (fine local tuning).  A mutation that
pushes any variable out of the genome domain is dropped entirely and the
unmutated child kept.  Survivor selection is (mu + mu): best mu of parents
and children by cost, ties resolved parent-first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mlp
from .datasets import accuracy, misclassification_rate
from .history import EvolutionHistory, GenerationRecord, RunRecord
from .training import error_from_outputs, error_percentage


@dataclass
class NesConfig:
    mu: int = 20                  # population size
    subpopulations: int = 4       # l
    gamma: float = 8.0            # decay exponent of the mutation step
    t_max: int = 500              # maximal generation number
    genome_domain: tuple[float, float] = (-10.0, 10.0)
    init_range: tuple[float, float] = (-0.5, 0.5)
    hidden_nodes: int = 3
    sigma_variant: str = "base"   # "base" | "coefficient" (for comparison)
    seed: int | None = None

    def __post_init__(self):
        if self.mu % self.subpopulations != 0:
            raise ValueError("mu must be divisible by the subpopulation count")
        if self.mu // self.subpopulations < 2:
            raise ValueError("each subpopulation needs an elite plus at least one "
                             "mean contributor")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.genome_domain[0] >= self.genome_domain[1]:
            raise ValueError("empty genome domain")
        if self.sigma_variant not in ("base", "coefficient"):
            raise ValueError(f"unknown sigma variant {self.sigma_variant!r}")


@dataclass(eq=False)
class NesIndividual:
    genome: np.ndarray
    cost: float | None = None


@dataclass(eq=False)
class Subpopulation:
    members: list[int]            # indices into the population
    elite: int                    # index of the lowest-cost member
    virtual_parent: np.ndarray    # mean genome of the members minus the elite


# -- operators ----------------------------------------------------------------


def sbmac_pair(elite, virtual_parent, rng, alpha=None):
    """Max-mean arithmetical crossover of one (elite, virtual parent) pair.

    The arithmetic is arranged so that child1 stays inside the componentwise
    interval hull exactly and child1 + child2 equals elite + virtual parent
    exactly, rounding included.
    """
    elite = np.asarray(elite, dtype=float)
    virtual_parent = np.asarray(virtual_parent, dtype=float)
    if elite.shape != virtual_parent.shape:
        raise ValueError("genome lengths differ")
    if alpha is None:
        alpha = rng.random(elite.shape[0])
    else:
        alpha = np.asarray(alpha, dtype=float)
    child1 = virtual_parent + alpha * (elite - virtual_parent)
    child2 = (elite + virtual_parent) - child1
    return child1, child2


def tvm_sigma(t, cfg, rng=None, r=None):
    """Time-variant mutation step size at generation t (in [0, 1])."""
    if not 0 <= t <= cfg.t_max:
        raise ValueError(f"generation {t} outside [0, {cfg.t_max}]")
    if r is None:
        r = float(rng.random())
    frac = (1.0 - t / cfg.t_max) ** cfg.gamma
    if cfg.sigma_variant == "coefficient":
        return 1.0 - r * frac
    return 1.0 - r ** frac


def tvm_mutate(child, t, cfg, rng, sigma=None, noise=None):
    """Gaussian-perturb a genome with one sigma(t) per offspring.

    If any mutated variable leaves the genome domain, the child is returned
    whole and unmutated.
    """
    child = np.asarray(child, dtype=float)
    if sigma is None:
        sigma = tvm_sigma(t, cfg, rng)
    if noise is None:
        noise = rng.standard_normal(child.shape[0])
    mutated = child + sigma * noise
    lo, hi = cfg.genome_domain
    if np.any(mutated < lo) or np.any(mutated > hi):
        return child
    return mutated


def partition_subpopulations(population, l, rng):
    """Randomly split the population into l equal blocks; per block find the
    elite (lowest cost, first on ties) and the mean of the remaining members."""
    mu = len(population)
    if mu % l != 0:
        raise ValueError("population size not divisible by the block count")
    perm = rng.permutation(mu)
    size = mu // l
    blocks = []
    for b in range(l):
        members = [int(i) for i in perm[b * size : (b + 1) * size]]
        costs = [population[i].cost for i in members]
        elite_pos = int(np.argmin(costs))
        elite = members[elite_pos]
        rest = [population[i].genome for k, i in enumerate(members) if k != elite_pos]
        virtual = np.mean(rest, axis=0)
        blocks.append(Subpopulation(members=members, elite=elite, virtual_parent=virtual))
    return blocks


def alternate_generation(parents, children):
    """(mu + mu) survivor selection: best mu of the pooled 2*mu individuals,
    ordered by cost with parent-first, then index, tie-breaks."""
    mu = len(parents)
    if len(children) != mu:
        raise ValueError("parent and child populations must have equal size")
    pool = [(ind.cost, origin, k, ind)
            for origin, group in enumerate((parents, children))
            for k, ind in enumerate(group)]
    for cost, _, _, _ in pool:
        if cost is None:
            raise ValueError("unevaluated individual in selection pool")
    pool.sort(key=lambda entry: entry[:3])
    return [entry[3] for entry in pool[:mu]]


# -- the evolutionary loop -------------------------------------------------------


def make_template(m, n, hidden_nodes):
    """Fully connected generalized MLP scaffold for a fixed-architecture run."""
    total = m + hidden_nodes + n
    net = mlp.Network(m, n, hidden_nodes, hidden_nodes,
                      np.zeros((total, total), dtype=np.uint8),
                      np.zeros((total, total)),
                      np.zeros(hidden_nodes + n))
    net.connectivity[net.legal_mask()] = 1
    return net


def evolve(cfg, template, train, validation, test):
    """Run T_max generations; returns (best genome, history, run record).

    Cost is the training-set error percentage of the genome loaded into the
    template architecture.
    """
    if template.hidden_count != cfg.hidden_nodes:
        raise ValueError("template hidden count does not match the config")
    if not np.array_equal(template.connectivity.astype(bool), template.legal_mask()):
        raise ValueError("template must be fully connected")
    if train.n_inputs != template.m or train.n_outputs != template.n:
        raise ValueError("pattern dimensions do not match the template")
    rng = np.random.default_rng(cfg.seed)
    length = mlp.genome_length(template)
    lo, hi = cfg.init_range

    def cost_of(genome):
        net = mlp.unflatten(template, genome)
        return error_from_outputs(net.forward_batch(train.inputs), train)

    population = [NesIndividual(genome=rng.uniform(lo, hi, size=length))
                  for _ in range(cfg.mu)]
    for ind in population:
        ind.cost = cost_of(ind.genome)

    history = EvolutionHistory()
    block_size = cfg.mu // cfg.subpopulations

    for t in range(cfg.t_max):
        blocks = partition_subpopulations(population, cfg.subpopulations, rng)
        children = []
        for block in blocks:
            elite_genome = population[block.elite].genome
            produced = 0
            for _ in range(math.ceil(block_size / 2)):
                c1, c2 = sbmac_pair(elite_genome, block.virtual_parent, rng)
                children.append(NesIndividual(genome=c1))
                produced += 1
                if produced < block_size:
                    children.append(NesIndividual(genome=c2))
                    produced += 1
        for child in children:
            child.genome = tvm_mutate(child.genome, t, cfg, rng)
            child.cost = cost_of(child.genome)
        population = alternate_generation(population, children)

        best = population[0]
        for ind in population[1:]:
            if ind.cost < best.cost:
                best = ind
        best_net = mlp.unflatten(template, best.genome)
        history.append(GenerationRecord(
            generation=t + 1,
            best_error=best.cost,
            mean_error=float(np.mean([ind.cost for ind in population])),
            best_train_error=best.cost,
            best_val_error=error_percentage(best_net, validation),
            best_connections=template.n_connections,
            best_hidden=template.hidden_count,
        ))

    best = min(population, key=lambda ind: ind.cost)
    best_net = mlp.unflatten(template, best.genome)
    record = RunRecord(
        run_index=0, seed=cfg.seed if cfg.seed is not None else -1,
        train_error=best.cost,
        val_error=error_percentage(best_net, validation),
        test_error=error_percentage(best_net, test),
        val_accuracy=accuracy(best_net, validation),
        test_accuracy=accuracy(best_net, test),
        val_misclassification=misclassification_rate(best_net, validation),
        test_misclassification=misclassification_rate(best_net, test),
        connections=template.n_connections,
        hidden_nodes=template.hidden_count,
        generations=len(history),
    )
    return best.genome.copy(), history, record
