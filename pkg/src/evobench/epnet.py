"""Evolutionary programming over network architectures and weights.

A population of generalized feedforward nets evolves by rank-based selection
and five ordered mutations: continued partial training for "success" parents,
and for "failure" parents node deletion, then connection deletion, then the
addition pair (connection addition vs node splitting) -- deletions always
attempted first so parsimony comes from mutation order rather than from a
complexity term in the fitness.

Every offspring is partially trained before it competes.  Deletion-phase
offspring replace the population's worst member only when better than it;
the addition phase trains both candidates and the better one replaces the
worst unconditionally.  A retrained "success" parent replaces itself.

Fitness is the validation error percentage; the best individual ever
inserted is kept as a snapshot champion, reported in the history and, after
the loop ends, trained further on train+validation before being returned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import mlp
from .datasets import PatternSet, accuracy, misclassification_rate
from .history import EvolutionHistory, GenerationRecord, RunRecord
from .training import (TrainerParams, TrainerState, connection_significance,
                       error_percentage, partial_train, train_epoch)


@dataclass
class EpnetConfig:
    population_size: int = 20
    k0: int = 50                     # initial partial-training epochs
    k1: int = 20                     # partial-training epochs during evolution
    max_deleted_nodes: int = 1
    max_mutated_connections: int = 3
    hidden_range: tuple[int, int] = (1, 3)
    n_max: int = 8                   # hidden slot headroom for node addition
    density: float = 1.0
    weight_init_range: tuple[float, float] = (-0.5, 0.5)
    bias_init: mlp.BiasInit = None
    success_threshold: float = 0.01  # rho
    stop_epsilon: float = 0.01
    stop_window: int = 10            # G0 consecutive generations
    max_generations: int = 500
    final_training_epochs: int = 70
    learning_rate: float = 0.15
    lr_up: float = 1.05
    lr_down: float = 0.6
    lr_min: float = 1e-4
    lr_max: float = 1.0
    shuffle: bool = False
    beta_range: tuple[float, float] = (-0.5, 0.5)
    seed: int | None = None

    def __post_init__(self):
        if self.bias_init is None:
            self.bias_init = mlp.BiasInit.constant(-1.5)
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.k0 < 1 or self.k1 < 1:
            raise ValueError("training epoch counts must be >= 1")
        if self.max_deleted_nodes < 1 or self.max_mutated_connections < 1:
            raise ValueError("mutation counts must be >= 1")
        if self.stop_epsilon <= 0 or self.stop_window < 1:
            raise ValueError("stop rule parameters out of range")
        if not (1 <= self.hidden_range[0] <= self.hidden_range[1] <= self.n_max):
            raise ValueError("hidden_range infeasible for n_max")

    def trainer_params(self):
        return TrainerParams(learning_rate=self.learning_rate, lr_up=self.lr_up,
                             lr_down=self.lr_down, lr_min=self.lr_min,
                             lr_max=self.lr_max, shuffle=self.shuffle,
                             success_threshold=self.success_threshold)


@dataclass(eq=False)
class EpnetIndividual:
    network: mlp.Network
    trainer_state: TrainerState
    validation_error: float
    mark: str
    uid: int = 0

    def sort_key(self):
        # error first, then parsimony, then insertion order for stable ties
        return (self.validation_error, self.network.n_connections, self.uid)

    def snapshot(self):
        return EpnetIndividual(self.network.copy(), self.trainer_state.copy(),
                               self.validation_error, self.mark, self.uid)


# -- selection ---------------------------------------------------------------


def rank_select(population, rng):
    """Linear rank-based selection over a best-first sorted population.

    Returns a 0-based index k chosen with probability
    2 * (M - k) / (M * (M + 1)), so the best individual (k = 0) is the most
    likely parent.
    """
    M = len(population)
    if M == 0:
        raise ValueError("empty population")
    probs = 2.0 * (M - np.arange(M)) / (M * (M + 1))
    return int(rng.choice(M, p=probs))


# -- structural mutations ------------------------------------------------------


def _permute_network(net, old_of_new, hidden_count):
    """Rebuild matrices with slot s taking old index old_of_new[s]."""
    new = mlp.Network(net.m, net.n, net.n_max, hidden_count,
                      net.connectivity[np.ix_(old_of_new, old_of_new)].copy(),
                      net.weights[np.ix_(old_of_new, old_of_new)].copy(),
                      np.zeros(net.n_max + net.n))
    bias_src = np.asarray(old_of_new[net.m : net.m + net.n_max]) - net.m
    new.bias_weights[: net.n_max] = net.bias_weights[bias_src]
    new.bias_weights[net.n_max :] = net.bias_weights[net.n_max :]
    return new


def delete_nodes(net, count, rng):
    """Remove ``count`` uniformly chosen active hidden nodes.

    Surviving hidden nodes are re-compacted to the leading slots (relative
    order preserved, so feedforward legality is untouched).
    """
    active = net.hidden_active
    if not 1 <= count <= len(active) - 1:
        raise ValueError(f"cannot delete {count} of {len(active)} hidden nodes")
    doomed = set(int(v) for v in rng.choice(active, size=count, replace=False))
    keep = [h for h in active if h not in doomed]
    vacated = sorted(doomed) + list(range(net.m + net.hidden_count, net.m + net.n_max))
    old_of_new = (list(range(net.m)) + keep + vacated
                  + list(range(net.m + net.n_max, net.total)))
    new = _permute_network(net, old_of_new, net.hidden_count - count)
    # zero everything in the vacated slots
    dead = np.arange(net.m + new.hidden_count, net.m + net.n_max)
    new.connectivity[dead, :] = 0
    new.connectivity[:, dead] = 0
    new.weights[dead, :] = 0.0
    new.weights[:, dead] = 0.0
    new.bias_weights[dead - net.m] = 0.0
    return new


def split_node(net, rng, beta_range=(-0.5, 0.5)):
    """Grow the net by splitting one random hidden node into two.

    Both halves keep the parent's incoming weights and bias; each outgoing
    weight w becomes (1 + beta) * w on the original and -beta * w on the new
    node, so the network function is preserved at the moment of the split.
    Returns None when every hidden slot is already in use.
    """
    if net.hidden_count >= net.n_max:
        return None
    h = int(rng.choice(net.hidden_active))
    beta = float(rng.uniform(*beta_range))
    # slot h+1 becomes the clone; later hidden shift up one slot
    old_of_new = (list(range(h + 1)) + [h]
                  + list(range(h + 1, net.m + net.n_max - 1))
                  + list(range(net.m + net.n_max, net.total)))
    new = _permute_network(net, old_of_new, net.hidden_count + 1)
    clone = h + 1
    receivers = np.flatnonzero(new.connectivity[:, h])
    w_out = new.weights[receivers, h].copy()
    new.weights[receivers, h] = (1.0 + beta) * w_out
    new.weights[receivers, clone] = -beta * w_out
    # the clone row/col duplicated h's self-entries, which are zero by legality
    return new


def _sample_without_replacement(candidates, weights, count, rng):
    """Draw ``count`` distinct candidate indices with odds ``weights``."""
    weights = np.asarray(weights, dtype=float).copy()
    chosen = []
    for _ in range(count):
        total = weights.sum()
        if total <= 0.0:
            return None
        pick = int(rng.choice(len(candidates), p=weights / total))
        chosen.append(pick)
        weights[pick] = 0.0
    return [candidates[k] for k in chosen]


def delete_connections(net, state, count, rng):
    """Remove ``count`` present connections, the less important the likelier.

    Selection probability is proportional to 1 / (1 + importance); an
    infinite-importance connection is never selected.  Returns None when the
    requested count cannot be sampled.
    """
    present = np.argwhere(net.connectivity == 1)
    if not 1 <= count <= len(present) - 1:
        raise ValueError(f"cannot delete {count} of {len(present)} connections")
    imp = connection_significance(state, net)
    odds = np.array([1.0 / (1.0 + imp[i, j]) for i, j in present])
    odds[np.isnan(odds)] = 0.0
    selected = _sample_without_replacement(list(map(tuple, present)), odds, count, rng)
    if selected is None:
        return None
    new = net.copy()
    for i, j in selected:
        new.connectivity[i, j] = 0
        new.weights[i, j] = 0.0
    return new


def add_connections(net, state, count, rng, weight_init_range=(-0.5, 0.5)):
    """Add ``count`` absent legal connections, the more important the likelier.

    Virtual importance comes from gradient proposals computed as if each
    absent connection existed at zero weight.  New connections enter with a
    small random weight from ``weight_init_range`` (use (0, 0) to add them
    functionally inert).  Returns None when the net is already fully
    connected.
    """
    absent = np.argwhere(net.legal_mask() & (net.connectivity == 0))
    if len(absent) == 0:
        return None
    count = min(count, len(absent))
    imp = connection_significance(state, net, include_virtual=True)
    odds = np.array([imp[i, j] for i, j in absent])
    odds[np.isnan(odds)] = 0.0
    if np.isinf(odds).any():
        odds = np.where(np.isinf(odds), 1.0, 0.0)
    elif odds.sum() <= 0.0:
        odds = np.ones(len(absent))
    selected = _sample_without_replacement(list(map(tuple, absent)), odds, count, rng)
    if selected is None:
        return None
    new = net.copy()
    lo, hi = weight_init_range
    for i, j in selected:
        new.connectivity[i, j] = 1
        new.weights[i, j] = rng.uniform(lo, hi)
    return new


# -- the evolutionary loop -------------------------------------------------------


def init_population(cfg, train, validation, rng):
    """Random nets, each partially trained for k0 epochs and marked."""
    params = cfg.trainer_params()
    population = []
    for uid in range(cfg.population_size):
        net = mlp.random_network(train.n_inputs, train.n_outputs, cfg.n_max,
                                 cfg.hidden_range, cfg.density,
                                 cfg.weight_init_range, cfg.bias_init, rng)
        state = TrainerState(learning_rate=cfg.learning_rate)
        outcome = partial_train(net, train, validation, cfg.k0, state, params, rng)
        population.append(EpnetIndividual(net, state, outcome.error_after,
                                          outcome.mark, uid))
    population.sort(key=EpnetIndividual.sort_key)
    return population


def _better_than(challenger, incumbent):
    if challenger.validation_error != incumbent.validation_error:
        return challenger.validation_error < incumbent.validation_error
    return challenger.network.n_connections < incumbent.network.n_connections


def evolve(cfg, train, validation, test):
    """Run the full loop; returns (best network, history, run record).

    Stops when the population's mean validation error has improved by at most
    stop_epsilon over stop_window consecutive generations, or at
    max_generations.  The champion then gets final_training_epochs on
    train+validation and is evaluated on all three partitions.
    """
    if train.n_inputs != validation.n_inputs or train.n_inputs != test.n_inputs:
        raise ValueError("partition input dimensions differ")
    if train.n_outputs != validation.n_outputs or train.n_outputs != test.n_outputs:
        raise ValueError("partition output dimensions differ")
    rng = np.random.default_rng(cfg.seed)
    params = cfg.trainer_params()

    population = init_population(cfg, train, validation, rng)
    next_uid = cfg.population_size
    champion = population[0].snapshot()
    history = EvolutionHistory()
    mean_errors = [float(np.mean([ind.validation_error for ind in population]))]

    def spawn(net, learning_rate, carry_state=None):
        nonlocal next_uid
        state = carry_state.copy() if carry_state is not None else \
            TrainerState(learning_rate=learning_rate)
        outcome = partial_train(net, train, validation, cfg.k1, state, params, rng)
        ind = EpnetIndividual(net, state, outcome.error_after, outcome.mark, next_uid)
        next_uid += 1
        return ind

    generation = 0
    while generation < cfg.max_generations:
        w = cfg.stop_window
        if len(mean_errors) > w and mean_errors[-1 - w] - mean_errors[-1] <= cfg.stop_epsilon:
            break
        generation += 1
        attempts = []
        parent = population[rank_select(population, rng)]

        if parent.mark == "success":
            # continued training replaces the parent in place
            child = spawn(parent.network.copy(), parent.trainer_state.learning_rate,
                          carry_state=parent.trainer_state)
            population[population.index(parent)] = child
            attempts.append("train=applied")
        else:
            inserted = False
            pnet = parent.network

            if pnet.hidden_count >= 2:
                count = min(int(rng.integers(1, cfg.max_deleted_nodes + 1)),
                            pnet.hidden_count - 1)
                child = spawn(delete_nodes(pnet, count, rng),
                              parent.trainer_state.learning_rate)
                if _better_than(child, population[-1]):
                    population[-1] = child
                    attempts.append("node_deletion=applied")
                    inserted = True
                else:
                    attempts.append("node_deletion=rejected")
            else:
                attempts.append("node_deletion=skipped")

            if not inserted:
                mutated = None
                if pnet.n_connections >= 2:
                    count = min(int(rng.integers(1, cfg.max_mutated_connections + 1)),
                                pnet.n_connections - 1)
                    mutated = delete_connections(pnet, parent.trainer_state, count, rng)
                if mutated is None:
                    attempts.append("connection_deletion=skipped")
                else:
                    child = spawn(mutated, parent.trainer_state.learning_rate)
                    if _better_than(child, population[-1]):
                        population[-1] = child
                        attempts.append("connection_deletion=applied")
                        inserted = True
                    else:
                        attempts.append("connection_deletion=rejected")

            if not inserted:
                count = int(rng.integers(1, cfg.max_mutated_connections + 1))
                grown = add_connections(pnet, parent.trainer_state, count, rng,
                                        cfg.weight_init_range)
                offspring1 = None if grown is None else \
                    spawn(grown, parent.trainer_state.learning_rate)

                n_new = min(int(rng.integers(1, cfg.max_deleted_nodes + 1)),
                            pnet.n_max - pnet.hidden_count)
                offspring2 = None
                if n_new >= 1:
                    grown = pnet
                    for _ in range(n_new):
                        grown = split_node(grown, rng, cfg.beta_range)
                    offspring2 = spawn(grown.copy() if grown is pnet else grown,
                                       parent.trainer_state.learning_rate)

                if offspring1 is None and offspring2 is None:
                    attempts.append("addition=skipped")
                else:
                    if offspring2 is None or (offspring1 is not None
                                              and _better_than(offspring1, offspring2)):
                        winner, label = offspring1, "connection_addition"
                    else:
                        winner, label = offspring2, "node_addition"
                    population[-1] = winner  # survivor replaces the worst
                    attempts.append(f"{label}=applied")

        population.sort(key=EpnetIndividual.sort_key)
        if population[0].validation_error < champion.validation_error:
            champion = population[0].snapshot()
        mean_errors.append(float(np.mean([ind.validation_error for ind in population])))
        history.append(GenerationRecord(
            generation=generation,
            best_error=champion.validation_error,
            mean_error=mean_errors[-1],
            best_train_error=error_percentage(champion.network, train),
            best_val_error=champion.validation_error,
            best_connections=champion.network.n_connections,
            best_hidden=champion.network.hidden_count,
            mutation=";".join(attempts),
        ))

    # final training of the champion on train + validation
    best = champion.network.copy()
    final_state = champion.trainer_state.copy()
    combined = PatternSet.concatenate(train, validation)
    final_state.reset_stats(best)
    for _ in range(cfg.final_training_epochs):
        train_epoch(best, combined, final_state, params, rng)

    record = RunRecord(
        run_index=0, seed=cfg.seed if cfg.seed is not None else -1,
        train_error=error_percentage(best, train),
        val_error=error_percentage(best, validation),
        test_error=error_percentage(best, test),
        val_accuracy=accuracy(best, validation),
        test_accuracy=accuracy(best, test),
        val_misclassification=misclassification_rate(best, validation),
        test_misclassification=misclassification_rate(best, test),
        connections=best.n_connections,
        hidden_nodes=best.hidden_count,
        generations=len(history),
    )
    return best, history, record
