"""Shared reporting records for the two evolutionary learners."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class GenerationRecord:
    """One generation of an evolution run.

    ``best_*`` fields describe the best network found so far (the champion),
    so the best_error column is non-increasing by construction.  ``mutation``
    is a semicolon-joined attempt trace like ``node_deletion=rejected;
    connection_addition=applied`` (empty for fixed-architecture runs).
    """

    generation: int
    best_error: float
    mean_error: float
    best_train_error: float
    best_val_error: float
    best_connections: int
    best_hidden: int
    mutation: str = ""


@dataclass
class EvolutionHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def best_errors(self):
        return [r.best_error for r in self.records]

    def mean_errors(self):
        return [r.mean_error for r in self.records]


@dataclass
class RunRecord:
    """End-of-run summary for a single seeded run."""

    run_index: int
    seed: int
    train_error: float
    val_error: float
    test_error: float
    val_accuracy: float
    test_accuracy: float
    val_misclassification: float
    test_misclassification: float
    connections: int
    hidden_nodes: int
    generations: int
