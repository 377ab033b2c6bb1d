"""Backpropagation trainer with a bold-driver adaptive learning rate.

Training is per-pattern gradient descent on the half squared error, restricted
to existing connections (the connectivity mask is never violated) and bias
weights.  After each epoch the learning rate is multiplied up if the epoch's
mean error improved and down otherwise, clamped to [lr_min, lr_max].

While training, the state accumulates running mean/variance statistics of the
per-pattern update proposals for *every* feedforward-legal connection --
present ones and absent ("virtual") ones evaluated as if they existed at zero
weight.  Those statistics feed the connection-significance test used to pick
connections for deletion and addition:

    importance(i, j) = |w_ij + mean(delta_ij)| / stddev(delta_ij)

with a +inf sentinel when the deviation is zero but the numerator is not
(a perfectly consistent update direction must never be deleted).

The reported error metric is the size-independent mean squared error
percentage E = 100 * (o_max - o_min) / (T * n) * sum_t sum_i (d_i - y_i)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import BIAS_VALUE, sigmoid


@dataclass
class TrainerParams:
    """Knobs of the adaptive trainer; all four rate constants configurable."""

    learning_rate: float = 0.15   # initial eta
    lr_up: float = 1.05
    lr_down: float = 0.6
    lr_min: float = 1e-4
    lr_max: float = 1.0
    shuffle: bool = False         # presentation order fixed by default
    success_threshold: float = 0.01  # rho: relative reduction that counts
    train_bias: bool = True


@dataclass(eq=False)
class TrainerState:
    """Adaptive learning rate plus per-connection update statistics.

    The statistics live in the compact (active-node) index space of the
    network they were gathered on; ``stats_active`` stamps that layout so a
    stale state cannot be read against a mutated architecture.
    """

    learning_rate: float
    last_epoch_error: float | None = None
    stats_mean: np.ndarray | None = None
    stats_m2: np.ndarray | None = None
    stats_count: int = 0
    stats_active: np.ndarray | None = None

    def copy(self):
        return TrainerState(
            learning_rate=self.learning_rate,
            last_epoch_error=self.last_epoch_error,
            stats_mean=None if self.stats_mean is None else self.stats_mean.copy(),
            stats_m2=None if self.stats_m2 is None else self.stats_m2.copy(),
            stats_count=self.stats_count,
            stats_active=None if self.stats_active is None else self.stats_active.copy(),
        )

    def reset_stats(self, net):
        ta = len(net.active_nodes)
        self.stats_mean = np.zeros((ta, ta))
        self.stats_m2 = np.zeros((ta, ta))
        self.stats_count = 0
        self.stats_active = net.active_nodes.copy()


@dataclass(eq=False)
class TrainOutcome:
    network: object
    epochs_run: int
    error_before: float
    error_after: float
    mark: str  # "success" | "failure"


# -- error metric --------------------------------------------------------------


def error_from_outputs(outputs, patterns):
    """Mean squared error percentage of precomputed outputs."""
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape != patterns.targets.shape:
        raise ValueError(f"outputs shape {outputs.shape} does not match targets "
                         f"{patterns.targets.shape}")
    T, n = patterns.targets.shape
    sse = float(np.sum((patterns.targets - outputs) ** 2))
    return 100.0 * (patterns.o_max - patterns.o_min) / (T * n) * sse


def error_percentage(net, patterns):
    """E of a network's forward outputs over a pattern set."""
    if patterns.n_inputs != net.m or patterns.n_outputs != net.n:
        raise ValueError("pattern dimensions do not match the network")
    return error_from_outputs(net.forward_batch(patterns.inputs), patterns)


# -- compact training workspace --------------------------------------------------


class _Workspace:
    """Dense views of the active sub-network, for the per-pattern hot loop."""

    def __init__(self, net):
        self.net = net
        act = net.active_nodes
        self.act = act
        self.m = net.m
        self.ta = len(act)
        self.W = net.weights[np.ix_(act, act)].astype(float)
        self.C = net.connectivity[np.ix_(act, act)].astype(float)
        self.bias = net.bias_weights[net.active_bias_slots()].astype(float)
        legal = np.tril(np.ones((self.ta, self.ta), dtype=bool), k=-1)
        legal[: self.m, :] = False
        self.legal = legal.astype(float)

    def write_back(self):
        self.net.weights[np.ix_(self.act, self.act)] = self.W
        self.net.bias_weights[self.net.active_bias_slots()] = self.bias

    def forward(self, x):
        v = np.zeros(self.ta)
        v[: self.m] = x
        for i in range(self.m, self.ta):
            v[i] = sigmoid(self.W[i] @ v + self.bias[i - self.m] * BIAS_VALUE)
        return v

    def gradients(self, x, target):
        """Per-pattern loss 0.5*||y-d||^2 and its gradient w.r.t. every
        legal connection weight (via the proposal outer product) and bias."""
        v = self.forward(x)
        direct = np.zeros(self.ta)
        n_out = len(target)
        direct[self.ta - n_out :] = v[self.ta - n_out :] - target
        dlt = np.zeros(self.ta)
        for i in range(self.ta - 1, self.m - 1, -1):
            gx = direct[i] + self.W[i + 1 :, i] @ dlt[i + 1 :]
            dlt[i] = gx * v[i] * (1.0 - v[i])
        grad_full = np.outer(dlt, v) * self.legal
        loss = 0.5 * float(np.sum(direct[self.ta - n_out :] ** 2))
        return grad_full, dlt, loss

    def epoch(self, patterns, state, params, rng=None):
        """One pass of per-pattern updates; adapts the rate afterwards."""
        order = np.arange(patterns.size)
        if params.shuffle:
            if rng is None:
                raise ValueError("shuffle requested without an rng")
            order = rng.permutation(patterns.size)
        eta = state.learning_rate
        total_loss = 0.0
        mean, m2 = state.stats_mean, state.stats_m2
        for t in order:
            grad_full, dlt, loss = self.gradients(patterns.inputs[t], patterns.targets[t])
            total_loss += loss
            self.W -= eta * grad_full * self.C
            if params.train_bias:
                self.bias -= eta * dlt[self.m :] * BIAS_VALUE
            # Welford update of the proposal statistics, delta = -eta * grad
            proposal = -eta * grad_full
            state.stats_count += 1
            d1 = proposal - mean
            mean += d1 / state.stats_count
            m2 += d1 * (proposal - mean)
        epoch_error = total_loss / patterns.size
        if state.last_epoch_error is not None:
            if epoch_error < state.last_epoch_error:
                state.learning_rate = min(eta * params.lr_up, params.lr_max)
            else:
                state.learning_rate = max(eta * params.lr_down, params.lr_min)
        state.last_epoch_error = epoch_error
        return epoch_error


def _check_stats(state, net):
    if state.stats_count < 1 or state.stats_active is None:
        raise ValueError("update statistics absent; train at least one epoch first")
    if (len(state.stats_active) != len(net.active_nodes)
            or np.any(state.stats_active != net.active_nodes)):
        raise ValueError("update statistics are stale for this architecture")


# -- public operations ----------------------------------------------------------


def pattern_gradient(net, x, target):
    """Loss and gradients for a single pattern, in full matrix coordinates.

    Returns (grad_weights, grad_bias, loss) where grad_weights covers every
    feedforward-legal pair (present or virtual) and grad_bias every active
    non-input node; entries elsewhere are zero.
    """
    ws = _Workspace(net)
    grad_full, dlt, loss = ws.gradients(np.asarray(x, float), np.asarray(target, float))
    gw = np.zeros_like(net.weights)
    gw[np.ix_(ws.act, ws.act)] = grad_full
    gb = np.zeros_like(net.bias_weights)
    gb[net.active_bias_slots()] = dlt[ws.m :] * BIAS_VALUE
    return gw, gb, loss


def train_epoch(net, patterns, state, params, rng=None):
    """One in-place training epoch; returns the epoch's mean pattern loss.

    Statistics accumulate into ``state``; call ``state.reset_stats(net)``
    first when starting a fresh training episode.
    """
    if patterns.n_inputs != net.m or patterns.n_outputs != net.n:
        raise ValueError("pattern dimensions do not match the network")
    if state.stats_mean is None or state.stats_active is None \
            or len(state.stats_active) != len(net.active_nodes) \
            or np.any(state.stats_active != net.active_nodes):
        state.reset_stats(net)
    ws = _Workspace(net)
    err = ws.epoch(patterns, state, params, rng)
    ws.write_back()
    return err


def partial_train(net, train, validation, epochs, state, params, rng=None):
    """Train ``net`` in place for a fixed number of epochs and mark it.

    The mark is "success" iff the validation error percentage dropped by more
    than the relative threshold: after < (1 - rho) * before.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if validation is None:
        raise ValueError("a validation set is required")
    error_before = error_percentage(net, validation)
    state.reset_stats(net)
    ws = _Workspace(net)
    for _ in range(epochs):
        ws.epoch(train, state, params, rng)
    ws.write_back()
    error_after = error_percentage(net, validation)
    success = error_after < (1.0 - params.success_threshold) * error_before
    return TrainOutcome(network=net, epochs_run=epochs, error_before=error_before,
                        error_after=error_after, mark="success" if success else "failure")


def connection_significance(state, net, include_virtual=False):
    """Importance of present connections (or absent legal ones) as a full
    matrix; entries outside the requested set are NaN."""
    _check_stats(state, net)
    act = net.active_nodes
    W = net.weights[np.ix_(act, act)]
    C = net.connectivity[np.ix_(act, act)].astype(bool)
    ta = len(act)
    legal = np.tril(np.ones((ta, ta), dtype=bool), k=-1)
    legal[: net.m, :] = False
    numer = np.abs(W + state.stats_mean)
    std = np.sqrt(state.stats_m2 / state.stats_count)
    with np.errstate(divide="ignore", invalid="ignore"):
        imp = numer / std
    imp[(std == 0) & (numer > 0)] = np.inf
    imp[(std == 0) & (numer == 0)] = 0.0
    mask = (legal & ~C) if include_virtual else C
    out = np.full_like(net.weights, np.nan, dtype=float)
    sub = np.full((ta, ta), np.nan)
    sub[mask] = imp[mask]
    out[np.ix_(act, act)] = sub
    return out
