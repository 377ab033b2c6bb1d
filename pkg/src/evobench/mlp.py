"""Generalized feedforward multilayer perceptrons with a direct encoding.

Nodes are globally indexed: inputs first (0 .. m-1), then a fixed block of
hidden slots (m .. m+n_max-1), then outputs.  A node may receive a connection
from *any* lower-indexed node, so the connectivity and weight matrices are
strictly lower triangular -- this is the "generalized" MLP, not a layered one.
Two equal-size matrices plus a bias vector describe a network completely:
``connectivity[i, j] = 1`` means node i receives from node j, and
``weights[i, j]`` is meaningful only where a connection exists.

Active hidden nodes always occupy the first ``hidden_count`` hidden slots
(structural mutations re-compact the block), so a network is fully described
by its header counts plus the matrices; inactive slots are all-zero.

Every non-input node additionally receives a trainable bias weight from a
constant source with value ``BIAS_VALUE``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

BIAS_VALUE = 1.0


def sigmoid(z):
    """Logistic function 1 / (1 + exp(-z)); accepts scalars or arrays."""
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class BiasInit:
    """How bias weights are initialized: a constant, or uniform in [lo, hi]."""

    kind: str = "constant"  # "constant" | "uniform"
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0

    @staticmethod
    def constant(value):
        return BiasInit(kind="constant", value=float(value))

    @staticmethod
    def uniform(lo, hi):
        return BiasInit(kind="uniform", lo=float(lo), hi=float(hi))

    def sample(self, size, rng):
        if self.kind == "constant":
            return np.full(size, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size=size)
        raise ValueError(f"unknown bias init kind: {self.kind!r}")


@dataclass(eq=False)
class Network:
    """Direct-encoded generalized feedforward net.

    Attributes
    ----------
    m, n : input / output node counts.
    n_max : hidden slot count (matrix headroom for node addition).
    hidden_count : number of active hidden nodes; they occupy slots
        m .. m+hidden_count-1.
    connectivity : (total, total) 0/1 matrix, receiver-major.
    weights : (total, total) real matrix, zero wherever connectivity is zero.
    bias_weights : (n_max + n,) bias weight per non-input slot.
    """

    m: int
    n: int
    n_max: int
    hidden_count: int
    connectivity: np.ndarray
    weights: np.ndarray
    bias_weights: np.ndarray

    # -- structure helpers ---------------------------------------------------

    @property
    def total(self):
        return self.m + self.n_max + self.n

    @property
    def hidden_active(self):
        """Global indices of active hidden nodes (always the leading slots)."""
        return list(range(self.m, self.m + self.hidden_count))

    @property
    def output_indices(self):
        return list(range(self.m + self.n_max, self.total))

    @property
    def active_nodes(self):
        """All active global indices in evaluation order."""
        return np.r_[0 : self.m + self.hidden_count,
                     self.m + self.n_max : self.total]

    @property
    def n_connections(self):
        return int(self.connectivity.sum())

    def active_bias_slots(self):
        """Indices into bias_weights for active non-input nodes, in order."""
        return np.r_[0 : self.hidden_count, self.n_max : self.n_max + self.n]

    def legal_mask(self):
        """Boolean matrix of feedforward-legal pairs among active nodes.

        legal[i, j] is True when node i may receive from node j: i is an
        active non-input node, j is an active node, and j < i.
        """
        total = self.total
        act = np.zeros(total, dtype=bool)
        act[self.active_nodes] = True
        legal = np.tril(np.ones((total, total), dtype=bool), k=-1)
        legal &= act[:, None] & act[None, :]
        legal[: self.m, :] = False
        return legal

    def copy(self):
        return Network(self.m, self.n, self.n_max, self.hidden_count,
                       self.connectivity.copy(), self.weights.copy(),
                       self.bias_weights.copy())

    def validate(self):
        """Raise ValueError if any structural invariant is broken."""
        total = self.total
        if self.connectivity.shape != (total, total):
            raise ValueError("connectivity shape mismatch")
        if self.weights.shape != (total, total):
            raise ValueError("weights shape mismatch")
        if self.bias_weights.shape != (self.n_max + self.n,):
            raise ValueError("bias vector shape mismatch")
        if not 1 <= self.hidden_count <= self.n_max:
            raise ValueError(f"hidden_count {self.hidden_count} outside [1, {self.n_max}]")
        legal = self.legal_mask()
        if np.any(self.connectivity.astype(bool) & ~legal):
            raise ValueError("connection outside the feedforward-legal set")
        if np.any((self.connectivity == 0) & (self.weights != 0.0)):
            raise ValueError("nonzero weight without a connection")
        inactive = np.setdiff1d(np.arange(total), self.active_nodes)
        if np.any(self.connectivity[inactive, :]) or np.any(self.connectivity[:, inactive]):
            raise ValueError("inactive node has connections")
        if np.any(self.bias_weights[np.setdiff1d(np.arange(self.n_max + self.n),
                                                 self.active_bias_slots())]):
            raise ValueError("inactive node has a bias weight")

    # -- evaluation ----------------------------------------------------------

    def forward(self, x):
        """Evaluate one input vector; returns the n output activations."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise ValueError(f"input length {x.shape} does not match m={self.m}")
        values, _ = self._propagate(x)
        return values[self.m + self.n_max :].copy()

    def forward_trace(self, x):
        """Evaluate one input and return the full ActivationTrace."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise ValueError(f"input length {x.shape} does not match m={self.m}")
        values, nets = self._propagate(x)
        act = self.active_nodes
        non_input = act[self.m :]
        return ActivationTrace(node_values=values[act].copy(),
                               net_values=nets[non_input].copy())

    def _propagate(self, x):
        values = np.zeros(self.total)
        nets = np.zeros(self.total)
        values[: self.m] = x
        bias = self.bias_weights
        for i in self.active_nodes[self.m :]:
            net = self.weights[i] @ values + bias[i - self.m] * BIAS_VALUE
            nets[i] = net
            values[i] = sigmoid(net)
        return values, nets

    def forward_batch(self, X):
        """Evaluate a (T, m) batch of inputs; returns (T, n) outputs."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.m:
            raise ValueError(f"batch shape {X.shape} does not match m={self.m}")
        values = np.zeros((X.shape[0], self.total))
        values[:, : self.m] = X
        bias = self.bias_weights
        for i in self.active_nodes[self.m :]:
            values[:, i] = sigmoid(values @ self.weights[i] + bias[i - self.m] * BIAS_VALUE)
        return values[:, self.m + self.n_max :].copy()


@dataclass(eq=False)
class ActivationTrace:
    """Node activations (inputs, active hidden, outputs) and pre-activation
    sums for the non-input nodes, in global index order."""

    node_values: np.ndarray
    net_values: np.ndarray


def random_network(m, n, n_max, hidden_range, density, weight_range, bias_init, rng):
    """Sample a random network.

    Hidden count is uniform over the inclusive ``hidden_range``; every
    feedforward-legal connection among active nodes is present independently
    with probability ``density``; present weights are uniform in
    ``weight_range``; active bias weights follow ``bias_init``.
    """
    lo, hi = hidden_range
    if not (1 <= lo <= hi <= n_max):
        raise ValueError(f"hidden_range {hidden_range} infeasible for n_max={n_max}")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density {density} outside [0, 1]")
    w_lo, w_hi = weight_range
    if w_lo > w_hi:
        raise ValueError(f"empty weight range {weight_range}")

    hidden_count = int(rng.integers(lo, hi + 1))
    total = m + n_max + n
    net = Network(m, n, n_max, hidden_count,
                  np.zeros((total, total), dtype=np.uint8),
                  np.zeros((total, total)),
                  np.zeros(n_max + n))
    legal = net.legal_mask()
    present = legal & (rng.random((total, total)) < density)
    net.connectivity[present] = 1
    net.weights[present] = rng.uniform(w_lo, w_hi, size=int(present.sum()))
    slots = net.active_bias_slots()
    net.bias_weights[slots] = bias_init.sample(len(slots), rng)
    return net


# -- genome bridge -----------------------------------------------------------


def flatten(net):
    """Flatten weights of present connections plus active bias weights.

    Ordering is row-major over the connectivity matrix (receiver index
    ascending, then sender index ascending) followed by the bias weights of
    the active non-input nodes in slot order.  The ordering is stable for a
    fixed architecture, which is what makes the genome round-trip exact.
    """
    mask = net.connectivity.astype(bool)
    return np.concatenate([net.weights[mask], net.bias_weights[net.active_bias_slots()]])


def genome_length(net):
    return net.n_connections + net.hidden_count + net.n


def unflatten(template, genome):
    """Rebuild a network from ``template``'s architecture and a flat genome."""
    genome = np.asarray(genome, dtype=float)
    expect = genome_length(template)
    if genome.shape != (expect,):
        raise ValueError(f"genome length {genome.shape} does not match {expect}")
    net = template.copy()
    mask = net.connectivity.astype(bool)
    k = net.n_connections
    net.weights[:] = 0.0
    net.weights[mask] = genome[:k]
    net.bias_weights[:] = 0.0
    net.bias_weights[net.active_bias_slots()] = genome[k:]
    return net


# -- plain-text dump ---------------------------------------------------------


def save_network(net, path):
    """Write the dump format: header ``m n n_max N``, connectivity rows,
    weight rows, then the bias vector, space separated."""
    with open(path, "w") as fh:
        fh.write(dumps_network(net))


def dumps_network(net):
    out = io.StringIO()
    out.write(f"{net.m} {net.n} {net.n_max} {net.hidden_count}\n")
    for row in net.connectivity:
        out.write(" ".join(str(int(v)) for v in row) + "\n")
    for row in net.weights:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")
    out.write(" ".join(repr(float(v)) for v in net.bias_weights) + "\n")
    return out.getvalue()


def load_network(path):
    with open(path) as fh:
        return loads_network(fh.read())


def loads_network(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    m, n, n_max, hidden_count = (int(v) for v in lines[0].split())
    total = m + n_max + n
    if len(lines) != 1 + 2 * total + 1:
        raise ValueError(f"expected {1 + 2 * total + 1} lines, got {len(lines)}")
    conn = np.array([[int(v) for v in ln.split()] for ln in lines[1 : 1 + total]],
                    dtype=np.uint8)
    weights = np.array([[float(v) for v in ln.split()]
                        for ln in lines[1 + total : 1 + 2 * total]])
    bias = np.array([float(v) for v in lines[1 + 2 * total].split()])
    net = Network(m, n, n_max, hidden_count, conn, weights, bias)
    net.validate()
    return net
