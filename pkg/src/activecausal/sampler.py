"""Two-phase DAG sampling from a soft-adjacency matrix.

Phase 1 draws a topological ordering by repeatedly sampling a root among the
remaining nodes; phase 2 takes independent Bernoulli edge draws restricted to
edges consistent with that ordering. Every draw is acyclic by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graphs import Dag
from .utils import InvalidArgumentError, check_rng, check_soft_adjacency

DEFAULT_TEMPERATURE = 0.1


@dataclass
class OrderingDraw:
    ordering: np.ndarray
    step_probs: Optional[list] = None  # p_l over the remaining nodes, debug only


class _ChildMax:
    """Running p_child(i) = max of row i over the remaining columns.

    Each row's entries are sorted once, largest first, with a zero sentinel;
    a per-(draw, row) pointer skips removed columns, so a full ordering costs
    O(n^2) per draw instead of recomputing an O(n^2) max at every step.
    """

    def __init__(self, A, size):
        n = A.shape[0]
        cols = np.argsort(-A, axis=1, kind="stable")
        vals = np.take_along_axis(A, cols, axis=1)
        # flattened (row, rank) tables; rank n is the sentinel
        self.cols = np.concatenate([cols, np.full((n, 1), n)], axis=1).ravel()
        self.vals = np.concatenate([vals, np.zeros((n, 1))], axis=1).ravel()
        self.base = (np.arange(n) * (n + 1))[None, :]
        self.ptr = np.zeros((size, n), dtype=np.int64)
        self.alive = np.ones((size, n + 1), dtype=bool)  # last column: sentinel

    def remove(self, rows, picks):
        self.alive[rows, picks] = False

    def values(self):
        while True:
            cur = self.cols[self.base + self.ptr]
            dead = ~np.take_along_axis(self.alive, cur, axis=1)
            if not dead.any():
                return self.vals[self.base + self.ptr]
            self.ptr += dead


def sample_orderings(A, t=DEFAULT_TEMPERATURE, size=1, rng=None, keep_probs=False):
    """Draw ``size`` orderings at once; returns (size, n) int array.

    With ``keep_probs`` also returns the per-step root distributions,
    shape (size, n, n), zero on already-removed nodes.
    """
    A = check_soft_adjacency(A)
    if not t > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {t}")
    rng = check_rng(rng)
    n = A.shape[0]
    remaining = np.ones((size, n), dtype=bool)
    orders = np.empty((size, n), dtype=np.int64)
    probs = np.zeros((size, n, n)) if keep_probs else None
    rows = np.arange(size)
    off = A[~np.eye(n, dtype=bool)]
    if not keep_probs and n > 1 and np.all(off == off[0]):
        # equal entries give equal logits while two or more nodes remain
        return rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)
    child = _ChildMax(A, size)
    for step in range(n):
        # removed columns count as 0, removed rows are out of the draw
        logits = np.where(remaining, (1.0 - child.values()) / t, -np.inf)
        if keep_probs:
            z = np.exp(logits - logits.max(axis=1, keepdims=True))
            probs[:, step] = z / z.sum(axis=1, keepdims=True)
        # Gumbel-max gives an exact categorical draw from softmax(logits)
        pick = np.argmax(logits + rng.gumbel(size=(size, n)), axis=1)
        orders[:, step] = pick
        remaining[rows, pick] = False
        child.remove(rows, pick)
    return (orders, probs) if keep_probs else orders


def ordering_log_prob_grad(A, orders, t=DEFAULT_TEMPERATURE) -> np.ndarray:
    """Gradient of log P(ordering) with respect to ``A``, shape (size, n, n).

    Each root draw is a softmax over ``(1 - max_j A[i, j]) / t``; only the
    entry attaining the max in row ``i`` receives gradient.
    """
    A = check_soft_adjacency(A)
    orders = np.asarray(orders)
    size, n = orders.shape
    rows = np.arange(size)
    remaining = np.ones((size, n), dtype=bool)
    grad = np.zeros((size, n, n))
    for step in range(n - 1):
        masked = A[None, :, :] * remaining[:, None, :]  # (size, n, n)
        arg = masked.argmax(axis=2)
        logits = np.where(remaining, (1.0 - masked.max(axis=2)) / t, -np.inf)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        p = z / z.sum(axis=1, keepdims=True)
        pick = orders[:, step]
        coef = -p
        coef[rows, pick] += 1.0
        coef[~remaining] = 0.0
        # d logit_i / d A[i, arg_i] = -1 / t
        np.add.at(grad, (rows[:, None], np.arange(n)[None, :], arg), -coef / t)
        remaining[rows, pick] = False
    return grad


def sample_ordering(A, t=DEFAULT_TEMPERATURE, rng=None, debug=False) -> OrderingDraw:
    if debug:
        orders, probs = sample_orderings(A, t, 1, rng, keep_probs=True)
        return OrderingDraw(orders[0], [p for p in probs[0]])
    return OrderingDraw(sample_orderings(A, t, 1, rng)[0])


def ordering_masks(orders) -> np.ndarray:
    """(size, n) orderings -> (size, n, n) bool, True where j may cause i."""
    size, n = orders.shape
    pos = np.empty_like(orders)
    pos[np.arange(size)[:, None], orders] = np.arange(n)[None, :]
    return pos[:, None, :] < pos[:, :, None]


def sample_dags_given_orderings(A, orders, rng=None) -> np.ndarray:
    rng = check_rng(rng)
    allowed = ordering_masks(orders)
    draws = rng.random(allowed.shape) < A[None, :, :]
    return (draws & allowed).astype(np.int8)


def sample_dag(A, ordering, rng=None) -> Dag:
    A = check_soft_adjacency(A)
    order = np.asarray(ordering.ordering if isinstance(ordering, OrderingDraw) else ordering)
    n = A.shape[0]
    if sorted(order.tolist()) != list(range(n)):
        raise InvalidArgumentError("ordering must be a permutation of the nodes")
    return Dag(sample_dags_given_orderings(A, order[None, :], rng)[0])


def sample_dags(A, count, t=DEFAULT_TEMPERATURE, rng=None) -> np.ndarray:
    """``count`` independent two-phase draws as a (count, n, n) int8 array."""
    rng = check_rng(rng)
    orders = sample_orderings(A, t, count, rng)
    return sample_dags_given_orderings(A, orders, rng)


def sample_dags_with_orders(A, count, t=DEFAULT_TEMPERATURE, rng=None):
    rng = check_rng(rng)
    orders = sample_orderings(A, t, count, rng)
    return sample_dags_given_orderings(A, orders, rng), orders


def sample_hypothesis_set(sp, count, t=DEFAULT_TEMPERATURE, rng=None) -> list[Dag]:
    """Hypothesis DAGs drawn from structural parameters (or a soft-adjacency)."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    A = sp.soft_adjacency() if hasattr(sp, "soft_adjacency") else np.asarray(sp, dtype=float)
    return [Dag(a) for a in sample_dags(A, count, t, rng)]


def sample_bernoulli_graphs(A, count, rng=None) -> np.ndarray:
    """Independent per-edge draws, not constrained to be acyclic."""
    rng = check_rng(rng)
    A = np.asarray(A, dtype=float)
    return (rng.random((count,) + A.shape) < A[None]).astype(np.int8)
