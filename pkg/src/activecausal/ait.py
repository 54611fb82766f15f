"""Active intervention targeting: discrepancy between hypothesis graphs.

For each candidate target, hypothetical post-interventional samples are drawn
from the learner's conditionals under every graph of one fixed hypothesis set.
The score is the ratio of between-graph variance of the per-graph sample means
(VBG) to the within-graph variance (VWG), with intervened variables zeroed.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graphs import Dag, topological_order
from .ncm import FunctionalParams, StructuralParams
from .scm import InterventionTarget, leaky_relu, one_hot
from .sampler import DEFAULT_TEMPERATURE, sample_dags_with_orders
from .utils import InvalidArgumentError, check_rng, softmax


@dataclass
class AITConfig:
    graphs_count: int = 100
    samples_per_graph: int = 256
    temperature: float = DEFAULT_TEMPERATURE
    eps_floor: float = 1e-8


@dataclass
class DiscrepancyReport:
    targets: list
    vbg: np.ndarray
    vwg: np.ndarray
    scores: np.ndarray
    hypothesis_id: str = ""
    chosen: Optional[InterventionTarget] = None

    def to_csv_rows(self, round_index: int) -> list[str]:
        return [f"{round_index},{t.label()},{b!r},{w!r},{d!r},{int(t == self.chosen)}"
                for t, b, w, d in zip(self.targets, self.vbg.tolist(),
                                      self.vwg.tolist(), self.scores.tolist())]

    CSV_HEADER = "round,target,VBG,VWG,D,chosen"


def hypothetical_samples(fp: FunctionalParams, graphs, orders, targets: Sequence[InterventionTarget],
                         count: int, rng=None) -> np.ndarray:
    """Ancestral samples under every (target, graph) pair, shape (K, G, count, n).

    ``orders[g]`` must be a topological ordering of ``graphs[g]``; it remains
    valid after the intervention removes incoming edges of target nodes.
    """
    rng = check_rng(rng)
    graphs = np.asarray(graphs)
    orders = np.asarray(orders)
    G, n = orders.shape
    K, m = len(targets), fp.m
    R = K * count
    intervened = np.zeros((K, n), dtype=bool)
    for k, t in enumerate(targets):
        intervened[k, list(t.check(n).nodes)] = True
    # rows of graph g are ordered (target, sample)
    row_intervened = np.repeat(intervened, count, axis=0)  # (R, n)
    X = np.zeros((G, R, n), dtype=np.int64)
    # common random numbers: every graph sees the same uniforms, so graphs
    # that agree produce identical samples and differences come from structure
    # (uniforms are per node, not per ordering position)
    u = rng.random((n, R))
    g_idx = np.arange(G)
    for s in range(n):
        v = orders[:, s]  # node sampled at this position, per graph
        mask = graphs[g_idx, v, :].astype(float)  # (G, n) parent rows
        U = (one_hot(X, m) * mask[:, None, :, None]).reshape(G, R, n * m)
        h = leaky_relu(np.matmul(U, fp.W1[v].transpose(0, 2, 1)) + fp.b1[v][:, None, :])
        probs = softmax(np.matmul(h, fp.W2[v].transpose(0, 2, 1)) + fp.b2[v][:, None, :])
        cdf = np.cumsum(probs, axis=-1)
        us = u[v]  # (G, R)
        drawn = np.minimum((cdf <= us[..., None] * cdf[..., -1:]).sum(axis=-1), m - 1)
        uniform = np.minimum((us * m).astype(np.int64), m - 1)
        forced = row_intervened[:, v].T  # (G, R)
        X[g_idx, :, v] = np.where(forced, uniform, drawn)
    return X.reshape(G, K, count, n).transpose(1, 0, 2, 3)


def post_interventional_samples(fp: FunctionalParams, g: Dag, target: InterventionTarget,
                                count: int, m: Optional[int] = None, rng=None) -> np.ndarray:
    """``count`` samples from graph ``g`` after intervening on ``target``."""
    if m is not None and m != fp.m:
        raise InvalidArgumentError(f"model has {fp.m} categories, got m={m}")
    adj = np.array(g.adj)
    adj[list(target.check(g.n).nodes), :] = 0
    order = np.array(topological_order(adj))
    return hypothetical_samples(fp, adj[None], order[None], [target], count, rng)[0, 0]


def embed(samples, m) -> np.ndarray:
    """Raw indices for binary data, one-hot otherwise (last axis flattened)."""
    if m == 2:
        return samples.astype(float)
    return one_hot(samples, m).reshape(samples.shape[:-1] + (-1,))


def variance_components(samples, target: InterventionTarget, m: int = 2):
    """VBG and VWG for samples of shape (G, S, n) under one target."""
    S = np.array(samples, dtype=np.int64)
    S[..., list(target.nodes)] = 0
    Z = embed(S, m)
    mu = Z.mean(axis=1)  # (G, d)
    # sum_g |mu_g - mean|^2 written via pairwise differences, which is exactly
    # zero when all group means coincide
    diff = mu[:, None, :] - mu[None, :, :]
    vbg = float((diff ** 2).sum() / (2 * len(mu)))
    vwg = float(((Z - mu[:, None, :]) ** 2).sum())
    return vbg, vwg


def discrepancy_from_samples(samples, targets, m=2, eps_floor=1e-8):
    """Scores from pre-drawn samples of shape (K, G, S, n)."""
    vbg = np.empty(len(targets))
    vwg = np.empty(len(targets))
    for k, t in enumerate(targets):
        vbg[k], vwg[k] = variance_components(samples[k], t, m)
    return vbg, vwg, vbg / np.maximum(vwg, eps_floor)


def _hypothesis_id(graphs) -> str:
    return hashlib.sha1(np.ascontiguousarray(graphs, dtype=np.int8).tobytes()).hexdigest()[:12]


def discrepancy_scores(sp, fp: FunctionalParams, candidate_targets: Sequence[InterventionTarget],
                       cfg: AITConfig = None, rng=None) -> DiscrepancyReport:
    """Score every candidate target against one shared hypothesis set."""
    cfg = cfg or AITConfig()
    candidate_targets = list(candidate_targets)
    if not candidate_targets:
        raise InvalidArgumentError("need at least one candidate target")
    if cfg.graphs_count < 2:
        raise InvalidArgumentError("graphs_count must be >= 2 (VBG needs two groups)")
    rng = check_rng(rng)
    A = sp.soft_adjacency() if hasattr(sp, "soft_adjacency") else np.asarray(sp, dtype=float)
    graphs, orders = sample_dags_with_orders(A, cfg.graphs_count, cfg.temperature, rng)
    samples = hypothetical_samples(fp, graphs, orders, candidate_targets, cfg.samples_per_graph, rng)
    vbg, vwg, scores = discrepancy_from_samples(samples, candidate_targets, fp.m, cfg.eps_floor)
    report = DiscrepancyReport(candidate_targets, vbg, vwg, scores, _hypothesis_id(graphs))
    report.chosen = select_target(report, rng)
    return report


def select_target(report: DiscrepancyReport, rng=None) -> InterventionTarget:
    """Argmax of the scores; ties are broken uniformly at random."""
    scores = np.asarray(report.scores)
    if scores.size == 0:
        raise InvalidArgumentError("empty score vector")
    best = np.flatnonzero(scores == scores.max())
    if len(best) == 1:
        return report.targets[int(best[0])]
    rng = check_rng(rng)
    return report.targets[int(rng.choice(best))]


def single_node_targets(n: int, allowed: Optional[Sequence[int]] = None) -> list[InterventionTarget]:
    nodes = range(n) if allowed is None else allowed
    return [InterventionTarget.single(i) for i in nodes]
