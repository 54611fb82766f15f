"""Alternating functional/structural training with pluggable target acquisition."""
from __future__ import annotations

import copy
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .ait import AITConfig, DiscrepancyReport, discrepancy_scores, single_node_targets
from .graphs import Dag, shd
from .ncm import (Adam, FunctionalParams, NeuralCausalModel, StructuralParams,
                  load_checkpoint, node_log_probs, nll_and_grad, save_checkpoint)
from .sampler import (ordering_log_prob_grad, ordering_masks, sample_bernoulli_graphs, sample_dags,
                      sample_dags_with_orders)
from .scm import Environment, InterventionTarget, SampleBatch
from .utils import InvalidArgumentError, check_rng, sigmoid

logger = logging.getLogger(__name__)

FIT_BLOCK = 50
STRATEGIES = ("random", "ait", "round_robin", "fixed_sequence")


@dataclass
class TrainConfig:
    functional_iters: int = 2000
    batch_size: int = 256
    sparsity_coeff: float = 0.1
    dag_coeff: float = 0.5
    interventions_per_phase2: int = 25
    scoring_batches: int = 10
    scoring_graphs: int = 10
    ait: AITConfig = field(default_factory=lambda: AITConfig(graphs_count=50, samples_per_graph=128))
    structural_lr: float = 5e-2
    functional_lr: float = 1e-3
    hidden: int = 32
    # ordering temperature for graphs drawn in training; AIT keeps its own (0.1)
    temperature: float = 0.3
    threshold: float = 0.5
    # stop once the thresholded graph is unchanged for this many rounds and
    # every off-diagonal belief is at least `confidence` away from 0.5
    patience: int = 50
    confidence: float = 0.4
    graph_sampler: str = "dag"
    freeze_intervened_rows: bool = True
    # "node": edges into i are credited by node i's likelihood; "graph": one
    # softmax over whole-graph scores
    credit: str = "graph"
    # graphs are softmax-weighted on chunks of this many interventional
    # samples and the weights averaged over chunks; >= batch_size gives one
    # whole-batch softmax
    score_chunk: int = 64
    # share of functional-fit masks drawn from an uninformed belief (0.5 per
    # edge) instead of gamma, so conditionals the belief disfavours stay fitted
    fit_explore: float = 0.5

    def __post_init__(self):
        if isinstance(self.ait, dict):
            self.ait = AITConfig(**self.ait)
        for name in ("batch_size", "interventions_per_phase2", "scoring_batches", "scoring_graphs",
                     "hidden", "patience", "score_chunk"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.functional_iters < 0:
            raise InvalidArgumentError("functional_iters must be >= 0")
        if not 0.0 <= self.fit_explore <= 1.0:
            raise InvalidArgumentError(f"fit_explore must be in [0, 1], got {self.fit_explore}")
        if self.sparsity_coeff < 0 or self.dag_coeff < 0:
            raise InvalidArgumentError("regularizer coefficients must be >= 0")
        if self.credit not in ("node", "graph"):
            raise InvalidArgumentError(f"unknown credit assignment {self.credit!r}")
        if self.graph_sampler not in ("dag", "bernoulli"):
            raise InvalidArgumentError(f"unknown graph sampler {self.graph_sampler!r}")

    @classmethod
    def full_scale(cls, n: int, **overrides) -> "TrainConfig":
        """Full counts: 10k functional iterations, 100 x 256 AIT samples."""
        scoring_graphs = 10 if n <= 5 else 20 if n <= 10 else 40
        base = dict(functional_iters=10000, scoring_graphs=scoring_graphs,
                    ait=AITConfig(graphs_count=100, samples_per_graph=256))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AcquisitionStrategy:
    variant: str = "ait"
    allowed_targets: Optional[Sequence[int]] = None
    sequence: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.variant not in STRATEGIES:
            raise InvalidArgumentError(f"unknown strategy {self.variant!r}; choose from {STRATEGIES}")
        if self.allowed_targets is not None:
            self.allowed_targets = sorted(set(int(i) for i in self.allowed_targets))
            if not self.allowed_targets:
                raise InvalidArgumentError("allowed_targets must be non-empty")
        if self.variant == "fixed_sequence" and not self.sequence:
            raise InvalidArgumentError("fixed_sequence strategy needs a sequence")

    def targets(self, n: int) -> list[InterventionTarget]:
        allowed = list(range(n)) if self.allowed_targets is None else self.allowed_targets
        if max(allowed) >= n or min(allowed) < 0:
            raise InvalidArgumentError(f"allowed targets {allowed} invalid for n={n}")
        if self.sequence is not None:
            bad = [i for i in self.sequence if i not in allowed]
            if bad:
                raise InvalidArgumentError(f"sequence uses disallowed targets {bad}")
        return single_node_targets(n, allowed)

    def choose(self, model: NeuralCausalModel, round_index: int, cfg: TrainConfig, rng):
        candidates = self.targets(model.n)
        if self.variant == "random":
            return candidates[int(rng.integers(len(candidates)))], None
        if self.variant == "round_robin":
            return candidates[round_index % len(candidates)], None
        if self.variant == "fixed_sequence":
            return InterventionTarget.single(self.sequence[round_index % len(self.sequence)]), None
        report = discrepancy_scores(model.structural, model.functional, candidates, cfg.ait, rng)
        return report.chosen, report


@dataclass
class RoundRecord:
    round: int
    phase: int
    target: str
    shd: int
    samples_used: int
    soft_adjacency: np.ndarray
    scores: Optional[np.ndarray] = None


class RunHistory:
    """Per-round record of a discovery run."""

    CSV_HEADER = "round,phase,target,shd,samples_used"

    def __init__(self, n: int):
        self.n = n
        self.records: list[RoundRecord] = []
        self.reports: list[DiscrepancyReport] = []
        self.stopped_reason = ""
        self.error: Optional[str] = None

    def __len__(self):
        return len(self.records)

    def append(self, rec: RoundRecord, report: Optional[DiscrepancyReport] = None):
        if rec.soft_adjacency.shape != (self.n, self.n):
            raise InvalidArgumentError("snapshot shape mismatch")
        if self.records and rec.samples_used < self.records[-1].samples_used:
            raise InvalidArgumentError("sample counter must be monotone")
        self.records.append(rec)
        if report is not None:
            self.reports.append((rec.round, report))

    @property
    def shd_curve(self) -> list[int]:
        return [r.shd for r in self.records]

    @property
    def final_shd(self) -> Optional[int]:
        return self.records[-1].shd if self.records else None

    def rounds_to_zero(self) -> Optional[int]:
        """1-based count of rounds until SHD first hits 0, or None."""
        for r in self.records:
            if r.shd == 0:
                return r.round + 1
        return None

    def selection_counts(self) -> np.ndarray:
        counts = np.zeros(self.n, dtype=int)
        for r in self.records:
            for v in InterventionTarget.parse(r.target).nodes:
                counts[v] += 1
        return counts

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        lines += [f"{r.round},{r.phase},{r.target},{r.shd},{r.samples_used}" for r in self.records]
        return "\n".join(lines) + "\n"

    def adjacency_csv(self) -> str:
        n = self.n
        cols = [f"a{i}_{j}" for i in range(n) for j in range(n) if i != j]
        lines = ["round," + ",".join(cols)]
        off = ~np.eye(n, dtype=bool)
        for r in self.records:
            lines.append(f"{r.round}," + ",".join(f"{v:.6f}" for v in r.soft_adjacency[off]))
        return "\n".join(lines) + "\n"

    def scores_csv(self) -> str:
        lines = [DiscrepancyReport.CSV_HEADER]
        for rnd, rep in self.reports:
            lines += rep.to_csv_rows(rnd)
        return "\n".join(lines) + "\n"

    def state(self) -> dict:
        return {"n": self.n, "stopped_reason": self.stopped_reason, "records": [
            {**{k: v for k, v in r.__dict__.items() if k not in ("soft_adjacency", "scores")},
             "soft_adjacency": r.soft_adjacency.tolist(),
             "scores": None if r.scores is None else r.scores.tolist()} for r in self.records]}

    @classmethod
    def from_state(cls, state: dict) -> "RunHistory":
        h = cls(state["n"])
        h.stopped_reason = state["stopped_reason"]
        for r in state["records"]:
            h.records.append(RoundRecord(r["round"], r["phase"], r["target"], r["shd"], r["samples_used"],
                                         np.array(r["soft_adjacency"]),
                                         None if r["scores"] is None else np.array(r["scores"])))
        return h


class RunError(RuntimeError):
    def __init__(self, message, history: RunHistory):
        super().__init__(message)
        self.history = history


# -- graph sampling for training ------------------------------------------------


def draw_graphs(sp: StructuralParams, count: int, cfg: TrainConfig, rng) -> np.ndarray:
    A = sp.soft_adjacency()
    if cfg.graph_sampler == "bernoulli":
        return sample_bernoulli_graphs(A, count, rng)
    return sample_dags(A, count, cfg.temperature, rng)


@dataclass
class GraphDraws:
    """Hypothesis graphs with what the score-function estimator needs.

    ``support[g, i, j]`` is True where edge (i, j) was Bernoulli-drawn in graph
    g; an edge against the sampled ordering is absent by construction and
    carries no evidence. ``order_grad`` is d log P(ordering_g) / d A, or None
    for independent edge draws.
    """

    graphs: np.ndarray
    support: np.ndarray
    order_grad: Optional[np.ndarray] = None


def draw_graphs_for_scoring(sp: StructuralParams, count: int, cfg: TrainConfig, rng) -> GraphDraws:
    A = sp.soft_adjacency()
    n = A.shape[0]
    if cfg.graph_sampler == "bernoulli":
        graphs = sample_bernoulli_graphs(A, count, rng)
        return GraphDraws(graphs, np.broadcast_to(~np.eye(n, dtype=bool), graphs.shape))
    graphs, orders = sample_dags_with_orders(A, count, cfg.temperature, rng)
    return GraphDraws(graphs, ordering_masks(orders), ordering_log_prob_grad(A, orders, cfg.temperature))


# -- functional phase -----------------------------------------------------------


def functional_fit(model: NeuralCausalModel, data, cfg: TrainConfig, rng=None,
                   iters: Optional[int] = None) -> NeuralCausalModel:
    """Fit the conditionals on observational data with gamma frozen.

    ``data`` is an ``Environment`` (fresh batches each step) or a fixed
    observational matrix that is sampled from with replacement.
    """
    rng = check_rng(rng)
    iters = cfg.functional_iters if iters is None else iters
    fp = model.functional
    params = fp.arrays()
    B = cfg.batch_size
    if not isinstance(data, Environment):
        data_arr = data.values if isinstance(data, SampleBatch) else np.asarray(data)
    done = 0
    while done < iters:
        # data and hypothesis graphs are drawn for a block of steps at once
        steps = min(FIT_BLOCK, iters - done)
        if isinstance(data, Environment):
            X_block = data.observe(B * steps).values
        else:
            X_block = data_arr[rng.integers(0, len(data_arr), size=B * steps)]
        n_explore = int(round(cfg.fit_explore * B * steps))
        graph_block = draw_graphs(model.structural, B * steps - n_explore, cfg, rng)
        if n_explore:
            flat = draw_graphs(StructuralParams.zeros(fp.n), n_explore, cfg, rng)
            graph_block = np.concatenate([graph_block, flat])[rng.permutation(B * steps)]
        for k in range(steps):
            sl = slice(k * B, (k + 1) * B)
            bundle = nll_and_grad(fp, X_block[sl], graph_block[sl])
            if not np.isfinite(bundle.loss):
                raise FloatingPointError("non-finite functional loss")
            model.optimizer.step(params, bundle.arrays())
        done += steps
    return model


def heldout_nll(fp: FunctionalParams, X, adjacency) -> float:
    """Mean per-node NLL of ``X`` with parents fixed by ``adjacency``."""
    return float(-node_log_probs(fp, X, np.asarray(adjacency)).mean())


# -- structural phase -----------------------------------------------------------


def structural_score(fp: FunctionalParams, batch: SampleBatch, graphs, per_node: bool = False,
                     per_sample: bool = False) -> np.ndarray:
    """Log-likelihood of an interventional batch under each graph, summed over
    non-intervened nodes only.

    Returns shape (G,). ``per_node`` keeps the node terms apart, (G, n), with
    the columns of intervened nodes zero; ``per_sample`` keeps the samples
    apart as a leading axis, (B, G) or (B, G, n).
    """
    if batch.regime is None:
        raise InvalidArgumentError("structural scoring needs an interventional batch")
    graphs = np.asarray([g.adj if hasattr(g, "adj") else g for g in graphs]) \
        if not isinstance(graphs, np.ndarray) else graphs
    X = batch.values
    G, B, n = len(graphs), len(X), X.shape[1]
    keep = np.ones(n, dtype=bool)
    keep[list(batch.regime.nodes)] = False
    rows = np.repeat(X, G, axis=0)  # row r -> sample r // G, graph r % G
    masks = np.tile(graphs, (B, 1, 1))
    logp = node_log_probs(fp, rows, masks)  # (B*G, n)
    logp[:, ~keep] = 0.0
    out = logp.reshape(B, G, n)
    if not per_sample:
        out = out.sum(axis=0)
    return out if per_node else out.sum(axis=-1)


def chunk_scores(per_sample_scores, chunk: int) -> np.ndarray:
    """Sum per-sample scores (B, G[, n]) over consecutive chunks of samples."""
    S = np.asarray(per_sample_scores)
    B = len(S)
    starts = np.arange(0, B, max(1, min(chunk, B)))
    return np.add.reduceat(S, starts, axis=0)


def dag_penalty(gamma) -> float:
    """tr(exp(sigmoid(gamma))) - n with the diagonal excluded."""
    A = sigmoid(gamma)
    np.fill_diagonal(A, 0.0)
    return float(np.trace(expm(A)) - A.shape[0])


def dag_penalty_grad(gamma) -> np.ndarray:
    s = sigmoid(gamma)
    A = s.copy()
    np.fill_diagonal(A, 0.0)
    g = expm(A).T * s * (1.0 - s)
    np.fill_diagonal(g, 0.0)
    return g


def sparsity_penalty(gamma) -> float:
    A = sigmoid(gamma)
    np.fill_diagonal(A, 0.0)
    return float(A.sum())


def _score_weights(scores, n, per_sample=False):
    """Softmax weights over graphs as a (G, n) array.

    ``scores`` is (G,) for one shared set or (G, n) for one set per node.
    With ``per_sample`` a leading sample axis is softmaxed per sample and the
    weights are averaged over samples.
    """
    axis = 1 if per_sample else 0
    w = np.exp(scores - scores.max(axis=axis, keepdims=True))
    w = w / w.sum(axis=axis, keepdims=True)
    if per_sample:
        w = w.mean(axis=0)
    return w[:, None] * np.ones(n) if w.ndim == 1 else w


def structural_update(sp: StructuralParams, graphs, scores, cfg: TrainConfig,
                      frozen_rows: Sequence[int] = (), support=None, order_grad=None,
                      per_sample: bool = False) -> StructuralParams:
    """Score-function step on gamma with softmax-normalized graph scores plus
    sparsity and acyclicity penalties. Rows in ``frozen_rows`` are left as is.

    ``scores`` of shape (G,) weight every edge by the same softmax over graphs.
    Shape (G, n) gives node-wise credit: edges into node i are weighted by a
    softmax over node i's own scores, since only that term depends on them.

    ``support`` (G, n, n) marks which edges of each graph were sampled at all;
    graph g contributes to edge (i, j) only where it is True. Default: every
    off-diagonal edge, which is the plain per-edge Bernoulli estimator.
    ``order_grad`` (G, n, n) adds the ordering's score-function term, so that
    graphs from competing orderings are compared too.

    With ``per_sample`` the scores carry a leading axis of samples (or chunks
    of samples, see ``chunk_scores``), each with its own softmax over graphs;
    the weights are then averaged. A whole-batch softmax saturates, so a graph
    that wins by one nat moves gamma as far as one that wins by fifty; smaller
    chunks make the step grow with the evidence.
    """
    graphs = np.asarray([g.adj if hasattr(g, "adj") else g for g in graphs], dtype=float) \
        if not isinstance(graphs, np.ndarray) else graphs.astype(float)
    scores = np.asarray(scores, dtype=float)
    core = scores[0] if per_sample and scores.ndim >= 2 else scores
    if per_sample and scores.ndim < 2:
        raise InvalidArgumentError("per-sample scores need a leading sample axis")
    if len(graphs) != len(core) or len(core) < 2:
        raise InvalidArgumentError("need matching graphs and scores, at least two")
    if core.ndim not in (1, 2) or (core.ndim == 2 and core.shape[1] != graphs.shape[1]):
        raise InvalidArgumentError(f"scores must be (G,) or (G, n), got {core.shape}")
    graph_axis = 1 if per_sample else 0
    if np.any(np.isnan(scores)) or np.any(scores == np.inf) or \
            np.any(np.all(scores == -np.inf, axis=graph_axis)):
        raise FloatingPointError("degenerate graph scores")
    w = _score_weights(scores, graphs.shape[1], per_sample)  # (G, n)
    gamma = sp.gamma
    s = sigmoid(gamma)
    if support is None:
        grad = s - np.einsum("gi,gij->ij", w, graphs)
    else:
        support = np.asarray(support, dtype=float)
        if support.shape != graphs.shape:
            raise InvalidArgumentError("support must match the graphs' shape")
        grad = np.einsum("gi,gij->ij", w, support * (s[None] - graphs))
    if order_grad is not None:
        grad -= np.einsum("gi,gij->ij", w, np.asarray(order_grad)) * s * (1.0 - s)
    grad += cfg.sparsity_coeff * s * (1.0 - s)
    if cfg.dag_coeff:
        grad += cfg.dag_coeff * dag_penalty_grad(gamma)
    np.fill_diagonal(grad, 0.0)
    if len(frozen_rows):
        grad[list(frozen_rows), :] = 0.0
    sp.gamma = gamma - cfg.structural_lr * grad
    return sp


def threshold_graph(A, threshold=0.5) -> np.ndarray:
    out = (np.asarray(A) > threshold).astype(np.int8)
    np.fill_diagonal(out, 0)
    return out


def graph_shd(adj, truth: Dag) -> int:
    return shd(np.asarray(adj), truth.adj)


# -- driver -------------------------------------------------------------------------


@dataclass
class RunState:
    """Everything needed to continue a run bit-exactly."""

    model: NeuralCausalModel
    history: RunHistory
    rng: np.random.Generator
    phase: int = 0
    stable_rounds: int = 0
    last_graph: Optional[np.ndarray] = None


def _confident(A, cfg):
    off = ~np.eye(A.shape[0], dtype=bool)
    return bool(np.all(np.abs(A[off] - 0.5) >= cfg.confidence))


def run_discovery(env: Environment, strategy: AcquisitionStrategy, budget: int,
                  cfg: TrainConfig = None, rng=None, state: Optional[RunState] = None,
                  checkpoint_path=None, truth: Optional[Dag] = None) -> RunState:
    """Alternate functional fitting and intervention rounds until ``budget``
    rounds are used or the belief plateaus. Returns the final ``RunState``."""
    cfg = cfg or TrainConfig()
    truth = truth if truth is not None else env.scm.dag
    n = env.n
    strategy.targets(n)
    if state is None:
        rng = check_rng(rng)
        model = NeuralCausalModel.init(n, env.m, cfg.hidden, cfg.functional_lr, rng)
        state = RunState(model, RunHistory(n), rng)
    model, history, rng = state.model, state.history, state.rng
    if budget <= 0:
        history.stopped_reason = "budget"
        return state

    while True:
        if len(history) >= budget:
            history.stopped_reason = "budget"
            break
        try:
            functional_fit(model, env, cfg, rng)
        except FloatingPointError as exc:
            if checkpoint_path:
                save_checkpoint(model, checkpoint_path, cfg.to_dict(), _extra(state, env))
            history.error = str(exc)
            raise RunError(f"functional fit diverged: {exc}", history) from exc
        for _ in range(cfg.interventions_per_phase2):
            if len(history) >= budget:
                break
            _intervention_round(state, env, strategy, cfg, truth)
            if state.stable_rounds >= cfg.patience:
                break
        state.phase += 1
        if checkpoint_path:
            save_checkpoint(model, checkpoint_path, cfg.to_dict(), _extra(state, env))
        if state.stable_rounds >= cfg.patience:
            history.stopped_reason = "plateau"
            break
    return state


def _intervention_round(state: RunState, env, strategy, cfg, truth):
    model, history, rng = state.model, state.history, state.rng
    round_index = len(history)
    target, report = strategy.choose(model, round_index, cfg, rng)
    try:
        batch = env.intervene(target, cfg.batch_size)
    except Exception as exc:  # surface env failures, keep what we have
        history.error = str(exc)
        raise RunError(f"environment failed in round {round_index}: {exc}", history) from exc
    frozen = target.nodes if cfg.freeze_intervened_rows else ()
    for _ in range(cfg.scoring_batches):
        draws = draw_graphs_for_scoring(model.structural, cfg.scoring_graphs, cfg, rng)
        scores = structural_score(model.functional, batch, draws.graphs, per_node=cfg.credit == "node",
                                  per_sample=True)
        structural_update(model.structural, draws.graphs, chunk_scores(scores, cfg.score_chunk), cfg,
                          frozen, draws.support, draws.order_grad, per_sample=True)
    A = model.soft_adjacency()
    graph = threshold_graph(A, cfg.threshold)
    if state.last_graph is not None and np.array_equal(graph, state.last_graph) and _confident(A, cfg):
        state.stable_rounds += 1
    else:
        state.stable_rounds = 0
    state.last_graph = graph
    history.append(RoundRecord(round_index, state.phase, target.label(), graph_shd(graph, truth),
                               env.interventional_samples, A,
                               None if report is None else report.scores.copy()), report)


def _extra(state: RunState, env: Environment) -> dict:
    return {"history": state.history.state(), "rng": state.rng.bit_generator.state,
            "env_rng": env.rng.bit_generator.state, "phase": state.phase,
            "stable_rounds": state.stable_rounds,
            "last_graph": None if state.last_graph is None else state.last_graph.tolist(),
            "env_counts": [env.interventional_samples, env.interventional_batches,
                           env.observational_samples]}


def resume_state(checkpoint_path, env: Environment, cfg: TrainConfig) -> RunState:
    """Rebuild a ``RunState`` (and the env's stream and counters) from a checkpoint."""
    model, extra = load_checkpoint(checkpoint_path, cfg.to_dict())
    rng = np.random.default_rng()
    rng.bit_generator.state = extra["rng"]
    env.rng.bit_generator.state = extra["env_rng"]
    env.interventional_samples, env.interventional_batches, env.observational_samples = extra["env_counts"]
    last = None if extra["last_graph"] is None else np.array(extra["last_graph"], dtype=np.int8)
    return RunState(model, RunHistory.from_state(extra["history"]), rng, extra["phase"],
                    extra["stable_rounds"], last)
