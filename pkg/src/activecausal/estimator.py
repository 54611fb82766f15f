"""Estimator facade over the discovery loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ait import AITConfig
from .graphs import Dag, is_acyclic, shd
from .scm import Environment
from .sdi import AcquisitionStrategy, TrainConfig, run_discovery, threshold_graph


class SDIDiscovery(BaseEstimator):
    """Structure discovery with actively chosen single-node interventions.

    Parameters
    ----------
    strategy : {"ait", "random", "round_robin"}
        How the next intervention target is picked.
    budget : int
        Maximum number of structural rounds (one interventional batch each).
    allowed_targets : sequence of int or None
        Restrict interventions to these nodes.
    full_scale : bool
        Start from the full-size counts (10k functional steps, 100 x 256 AIT
        samples) instead of the desk-scale defaults.
    random_state : int, Generator or None
        Seed for the learner's stream. The environment keeps its own stream.

    The remaining parameters mirror :class:`TrainConfig`.

    Attributes
    ----------
    adjacency_ : Dag or None
        Soft adjacency thresholded at ``threshold``; None if that graph
        still has a cycle.
    soft_adjacency_ : ndarray of shape (n, n)
    history_ : RunHistory
    model_ : NeuralCausalModel
    n_features_in_ : int
    """

    def __init__(self, strategy="ait", budget=200, allowed_targets=None, functional_iters=2000,
                 batch_size=256, sparsity_coeff=0.1, dag_coeff=0.5, structural_lr=5e-2,
                 scoring_graphs=10, scoring_batches=10, interventions_per_phase2=25,
                 ait_graphs=50, ait_samples=128, patience=50, threshold=0.5,
                 full_scale=False, random_state=None):
        self.strategy = strategy
        self.budget = budget
        self.allowed_targets = allowed_targets
        self.functional_iters = functional_iters
        self.batch_size = batch_size
        self.sparsity_coeff = sparsity_coeff
        self.dag_coeff = dag_coeff
        self.structural_lr = structural_lr
        self.scoring_graphs = scoring_graphs
        self.scoring_batches = scoring_batches
        self.interventions_per_phase2 = interventions_per_phase2
        self.ait_graphs = ait_graphs
        self.ait_samples = ait_samples
        self.patience = patience
        self.threshold = threshold
        self.full_scale = full_scale
        self.random_state = random_state

    def _train_config(self, n: int) -> TrainConfig:
        kw = dict(functional_iters=self.functional_iters, batch_size=self.batch_size,
                  sparsity_coeff=self.sparsity_coeff, dag_coeff=self.dag_coeff,
                  structural_lr=self.structural_lr, scoring_graphs=self.scoring_graphs,
                  scoring_batches=self.scoring_batches,
                  interventions_per_phase2=self.interventions_per_phase2,
                  ait=AITConfig(self.ait_graphs, self.ait_samples),
                  patience=self.patience, threshold=self.threshold)
        if self.full_scale:
            for key in ("functional_iters", "scoring_graphs", "ait"):
                kw.pop(key)
            return TrainConfig.full_scale(n, **kw)
        return TrainConfig(**kw)

    def fit(self, env: Environment, y=None):
        """Run discovery against ``env``; ``y`` is ignored."""
        if not isinstance(env, Environment):
            raise TypeError(f"fit expects an Environment, got {type(env).__name__}")
        cfg = self._train_config(env.n)
        strategy = AcquisitionStrategy(self.strategy, self.allowed_targets)
        state = run_discovery(env, strategy, self.budget, cfg, self.random_state)
        self.model_ = state.model
        self.history_ = state.history
        self.soft_adjacency_ = state.model.soft_adjacency()
        graph = threshold_graph(self.soft_adjacency_, self.threshold)
        self.adjacency_ = Dag(graph) if is_acyclic(graph) else None
        self.n_features_in_ = env.n
        return self

    def predict_graph(self) -> np.ndarray:
        """Thresholded adjacency (may contain a cycle if the belief has not settled)."""
        check_is_fitted(self, "soft_adjacency_")
        return threshold_graph(self.soft_adjacency_, self.threshold)

    def score(self, truth, y=None) -> float:
        """Negative SHD against a reference graph (higher is better)."""
        check_is_fitted(self, "soft_adjacency_")
        ref = truth.scm.dag if isinstance(truth, Environment) else truth
        return -float(shd(self.predict_graph(), ref.adj if hasattr(ref, "adj") else ref))

