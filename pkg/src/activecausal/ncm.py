"""Neural causal model used by the learner.

Structural parameters ``gamma`` hold edge logits (soft-adjacency
``sigmoid(gamma)``); functional parameters are one two-layer Leaky-ReLU MLP
per node, reading the one-hot encoding of all variables after masking out
everything that is not a parent in a hypothesis graph.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .scm import LEAKY_SLOPE, leaky_relu, one_hot
from .utils import InvalidArgumentError, check_rng, log_softmax, sigmoid

CHECKPOINT_VERSION = 1


@dataclass
class StructuralParams:
    gamma: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "StructuralParams":
        return cls(np.zeros((n, n)))

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def soft_adjacency(self) -> np.ndarray:
        return soft_adjacency(self)

    def copy(self) -> "StructuralParams":
        return StructuralParams(self.gamma.copy())


def soft_adjacency(sp) -> np.ndarray:
    """Elementwise sigmoid of ``gamma`` with the diagonal forced to 0."""
    gamma = sp.gamma if isinstance(sp, StructuralParams) else np.asarray(sp, dtype=float)
    A = sigmoid(gamma)
    np.fill_diagonal(A, 0.0)
    return A


@dataclass
class FunctionalParams:
    """Stacked per-node MLP weights.

    W1: (n, hidden, n*m), b1: (n, hidden), W2: (n, m, hidden), b2: (n, m).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    NAMES = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, n: int, m: int = 2, hidden: int = 32, rng=None) -> "FunctionalParams":
        rng = check_rng(rng)
        k1 = 1.0 / np.sqrt(n * m)
        k2 = 1.0 / np.sqrt(hidden)
        return cls(
            W1=rng.uniform(-k1, k1, size=(n, hidden, n * m)),
            b1=rng.uniform(-k1, k1, size=(n, hidden)),
            W2=rng.uniform(-k2, k2, size=(n, m, hidden)),
            b2=np.zeros((n, m)),
        )

    @property
    def n(self) -> int:
        return self.W1.shape[0]

    @property
    def m(self) -> int:
        return self.W2.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def arrays(self) -> list:
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "FunctionalParams":
        return FunctionalParams(*(a.copy() for a in self.arrays()))


@dataclass
class GradientBundle:
    loss: float
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list:
        return [self.W1, self.b1, self.W2, self.b2]


def _masked_inputs(X, masks, m):
    """Node-major masked one-hot inputs, shape (n, rows, n*m).

    ``masks`` is (n, n) shared by all rows, or (rows, n, n) per row.
    """
    B, n = X.shape
    oh = X[:, :, None] == np.arange(m)  # (B, n, m) bool
    if masks.ndim == 2:
        U = masks.astype(bool)[:, None, :, None] & oh[None, :, :, :]
    else:
        U = np.transpose(masks, (1, 0, 2)).astype(bool)[:, :, :, None] & oh[None, :, :, :]
    return U.reshape(n, B, n * m).astype(float)


def forward(fp: FunctionalParams, X, masks):
    """Logits for every node on every row, shape (n, rows, m), plus a cache."""
    U = _masked_inputs(X, np.asarray(masks), fp.m)
    Z1 = np.matmul(U, fp.W1.transpose(0, 2, 1)) + fp.b1[:, None, :]
    A1 = leaky_relu(Z1)
    Z2 = np.matmul(A1, fp.W2.transpose(0, 2, 1)) + fp.b2[:, None, :]
    return Z2, (U, Z1, A1)


def conditional_logits(fp: FunctionalParams, i: int, x, parent_mask) -> np.ndarray:
    """Logits of node ``i`` for a single sample ``x`` under a parent-mask row."""
    parent_mask = np.asarray(parent_mask)
    if parent_mask[i] != 0:
        raise InvalidArgumentError(f"node {i} must be masked out of its own inputs")
    x = np.asarray(x, dtype=np.int64)
    u = (one_hot(x, fp.m) * parent_mask[:, None]).reshape(-1)
    h = leaky_relu(fp.W1[i] @ u + fp.b1[i])
    return fp.W2[i] @ h + fp.b2[i]


def node_log_probs(fp: FunctionalParams, X, masks) -> np.ndarray:
    """log P_theta(x_i | masked x) for each row and node, shape (rows, n)."""
    Z2, _ = forward(fp, X, masks)
    logp = log_softmax(Z2)
    n, B = Z2.shape[:2]
    return logp[np.arange(n)[:, None], np.arange(B)[None, :], X.T].T


def nll_and_grad(fp: FunctionalParams, batch, graphs) -> GradientBundle:
    """Mean categorical cross-entropy over samples and nodes, with exact gradients.

    ``graphs`` supplies parent masks: a single (n, n) adjacency, or one
    adjacency per sample as a (B, n, n) array / sequence of Dag.
    """
    X = batch.values if hasattr(batch, "values") else np.asarray(batch)
    masks = _as_masks(graphs)
    if masks.ndim == 3 and masks.shape[0] != len(X):
        # fewer graphs than samples: cycle through them
        masks = masks[np.arange(len(X)) % masks.shape[0]]
    n, B, m = fp.n, len(X), fp.m
    Z2, (U, Z1, A1) = forward(fp, X, masks)
    logp = log_softmax(Z2)
    target = one_hot(X.T, m)  # (n, B, m)
    loss = -float((logp * target).sum()) / (B * n)

    dZ2 = (np.exp(logp) - target) / (B * n)
    dW2 = np.matmul(dZ2.transpose(0, 2, 1), A1)
    db2 = dZ2.sum(axis=1)
    dA1 = np.matmul(dZ2, fp.W2)
    dZ1 = dA1
    dZ1[Z1 <= 0] *= LEAKY_SLOPE
    dW1 = np.matmul(dZ1.transpose(0, 2, 1), U)
    db1 = dZ1.sum(axis=1)
    return GradientBundle(loss, dW1, db1, dW2, db2)


def _as_masks(graphs) -> np.ndarray:
    if hasattr(graphs, "adj"):
        return np.asarray(graphs.adj)
    if isinstance(graphs, np.ndarray):
        return graphs
    graphs = list(graphs)
    if not graphs:
        raise InvalidArgumentError("need at least one graph")
    return np.stack([g.adj if hasattr(g, "adj") else np.asarray(g) for g in graphs])


class Adam:
    """Adaptive-moment optimizer over a fixed list of arrays (updated in place)."""

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Optional[list] = None
        self.v: Optional[list] = None

    def step(self, params: list, grads: list) -> None:
        for k, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.isfinite(g).sum())
                raise FloatingPointError(
                    f"non-finite gradient in parameter {k} (shape {np.shape(g)}, {bad} bad entries)")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"lr": self.lr, "betas": [self.beta1, self.beta2], "eps": self.eps, "t": self.t,
                "m": None if self.m is None else [a.tolist() for a in self.m],
                "v": None if self.v is None else [a.tolist() for a in self.v]}

    @classmethod
    def from_state_dict(cls, state: dict) -> "Adam":
        opt = cls(state["lr"], tuple(state["betas"]), state["eps"])
        opt.t = state["t"]
        if state["m"] is not None:
            opt.m = [np.array(a, dtype=float) for a in state["m"]]
            opt.v = [np.array(a, dtype=float) for a in state["v"]]
        return opt


def optimizer_step(params: list, grads: list, state: Adam, lr: Optional[float] = None) -> Adam:
    if lr is not None:
        state.lr = lr
    state.step(params, grads)
    return state


@dataclass
class NeuralCausalModel:
    structural: StructuralParams
    functional: FunctionalParams
    optimizer: Adam = field(default_factory=Adam)

    @classmethod
    def init(cls, n, m=2, hidden=32, lr=1e-3, rng=None) -> "NeuralCausalModel":
        return cls(StructuralParams.zeros(n), FunctionalParams.init(n, m, hidden, rng), Adam(lr))

    @property
    def n(self):
        return self.functional.n

    @property
    def m(self):
        return self.functional.m

    def soft_adjacency(self):
        return self.structural.soft_adjacency()


def config_hash(config) -> str:
    text = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_checkpoint(model: NeuralCausalModel, path, config=None, extra=None) -> None:
    fp = model.functional
    doc = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(config or {}),
        "shapes": {name: list(getattr(fp, name).shape) for name in FunctionalParams.NAMES},
        "gamma": model.structural.gamma.tolist(),
        "theta": {name: getattr(fp, name).tolist() for name in FunctionalParams.NAMES},
        "optimizer": model.optimizer.state_dict(),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, config=None):
    """Returns ``(model, extra)``; refuses a checkpoint from a different config."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    if config is not None and doc["config_hash"] != config_hash(config):
        raise ValueError("checkpoint was written under a different config")
    theta = {k: np.array(v, dtype=float) for k, v in doc["theta"].items()}
    for name, shape in doc["shapes"].items():
        if list(theta[name].shape) != shape:
            raise ValueError(f"checkpoint shape mismatch for {name}")
    model = NeuralCausalModel(StructuralParams(np.array(doc["gamma"], dtype=float)),
                              FunctionalParams(**theta),
                              Adam.from_state_dict(doc["optimizer"]))
    return model, doc["extra"]
