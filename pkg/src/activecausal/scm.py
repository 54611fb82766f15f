"""Ground-truth discrete SCMs: MLP or table mechanisms, hard interventions,
ancestral sampling, measurement noise, and the CPT network text format."""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .graphs import Dag, is_acyclic
from .utils import (InvalidArgumentError, ValidationError, check_rng,
                    check_values, softmax)

LEAKY_SLOPE = 0.1
MAX_SAMPLES_PER_INTERVENTION = 1000
TABLE_LIMIT = 2 ** 16


def leaky_relu(z, slope=LEAKY_SLOPE):
    # valid for 0 <= slope <= 1
    return np.maximum(z, slope * z)


def one_hot(X, m) -> np.ndarray:
    """(..., n) category indices -> (..., n, m) float one-hot."""
    return (X[..., None] == np.arange(m)).astype(float)


def orthogonal(shape, gain, rng) -> np.ndarray:
    """Orthogonal matrix (semi-orthogonal when non-square) times ``gain``.

    QR of a Gaussian matrix with the sign of R's diagonal folded into Q.
    With unit-norm rows/columns every entry lies in [-gain, gain].
    """
    rows, cols = shape
    flat = rng.standard_normal((rows, cols))
    if rows < cols:
        flat = flat.T
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q


@dataclass(frozen=True)
class InterventionTarget:
    """Set of nodes receiving a hard intervention (uniform replacement)."""

    nodes: tuple
    policy: str = "hard-uniform"

    def __post_init__(self):
        nodes = tuple(sorted(int(v) for v in self.nodes))
        if not nodes:
            raise InvalidArgumentError("intervention target must be non-empty")
        if len(set(nodes)) != len(nodes) or nodes[0] < 0:
            raise InvalidArgumentError(f"invalid target nodes {self.nodes}")
        if self.policy != "hard-uniform":
            raise InvalidArgumentError(f"unsupported intervention policy {self.policy!r}")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def single(cls, i: int) -> "InterventionTarget":
        return cls((i,))

    def check(self, n: int) -> "InterventionTarget":
        if self.nodes[-1] >= n:
            raise InvalidArgumentError(f"target {self.nodes} out of range for n={n}")
        return self

    def label(self) -> str:
        return ";".join(map(str, self.nodes))

    @classmethod
    def parse(cls, label: str) -> "InterventionTarget":
        return cls(tuple(int(v) for v in label.split(";")))


@dataclass
class SampleBatch:
    values: np.ndarray
    regime: Optional[InterventionTarget] = None
    noise_level: float = 0.0

    @property
    def is_observational(self) -> bool:
        return self.regime is None

    def regime_label(self) -> str:
        return "obs" if self.regime is None else "int:" + self.regime.label()

    def to_csv(self) -> str:
        n = self.values.shape[1]
        buf = io.StringIO()
        buf.write(",".join(f"x{j}" for j in range(n)) + ",regime\n")
        label = self.regime_label()
        for row in self.values:
            buf.write(",".join(map(str, row.tolist())) + f",{label}\n")
        return buf.getvalue()


# -- mechanisms ------------------------------------------------------------


@dataclass
class MlpMechanism:
    """Two-layer Leaky-ReLU MLP from the parent-masked one-hot vector to logits."""

    parents: tuple
    W1: np.ndarray  # (hidden, n*m)
    b1: np.ndarray
    W2: np.ndarray  # (m, hidden)
    b2: np.ndarray

    def probs(self, X, m) -> np.ndarray:
        n = X.shape[1]
        mask = np.zeros(n)
        mask[list(self.parents)] = 1.0
        u = (one_hot(X, m) * mask[:, None]).reshape(len(X), n * m)
        h = leaky_relu(u @ self.W1.T + self.b1)
        return softmax(h @ self.W2.T + self.b2)


@dataclass
class TableMechanism:
    """Explicit CPT: row r holds P(X_i | parents) for the r-th parent
    configuration in lexicographic order (first parent most significant)."""

    parents: tuple
    cpt: np.ndarray  # (m ** len(parents), m)

    def row_index(self, X, m) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        for p in self.parents:
            idx = idx * m + X[:, p]
        return idx

    def probs(self, X, m) -> np.ndarray:
        return self.cpt[self.row_index(X, m)]


@dataclass
class GroundTruthScm:
    dag: Dag
    m: int
    mechanisms: list = field(default_factory=list)

    def __post_init__(self):
        if self.m < 2:
            raise InvalidArgumentError("need at least 2 categories")
        if len(self.mechanisms) != self.dag.n:
            raise InvalidArgumentError("one mechanism per node required")
        for i, mech in enumerate(self.mechanisms):
            if tuple(mech.parents) != tuple(self.dag.parents(i)):
                raise ValidationError(f"mechanism {i} parents {mech.parents} disagree with dag")
        self._order = self.dag.topological_order()
        self._tables = {}

    @property
    def n(self) -> int:
        return self.dag.n

    def conditional_table(self, i: int) -> np.ndarray:
        """All conditional rows of node ``i`` in lexicographic parent order."""
        mech = self.mechanisms[i]
        if isinstance(mech, TableMechanism):
            return mech.cpt.copy()
        parents = list(mech.parents)
        configs = np.array(list(itertools.product(range(self.m), repeat=len(parents))), dtype=np.int64)
        X = np.zeros((len(configs), self.n), dtype=np.int64)
        if parents:
            X[:, parents] = configs
        return mech.probs(X, self.m)

    def sampling_table(self, i: int):
        """Cached cumulative conditional table for node ``i``, or ``None`` when
        the parent configuration space is too large to tabulate."""
        if i not in self._tables:
            k = len(self.mechanisms[i].parents)
            if self.m ** k > TABLE_LIMIT:
                self._tables[i] = None
            else:
                self._tables[i] = np.cumsum(self.conditional_table(i), axis=1)
        return self._tables[i]

    def conditional_probs(self, i: int, X) -> np.ndarray:
        return self.mechanisms[i].probs(X, self.m)

    def to_table(self) -> "GroundTruthScm":
        mechs = [TableMechanism(tuple(self.dag.parents(i)), self.conditional_table(i))
                 for i in range(self.n)]
        return GroundTruthScm(self.dag, self.m, mechs)

    def log_prob(self, X) -> np.ndarray:
        """Per-sample, per-node observational log-probabilities, shape (B, n)."""
        X = check_values(X, self.n, self.m)
        out = np.empty(X.shape, dtype=float)
        rows = np.arange(len(X))
        for i, mech in enumerate(self.mechanisms):
            out[:, i] = np.log(mech.probs(X, self.m)[rows, X[:, i]])
        return out


def init_mlp_scm(dag: Dag, m: int = 2, hidden: int = 32, rng=None) -> GroundTruthScm:
    """Random MLP-parameterized SCM over ``dag``.

    Weights are orthogonal with gain 2.5 (entries in [-2.5, 2.5]); biases are
    uniform in [-1.1, 1.1].
    """
    if hidden < 1:
        raise InvalidArgumentError("hidden width must be >= 1")
    rng = check_rng(rng)
    n = dag.n
    mechs = []
    for i in range(n):
        W1 = orthogonal((hidden, n * m), 2.5, rng)
        b1 = rng.uniform(-1.1, 1.1, size=hidden)
        W2 = orthogonal((m, hidden), 2.5, rng)
        b2 = rng.uniform(-1.1, 1.1, size=m)
        mechs.append(MlpMechanism(tuple(dag.parents(i)), W1, b1, W2, b2))
    return GroundTruthScm(dag, m, mechs)


def ancestral_sample(scm: GroundTruthScm, target: Optional[InterventionTarget] = None,
                     batch: int = 1, rng=None) -> SampleBatch:
    rng = check_rng(rng)
    n, m = scm.n, scm.m
    intervened = set() if target is None else set(target.check(n).nodes)
    X = np.zeros((batch, n), dtype=np.int64)
    u = rng.random((n, batch))
    for i in scm._order:
        if i in intervened:
            X[:, i] = np.minimum((u[i] * m).astype(np.int64), m - 1)
            continue
        cdf = scm.sampling_table(i)
        if cdf is None:
            cdf = np.cumsum(scm.conditional_probs(i, X), axis=1)
        else:
            row = np.zeros(batch, dtype=np.int64)
            for p in scm.mechanisms[i].parents:
                row = row * m + X[:, p]
            cdf = cdf[row]
        X[:, i] = np.minimum((cdf <= (u[i] * cdf[:, -1])[:, None]).sum(axis=1), m - 1)
    return SampleBatch(X, target, 0.0)


def edge_information(scm: GroundTruthScm, samples: int = 200_000, rng=None) -> dict:
    """Observational conditional mutual information I(X_i; X_j | pa(i) \\ j)
    of every edge j -> i, in nats per sample.

    The child's conditionals are exact; the parent distribution given the
    remaining parents is estimated from ``samples`` ancestral draws. Edges
    with tiny values are close to unfaithful and hard for any learner.
    """
    X = ancestral_sample(scm, None, samples, rng).values
    m = scm.m
    out = {}
    for j, i in scm.dag.edges():
        others = [p for p in scm.dag.parents(i) if p != j]
        key = X[:, others] @ (m ** np.arange(len(others))) if others else np.zeros(len(X), dtype=np.int64)
        # P(x_j = v | other parents), per sample
        q = np.zeros((len(X), m))
        for k in np.unique(key):
            sel = key == k
            q[sel] = np.bincount(X[sel, j], minlength=m) / sel.sum()
        cond = np.empty((m, len(X), m))
        for v in range(m):
            Xv = X.copy()
            Xv[:, j] = v
            cond[v] = scm.conditional_probs(i, Xv)
        p = cond[X[:, j], np.arange(len(X))]
        mix = np.einsum("bv,vbk->bk", q, cond)
        out[(j, i)] = float(np.mean(np.sum(p * (np.log(p) - np.log(mix)), axis=1)))
    return out


def corrupt(batch: SampleBatch, eta: float, m: int, rng=None) -> SampleBatch:
    """Resample each cell, with probability ``eta``, uniformly among the other
    ``m - 1`` categories (a bit flip when ``m == 2``). Regime labels are kept."""
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgumentError(f"eta must lie in [0, 1], got {eta}")
    rng = check_rng(rng)
    X = batch.values
    hit = rng.random(X.shape) < eta
    shift = rng.integers(1, m, size=X.shape) if m > 2 else np.ones(X.shape, dtype=np.int64)
    out = np.where(hit, (X + shift) % m, X)
    return SampleBatch(out, batch.regime, eta)


class Environment:
    """Data-generating environment the learner queries.

    Counts delivered interventional samples and enforces the per-intervention
    sample limit. Noise (``eta``) is applied post-measurement to every batch.
    """

    def __init__(self, scm: GroundTruthScm, eta: float = 0.0, rng=None,
                 max_samples_per_intervention: int = MAX_SAMPLES_PER_INTERVENTION):
        if not 0.0 <= eta <= 1.0:
            raise InvalidArgumentError(f"eta must lie in [0, 1], got {eta}")
        self.scm = scm
        self.eta = eta
        self.rng = check_rng(rng)
        self.max_samples_per_intervention = max_samples_per_intervention
        self.interventional_samples = 0
        self.interventional_batches = 0
        self.observational_samples = 0

    @property
    def n(self):
        return self.scm.n

    @property
    def m(self):
        return self.scm.m

    def _measure(self, batch: SampleBatch) -> SampleBatch:
        if self.eta > 0.0:
            return corrupt(batch, self.eta, self.m, self.rng)
        return batch

    def observe(self, size: int) -> SampleBatch:
        self.observational_samples += size
        return self._measure(ancestral_sample(self.scm, None, size, self.rng))

    def intervene(self, target: InterventionTarget, size: int) -> SampleBatch:
        if size > self.max_samples_per_intervention:
            raise InvalidArgumentError(
                f"{size} samples requested; limit is {self.max_samples_per_intervention} per intervention")
        batch = self._measure(ancestral_sample(self.scm, target, size, self.rng))
        self.interventional_samples += size
        self.interventional_batches += 1
        return batch


# -- CPT network text format ------------------------------------------------


def dumps_network(scm: GroundTruthScm) -> str:
    lines = [f"net n={scm.n} m={scm.m}"]
    for i in range(scm.n):
        lines.append(" ".join(["parents", str(i)] + [str(p) for p in scm.dag.parents(i)]))
    for i in range(scm.n):
        lines.append(f"cpt {i}")
        for row in scm.conditional_table(i):
            lines.append(" ".join(repr(float(p)) for p in row))
    return "\n".join(lines) + "\n"


def loads_network(text: str) -> GroundTruthScm:
    """Parse the CPT network format into a table-mechanism SCM."""
    n = m = None
    parents: dict[int, tuple] = {}
    cpts: dict[int, list] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "net":
                kv = dict(p.split("=", 1) for p in parts[1:])
                n, m = int(kv["n"]), int(kv["m"])
                current = None
            elif parts[0] == "parents":
                i = int(parts[1])
                parents[i] = tuple(int(p) for p in parts[2:])
                current = None
            elif parts[0] == "cpt":
                if len(parts) != 2:
                    raise ValueError
                current = int(parts[1])
                cpts[current] = []
            else:
                if current is None:
                    raise ValueError
                row = [float(p) for p in parts]
                if m is not None and len(row) != m:
                    raise ValidationError(f"line {lineno}: expected {m} probabilities, got {len(row)}")
                if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-6:
                    raise ValidationError(f"line {lineno}: CPT row does not sum to 1 (sum={sum(row)!r})")
                cpts[current].append(row)
        except (ValueError, KeyError, IndexError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"line {lineno}: cannot parse {raw!r}") from None
    if n is None:
        raise ValidationError("missing 'net n=<N> m=<M>' header")
    adj = np.zeros((n, n), dtype=np.int8)
    for i, pa in parents.items():
        if not 0 <= i < n or any(not 0 <= p < n for p in pa):
            raise ValidationError(f"parents line for node {i} out of range")
        adj[i, list(pa)] = 1
    if not is_acyclic(adj):
        raise ValidationError("network structure is cyclic")
    dag = Dag(adj)
    mechs = []
    for i in range(n):
        pa = parents.get(i, ())
        if tuple(sorted(pa)) != pa:
            raise ValidationError(f"parents of node {i} must be listed in increasing order")
        rows = cpts.get(i)
        if rows is None or len(rows) != m ** len(pa):
            raise ValidationError(f"cpt {i}: expected {m ** len(pa)} rows, got {0 if rows is None else len(rows)}")
        mechs.append(TableMechanism(pa, np.array(rows, dtype=float)))
    return GroundTruthScm(dag, m, mechs)


def load_discrete_network(path) -> GroundTruthScm:
    return loads_network(Path(path).read_text())


def save_discrete_network(scm: GroundTruthScm, path) -> None:
    Path(path).write_text(dumps_network(scm))
