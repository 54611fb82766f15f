"""Multi-seed experiment runner, aggregation and verification.

Output layout of a result directory::

    config.cfg                 the resolved experiment config
    seed<S>_history.csv        round,phase,target,shd,samples_used
    seed<S>_adjacency.csv      per-round soft adjacency (off-diagonal entries)
    seed<S>_scores.csv         AIT scores per round and target (AIT runs only)
    seed<S>_truth.dag          the ground-truth graph of that seed
    runs.csv                   one row per seed
    selection.csv              per seed and node: selection count and topology
    aggregate.csv              statistics recomputable from the two files above
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..graphs import (Dag, UndefinedCorrelationError, erdos_renyi, selection_correlation,
                      structured_graph, topo_props)
from ..scm import Environment, init_mlp_scm, load_discrete_network
from ..sdi import AcquisitionStrategy, RunError, run_discovery
from .config import ExperimentConfig, dumps_config
from .probe import informative_target_probe

logger = logging.getLogger(__name__)

RUNS_HEADER = ["seed", "status", "final_shd", "rounds", "rounds_to_zero", "stopped", "samples_used"]
SELECTION_HEADER = ["seed", "node", "count", "out_degree", "descendant_count", "topo_level"]
DATA_DIR = Path(__file__).resolve().parent.parent / "data"


class SchemaError(ValueError):
    pass


@dataclass
class SeedResult:
    seed: int
    status: str  # "ok" or "failed: <message>"
    final_shd: Optional[int]
    rounds: int
    rounds_to_zero: Optional[int]
    stopped: str
    samples_used: int
    selection: np.ndarray
    truth: Dag


@dataclass
class AggregateResult:
    seeds: list
    final_shd: list
    mean_shd: float
    std_shd: float
    rounds_quantiles: dict  # q25/q50/q75 of rounds-to-SHD-0 over converged seeds
    converged: int
    selection_histogram: np.ndarray
    corr_out_degree: Optional[float]
    corr_descendants: Optional[float]
    partial: bool = False
    failed: list = field(default_factory=list)

    def rows(self) -> list[tuple[str, str]]:
        q = self.rounds_quantiles
        return [("seeds", " ".join(str(s) for s in self.seeds)),
                ("final_shd", " ".join(_fmt(v) for v in self.final_shd)),
                ("mean_shd", _fmt(self.mean_shd)), ("std_shd", _fmt(self.std_shd)),
                ("rounds_q25", _fmt(q["q25"])), ("rounds_q50", _fmt(q["q50"])),
                ("rounds_q75", _fmt(q["q75"])), ("converged", str(self.converged)),
                ("selection", " ".join(str(int(c)) for c in self.selection_histogram)),
                ("corr_out_degree", _fmt(self.corr_out_degree)),
                ("corr_descendants", _fmt(self.corr_descendants)),
                ("partial", str(int(self.partial))),
                ("failed", " ".join(str(s) for s in self.failed))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "value"])
        w.writerows(self.rows())
        return buf.getvalue()

    def summary(self) -> str:
        q = self.rounds_quantiles["q50"]
        text = (f"final SHD {self.mean_shd:.2f} +- {self.std_shd:.2f} over {len(self.final_shd)} seeds; "
                f"{self.converged} reached SHD 0 (median rounds {_fmt(q)})")
        if self.partial:
            text += f"; PARTIAL, failed seeds {self.failed}"
        return text


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(round(float(v), 10))


# -- building environments ----------------------------------------------------


def seed_streams(seed: int):
    """Independent streams for graph/SCM construction, the environment and the learner."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def build_environment(cfg: ExperimentConfig, seed: int):
    """Ground-truth environment for one seed plus the learner's stream."""
    build_rng, env_rng, learn_rng = seed_streams(seed)
    spec = cfg.graph
    if spec.kind == "file":
        path = Path(spec.path)
        if not path.is_absolute() and not path.exists():
            path = DATA_DIR / spec.path
        scm = load_discrete_network(path)
    else:
        dag = erdos_renyi(spec.n, spec.k, build_rng) if spec.kind == "er" \
            else structured_graph(spec.kind, spec.n)
        scm = init_mlp_scm(dag, 2, 32, build_rng)
    return Environment(scm, cfg.eta, env_rng), learn_rng


# -- running -------------------------------------------------------------------


def run_seed(cfg: ExperimentConfig, seed: int, out_dir: Optional[Path] = None) -> SeedResult:
    env, rng = build_environment(cfg, seed)
    train = cfg.train_config(env.n)
    strategy = AcquisitionStrategy(cfg.strategy, cfg.allowed_targets)
    status = "ok"
    try:
        history = run_discovery(env, strategy, cfg.budget, train, rng).history
    except RunError as exc:
        logger.warning("seed %d failed: %s", seed, exc)
        history, status = exc.history, f"failed: {exc}"
    if out_dir is not None:
        (out_dir / f"seed{seed}_history.csv").write_text(history.to_csv())
        (out_dir / f"seed{seed}_adjacency.csv").write_text(history.adjacency_csv())
        if history.reports:
            (out_dir / f"seed{seed}_scores.csv").write_text(history.scores_csv())
        (out_dir / f"seed{seed}_truth.dag").write_text(env.scm.dag.to_text())
    samples = history.records[-1].samples_used if history.records else 0
    return SeedResult(seed, status, history.final_shd, len(history), history.rounds_to_zero(),
                      history.stopped_reason, samples, history.selection_counts(), env.scm.dag)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> AggregateResult:
    """One discovery run per seed, aggregated; raw CSVs go to ``out_dir`` if given."""
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.cfg").write_text(dumps_config(cfg))
    results = [run_seed(cfg, seed, out) for seed in sorted(cfg.seeds)]
    runs_csv, selection_csv = _runs_csv(results), _selection_csv(results)
    agg = aggregate(_read_csv(runs_csv, RUNS_HEADER, "runs.csv"),
                    _read_csv(selection_csv, SELECTION_HEADER, "selection.csv"))
    if out is not None:
        (out / "runs.csv").write_text(runs_csv)
        (out / "selection.csv").write_text(selection_csv)
        (out / "aggregate.csv").write_text(agg.to_csv())
    return agg


def _runs_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for r in results:
        w.writerow([r.seed, r.status, "" if r.final_shd is None else r.final_shd, r.rounds,
                    "" if r.rounds_to_zero is None else r.rounds_to_zero, r.stopped, r.samples_used])
    return buf.getvalue()


def _selection_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SELECTION_HEADER)
    for r in results:
        for node, props in enumerate(topo_props(r.truth)):
            w.writerow([r.seed, node, int(r.selection[node]), props.out_degree,
                        props.descendant_count, props.topo_level])
    return buf.getvalue()


# -- aggregation from raw CSVs -------------------------------------------------


def _read_csv(text: str, header: list, name: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    present = next(csv.reader(io.StringIO(text)), [])
    missing = [c for c in header if c not in present]
    if missing:
        raise SchemaError(f"{name}: missing columns {missing}")
    return rows


def _correlation(counts, props) -> Optional[float]:
    if len(counts) < 3:
        return None
    try:
        return selection_correlation(counts, props)
    except UndefinedCorrelationError:
        return None


def aggregate(runs: list[dict], selection: list[dict]) -> AggregateResult:
    seeds = [int(r["seed"]) for r in runs]
    failed = [int(r["seed"]) for r in runs if r["status"] != "ok"]
    shds = [int(r["final_shd"]) for r in runs if r["final_shd"] != ""]
    to_zero = [int(r["rounds_to_zero"]) for r in runs if r["rounds_to_zero"] != ""]
    if to_zero:
        q25, q50, q75 = (float(v) for v in np.quantile(to_zero, [0.25, 0.5, 0.75]))
    else:
        q25 = q50 = q75 = float("nan")
    n = 1 + max((int(r["node"]) for r in selection), default=-1)
    hist = np.zeros(n, dtype=int)
    for r in selection:
        hist[int(r["node"])] += int(r["count"])
    # pooled over (seed, node) pairs; graphs differ between seeds for ER specs
    counts = [float(r["count"]) for r in selection]
    corr_out = _correlation(counts, [float(r["out_degree"]) for r in selection]) if selection else None
    corr_desc = _correlation(counts, [float(r["descendant_count"]) for r in selection]) if selection else None
    return AggregateResult(
        seeds=seeds, final_shd=shds,
        mean_shd=float(np.mean(shds)) if shds else float("nan"),
        std_shd=float(np.std(shds)) if shds else float("nan"),
        rounds_quantiles={"q25": q25, "q50": q50, "q75": q75}, converged=len(to_zero),
        selection_histogram=hist, corr_out_degree=corr_out, corr_descendants=corr_desc,
        partial=bool(failed), failed=failed)


def aggregate_from_dir(result_dir) -> AggregateResult:
    d = Path(result_dir)
    texts = {}
    for name in ("runs.csv", "selection.csv"):
        path = d / name
        if not path.is_file():
            raise SchemaError(f"{path}: file missing")
        texts[name] = path.read_text()
    return aggregate(_read_csv(texts["runs.csv"], RUNS_HEADER, str(d / "runs.csv")),
                     _read_csv(texts["selection.csv"], SELECTION_HEADER, str(d / "selection.csv")))


def verify(result_dir) -> list[str]:
    """Recompute the aggregate from the raw CSVs; returns the differing statistics."""
    d = Path(result_dir)
    stored_path = d / "aggregate.csv"
    if not stored_path.is_file():
        raise SchemaError(f"{stored_path}: file missing")
    stored = {r["statistic"]: r["value"]
              for r in _read_csv(stored_path.read_text(), ["statistic", "value"], str(stored_path))}
    recomputed = dict(aggregate_from_dir(d).rows())
    return [f"{k}: stored {stored.get(k)!r}, recomputed {v!r}"
            for k, v in recomputed.items() if stored.get(k) != v]


def run_probe(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Informative-target probe for every seed; returns ``{seed: ProbeResult}``."""
    results = {}
    for seed in sorted(cfg.seeds):
        env, rng = build_environment(cfg, seed)
        results[seed] = informative_target_probe(env.scm, cfg.probe_edges, cfg.train_config(env.n),
                                                 rng, cfg.repetitions)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.cfg").write_text(dumps_config(cfg))
        lines = ["seed,node,count"]
        lines += [f"{seed},{node},{int(c)}" for seed, res in results.items()
                  for node, c in enumerate(res.histogram)]
        (out / "probe.csv").write_text("\n".join(lines) + "\n")
    return results
