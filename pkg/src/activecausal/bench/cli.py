"""Command-line entry point: ``activecausal {gen,run,probe,plot,verify,presets,sampler-stats}``."""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from ..graphs import erdos_renyi, structured_graph
from ..sampler import sample_dags_with_orders
from ..scm import init_mlp_scm, save_discrete_network
from ..sdi import TrainConfig
from .config import (ConfigError, ExperimentConfig, GraphSpec, list_presets, load_config,
                     load_preset)
from .experiment import (SchemaError, build_environment, run_experiment, run_probe,
                         seed_streams, verify)
from .plots import emit_plots
from .probe import informative_target_probe


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for tok in text.split(","):
        a, sep, b = tok.partition("-")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected pairs like 1-2,3-4, got {text!r}")
        pairs.append((int(a), int(b)))
    return pairs


def _resolve_config(args):
    cfg = load_preset(args.config) if args.config in list_presets() else load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = args.seed
    if args.strategy:
        changes["strategy"] = args.strategy
    if args.eta is not None:
        changes["eta"] = args.eta
    if args.allowed_targets is not None:
        changes["allowed_targets"] = args.allowed_targets
    if args.full_scale:
        changes["full_scale"] = True
    if args.budget is not None:
        changes["budget"] = args.budget
    return cfg.replace(**changes) if changes else cfg


def cmd_gen(args) -> int:
    spec = GraphSpec.parse(args.graph)
    if spec.kind == "file":
        raise ConfigError("gen builds graphs; 'file' specs are already networks")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed[0] if args.seed else 0
    rng = seed_streams(seed)[0]
    dag = erdos_renyi(spec.n, spec.k, rng) if spec.kind == "er" else structured_graph(spec.kind, spec.n)
    scm = init_mlp_scm(dag, 2, 32, rng)
    (out / "graph.dag").write_text(dag.to_text())
    save_discrete_network(scm.to_table(), out / "network.net")
    print(f"wrote {out / 'graph.dag'} and {out / 'network.net'} ({dag.n_edges} edges)")
    return 0


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out) if args.out else None
    if cfg.probe_edges is not None:
        for seed, res in run_probe(cfg, out).items():
            print(f"{cfg.name} seed {seed}: histogram {res.histogram.tolist()}, "
                  f"endpoint share {res.endpoint_share():.2f}")
        return 0
    result = run_experiment(cfg, out)
    print(f"{cfg.name} [{cfg.strategy}]: {result.summary()}")
    if out is not None:
        emit_plots(out)
        print(f"artifacts in {out}")
    return 1 if result.partial else 0


def cmd_probe(args) -> int:
    seed = args.seed[0] if args.seed else 0
    spec = GraphSpec.parse(args.graph)
    env, rng = build_environment(ExperimentConfig(graph=spec, seeds=[seed]), seed)
    cfg = TrainConfig.full_scale(env.n) if args.full_scale else TrainConfig()
    res = informative_target_probe(env.scm, args.undirected, cfg, rng, args.repetitions)
    lines = ["node,count"] + [f"{i},{c}" for i, c in enumerate(res.histogram)]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "probe.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"endpoint share {res.endpoint_share():.2f} over {res.repetitions} repetitions")
    return 0


def cmd_plot(args) -> int:
    for path in emit_plots(args.result_dir):
        print(path)
    return 0


def cmd_verify(args) -> int:
    diffs = verify(args.result_dir)
    for line in diffs:
        print(line)
    print("aggregate verified" if not diffs else f"{len(diffs)} statistic(s) differ")
    return 0 if not diffs else 1


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return 0


def sampler_stats(A, t: float, draws: int, rng) -> tuple[str, str]:
    """Empirical ordering and edge frequencies of the two-phase sampler as CSV text.

    Returns ``(orderings_csv, edges_csv)`` with headers ``ordering,count,freq`` and
    ``child,parent,belief,freq``.
    """
    A = np.asarray(A, dtype=float)
    n = len(A)
    graphs, orders = sample_dags_with_orders(A, draws, t, rng)
    keys, counts = np.unique(orders, axis=0, return_counts=True)
    rows = ["ordering,count,freq"]
    rows += [f"{' '.join(map(str, k))},{c},{float(c / draws)!r}" for k, c in zip(keys.tolist(), counts)]
    marg = graphs.mean(axis=0)
    edges = ["child,parent,belief,freq"]
    edges += [f"{i},{j},{float(A[i, j])!r},{float(marg[i, j])!r}" for i, j in itertools.permutations(range(n), 2)]
    return "\n".join(rows) + "\n", "\n".join(edges) + "\n"


def cmd_sampler_stats(args) -> int:
    if args.adjacency:
        A = np.loadtxt(args.adjacency, delimiter=",", ndmin=2)
    else:
        A = 0.5 * (1.0 - np.eye(args.nodes))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"adjacency must be square, got shape {A.shape}")
    seed = args.seed[0] if args.seed else 0
    orders_csv, edges_csv = sampler_stats(A, args.temperature, args.draws, np.random.default_rng(seed))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "orderings.csv").write_text(orders_csv)
        (out / "edges.csv").write_text(edges_csv)
    print(orders_csv + edges_csv, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activecausal",
                                     description="Causal discovery with active intervention targeting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_help="seed(s), comma-separated"):
        p.add_argument("--seed", type=_int_list, help=seed_help)
        p.add_argument("--out", help="output directory")
        p.add_argument("--full-scale", action="store_true",
                       help="full-size iteration and sample counts")

    p = sub.add_parser("gen", help="emit a ground-truth graph and network file")
    p.add_argument("--graph", required=True, help="e.g. 'chain 5' or 'er 8 1'")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run an experiment from a config file or preset name")
    p.add_argument("config")
    common(p)
    p.add_argument("--strategy", choices=["ait", "random", "round_robin"])
    p.add_argument("--eta", type=float)
    p.add_argument("--allowed-targets", type=_int_list)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("probe", help="informative-target probe on a partially undirected belief")
    p.add_argument("--graph", required=True)
    p.add_argument("--undirected", type=_pairs, required=True, help="pairs like 1-2,3-4")
    p.add_argument("--repetitions", type=int, default=50)
    common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("plot", help="render SVGs from a result directory")
    p.add_argument("result_dir")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("verify", help="recompute aggregates from raw CSVs and diff")
    p.add_argument("result_dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sampler-stats", help="empirical ordering/edge statistics of the DAG sampler")
    p.add_argument("--adjacency", help="CSV soft adjacency (row = child); default: 0.5 off-diagonal")
    p.add_argument("--nodes", type=int, default=3, help="size of the default adjacency")
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=_int_list)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sampler_stats)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen" and not args.out:
        parser.error("gen needs --out")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
