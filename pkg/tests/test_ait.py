import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activecausal.ait import (AITConfig, DiscrepancyReport, discrepancy_from_samples,
                              discrepancy_scores, hypothetical_samples, post_interventional_samples,
                              select_target, single_node_targets, variance_components)
from activecausal.graphs import Dag, structured_graph, topological_order
from activecausal.ncm import FunctionalParams, StructuralParams
from activecausal.scm import InterventionTarget
from activecausal.utils import InvalidArgumentError, softmax


def loop_variances(samples, target):
    """Plain-loop VBG/VWG on raw binary values with intervened columns zeroed."""
    G, S, n = samples.shape
    Z = [[[0.0 if v in target.nodes else float(samples[g][s][v]) for v in range(n)]
          for s in range(S)] for g in range(G)]
    mu = [[sum(Z[g][s][v] for s in range(S)) / S for v in range(n)] for g in range(G)]
    grand = [sum(mu[g][v] for g in range(G)) / G for v in range(n)]
    vbg = sum((mu[g][v] - grand[v]) ** 2 for g in range(G) for v in range(n))
    vwg = sum((Z[g][s][v] - mu[g][v]) ** 2 for g in range(G) for s in range(S) for v in range(n))
    return vbg, vwg


def test_hand_instance():
    # graph A column 1: [0, 1]; graph B: [1, 1]; column 0 is the target
    samples = np.array([[[1, 0], [0, 1]], [[0, 1], [1, 1]]])
    t = InterventionTarget.single(0)
    vbg, vwg = variance_components(samples, t)
    assert abs(vbg - 0.125) <= 1e-12
    assert abs(vwg - 0.5) <= 1e-12
    _, _, D = discrepancy_from_samples(samples[None], [t])
    assert abs(D[0] - 0.25) <= 1e-12


def test_identical_graphs_give_zero():
    rng = np.random.default_rng(0)
    one = rng.integers(0, 2, size=(1, 40, 4))
    samples = np.repeat(one, 6, axis=0)
    _, _, D = discrepancy_from_samples(samples[None], [InterventionTarget.single(2)])
    assert D[0] == 0.0


def test_identical_hypothesis_set_through_public_api():
    gamma = np.where(structured_graph("chain", 4).adj == 1, 40.0, -40.0)
    fp = FunctionalParams.init(4, 2, 8, 0)
    report = discrepancy_scores(StructuralParams(gamma), fp, single_node_targets(4),
                                AITConfig(graphs_count=5, samples_per_graph=16), 1)
    assert np.all(report.vbg == 0.0)
    assert np.all(report.scores == 0.0)


def test_matches_loop_oracle():
    rng = np.random.default_rng(2)
    samples = rng.integers(0, 2, size=(5, 9, 4))
    for v in range(4):
        t = InterventionTarget.single(v)
        got = variance_components(samples, t)
        assert np.allclose(got, loop_variances(samples, t), atol=1e-12)


def test_masking_invariance_fuzz():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        G, S, n = int(rng.integers(2, 6)), int(rng.integers(1, 8)), int(rng.integers(2, 6))
        samples = rng.integers(0, 2, size=(G, S, n))
        nodes = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        t = InterventionTarget(tuple(nodes))
        before = discrepancy_from_samples(samples[None], [t])[2][0]
        perturbed = samples.copy()
        perturbed[..., nodes] += rng.integers(1, 5, size=perturbed[..., nodes].shape)
        after = discrepancy_from_samples(perturbed[None], [t], m=2)[2][0]
        assert before == after


def test_eps_floor_gives_large_score():
    # disagreeing means, no within-graph variance
    samples = np.array([[[0, 0], [0, 0]], [[0, 1], [0, 1]]])
    _, vwg, D = discrepancy_from_samples(samples[None], [InterventionTarget.single(0)])
    assert vwg[0] == 0.0 and D[0] == pytest.approx(0.5 / 1e-8)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_invariant_to_graph_and_sample_order(seed):
    rng = np.random.default_rng(seed)
    samples = rng.integers(0, 2, size=(4, 6, 3))
    t = InterventionTarget.single(int(rng.integers(3)))
    base = variance_components(samples, t)
    shuffled = samples[rng.permutation(4)][:, rng.permutation(6)]
    assert np.allclose(variance_components(shuffled, t), base, atol=1e-12)
    assert base[0] >= 0 and base[1] >= 0


def test_one_hot_embedding_for_three_categories():
    samples = np.array([[[0, 2]], [[0, 1]]])
    vbg, vwg = variance_components(samples, InterventionTarget.single(0), m=3)
    # means differ in two one-hot coordinates by 1, grand mean halfway
    assert vbg == pytest.approx(4 * 0.25)
    assert vwg == 0.0


class TestPostInterventionalSamples:
    def test_all_nodes_targeted_is_uniform(self):
        fp = FunctionalParams.init(3, 2, 8, 0)
        X = post_interventional_samples(fp, structured_graph("chain", 3),
                                        InterventionTarget((0, 1, 2)), 20_000, rng=1)
        assert np.all(np.abs(X.mean(axis=0) - 0.5) < 3 * np.sqrt(0.25 / 20_000) + 1e-3)

    def test_empty_graph_follows_bias_only_conditional(self):
        rng = np.random.default_rng(4)
        fp = FunctionalParams.init(3, 2, 8, rng)
        fp.b2[:] = rng.normal(size=fp.b2.shape)
        N = 10_000
        X = post_interventional_samples(fp, Dag.empty(3), InterventionTarget.single(0), N, rng=5)
        for i in (1, 2):
            h = fp.b1[i]
            p1 = softmax(fp.W2[i] @ np.where(h > 0, h, 0.1 * h) + fp.b2[i])[1]
            assert abs(X[:, i].mean() - p1) <= 3 * np.sqrt(p1 * (1 - p1) / N)

    def test_deterministic(self):
        fp = FunctionalParams.init(4, 2, 8, 0)
        g = structured_graph("tree", 4)
        t = InterventionTarget.single(1)
        assert np.array_equal(post_interventional_samples(fp, g, t, 50, rng=3),
                              post_interventional_samples(fp, g, t, 50, rng=3))

    def test_category_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            post_interventional_samples(FunctionalParams.init(2, 2, 4, 0), Dag.empty(2),
                                        InterventionTarget.single(0), 5, m=3)

    def test_intervention_cuts_parent_dependence(self):
        # chain 0 -> 1 with a model that copies the parent; do(1) must break the copy
        fp = FunctionalParams.init(2, 2, 4, 0)
        fp.W1[:] = 0.0
        fp.b1[:] = 0.0
        fp.W1[1, 0, 0], fp.W1[1, 0, 1] = 10.0, -10.0
        fp.W2[1] = 0.0
        fp.W2[1, 0, 0], fp.W2[1, 1, 0] = 5.0, -5.0
        g = structured_graph("chain", 2)
        X = post_interventional_samples(fp, g, InterventionTarget.single(0), 2000, rng=0)
        assert np.mean(X[:, 0] == X[:, 1]) > 0.99
        X = post_interventional_samples(fp, g, InterventionTarget.single(1), 2000, rng=0)
        assert abs(np.mean(X[:, 0] == X[:, 1]) - 0.5) < 0.05


def test_batched_sampler_matches_single_graph_path():
    fp = FunctionalParams.init(4, 2, 8, 1)
    graphs = np.array([structured_graph("chain", 4).adj, structured_graph("collider", 4).adj])
    orders = np.array([topological_order(g) for g in graphs])
    t = InterventionTarget.single(0)
    X = hypothetical_samples(fp, graphs, orders, [t], 5000, 2)[0]
    for g in range(2):
        ref = post_interventional_samples(fp, Dag(graphs[g]), t, 5000, rng=g + 10)
        assert np.all(np.abs(X[g].mean(axis=0) - ref.mean(axis=0)) < 0.05)


def test_scores_report_fields():
    fp = FunctionalParams.init(4, 2, 8, 0)
    report = discrepancy_scores(StructuralParams.zeros(4), fp, single_node_targets(4),
                                AITConfig(graphs_count=10, samples_per_graph=32), 0)
    assert len(report.scores) == 4 and np.all(report.scores >= 0)
    assert np.allclose(report.scores, report.vbg / np.maximum(report.vwg, 1e-8))
    assert report.scores[report.targets.index(report.chosen)] == report.scores.max()
    assert len(report.hypothesis_id) == 12
    rows = report.to_csv_rows(3)
    assert len(rows) == 4 and sum(r.endswith(",1") for r in rows) == 1


def test_needs_two_graphs():
    with pytest.raises(InvalidArgumentError):
        discrepancy_scores(StructuralParams.zeros(3), FunctionalParams.init(3, rng=0),
                           single_node_targets(3), AITConfig(graphs_count=1), 0)
    with pytest.raises(InvalidArgumentError):
        discrepancy_scores(StructuralParams.zeros(3), FunctionalParams.init(3, rng=0), [], None, 0)


class TestSelectTarget:
    def _report(self, scores):
        targets = single_node_targets(len(scores))
        s = np.array(scores, dtype=float)
        return DiscrepancyReport(targets, s, np.ones_like(s), s)

    def test_argmax(self):
        assert select_target(self._report([0.1, 0.9, 0.3]), 0).nodes == (1,)

    def test_ties_uniform(self):
        rep = self._report([2.0, 2.0, 2.0, 2.0])
        rng = np.random.default_rng(0)
        picks = np.array([select_target(rep, rng).nodes[0] for _ in range(10_000)])
        counts = np.bincount(picks, minlength=4)
        sigma = np.sqrt(10_000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 2500) <= 3 * sigma)

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=6).filter(lambda s: len(set(s)) == len(s)),
           st.floats(0.01, 100))
    def test_scale_invariance(self, scores, c):
        a = select_target(self._report(scores), 0)
        b = select_target(self._report([c * s for s in scores]), 0)
        assert a == b

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            select_target(self._report([]))


def test_same_graph_different_orderings_same_samples():
    fp = FunctionalParams.init(3, 2, 8, 0)
    graphs = np.zeros((2, 3, 3), dtype=np.int8)
    orders = np.array([[0, 1, 2], [2, 1, 0]])
    X = hypothetical_samples(fp, graphs, orders, [InterventionTarget.single(1)], 64, 0)[0]
    assert np.array_equal(X[0], X[1])
