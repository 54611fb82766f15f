import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from activecausal.graphs import Dag, is_acyclic, structured_graph
from activecausal.ncm import StructuralParams
from activecausal.sampler import (ordering_log_prob_grad, ordering_masks, sample_dag, sample_dags,
                                  sample_hypothesis_set, sample_ordering, sample_orderings)
from activecausal.utils import InvalidArgumentError

from .oracles import ordering_probability, two_phase_distribution


def test_zero_matrix_gives_uniform_orderings():
    orders = sample_orderings(np.zeros((3, 3)), 0.1, 100_000, np.random.default_rng(0))
    codes = orders @ np.array([9, 3, 1])
    perms = [p[0] * 9 + p[1] * 3 + p[2] for p in itertools.permutations(range(3))]
    counts = np.array([(codes == c).sum() for c in perms])
    assert counts.sum() == 100_000
    assert stats.chisquare(counts).pvalue > 1e-3


def test_zero_matrix_step_probs_uniform():
    draw = sample_ordering(np.zeros((4, 4)), 0.5, np.random.default_rng(1), debug=True)
    for step, p in enumerate(draw.step_probs):
        alive = p > 0
        assert alive.sum() == 4 - step
        assert np.allclose(p[alive], 1.0 / (4 - step))


def test_two_node_closed_form():
    A = np.array([[0.0, 0.1], [0.9, 0.0]])
    draw = sample_ordering(A, 0.1, np.random.default_rng(0), debug=True)
    expected0 = np.exp(9.0) / (np.exp(9.0) + np.exp(1.0))
    assert draw.step_probs[0] == pytest.approx([expected0, 1 - expected0], abs=1e-12)
    assert sum(draw.step_probs[0]) == pytest.approx(1.0, abs=1e-9)
    orders = sample_orderings(A, 0.1, 100_000, np.random.default_rng(2))
    freq = (orders[:, 0] == 0).mean()
    assert freq == pytest.approx(0.9997, abs=0.001)


def test_huge_temperature_is_uniform():
    A = np.array([[0, 0.9, 0.1], [0.05, 0, 0.7], [0.3, 0.99, 0]])
    orders = sample_orderings(A, 1e6, 60_000, np.random.default_rng(3))
    codes = orders @ np.array([9, 3, 1])
    counts = np.unique(codes, return_counts=True)[1]
    assert len(counts) == 6
    assert stats.chisquare(counts).pvalue > 1e-3


def test_orderings_are_permutations():
    A = np.random.default_rng(0).random((6, 6))
    np.fill_diagonal(A, 0)
    orders = sample_orderings(A, 0.1, 500, np.random.default_rng(1))
    assert np.all(np.sort(orders, axis=1) == np.arange(6))


def test_bad_inputs():
    with pytest.raises(InvalidArgumentError):
        sample_orderings(np.zeros((2, 3)), 0.1, 1, 0)
    with pytest.raises(InvalidArgumentError):
        sample_orderings(np.full((2, 2), 1.5), 0.1, 1, 0)
    with pytest.raises(InvalidArgumentError):
        sample_orderings(np.zeros((2, 2)), 0.0, 1, 0)
    with pytest.raises(InvalidArgumentError):
        sample_dag(np.zeros((3, 3)), [0, 0, 1], 0)


class TestPhaseTwo:
    def test_all_ones_gives_full_dag_for_ordering(self):
        A = 1.0 - np.eye(3)
        for seed in range(20):
            assert sample_dag(A, [0, 1, 2], seed) == structured_graph("full", 3)

    def test_all_zero_gives_empty(self):
        for seed in range(20):
            assert sample_dag(np.zeros((3, 3)), [2, 0, 1], seed).n_edges == 0

    def test_half_edges_independent(self):
        A = 0.5 * (1.0 - np.eye(3))
        orders = np.tile([0, 1, 2], (100_000, 1))
        allowed = ordering_masks(orders)
        draws = (np.random.default_rng(4).random(allowed.shape) < A) & allowed
        edges = np.stack([draws[:, 1, 0], draws[:, 2, 0], draws[:, 2, 1]], axis=1).astype(float)
        assert np.all(np.abs(edges.mean(axis=0) - 0.5) < 0.01)
        corr = np.corrcoef(edges.T)
        assert np.all(np.abs(corr[np.triu_indices(3, 1)]) < 0.02)
        # and through the public function
        g = np.array([sample_dag(A, [0, 1, 2], np.random.default_rng(s)).adj for s in range(2000)])
        assert g[:, 0, 1].sum() == 0 and g[:, 0, 2].sum() == 0 and g[:, 1, 2].sum() == 0


def test_distribution_matches_enumeration():
    A = np.array([[0.0, 0.7, 0.2], [0.4, 0.0, 0.9], [0.6, 0.1, 0.0]])
    exact = two_phase_distribution(A, 0.1)
    assert len(exact) == 25
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-12)
    N = 1_000_000
    rng = np.random.default_rng(11)
    counts: dict = {}
    for _ in range(4):
        g = sample_dags(A, N // 4, 0.1, rng).reshape(N // 4, 9) @ (1 << np.arange(9))
        for code, c in zip(*np.unique(g, return_counts=True)):
            counts[int(code)] = counts.get(int(code), 0) + int(c)
    tv = 0.5 * sum(abs(counts.get(k, 0) / N - p) for k, p in exact.items())
    tv += 0.5 * sum(c / N for k, c in counts.items() if k not in exact)
    assert tv <= 0.02


def test_hypothesis_set_count_and_acyclicity():
    sp = StructuralParams(np.random.default_rng(0).normal(size=(6, 6)))
    graphs = sample_hypothesis_set(sp, 100, 0.1, np.random.default_rng(1))
    assert len(graphs) == 100
    assert all(isinstance(g, Dag) and is_acyclic(g.adj) for g in graphs)


def test_peaked_gamma_recovers_chain():
    gamma = np.where(structured_graph("chain", 3).adj == 1, 20.0, -20.0)
    graphs = sample_hypothesis_set(StructuralParams(gamma), 1000, 0.1, np.random.default_rng(2))
    share = np.mean([g == structured_graph("chain", 3) for g in graphs])
    assert share >= 0.99


def test_same_seed_same_set():
    sp = StructuralParams(np.random.default_rng(0).normal(size=(5, 5)))
    a = sample_hypothesis_set(sp, 30, 0.1, np.random.default_rng(9))
    b = sample_hypothesis_set(sp, 30, 0.1, np.random.default_rng(9))
    assert a == b


def test_single_node():
    assert sample_hypothesis_set(np.zeros((1, 1)), 3, 0.1, 0) == [Dag.empty(1)] * 3


def test_acyclicity_fuzz():
    rng = np.random.default_rng(5)
    total = 0
    for t in (0.01, 0.1, 1.0, 10.0):
        for _ in range(25):
            n = int(rng.integers(2, 9))
            A = rng.random((n, n))
            np.fill_diagonal(A, 0)
            graphs = sample_dags(A, 100, t, rng)
            assert all(is_acyclic(g) for g in graphs)
            total += len(graphs)
    assert total == 10_000


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_edge_marginal_bound(seed):
    rng = np.random.default_rng(seed)
    A = rng.random((4, 4)) * (rng.random((4, 4)) < 0.6)
    np.fill_diagonal(A, 0)
    graphs = sample_dags(A, 4000, 0.1, rng)
    marg = graphs.mean(axis=0)
    assert np.all(marg[A == 0] == 0)
    tol = 4 * np.sqrt(A * (1 - A) / 4000) + 1e-12
    assert np.all(marg <= A + tol)


def test_all_labelled_three_node_dags_reachable():
    A = 0.5 * (1.0 - np.eye(3))
    g = sample_dags(A, 50_000, 0.1, np.random.default_rng(0)).reshape(-1, 9) @ (1 << np.arange(9))
    assert len(np.unique(g)) == 25
    assert math.isclose(sum(two_phase_distribution(A, 0.1).values()), 1.0)


@pytest.mark.parametrize("t", [0.1, 0.5])
def test_ordering_log_prob_grad_matches_finite_differences(t):
    rng = np.random.default_rng(0)
    A = rng.uniform(0.05, 0.95, size=(4, 4))
    np.fill_diagonal(A, 0)
    orders = sample_orderings(A, t, 5, rng)
    grad = ordering_log_prob_grad(A, orders, t)
    eps = 1e-6
    for k, order in enumerate(orders):
        numeric = np.zeros((4, 4))
        for i, j in itertools.permutations(range(4), 2):
            B = A.copy()
            B[i, j] += eps
            up = np.log(ordering_probability(B, order, t))
            B[i, j] -= 2 * eps
            numeric[i, j] = (up - np.log(ordering_probability(B, order, t))) / (2 * eps)
        assert np.max(np.abs(grad[k] - numeric)) < 1e-6


def test_ordering_log_prob_grad_has_zero_mean():
    A = np.array([[0.0, 0.7, 0.2], [0.4, 0.0, 0.9], [0.6, 0.1, 0.0]])
    mean = sum(ordering_probability(A, order, 0.3) * ordering_log_prob_grad(A, np.array([order]), 0.3)[0]
               for order in itertools.permutations(range(3)))
    assert np.allclose(mean, 0.0, atol=1e-12)


def test_constant_matrix_matches_general_path():
    # the equal-entries shortcut must give the same law as the step-by-step draw
    A = 0.7 * (1.0 - np.eye(4))
    fast = sample_orderings(A, 0.3, 48_000, np.random.default_rng(0)) @ np.array([64, 16, 4, 1])
    slow, _ = sample_orderings(A, 0.3, 48_000, np.random.default_rng(1), keep_probs=True)
    slow = slow @ np.array([64, 16, 4, 1])
    perms = np.array([np.dot(p, [64, 16, 4, 1]) for p in itertools.permutations(range(4))])
    table = np.array([[(fast == c).sum() for c in perms], [(slow == c).sum() for c in perms]])
    assert table.sum() == 96_000
    assert stats.chi2_contingency(table).pvalue > 1e-3
