import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activecausal.graphs import structured_graph
from activecausal.ncm import (Adam, FunctionalParams, NeuralCausalModel, StructuralParams,
                              conditional_logits, forward, load_checkpoint, nll_and_grad,
                              node_log_probs, optimizer_step, save_checkpoint, soft_adjacency)
from activecausal.scm import ancestral_sample, init_mlp_scm
from activecausal.utils import InvalidArgumentError


def dense_logits(fp, i, x, mask):
    """Loop-based forward pass written without numpy broadcasting."""
    n, m, h = fp.n, fp.m, fp.hidden
    u = [0.0] * (n * m)
    for j in range(n):
        if mask[j]:
            u[j * m + int(x[j])] = 1.0
    hid = []
    for k in range(h):
        z = fp.b1[i, k] + sum(fp.W1[i, k, c] * u[c] for c in range(n * m))
        hid.append(z if z > 0 else 0.1 * z)
    return np.array([fp.b2[i, c] + sum(fp.W2[i, c, k] * hid[k] for k in range(h)) for c in range(m)])


class TestSoftAdjacency:
    def test_zero_is_half(self):
        A = soft_adjacency(StructuralParams.zeros(3))
        assert np.all(A[~np.eye(3, dtype=bool)] == 0.5)

    def test_saturation(self):
        assert soft_adjacency(np.full((2, 2), 20.0))[0, 1] == pytest.approx(1.0, abs=1e-8)

    def test_diagonal_pinned(self):
        assert np.all(np.diag(soft_adjacency(np.full((4, 4), 7.0))) == 0)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=2))
    def test_monotone(self, pair):
        lo, hi = sorted(pair)
        a = soft_adjacency(np.array([[0.0, lo], [0.0, 0.0]]))[0, 1]
        b = soft_adjacency(np.array([[0.0, hi], [0.0, 0.0]]))[0, 1]
        assert a <= b


class TestConditionalLogits:
    def setup_method(self):
        self.fp = FunctionalParams.init(3, 2, 8, np.random.default_rng(0))
        self.fp.b2[:] = np.random.default_rng(1).normal(size=self.fp.b2.shape)

    def test_self_must_be_masked(self):
        with pytest.raises(InvalidArgumentError):
            conditional_logits(self.fp, 1, [0, 1, 0], [1, 1, 0])

    def test_empty_mask_is_bias_only(self):
        a = conditional_logits(self.fp, 0, [0, 0, 0], [0, 0, 0])
        b = conditional_logits(self.fp, 0, [1, 1, 1], [0, 0, 0])
        fp = self.fp
        h = fp.b1[0]
        bias_only = fp.W2[0] @ np.where(h > 0, h, 0.1 * h) + fp.b2[0]
        assert np.array_equal(a, b)
        assert np.allclose(a, bias_only, atol=1e-12)

    def test_matches_dense_oracle(self):
        for x in ([0, 1, 1], [1, 0, 1]):
            got = conditional_logits(self.fp, 2, x, [1, 1, 0])
            assert np.allclose(got, dense_logits(self.fp, 2, x, [1, 1, 0]), atol=1e-12)

    def test_batched_forward_agrees(self):
        X = np.array([[0, 1, 1], [1, 0, 0], [1, 1, 0]])
        mask = structured_graph("full", 3).adj
        Z2, _ = forward(self.fp, X, mask)
        for i in range(3):
            for b in range(3):
                assert np.allclose(Z2[i, b], conditional_logits(self.fp, i, X[b], mask[i]), atol=1e-12)

    @given(st.integers(0, 2), st.lists(st.integers(0, 1), min_size=3, max_size=3),
           st.lists(st.integers(0, 1), min_size=3, max_size=3),
           st.lists(st.integers(0, 1), min_size=3, max_size=3))
    @settings(max_examples=100)
    def test_masked_coordinates_ignored(self, i, mask, x, flip):
        mask[i] = 0
        y = [xv ^ (f and not mv) for xv, f, mv in zip(x, flip, mask)]
        a = conditional_logits(self.fp, i, x, mask)
        b = conditional_logits(self.fp, i, y, mask)
        assert np.array_equal(a, b)


def _loss(fp, X, masks):
    return nll_and_grad(fp, X, masks).loss


def _max_rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


@pytest.mark.parametrize("per_sample", [False, True])
def test_gradient_check(per_sample):
    rng = np.random.default_rng(3)
    fp = FunctionalParams.init(3, 2, 6, rng)
    fp.b2[:] = rng.normal(size=fp.b2.shape)
    X = rng.integers(0, 2, size=(7, 3))
    if per_sample:
        masks = (rng.random((7, 3, 3)) < 0.5).astype(int)
        masks[:, np.arange(3), np.arange(3)] = 0
    else:
        masks = structured_graph("chain", 3).adj
    bundle = nll_and_grad(fp, X, masks)
    eps = 1e-4
    for name, grad in zip(FunctionalParams.NAMES, bundle.arrays()):
        param = getattr(fp, name)
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            old = param[idx]
            param[idx] = old + eps
            up = _loss(fp, X, masks)
            param[idx] = old - eps
            down = _loss(fp, X, masks)
            param[idx] = old
            numeric[idx] = (up - down) / (2 * eps)
        assert _max_rel_error(grad, numeric) < 1e-4, name


def test_initial_loss_near_ln2():
    fp = FunctionalParams.init(4, 2, 32, np.random.default_rng(0))
    X = np.random.default_rng(1).integers(0, 2, size=(256, 4))
    loss = nll_and_grad(fp, X, structured_graph("full", 4).adj).loss
    assert abs(loss - np.log(2)) < 0.2


def test_gradient_shapes():
    fp = FunctionalParams.init(3, 3, 5, 0)
    bundle = nll_and_grad(fp, np.zeros((4, 3), dtype=int), np.zeros((3, 3), dtype=int))
    for a, b in zip(bundle.arrays(), fp.arrays()):
        assert a.shape == b.shape
    assert np.isfinite(bundle.loss)


def test_training_reduces_loss_on_chain3():
    rng = np.random.default_rng(0)
    dag = structured_graph("chain", 3)
    scm = init_mlp_scm(dag, 2, 32, rng)
    model = NeuralCausalModel.init(3, 2, 32, 1e-3, rng)
    test = ancestral_sample(scm, None, 2000, rng).values
    before = -node_log_probs(model.functional, test, dag.adj).mean()
    params = model.functional.arrays()
    for _ in range(2000):
        X = ancestral_sample(scm, None, 64, rng).values
        model.optimizer.step(params, nll_and_grad(model.functional, X, dag.adj).arrays())
    after = -node_log_probs(model.functional, test, dag.adj).mean()
    assert after < before


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = [np.array([1.5, -2.0])]
        opt = Adam(1e-3)
        for _ in range(10):
            opt.step(p, [np.zeros(2)])
        assert np.all(np.abs(p[0] - [1.5, -2.0]) < 1e-12)

    def test_constant_gradient_direction(self):
        p = [np.zeros(2)]
        opt = Adam(1e-2)
        for _ in range(100):
            opt.step(p, [np.array([1.0, -3.0])])
        assert p[0][0] < 0 < p[0][1]

    def test_quadratic_bowl(self):
        # f(x, y) = (x - 3)^2 + 2 (y + 1)^2, minimum at (3, -1)
        p = [np.zeros(2)]
        opt = Adam(1e-2)
        for _ in range(5000):
            x, y = p[0]
            opt.step(p, [np.array([2 * (x - 3), 4 * (y + 1)])])
        assert np.allclose(p[0], [3.0, -1.0], atol=1e-3)

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(FloatingPointError, match="parameter 0"):
            Adam().step([np.zeros(2)], [np.array([np.nan, 0.0])])

    def test_optimizer_step_sets_lr(self):
        opt = optimizer_step([np.zeros(1)], [np.ones(1)], Adam(), lr=0.5)
        assert opt.lr == 0.5 and opt.t == 1

    def test_deterministic(self):
        def run():
            p = [np.zeros(3)]
            opt = Adam(0.1)
            for k in range(20):
                opt.step(p, [np.sin(np.arange(3) + k)])
            return p[0]
        assert np.array_equal(run(), run())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = NeuralCausalModel.init(3, 2, 4, 1e-3, 0)
        model.structural.gamma[0, 1] = 1.25
        model.optimizer.step(model.functional.arrays(), [np.ones_like(a) for a in model.functional.arrays()])
        save_checkpoint(model, tmp_path / "c.json", {"a": 1}, {"note": "x"})
        loaded, extra = load_checkpoint(tmp_path / "c.json", {"a": 1})
        assert extra == {"note": "x"}
        assert np.array_equal(loaded.structural.gamma, model.structural.gamma)
        for a, b in zip(loaded.functional.arrays(), model.functional.arrays()):
            assert np.array_equal(a, b)
        assert loaded.optimizer.t == 1

    def test_config_mismatch(self, tmp_path):
        save_checkpoint(NeuralCausalModel.init(2, rng=0), tmp_path / "c.json", {"a": 1})
        with pytest.raises(ValueError, match="different config"):
            load_checkpoint(tmp_path / "c.json", {"a": 2})
