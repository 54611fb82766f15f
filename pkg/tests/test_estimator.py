import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from activecausal import SDIDiscovery
from activecausal.graphs import structured_graph
from activecausal.scm import Environment, init_mlp_scm

TINY = dict(functional_iters=20, batch_size=32, scoring_graphs=4, scoring_batches=2,
            interventions_per_phase2=3, ait_graphs=4, ait_samples=16)


def env(seed=0):
    scm = init_mlp_scm(structured_graph("chain", 3), 2, 8, np.random.default_rng(seed))
    return Environment(scm, 0.0, np.random.default_rng(seed + 1))


def test_params_round_trip_through_clone():
    est = SDIDiscovery(strategy="random", budget=7, random_state=3, **TINY)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert est.set_params(budget=9).budget == 9


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        SDIDiscovery().predict_graph()


def test_fit_sets_attributes():
    est = SDIDiscovery(budget=3, random_state=0, **TINY).fit(env())
    assert est.n_features_in_ == 3
    assert est.soft_adjacency_.shape == (3, 3)
    assert len(est.history_) == 3
    assert est.score(env()) == -est.history_.final_shd or est.adjacency_ is None
    assert est.predict_graph().dtype.kind in "iub"


def test_fit_rejects_arrays():
    with pytest.raises(TypeError):
        SDIDiscovery().fit(np.zeros((5, 3)))


def test_same_seed_same_fit():
    a = SDIDiscovery(budget=3, random_state=5, **TINY).fit(env())
    b = SDIDiscovery(budget=3, random_state=5, **TINY).fit(env())
    assert np.array_equal(a.soft_adjacency_, b.soft_adjacency_)


def test_score_is_negative_shd():
    est = SDIDiscovery(budget=0, random_state=0, **TINY).fit(env())
    truth = structured_graph("chain", 3)
    assert est.score(truth) <= 0
    assert est.score(truth) == est.score(env())
