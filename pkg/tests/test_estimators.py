import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from fifo_tap.dynamic import DynODPair, DynamicNetwork, PointQueueLink, split_profile
from fifo_tap.elastic import LinearDemand
from fifo_tap.estimators import DynamicAssignment, ElasticAssignment, StaticAssignment
from fifo_tap.exceptions import ValidationError
from fifo_tap.network import Route, parallel_links

from .conftest import KNOWN_EQUILIBRIA

INTERIOR_UE = np.array(KNOWN_EQUILIBRIA[6][0])


def net3():
    return parallel_links([10, 20, 25], [2, 4, 3], 10)


def test_static_fit_defaults_to_equal_split():
    est = StaticAssignment(net3()).fit()
    assert est.kind_ == "UE"
    np.testing.assert_allclose(est.equilibrium_, INTERIOR_UE, atol=1e-3)
    assert est.n_features_in_ == 3


def test_static_transform_and_predict():
    X = np.array([[10.0, 0, 0], [0, 10.0, 0], [2.0, 3.0, 5.0]])
    est = StaticAssignment(net3(), perturb=False).fit(X)
    labels = est.predict(X)
    assert list(labels) == ["PUE", "PUE", "UE"]
    out = StaticAssignment(net3()).fit(X).transform(X)
    np.testing.assert_allclose(out, np.tile(INTERIOR_UE, (3, 1)), atol=1e-2)


def test_get_params_and_clone():
    est = StaticAssignment(net3(), delta_tau=1e-3)
    params = est.get_params()
    assert params["delta_tau"] == 1e-3 and params["perturb"] is True
    twin = clone(est).set_params(tau_max=2.0)
    assert twin.tau_max == 2.0 and est.tau_max == 1.0


def test_not_fitted_and_bad_input():
    est = StaticAssignment(net3())
    with pytest.raises(NotFittedError):
        est.transform([[10.0, 0, 0]])
    est.fit()
    with pytest.raises(ValidationError):
        est.transform([[5.0, 5.0]])
    with pytest.raises(ValueError):
        est.transform([[-1.0, 6.0, 5.0]])
    with pytest.raises(ValueError):
        est.transform([[np.nan, 5.0, 5.0]])
    with pytest.raises(ValidationError):
        StaticAssignment(None).fit()


def test_pipeline_composition():
    pipe = make_pipeline(StaticAssignment(net3()))
    out = pipe.fit_transform(np.array([[3.0, 3.0, 4.0]]))
    np.testing.assert_allclose(out[0], INTERIOR_UE, atol=1e-2)


def test_elastic_assignment():
    net = parallel_links([10], [2], 1.0)
    est = ElasticAssignment(net, [LinearDemand(40, 2)]).fit(np.array([[1.0]]))
    assert est.kind_ == "UE"
    assert est.demand_[0] == pytest.approx(3.92094176, abs=1e-4)
    out = est.transform(np.array([[6.0]]))
    assert out[0, 0] == pytest.approx(3.92094176, abs=1e-4)


def test_dynamic_assignment():
    links = (PointQueueLink(1, 1, 2, 1.0, 1.0), PointQueueLink(2, 1, 2, 2.0, 1.0))
    net = DynamicNetwork(links, (DynODPair(1, 2, (5.0,) * 20),), (Route(0, (1,)), Route(0, (2,))))
    est = DynamicAssignment(net).fit()
    assert est.kind_ == "UE"
    assert est.equilibrium_.shape == (2, 20)
    assert est.report_.cumulative_at(1.0)[0] == pytest.approx(3.125, rel=0.02)
    X = split_profile(net, 1.0).reshape(1, -1)
    assert list(est.predict(X)) == ["PUE"]
    with pytest.raises(ValidationError):
        est.transform(np.ones((1, 5)))
