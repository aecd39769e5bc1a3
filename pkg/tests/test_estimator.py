import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pcam.estimator import PCAMRegistration
from pcam.exceptions import ParameterError
from pcam.geometry import RigidTransform
from pcam.pipeline import load_pairs

from conftest import tiny_config


@pytest.fixture(scope="module")
def fitted():
    cfg = tiny_config()
    est = PCAMRegistration.from_config(cfg)
    est.fit(load_pairs(cfg, "train"), X_val=load_pairs(cfg, "val"))
    return est, cfg


def test_params_roundtrip():
    est = PCAMRegistration(n_layers=3, kappa=0.1, tau=0.2)
    params = est.get_params()
    assert params["n_layers"] == 3 and params["kappa"] == 0.1 and params["tau"] == 0.2
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(k=8)
    assert est.k == 8


def test_from_config_maps_sections():
    cfg = tiny_config("optim.learning_rate=0.01", "train.seed=7", "eval.re_max_deg=5")
    est = PCAMRegistration.from_config(cfg)
    assert est.learning_rate == 0.01 and est.random_state == 7
    assert est.channels == (3, 8) and est.n_layers == 1
    assert np.isclose(est.re_max, np.radians(5))


def test_not_fitted(rng):
    pair = (rng.normal(size=(10, 3)), rng.normal(size=(10, 3)))
    with pytest.raises(NotFittedError):
        PCAMRegistration().predict([pair])


def test_fit_records_history(fitted):
    est, cfg = fitted
    assert [r["epoch"] for r in est.history_] == [1, 2]
    # step decay after the first epoch
    assert est.history_[0]["lr"] == 1e-3 and np.isclose(est.history_[1]["lr"], 1e-4)
    assert all(np.isfinite(r["total"]) for r in est.history_)
    assert est.tau_ in cfg.eval.tau_grid
    for p in est.network_.parameters:
        assert np.array_equal(p.data, p.data.astype(np.float32).astype(np.float64))


def test_predict_and_score(fitted):
    est, cfg = fitted
    test = load_pairs(cfg, "test")
    transforms = est.predict(test)
    assert len(transforms) == len(test) and all(isinstance(T, RigidTransform) for T in transforms)
    assert 0.0 <= est.score(test) <= 1.0
    # tuples without ground truth are fine for predict
    assert len(est.predict([(p.P, p.Q) for p in test])) == len(test)


def test_failed_registration_falls_back_to_identity(fitted):
    est, cfg = fitted
    results = est.evaluate(load_pairs(cfg, "test"), tau=1.0)
    assert all(r.failed and not r.success for r in results)


def test_fit_is_deterministic(fitted):
    est, cfg = fitted
    again = PCAMRegistration.from_config(cfg).fit(load_pairs(cfg, "train"), X_val=load_pairs(cfg, "val"))
    assert est.history_ == again.history_
    for a, b in zip(est.network_.parameters, again.network_.parameters):
        assert np.array_equal(a.data, b.data)


def test_input_validation(rng):
    est = PCAMRegistration(k=6, conf_k=6)
    with pytest.raises(ParameterError):
        est.fit([])
    with pytest.raises(ParameterError):
        est.fit([(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)))])
    with pytest.raises(ParameterError):
        est.fit([(rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), RigidTransform.identity())])
    with pytest.raises(ParameterError):
        est.fit([(rng.normal(size=(10, 2)), rng.normal(size=(10, 3)), RigidTransform.identity())])
