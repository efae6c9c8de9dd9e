from __future__ import annotations

import json
import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qvelab import QVEDensity
from qvelab.ensembles import semicircle_exact, semicircle_model
from qvelab.errors import QveInputError
from qvelab.estimator import check_model, check_spectral_parameters


@pytest.fixture(scope="module")
def fitted():
    return QVEDensity(tau_count=121, eta_min=1e-5).fit(semicircle_model(3))


def test_fit_predict(fitted):
    taus = np.array([-1.0, 0.0, 1.5, 2.5, 10.0])
    exact = np.sqrt(np.clip(4 - taus**2, 0, None)) / (2 * np.pi)
    assert fitted.predict(taus) == pytest.approx(exact, abs=2e-3)
    assert len(fitted.support_) == 1
    assert fitted.profile_.v.shape == (3, 121)


def test_transform_and_score(fitted):
    zs = [1j, 0.5 + 0.1j]
    m = fitted.transform(zs)
    assert m.shape == (2, 3)
    assert np.allclose(m, semicircle_exact(np.array(zs))[:, None], atol=1e-10)
    taus = np.linspace(-1, 1, 5)
    assert fitted.score(taus, np.sqrt(4 - taus**2) / (2 * np.pi)) > -1e-3
    with pytest.raises(QveInputError):
        fitted.transform([0.5])


def test_not_fitted_and_bad_grid():
    with pytest.raises(NotFittedError):
        QVEDensity().predict([0.0])
    with pytest.raises(QveInputError):
        QVEDensity(tau_min=1.0, tau_max=0.0).fit(semicircle_model(1))


def test_params_roundtrip():
    est = QVEDensity(tau_count=11, extrapolation="last")
    params = est.get_params()
    assert params["tau_count"] == 11 and params["extrapolation"] == "last"
    twin = clone(est).set_params(tau_count=21)
    assert twin.tau_count == 21 and est.tau_count == 11


def test_check_model_variants(tmp_path):
    spec = {"n": 2, "weights": [1, 1], "a": [0, 0], "s": [[1, 1], [1, 1]]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(spec))
    models = [check_model(spec), check_model(path), check_model(str(path)),
              check_model(([1, 1], [0, 0], [[1, 1], [1, 1]]))]
    for model in models:
        assert model.n == 2 and np.allclose(model.s, 1.0)
    assert check_model(models[0]) is models[0]
    with pytest.raises(QveInputError):
        check_model(3.0)


def test_check_spectral_parameters():
    assert check_spectral_parameters(1j).shape == (1,)
    with pytest.raises(QveInputError):
        check_spectral_parameters([1 + 0j])
    with pytest.raises(QveInputError):
        check_spectral_parameters([complex(math.inf, 1)])
