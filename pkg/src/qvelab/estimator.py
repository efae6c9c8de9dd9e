"""scikit-learn style wrapper around the density pipeline.

``QVEDensity().fit(model)`` solves on a real grid and extracts the density;
``predict(taus)`` interpolates the average density and ``transform(zs)``
returns solution vectors at arbitrary upper half-plane points. The "data"
passed to ``fit`` is a model, not a sample matrix, so only the parameter
handling and the fit/predict/transform surface follow the usual conventions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .density import DensityProfile, detect_support, extract_density
from .ensembles import model_from_dict
from .errors import QveInputError
from .model import QveModel, build_model
from .solver import default_eta_ladder, solve_grid, solve_many

__all__ = ["QVEDensity", "check_model", "check_spectral_parameters"]


def check_model(model) -> QveModel:
    """Coerce a model, a JSON-style dict, a path to JSON or a ``(weights, a, s)`` triple."""
    if isinstance(model, QveModel):
        return model
    if isinstance(model, dict):
        return model_from_dict(model)
    if isinstance(model, (str, Path)):
        return model_from_dict(json.loads(Path(model).read_text()))
    if isinstance(model, (tuple, list)) and len(model) == 3:
        return build_model(*model)
    raise QveInputError(f"cannot interpret {type(model).__name__} as a model")


def check_spectral_parameters(zs) -> np.ndarray:
    zs = np.atleast_1d(np.asarray(zs, dtype=complex)).ravel()
    if np.any(~np.isfinite(zs)):
        raise QveInputError("spectral parameters must be finite")
    if np.any(zs.imag <= 0):
        raise QveInputError("spectral parameters must satisfy Im z > 0")
    return zs


class QVEDensity(BaseEstimator):
    """Density of states of a QVE model on ``[tau_min, tau_max]``.

    Parameters
    ----------
    tau_min, tau_max, tau_count : grid of real parts.
    eta_max, eta_min, eta_ratio : geometric ladder of imaginary parts.
    tol : solver residual tolerance.
    extrapolation : ``"richardson"`` or ``"last"``.
    compress : merge identical components before solving.
    """

    def __init__(self, tau_min=-3.0, tau_max=3.0, tau_count=601, eta_max=1e-1, eta_min=1e-6,
                 eta_ratio=10 ** -0.5, tol=1e-11, extrapolation="richardson", compress=True):
        self.tau_min = tau_min
        self.tau_max = tau_max
        self.tau_count = tau_count
        self.eta_max = eta_max
        self.eta_min = eta_min
        self.eta_ratio = eta_ratio
        self.tol = tol
        self.extrapolation = extrapolation
        self.compress = compress

    def fit(self, X, y=None):
        model = check_model(X)
        if not self.tau_min < self.tau_max or self.tau_count < 2:
            raise QveInputError("need tau_min < tau_max and tau_count >= 2")
        taus = np.linspace(self.tau_min, self.tau_max, self.tau_count)
        etas = default_eta_ladder(self.eta_max, self.eta_min, self.eta_ratio)
        grid = solve_grid(model, taus, etas, tol=self.tol, compress=self.compress)
        profile = extract_density(grid, self.extrapolation)
        detect_support(profile)
        self.model_ = model
        self.profile_: DensityProfile = profile
        self.support_ = list(profile.support)
        return self

    def predict(self, taus):
        """Average density at ``taus`` (linear interpolation, zero off the grid)."""
        check_is_fitted(self, "profile_")
        taus = np.asarray(taus, dtype=float)
        return np.interp(taus, self.profile_.taus, self.profile_.avg, left=0.0, right=0.0)

    def transform(self, X):
        """Solution vectors ``m(z)``, one row per spectral parameter."""
        check_is_fitted(self, "profile_")
        zs = check_spectral_parameters(X)
        m, _, _ = solve_many(self.model_, zs, tol=self.tol)
        return m

    def score(self, X, y):
        """Negative mean absolute error between ``predict(X)`` and reference densities ``y``."""
        return -float(np.mean(np.abs(self.predict(X) - np.asarray(y, dtype=float))))
