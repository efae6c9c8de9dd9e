"""Discretized QVE instances and checks of the structural assumptions.

A model is the triple (pi, a, s) on a finite index set: positive weights pi
summing to one, a real field a and a symmetric nonnegative kernel s. The
integral operator acts as ``(S w)_x = sum_y s_xy pi_y w_y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AsymmetricKernel, DimensionMismatch, NegativeEntry

__all__ = [
    "QveModel",
    "AssumptionReport",
    "build_model",
    "check_primitivity",
    "check_diagonal_positivity",
    "regularity_probe",
    "check_assumptions",
    "model_to_dict",
]

SYMMETRY_TOL = 1e-12


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QveModel:
    """Immutable discretized QVE data.

    Use :func:`build_model` to construct one; it validates and renormalizes.
    """

    weights: np.ndarray
    a: np.ndarray
    s: np.ndarray
    op_norm: float = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "s", _frozen(self.s))
        op_norm = float(np.max(self.s @ self.weights)) if self.n else 0.0
        object.__setattr__(self, "op_norm", op_norm)
        a_sup = float(np.max(np.abs(self.a))) if self.n else 0.0
        object.__setattr__(self, "kappa", a_sup + 2.0 * np.sqrt(op_norm))

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])

    @property
    def a_sup(self) -> float:
        return float(np.max(np.abs(self.a)))

    @cached_property
    def s_weighted(self) -> np.ndarray:
        """Matrix of S acting on coordinate vectors: ``s_xy * pi_y``."""
        sw = self.s * self.weights[None, :]
        sw.setflags(write=False)
        return sw

    def apply_s(self, m):
        """``S m`` for a vector (n,) or a stack of vectors (..., n)."""
        return np.asarray(m) @ self.s_weighted.T

    def average(self, w):
        """``<w> = sum_x pi_x w_x`` along the last axis."""
        return np.asarray(w) @ self.weights

    def compress(self):
        """Merge components with identical ``(a_x, s_x.)`` rows.

        Such components carry equal solution values by uniqueness of the QVE
        solution, so solving the merged model and expanding with ``labels`` is
        exact. Returns ``(reduced_model, labels)`` with ``labels[x]`` the
        class of component ``x``.
        """
        rows = np.concatenate([self.a[:, None], self.s], axis=1)
        _, first, labels = np.unique(rows, axis=0, return_index=True, return_inverse=True)
        labels = np.asarray(labels).ravel()
        k = len(first)
        if k == self.n:
            return self, np.arange(self.n)
        weights = np.bincount(labels, weights=self.weights, minlength=k)
        reduced = QveModel(weights, self.a[first], self.s[np.ix_(first, first)])
        return reduced, labels

    def __repr__(self):
        return f"QveModel(n={self.n}, op_norm={self.op_norm:.6g}, kappa={self.kappa:.6g})"


def build_model(weights, a, s) -> QveModel:
    """Validate inputs and return a :class:`QveModel` with weights summing to one."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = weights.shape[0]
    if weights.ndim != 1 or a.shape != (n,) or s.shape != (n, n) or n < 1:
        raise DimensionMismatch(
            f"inconsistent shapes: weights {weights.shape}, a {a.shape}, s {s.shape}"
        )
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(a)) and np.all(np.isfinite(s))):
        raise NegativeEntry("model data must be finite")
    if np.any(weights <= 0):
        raise NegativeEntry("weights must be strictly positive")
    if np.any(s < 0):
        raise NegativeEntry(f"kernel has negative entries (min {s.min():.3g})")
    asym = float(np.max(np.abs(s - s.T)))
    if asym > SYMMETRY_TOL:
        raise AsymmetricKernel(f"kernel asymmetry {asym:.3g} exceeds {SYMMETRY_TOL}")
    s = 0.5 * (s + s.T)
    return QveModel(weights / weights.sum(), a, s)


def model_to_dict(model: QveModel) -> dict:
    return {
        "n": model.n,
        "weights": model.weights.tolist(),
        "a": model.a.tolist(),
        "s": model.s.tolist(),
    }


# -- assumption checks -------------------------------------------------------

@dataclass
class AssumptionReport:
    """Advisory summary of the (A)/(B)/(C) checks on one model."""

    primitivity_k: int | None
    diagonal_strip: tuple[float, float] | None
    regularity_value: float
    k_max: int = 0
    strip_eps: float = 0.0
    probe_eps: float = 0.0

    def to_dict(self) -> dict:
        return {
            "primitivity_k": self.primitivity_k,
            "diagonal_strip": None if self.diagonal_strip is None else list(self.diagonal_strip),
            "regularity_value": self.regularity_value,
            "k_max": self.k_max,
            "strip_eps": self.strip_eps,
            "probe_eps": self.probe_eps,
        }


def check_primitivity(model: QveModel, k_max: int = 10) -> int | None:
    """Smallest ``K <= k_max`` whose kernel power ``s^(K)`` is entrywise positive.

    Only the positivity pattern matters (weights are positive), so the powers
    are computed on boolean patterns; this avoids underflow for long chains.
    """
    pattern = (model.s > 0).astype(float)
    power = pattern.copy()
    for k in range(1, k_max + 1):
        if np.all(power > 0):
            return k
        power = ((power @ pattern) > 0).astype(float)
    return None


def _grid_positions(n):
    return (np.arange(n) + 0.5) / n


def check_diagonal_positivity(model: QveModel, strip_eps: float, positions=None):
    """Certificate ``(c, eps)`` for a positive strip ``s_xy >= c`` on ``|x-y| <= eps``.

    ``positions`` default to the midpoint grid of [0, 1]. Returns ``None`` when
    the strip minimum is not positive.
    """
    if strip_eps <= 0:
        raise ValueError("strip_eps must be positive")
    x = _grid_positions(model.n) if positions is None else np.asarray(positions, dtype=float)
    near = np.abs(x[:, None] - x[None, :]) <= strip_eps + 1e-15
    c = float(model.s[near].min())
    if c > 0:
        return (c, float(strip_eps))
    return None


def _row_distance_sq(model: QveModel) -> np.ndarray:
    # <(S_x - S_y)^2> = sum_u pi_u (s_xu - s_yu)^2, via the weighted Gram matrix
    sw = model.s * np.sqrt(model.weights)[None, :]
    sq = np.einsum("ij,ij->i", sw, sw)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (sw @ sw.T)
    return np.maximum(d2, 0.0)


def regularity_probe(model: QveModel, eps: float) -> float:
    """Evaluate the component-regularity integral at a finite ``eps``.

    Returns ``min_x sum_y pi_y / (eps + (a_x-a_y)^2 + <(S_x-S_y)^2>)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    da = (model.a[:, None] - model.a[None, :]) ** 2
    denom = eps + da + _row_distance_sq(model)
    return float(np.min((model.weights[None, :] / denom).sum(axis=1)))


def check_assumptions(model: QveModel, k_max=10, strip_eps=None, probe_eps=1e-4) -> AssumptionReport:
    if strip_eps is None:
        strip_eps = 1.0 / model.n
    return AssumptionReport(
        primitivity_k=check_primitivity(model, k_max),
        diagonal_strip=check_diagonal_positivity(model, strip_eps),
        regularity_value=regularity_probe(model, probe_eps),
        k_max=k_max,
        strip_eps=float(strip_eps),
        probe_eps=float(probe_eps),
    )
