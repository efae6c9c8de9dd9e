"""The stability operator F and its spectral data.

``F`` acts on functions on the index set as
``(F w)_x = |m_x| sum_y s_xy pi_y |m_y| w_y``. It is self-adjoint on
``L^2(pi)``; in the orthonormal coordinates ``e = sqrt(pi) w`` it becomes the
symmetric matrix ``K = sqrt(pi) |m| s |m| sqrt(pi)``. Everything below works
with ``K`` and converts back to function coordinates where a function is
returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GapTooSmall, QveInputError, SingularMatrix, ZeroComponent
from .model import QveModel

__all__ = [
    "SpectralData",
    "build_F",
    "perron",
    "spectral_data",
    "check_radius_relation",
    "gap_lower_bound",
    "resolvent_Q",
    "bulk_stability_norm",
    "inverse_bound_probe",
]

DEGENERATE_GAP = 1e-12
MIN_GAP = 1e-8


@dataclass
class SpectralData:
    """Spectral radius, Perron eigenfunction and gap of F at one point.

    ``f`` is in function coordinates with ``<f^2> = 1``; ``weights`` is the
    measure used for that normalization. ``eigvals``/``eigvecs`` hold the
    full decomposition of the symmetrized matrix for reuse.
    """

    z: complex | float | None
    radius: float
    f: np.ndarray
    gap: float
    weights: np.ndarray
    degenerate_top: bool = False
    eigvals: np.ndarray = field(default=None, repr=False)
    eigvecs: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        z = None if self.z is None else [float(np.real(self.z)), float(np.imag(self.z))]
        return {"z": z, "radius": float(self.radius), "gap": float(self.gap),
                "f": [float(v) for v in self.f]}


def build_F(model: QveModel, m) -> np.ndarray:
    """Symmetrized matrix of F for the solution values ``m``."""
    am = np.abs(np.asarray(m))
    if am.shape != (model.n,):
        raise QveInputError(f"m must have shape ({model.n},)")
    if np.any(am == 0):
        raise ZeroComponent("F is undefined when a component of m vanishes")
    sw = np.sqrt(model.weights)
    v = sw * am
    return v[:, None] * model.s * v[None, :]


def perron(F_matrix, weights=None, z=None) -> SpectralData:
    """Full eigendecomposition of the symmetric matrix ``F_matrix``.

    The radius is the largest absolute eigenvalue, ``f`` the eigenvector of
    the largest eigenvalue made nonnegative and normalized in ``L^2(weights)``
    (uniform weights if omitted), and the gap the difference of the two
    largest absolute eigenvalues. With a single component the second
    eigenvalue is taken to be zero.
    """
    K = np.asarray(F_matrix, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or np.max(np.abs(K - K.T), initial=0.0) > 1e-10 * max(1.0, np.abs(K).max(initial=0.0)):
        raise QveInputError("perron needs a symmetric square matrix")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (K + K.T))
    absvals = np.sort(np.abs(vals))[::-1]
    radius = float(absvals[0])
    second = float(absvals[1]) if n > 1 else 0.0
    gap = max(radius - second, 0.0)
    e = vecs[:, -1]
    if e.sum() < 0:
        e = -e
    e = np.abs(e) if np.all(e >= -1e-12) else e
    f = e / np.sqrt(w)
    f = f / np.sqrt(np.sum(w * f * f))
    return SpectralData(z=z, radius=radius, f=f, gap=gap, weights=w,
                        degenerate_top=gap < DEGENERATE_GAP, eigvals=vals, eigvecs=vecs)


def spectral_data(model: QveModel, m, z=None) -> SpectralData:
    """Convenience: ``perron(build_F(model, m))`` with the model weights."""
    return perron(build_F(model, m), model.weights, z)


def check_radius_relation(model: QveModel, z, m, spectral: SpectralData) -> float:
    """Defect of ``||F||_2 = 1 - <f|m|> Im z / <f Im m / |m|>``."""
    m = np.asarray(m)
    am = np.abs(m)
    f = spectral.f
    rhs = 1.0 - model.average(f * am) * np.imag(z) / model.average(f * m.imag / am)
    return float(abs(spectral.radius - rhs))


def gap_lower_bound(F_matrix, f, weights=None) -> float:
    """``(||f||_2/||f||_inf)^2 inf_xy t_xy`` with ``t`` the kernel of F w.r.t. the measure."""
    K = np.asarray(F_matrix, dtype=float)
    n = K.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    f = np.asarray(f, dtype=float)
    sw = np.sqrt(w)
    t = K / np.outer(sw, sw)
    norm2_sq = float(np.sum(w * f * f))
    return norm2_sq / float(np.max(np.abs(f))) ** 2 * float(t.min())


def resolvent_Q(F_matrix, f, rhs, weights=None, spectral: SpectralData | None = None):
    """Solve ``(1 - F) w = rhs`` on the orthogonal complement of ``f``.

    The top eigenpair is deflated: with ``e`` the coordinate vector of ``f``,
    ``A = 1 - K + lambda_1 e e^T`` acts as the identity on ``e`` and as
    ``1 - K`` on its complement, so one dense solve suffices even when the
    radius equals one.
    """
    K = np.asarray(F_matrix, dtype=float)
    n = K.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if spectral is None:
        spectral = perron(K, w)
    if spectral.gap < MIN_GAP:
        raise GapTooSmall(f"spectral gap {spectral.gap:.3g} below {MIN_GAP}")
    sw = np.sqrt(w)
    rhs = np.asarray(rhs)
    r = sw * rhs
    e = sw * np.asarray(f, dtype=float)
    e = e / np.linalg.norm(e)
    overlap = float(abs(e @ r))
    if overlap > 1e-10 * max(np.linalg.norm(r), 1e-300) and overlap > 1e-300:
        raise QveInputError(f"rhs is not orthogonal to f (overlap {overlap:.3g})")
    if not np.any(r):
        return np.zeros_like(rhs)
    A = np.eye(n) - K + spectral.radius * np.outer(e, e)
    try:
        x = np.linalg.solve(A, r)
    except np.linalg.LinAlgError as exc:
        raise GapTooSmall("deflated operator is singular") from exc
    x = x - e * (e @ x)
    return x / sw


def bulk_stability_norm(model: QveModel, z, m) -> float:
    """``||(1 - diag(m^2) S)^-1||_inf`` (maximal absolute row sum)."""
    m = np.asarray(m, dtype=complex)
    jac = np.eye(model.n) - (m * m)[:, None] * model.s_weighted
    try:
        inv = np.linalg.inv(jac)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"1 - m^2 S is singular at z={z}") from exc
    if not np.all(np.isfinite(inv)):
        raise SingularMatrix(f"1 - m^2 S is singular at z={z}")
    return float(np.max(np.abs(inv).sum(axis=1)))


def inverse_bound_probe(U_diag, F_matrix, f, weights=None) -> float:
    """``||(U - F)^-1||_2 * gap * |1 - radius <f, U f>|`` for a unimodular multiplier U."""
    U = np.asarray(U_diag, dtype=complex)
    if np.max(np.abs(np.abs(U) - 1.0)) > 1e-10:
        raise QveInputError("U must be unimodular")
    K = np.asarray(F_matrix, dtype=float)
    n = K.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    spectral = perron(K, w)
    M = np.diag(U) - K
    svals = np.linalg.svd(M, compute_uv=False)
    if svals[-1] <= 1e-14 * max(svals[0], 1.0):
        raise SingularMatrix("U - F is singular")
    f = np.asarray(f, dtype=float)
    f = f / np.sqrt(np.sum(w * f * f))
    overlap = np.sum(w * f * f * U)
    return float(spectral.gap * abs(1.0 - spectral.radius * overlap) / svals[-1])
