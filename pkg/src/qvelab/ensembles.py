"""Example models and low-dimensional oracles.

Continuous profiles on [0, 1] are sampled at the midpoints ``(i + 1/2)/n`` of a
uniform grid with weights ``1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphaOutOfRange,
    BranchUndefined,
    ComplexKernel,
    DegenerateBlock,
    MaxIterExceeded,
    NegativeKernel,
    NonPositiveImaginaryPart,
    QveInputError,
)
from .model import QveModel, build_model

__all__ = [
    "BlockParams",
    "semicircle_model",
    "semicircle_exact",
    "block_model",
    "block_size",
    "delta_critical",
    "reduced_block_solve",
    "reduced_block_quartic",
    "deformed_wigner_model",
    "two_point_profile",
    "translation_invariant_model",
    "holder_model",
    "constant_model",
    "model_from_dict",
]

KERNEL_TOL = 1e-10


def _midpoints(n):
    return (np.arange(n) + 0.5) / n


def constant_model(n, value=1.0, a=None):
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    return build_model(np.full(n, 1.0 / n), a, np.full((n, n), float(value)))


def semicircle_model(n=1) -> QveModel:
    """Constant kernel ``s = 1`` with ``a = 0``: the semicircle law on [-2, 2]."""
    if n < 1:
        raise QveInputError("n must be >= 1")
    return constant_model(n, 1.0)


def semicircle_exact(z, variance=1.0):
    """Closed-form solution of ``-1/m = z + variance * m``.

    For ``Im z > 0`` the root in the upper half-plane; for real ``|z| > 2 sqrt(variance)``
    the real root of modulus below ``1/sqrt(variance)`` (the boundary value of the
    Stieltjes transform). Vectorized over ``z``.
    """
    z = np.asarray(z, dtype=complex)
    edge = 2.0 * math.sqrt(variance)
    real_axis = z.imag == 0
    if np.any(real_axis & (np.abs(z.real) < edge)):
        raise BranchUndefined("real z inside the support has no single real branch")
    if np.any(z.imag < 0):
        raise NonPositiveImaginaryPart("semicircle_exact needs Im z >= 0")
    # roots of variance*m^2 + z m + 1 = 0; their product is 1/variance
    r = np.sqrt(z * z - 4.0 * variance)
    big = np.where(np.abs(-z + r) >= np.abs(-z - r), (-z + r), (-z - r)) / (2.0 * variance)
    small = 1.0 / (variance * big)
    upper = np.where(small.imag >= big.imag, small, big)
    out = np.where(real_axis, small, upper)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BlockParams:
    alpha: float
    beta: float
    gamma: float
    delta: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise QveInputError("alpha, beta, gamma must be positive")
        if not (0 < self.delta <= 0.5):
            raise QveInputError("delta must lie in (0, 1/2]")


def block_size(delta, n) -> int:
    """Number of grid points in I = [0, delta]: ``ceil(delta n)``.

    A relative slack of 1e-9 keeps exact products such as ``(1/126) * 504``
    from rounding up.
    """
    return int(math.ceil(delta * n - 1e-9 * max(1.0, delta * n)))


def block_model(params: BlockParams, n: int) -> QveModel:
    """2x2 block profile with I the first ``ceil(delta n)`` points."""
    k = block_size(params.delta, n)
    if n < 2 or k < 1 or k >= n:
        raise DegenerateBlock(f"block of size {k} out of {n} points is degenerate")
    s = np.full((n, n), params.gamma)
    s[:k, :] = params.beta
    s[:, :k] = params.beta
    s[:k, :k] = params.alpha
    return build_model(np.full(n, 1.0 / n), np.zeros(n), s)


def delta_critical(alpha: float) -> float:
    """Small-block fraction at which the ``beta=1, gamma=1/alpha`` profile develops a cusp."""
    if alpha <= 2:
        raise AlphaOutOfRange("delta_critical needs alpha > 2")
    return (alpha - 2) ** 3 / (9 * (alpha**3 - 2 * alpha**2 + 2 * alpha - 1))


def _reduced_coefficients(params: BlockParams):
    d = params.delta
    return (params.alpha * d, params.beta * (1 - d), params.beta * d, params.gamma * (1 - d))


def reduced_block_solve(params: BlockParams, z, tol=1e-13, max_iter=200_000):
    """Solve the two-component system of a block model at ``z``.

    ``-1/mu = z + alpha d mu + beta (1-d) nu`` and
    ``-1/nu = z + beta d mu + gamma (1-d) nu`` by the contraction iteration
    from ``(i, i)``, walked down in ``Im z`` and finished with 2x2 Newton steps.
    """
    z = complex(z)
    if z.imag <= 0:
        raise NonPositiveImaginaryPart("Im z must be positive")
    A, B, C, D = _reduced_coefficients(params)
    mat = np.array([[A, B], [C, D]])
    u = np.array([1j, 1j])

    def phi(v, zz):
        return -1.0 / (zz + mat @ v)

    eta_levels = [z.imag]
    e = 1.0
    while e > z.imag:
        eta_levels.insert(-1, e)
        e *= 0.1
    for eta in eta_levels:
        zz = z.real + 1j * eta
        for _ in range(max_iter):
            p = phi(u, zz)
            r = np.max(np.abs(p - u))
            if r <= tol:
                break
            if r < 0.5:
                jac = np.eye(2) - (u * p)[:, None] * mat
                step = np.linalg.solve(jac, p - u)
                cand = u + step
                if np.all(cand.imag > 0) and np.max(np.abs(phi(cand, zz) - cand)) < r:
                    u = cand
                    continue
            u = p
        else:
            raise MaxIterExceeded(f"reduced block solve did not converge at z={zz}",
                                  last_iterate=u, residual=float(r))
    return complex(u[0]), complex(u[1])


def reduced_block_quartic(params: BlockParams, z):
    """Independent oracle: roots of the quartic obtained by eliminating ``nu``.

    Returns the unique pair with both imaginary parts positive.
    """
    A, B, C, D = _reduced_coefficients(params)
    P = np.polynomial.Polynomial
    z = complex(z)
    N = P([-1.0, -z, -A])  # -(1 + z mu + A mu^2) = B mu nu
    mu = P([0.0, 1.0])
    poly = B * B * mu * mu + B * mu * P([z, C]) * N + D * N * N
    best = None
    for root in poly.roots():
        if abs(root) == 0:
            continue
        nu = N(root) / (B * root)
        if root.imag > 0 and nu.imag > 0:
            res = abs(1 / root + z + A * root + B * nu) + abs(1 / nu + z + C * root + D * nu)
            if best is None or res < best[2]:
                best = (complex(root), complex(nu), res)
    if best is None:
        raise BranchUndefined(f"no upper half-plane root pair at z={z}")
    return best[0], best[1]


def deformed_wigner_model(lam: float, a_profile, n: int | None = None) -> QveModel:
    """Constant kernel ``lam`` with diagonal field ``a``."""
    a = np.asarray(a_profile, dtype=float)
    if n is None:
        n = a.size
    if a.size != n:
        raise QveInputError("a_profile must have length n")
    if lam <= 0:
        raise QveInputError("lambda must be positive")
    return constant_model(n, lam, a)


def two_point_profile(n, value=1.0):
    """``+value`` on the first half of the indices, ``-value`` on the second."""
    a = np.full(n, -float(value))
    a[: n // 2] = value
    return a


def translation_invariant_model(cov, n: int):
    """Kernel ``s_xy = 4 sum_pq exp(-2 pi i (p x - q y)) cov[p, q]`` on the midpoint grid.

    ``cov`` maps integer pairs ``(p, q)`` to correlation values. Returns
    ``(model, clamped)`` where ``clamped`` reports whether tiny negative values
    were set to zero.
    """
    x = _midpoints(n)
    s = np.zeros((n, n), dtype=complex)
    for (p, q), c in dict(cov).items():
        s += 4.0 * complex(c) * np.outer(np.exp(-2j * np.pi * p * x), np.exp(2j * np.pi * q * x))
    if np.max(np.abs(s.imag)) > KERNEL_TOL:
        raise ComplexKernel(f"kernel has imaginary part {np.max(np.abs(s.imag)):.3g}")
    s = s.real
    if s.min() < -KERNEL_TOL:
        raise NegativeKernel(f"kernel has negative values down to {s.min():.3g}")
    clamped = bool(s.min() < 0)
    s = np.maximum(s, 0.0)
    s = 0.5 * (s + s.T)
    return build_model(np.full(n, 1.0 / n), np.zeros(n), s), clamped


def holder_model(n: int, base=1.0, amplitude=1.0, exponent=0.5):
    """Continuous kernel ``base + amplitude |x - y|^exponent`` with ``a = 0``."""
    x = _midpoints(n)
    s = base + amplitude * np.abs(x[:, None] - x[None, :]) ** exponent
    return build_model(np.full(n, 1.0 / n), np.zeros(n), s)


def model_from_dict(spec: dict) -> QveModel:
    """Build a model from its JSON form.

    Either explicit ``{"n", "weights", "a", "s"}`` or a ``"kernel"`` shorthand
    ``{"type": "block" | "constant" | "semicircle" | "deformed" |
    "translation_invariant" | "holder", ...}``.
    """
    if not isinstance(spec, dict):
        raise QveInputError("model specification must be a JSON object")
    kernel = spec.get("kernel")
    if kernel is None:
        try:
            weights, a, s = spec["weights"], spec["a"], spec["s"]
        except KeyError as exc:
            raise QveInputError(f"model JSON lacks field {exc}") from None
        model = build_model(weights, a, s)
        if "n" in spec and int(spec["n"]) != model.n:
            raise QveInputError("field n disagrees with the data")
        return model
    kind = kernel.get("type")
    n = int(kernel.get("n", spec.get("n", 100)))
    if kind in ("constant", "semicircle"):
        return constant_model(n, float(kernel.get("value", 1.0)))
    if kind == "block":
        params = BlockParams(
            float(kernel.get("alpha", 3.0)),
            float(kernel.get("beta", 1.0)),
            float(kernel.get("gamma", 1.0 / float(kernel.get("alpha", 3.0)))),
            float(kernel["delta"]) if "delta" in kernel
            else delta_critical(float(kernel.get("alpha", 3.0))),
        )
        return block_model(params, n)
    if kind == "deformed":
        a = kernel.get("a")
        if a is None:
            a = two_point_profile(n, float(kernel.get("a_value", 1.0)))
        return deformed_wigner_model(float(kernel.get("lambda", 1.0)), a, n)
    if kind == "translation_invariant":
        if "cov" not in kernel:
            raise QveInputError("translation_invariant kernel needs 'cov' as [[p, q, value], ...]")
        # a value may be a number or a [re, im] pair
        cov = {(int(p), int(q)): complex(*v) if isinstance(v, (list, tuple)) else complex(v)
               for p, q, v in kernel["cov"]}
        return translation_invariant_model(cov, n)[0]
    if kind == "holder":
        return holder_model(n, float(kernel.get("base", 1.0)), float(kernel.get("amplitude", 1.0)),
                            float(kernel.get("exponent", 0.5)))
    raise QveInputError(f"unknown kernel type {kind!r}")
