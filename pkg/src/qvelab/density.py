"""Generating density ``v = Im m / pi`` on the real line.

Real-axis values are obtained from solves at small ``eta`` either by taking
the smallest level or by linear Richardson extrapolation in ``eta`` from the
two smallest levels. In the bulk ``Im m`` is analytic in ``eta`` so the
extrapolation is very accurate; near singular points it is not, and the
per-point ``error_estimate`` says so.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientEtaLevels, NonPositiveImaginaryPart, QveInputError, TooCloseToGrid
from .model import QveModel
from .solver import SolutionGrid, _default_max_iter, _predict, _solve_rows, solve_many

__all__ = [
    "DensityProfile",
    "extract_density",
    "detect_support",
    "density_at",
    "stieltjes_reconstruct",
    "moments",
    "diagnostics_bounds",
    "holder_diagnostic",
    "write_density_csv",
    "write_support_json",
]

log = logging.getLogger(__name__)

MAX_ETA_FLOOR = 1e-4
THRESHOLD_FLOOR = 1e-14
REFINE_POINTS = 16
REFINE_ROUNDS = 8


@dataclass
class DensityProfile:
    """Per-component density on a real grid.

    ``v`` has shape ``(n, len(taus))``. ``etas`` are the two levels the
    extrapolation used (larger first); ``clamped`` marks grid points where a
    negative extrapolated value was set to zero.
    """

    taus: np.ndarray
    v: np.ndarray
    avg: np.ndarray
    support: list = field(default_factory=list)
    eta_floor: float = 0.0
    error_estimate: np.ndarray | None = None
    clamped: np.ndarray | None = None
    extrapolation: str = "richardson"
    etas: tuple = ()
    model: QveModel | None = None
    solved_model: QveModel | None = None
    labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def weights(self) -> np.ndarray:
        if self.model is not None:
            return self.model.weights
        return np.full(self.n, 1.0 / self.n)

    def mass(self) -> np.ndarray:
        """Per-component trapezoid mass."""
        return np.trapezoid(self.v, self.taus, axis=1)

    def support_dicts(self):
        return [{"left": float(l), "right": float(r)} for l, r in self.support]


def _richardson(v_hi, v_lo, eta_hi, eta_lo):
    # linear model v(eta) = v0 + c eta through both levels
    return v_lo - eta_lo * (v_hi - v_lo) / (eta_hi - eta_lo)


def extract_density(grid: SolutionGrid, extrapolation: str = "richardson") -> DensityProfile:
    """Real-axis density from the two smallest ``eta`` levels of ``grid``."""
    if extrapolation not in ("last", "richardson"):
        raise QveInputError(f"unknown extrapolation {extrapolation!r}")
    etas = np.asarray(grid.etas)
    if etas.size < 2:
        raise InsufficientEtaLevels("density extraction needs at least two eta levels")
    if etas[-1] > MAX_ETA_FLOOR:
        raise InsufficientEtaLevels(f"smallest eta {etas[-1]:.3g} exceeds {MAX_ETA_FLOOR}")
    eta_hi, eta_lo = float(etas[-2]), float(etas[-1])
    v_hi = grid.m[-2].imag.T / np.pi  # (k, T)
    v_lo = grid.m[-1].imag.T / np.pi
    if extrapolation == "richardson":
        v = _richardson(v_hi, v_lo, eta_hi, eta_lo)
    else:
        v = v_lo.copy()
    solved = grid.solved_model if grid.solved_model is not None else grid.model
    avg_hi = solved.weights @ v_hi
    avg_lo = solved.weights @ v_lo
    err = np.abs(avg_hi - avg_lo)
    neg = v < 0
    clamped = neg.any(axis=0)
    if clamped.any():
        log.info("clamped %d negative extrapolated values", int(neg.sum()))
    v = np.where(neg, 0.0, v)
    avg = solved.weights @ v
    if grid.labels is not None:
        v = v[grid.labels]
    profile = DensityProfile(
        taus=np.asarray(grid.taus, dtype=float), v=v, avg=avg, support=[],
        eta_floor=eta_lo, error_estimate=err, clamped=clamped, extrapolation=extrapolation,
        etas=(eta_hi, eta_lo), model=grid.model, solved_model=solved, labels=grid.labels,
    )
    return profile


def density_at(model: QveModel, taus, eta: float, eta_hi: float | None = None,
               extrapolation="richardson", tol=1e-12):
    """Fresh solves on ``taus`` and the (extrapolated) density there.

    Returns ``(v, avg)`` with ``v`` of shape ``(model.n, len(taus))``.
    ``eta_hi`` defaults to ``10 eta``.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if eta <= 0:
        raise NonPositiveImaginaryPart("eta must be positive")
    if extrapolation == "richardson":
        eta_hi = 10.0 * eta if eta_hi is None else float(eta_hi)
        hi, _, _ = solve_many(model, taus + 1j * eta_hi, tol=tol)
        lo, _, _ = _descend(model, taus, eta_hi, eta, hi, tol)
        v = _richardson(hi.imag.T / np.pi, lo.imag.T / np.pi, eta_hi, eta)
    else:
        lo, _, _ = solve_many(model, taus + 1j * eta, tol=tol)
        v = lo.imag.T / np.pi
    v = np.maximum(v, 0.0)
    return v, model.weights @ v


def _descend(model, taus, eta_from, eta_to, m_from, tol):
    """Continue solutions from ``eta_from`` down to ``eta_to`` (with a fallback to a cold start)."""
    z = taus + 1j * eta_to
    try:
        m0 = _predict(model, taus + 1j * eta_from, z, m_from)
        mi = _default_max_iter(model, eta_to, tol)
        m, r, it, conv = _solve_rows(model, z, m0, tol, mi)
        if conv.all():
            return m, r, it
    except (FloatingPointError, np.linalg.LinAlgError):
        pass
    return solve_many(model, z, tol=tol)


def _refine_boundary(model, inside, outside, threshold, eta, eta_hi, extrapolation):
    """Shrink the bracket [inside, outside] around the crossing of ``threshold``."""
    for _ in range(REFINE_ROUNDS):
        pts = np.linspace(inside, outside, REFINE_POINTS + 2)[1:-1]
        _, rho = density_at(model, pts, eta, eta_hi, extrapolation)
        above = rho > threshold
        # last point (walking from inside) that is still above the threshold
        k = 0
        while k < above.size and above[k]:
            k += 1
        new_inside = inside if k == 0 else pts[k - 1]
        new_outside = outside if k == above.size else pts[k]
        inside, outside = new_inside, new_outside
        if abs(outside - inside) < 1e-13 * max(1.0, abs(inside)):
            break
    return 0.5 * (inside + outside)


def detect_support(profile: DensityProfile, threshold: float | None = None, refine: bool = True):
    """Intervals where the average density exceeds ``threshold``.

    The default threshold is ten times the largest extrapolation error
    estimate. Isolated single-point dropouts inside a run are bridged.
    Endpoints are refined by multisection on fresh solves at the profile's
    ``eta`` levels when the profile carries a model. The result is stored on
    ``profile.support`` and returned.
    """
    if threshold is None:
        err = profile.error_estimate
        threshold = 10.0 * float(np.max(err)) if err is not None and err.size else 0.0
        threshold = max(threshold, THRESHOLD_FLOOR)
    if threshold <= 0:
        raise QveInputError("threshold must be positive")
    taus, rho = profile.taus, profile.avg
    mask = rho > threshold
    if mask.size >= 3:
        bridge = ~mask[1:-1] & mask[:-2] & mask[2:]
        mask[1:-1] |= bridge
    intervals = []
    j = 0
    T = mask.size
    model = profile.solved_model if profile.solved_model is not None else profile.model
    while j < T:
        if not mask[j]:
            j += 1
            continue
        k = j
        while k + 1 < T and mask[k + 1]:
            k += 1
        left, right = float(taus[j]), float(taus[k])
        if refine and model is not None and profile.etas:
            eta_hi, eta_lo = profile.etas
            if j > 0:
                left = _refine_boundary(model, taus[j], taus[j - 1], threshold, eta_lo, eta_hi,
                                        profile.extrapolation)
            if k < T - 1:
                right = _refine_boundary(model, taus[k], taus[k + 1], threshold, eta_lo, eta_hi,
                                         profile.extrapolation)
        intervals.append((left, right))
        j = k + 1
    if profile.model is not None:
        kap = profile.model.kappa
        intervals = [(max(l, -kap), min(r, kap)) for l, r in intervals if min(r, kap) >= max(l, -kap)]
    profile.support = intervals
    return intervals


def stieltjes_reconstruct(profile: DensityProfile, z):
    """Trapezoid quadrature of ``int v_x(tau)/(tau - z) dtau``."""
    z = complex(z)
    if z.imag <= 0:
        raise NonPositiveImaginaryPart("z must lie in the upper half-plane")
    taus = profile.taus
    spacing = float(np.max(np.diff(taus))) if taus.size > 1 else 0.0
    if float(np.min(np.abs(taus - z))) < spacing:
        raise TooCloseToGrid(f"z={z} is within one grid spacing of the tau grid")
    return np.trapezoid(profile.v / (taus - z)[None, :], taus, axis=1)


def moments(profile: DensityProfile) -> np.ndarray:
    """Per-component ``(mu0, mu1, mu2)``, shape ``(n, 3)``."""
    t = profile.taus
    powers = np.stack([np.ones_like(t), t, t * t])
    return np.stack([np.trapezoid(profile.v * p[None, :], t, axis=1) for p in powers], axis=1)


def diagnostics_bounds(grid: SolutionGrid) -> dict:
    """Size and comparability of the computed solution over the grid.

    ``blowup`` is set when some ``|m_x|`` comes within a factor 10 of the
    trivial bound ``1/eta``, the signature of an atom (assumptions violated).
    """
    m = grid.m
    am = np.abs(m)
    im = m.imag
    ratio = float(np.max(im.max(axis=-1) / im.min(axis=-1))) if m.size else float("nan")
    etas = np.asarray(grid.etas)
    kap = grid.model.kappa
    covers = bool(grid.taus.size and grid.taus.min() <= -2 * kap and grid.taus.max() >= 2 * kap)
    if not covers:
        log.debug("grid does not cover |tau| <= 2 kappa = %.4g", 2 * kap)
    scaled = am.max(axis=(1, 2)) * etas if m.size else np.zeros(0)
    return {
        "min_abs_m": float(am.min()) if m.size else float("nan"),
        "max_abs_m": float(am.max()) if m.size else float("nan"),
        "comparability_ratio": ratio,
        "comparability_by_eta": [float(np.max(im[i].max(axis=-1) / im[i].min(axis=-1)))
                                 for i in range(etas.size)] if m.size else [],
        "covers_2kappa": covers,
        "blowup": bool(np.any(scaled > 0.1)),
    }


def holder_diagnostic(profile: DensityProfile, exponent: float = 1.0 / 3.0) -> float:
    """``max_{t1 != t2} ||v(t1) - v(t2)||_inf / |t1 - t2|^exponent`` on the grid."""
    taus = profile.taus
    if taus.size < 2:
        return 0.0
    v = np.unique(profile.v, axis=0)  # identical components add nothing
    best = 0.0
    chunk = max(1, 2_000_000 // max(v.shape[0] * taus.size, 1))
    for lo in range(0, taus.size, chunk):
        hi = min(lo + chunk, taus.size)
        diff = np.abs(v[:, lo:hi, None] - v[:, None, :]).max(axis=0)
        dist = np.abs(taus[lo:hi, None] - taus[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, diff / dist**exponent, 0.0)
        best = max(best, float(q.max()))
    return best


# -- export ------------------------------------------------------------------

def _fmt(x) -> str:
    return "%.17g" % x


def write_density_csv(profile: DensityProfile, fh) -> None:
    """Columns ``tau, v_1 ... v_n, rho_avg, error_estimate``."""
    w = csv.writer(fh, lineterminator="\n")
    n = profile.n
    w.writerow(["tau"] + [f"v_{i + 1}" for i in range(n)] + ["rho_avg", "error_estimate"])
    err = profile.error_estimate if profile.error_estimate is not None else np.full(profile.taus.size, math.nan)
    for j, tau in enumerate(profile.taus):
        w.writerow([_fmt(tau)] + [_fmt(x) for x in profile.v[:, j]] + [_fmt(profile.avg[j]), _fmt(err[j])])


def write_support_json(profile: DensityProfile, fh) -> None:
    json.dump(profile.support_dicts(), fh)
