"""Classification of support boundary points as edges or cusps.

At a point ``tau0`` where the density vanishes, the behaviour of ``v`` nearby
is governed by two real numbers computed from ``m(tau0)`` and the Perron
eigenfunction ``f`` of the stability operator:
``sigma = <f^3 sign m>`` and ``psi = <Qw (1+F)(1-F)^-1 Qw>`` with
``w = f^2 sign m``. A nonzero ``sigma`` gives a square-root edge, a vanishing
one a cubic-root cusp.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityProfile, density_at, detect_support
from .errors import (
    AmbiguousSign,
    DivisionDegenerate,
    EmptyWindow,
    NonPositiveDensity,
    QveInputError,
    TooLargeForExact,
)
from .model import QveModel
from .solver import solve_at
from .stability import SpectralData, build_F, perron, resolvent_Q, spectral_data

__all__ = [
    "Kind",
    "SingularityReport",
    "sigma_psi",
    "classify",
    "predicted_amplitude",
    "fit_exponent",
    "local_profile",
    "connectivity_test",
    "row_distances",
    "find_singular_points",
    "analyze_point",
    "analyze",
    "reports_to_json",
]

log = logging.getLogger(__name__)

CUSP_TOL = 0.05
BOUNDARY_ETA = 1e-6
SIGN_TOL = 1e-6
DENOM_TOL = 1e-12
EXACT_LIMIT = 20
# eta levels for locating zeros of the density
LOCATE_ETA = 1e-10
LOCATE_THRESHOLD = 1e-7
SCALING_ETAS = (1e-8, 1e-10)
EDGE_ROUNDS = 6


class Kind(str, enum.Enum):
    LEFT_EDGE = "left_edge"
    RIGHT_EDGE = "right_edge"
    CUSP = "cusp"

    @property
    def is_edge(self) -> bool:
        return self is not Kind.CUSP


@dataclass
class SingularityReport:
    tau0: float
    kind: Kind
    sigma: float
    psi: float
    fitted_exponent: float
    fitted_amplitude: np.ndarray
    predicted_amplitude: np.ndarray
    stability: float
    radius: float = float("nan")
    gap: float = float("nan")
    geometry: str = ""
    window: tuple = ()
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tau0": float(self.tau0),
            "kind": self.kind.value,
            "sigma": float(self.sigma),
            "psi": float(self.psi),
            "fitted_exponent": float(self.fitted_exponent),
            "predicted_amplitude": [float(c) for c in self.predicted_amplitude],
            "fitted_amplitude": [float(c) for c in self.fitted_amplitude],
            "stability": float(self.stability),
        }


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports])


# -- cubic-equation coefficients ---------------------------------------------

def sigma_psi(model: QveModel, tau0, m_real, spectral: SpectralData):
    """``(sigma, psi)`` at a boundary point from the solution and its spectral data."""
    m_real = np.asarray(m_real)
    re = np.real(m_real)
    if np.any(np.abs(re) < SIGN_TOL):
        raise AmbiguousSign(f"Re m vanishes at tau0={tau0} (min |Re m| = {np.abs(re).min():.3g})")
    sign = np.sign(re)
    f = spectral.f
    w_meas = model.weights
    sigma = float(np.sum(w_meas * f**3 * sign))
    w = f * f * sign
    qw = w - np.sum(w_meas * f * w) * f
    K = build_F(model, m_real)
    if not np.any(np.abs(qw) > 1e-14):
        return sigma, 0.0
    y = resolvent_Q(K, f, qw, w_meas, spectral)
    sw = np.sqrt(w_meas)
    fy = (K @ (sw * y)) / sw
    psi = float(np.sum(w_meas * qw * (y + fy)))
    return sigma, psi


def classify(sigma: float, psi: float = 0.0, cusp_tol: float = CUSP_TOL) -> Kind:
    """Cusp when ``|sigma| <= cusp_tol``; otherwise the edge whose support lies opposite ``sign sigma``."""
    if abs(sigma) <= cusp_tol:
        return Kind.CUSP
    return Kind.RIGHT_EDGE if sigma < 0 else Kind.LEFT_EDGE


def predicted_amplitude(kind: Kind, m_real, spectral: SpectralData, sigma: float, psi: float,
                        weights=None):
    """Leading coefficient ``c_x`` of ``v_x(tau0 + omega)`` for the given kind."""
    am = np.abs(np.asarray(m_real))
    f = spectral.f
    w = spectral.weights if weights is None else np.asarray(weights)
    mf = float(np.sum(w * am * f))
    if Kind(kind).is_edge:
        if abs(sigma) < DENOM_TOL:
            raise DivisionDegenerate("|sigma| too small for an edge amplitude")
        return (mf / abs(sigma)) ** 0.5 * am * f / math.pi
    if psi < DENOM_TOL:
        raise DivisionDegenerate("psi too small for a cusp amplitude")
    return math.sqrt(3.0) / (2.0 * math.pi) * (mf / psi) ** (1.0 / 3.0) * am * f


# -- exponent fitting --------------------------------------------------------

def _side_offsets(taus, tau0, side):
    t = np.asarray(taus) - tau0
    if side == "+":
        return t > 0
    if side == "-":
        return t < 0
    if side == "both":
        return t != 0
    raise QveInputError(f"side must be '+', '-' or 'both', got {side!r}")


def fit_exponent(profile: DensityProfile, tau0: float, side: str, window):
    """Log-log slope of the average density at ``tau0 +- omega`` over ``window``.

    Returns ``(exponent, amplitudes)``. Amplitudes are per component, the
    intercepts of ``log v_x - exponent log omega`` with the fitted exponent
    held fixed.
    """
    w_min, w_max = map(float, window)
    if not (0 < w_min < w_max):
        raise EmptyWindow(f"invalid window {window}")
    taus = np.asarray(profile.taus)
    sel = _side_offsets(taus, tau0, side)
    om = np.abs(taus - tau0)
    inwin = sel & (om >= w_min * (1 - 1e-12)) & (om <= w_max * (1 + 1e-12))
    idx = np.flatnonzero(inwin)
    if idx.size < 3:
        raise EmptyWindow(f"fewer than 3 grid points in window {window} on side {side}")
    # the grid must resolve the smallest offsets
    near = idx[np.argmin(om[idx])]
    nbrs = [j for j in (near - 1, near + 1) if 0 <= j < taus.size]
    spacing = min(abs(taus[j] - taus[near]) for j in nbrs)
    if w_min <= 3 * spacing:
        raise EmptyWindow(f"window start {w_min:.3g} not above 3 grid spacings ({spacing:.3g})")
    rho = profile.avg[idx]
    v = profile.v[:, idx]
    if np.any(rho <= 0) or np.any(v <= 0):
        raise NonPositiveDensity(f"density vanishes inside window {window} at tau0={tau0}")
    x = np.log(om[idx])
    slope, _ = np.polyfit(x, np.log(rho), 1)
    amps = np.exp(np.mean(np.log(v) - slope * x[None, :], axis=1))
    return float(slope), amps


def local_profile(model: QveModel, tau0: float, side: str, window, points_per_decade=20,
                  eta: float | None = None, labels=None) -> DensityProfile:
    """Density on log-spaced offsets ``tau0 +- omega`` covering ``window``.

    Solves at ``eta`` (default ``1e-3 * omega_min``) and ``10 eta`` and
    extrapolates; ``labels`` expands a compressed model's components.
    """
    w_min, w_max = map(float, window)
    if not (0 < w_min < w_max):
        raise EmptyWindow(f"invalid window {window}")
    decades = math.log10(w_max / w_min)
    k = max(int(math.ceil(decades * points_per_decade)) + 1, 3)
    om = np.logspace(math.log10(w_min), math.log10(w_max), k)
    parts = []
    if side in ("-", "both"):
        parts.append(tau0 - om[::-1])
    if side in ("+", "both"):
        parts.append(tau0 + om)
    if not parts:
        raise QveInputError(f"side must be '+', '-' or 'both', got {side!r}")
    taus = np.concatenate(parts)
    eta = 1e-3 * w_min if eta is None else float(eta)
    v, avg = density_at(model, taus, eta)
    if labels is not None:
        v = v[labels]
    return DensityProfile(taus=taus, v=v, avg=avg, eta_floor=eta, extrapolation="richardson",
                          etas=(10 * eta, eta), model=model)


# -- connectivity ------------------------------------------------------------

def row_distances(model: QveModel) -> np.ndarray:
    """``d_xy = |a_x - a_y| + <|S_x - S_y|>`` for every pair."""
    n = model.n
    d = np.abs(model.a[:, None] - model.a[None, :])
    s, w = model.s, model.weights
    chunk = max(1, 4_000_000 // max(n * n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d[lo:hi] += np.abs(s[lo:hi, None, :] - s[None, :, :]) @ w
    return d


def connectivity_test(model: QveModel, mode: str = "exact", tol: float = 1e-2):
    """Witness for the connectedness of the rows ``(a_x, S_x)``.

    The witness is the maximum over index sets ``A`` of the smallest row
    distance between ``A`` and its complement. ``exact`` enumerates all
    subsets (``n <= 20``); ``prefix`` only uses initial segments of the index
    order, which certifies connectedness for kernels sampled from a
    continuous profile. Returns ``(witness <= tol, witness)``.
    """
    n = model.n
    if n == 1:
        return True, 0.0
    d = row_distances(model)
    if mode == "prefix":
        best = 0.0
        for k in range(1, n):
            best = max(best, float(d[:k, k:].min()))
        return best <= tol, best
    if mode != "exact":
        raise QveInputError(f"mode must be 'exact' or 'prefix', got {mode!r}")
    if n > EXACT_LIMIT:
        raise TooLargeForExact(f"exact enumeration is limited to n <= {EXACT_LIMIT}")
    # the last index always lies in the complement, so every cut appears once
    codes = np.arange(1, 2 ** (n - 1), dtype=np.int64)
    member = ((codes[:, None] >> np.arange(n - 1)) & 1).astype(bool)
    member = np.concatenate([member, np.zeros((codes.size, 1), dtype=bool)], axis=1)
    pairs = sorted(itertools.combinations(range(n), 2), key=lambda p: d[p])
    crossing = np.full(codes.size, np.nan)
    open_ = np.ones(codes.size, dtype=bool)
    for x, y in pairs:
        hit = open_ & (member[:, x] != member[:, y])
        crossing[hit] = d[x, y]
        open_ &= ~hit
        if not open_.any():
            break
    best = float(np.nanmax(crossing))
    return best <= tol, best


# -- locating singular points --------------------------------------------------

def _rho(model, taus, eta, extrapolation):
    return density_at(model, taus, eta, extrapolation=extrapolation)[1]


def _argmin_rho(model, lo, hi, eta, points=41, rounds=8):
    """Multisection search for the minimum of the density at ``eta``."""
    best_t, best_v = 0.5 * (lo + hi), math.inf
    for _ in range(rounds):
        ts = np.linspace(lo, hi, points)
        vals = _rho(model, ts, eta, "last")
        k = int(np.argmin(vals))
        best_t, best_v = float(ts[k]), float(vals[k])
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, points - 1)]
    return best_t, best_v


def _edge_crossing(model, inside, outside, threshold=LOCATE_THRESHOLD, eta=LOCATE_ETA):
    """Boundary of the support between a point inside and one outside it."""
    inside, outside = float(inside), float(outside)
    for _ in range(EDGE_ROUNDS):
        ts = np.linspace(inside, outside, 18)[1:-1]
        above = _rho(model, ts, eta, "richardson") > threshold
        k = 0
        while k < above.size and above[k]:
            k += 1
        inside, outside = (inside if k == 0 else ts[k - 1]), (outside if k == above.size else ts[k])
        if abs(outside - inside) < 1e-12 * max(1.0, abs(inside)):
            break
    return 0.5 * (inside + outside)


def _outward(model, start, direction, step, threshold=LOCATE_THRESHOLD):
    """First point beyond ``start`` in ``direction`` where the density is below threshold."""
    t = start
    for _ in range(60):
        t = t + direction * step
        if _rho(model, [t], LOCATE_ETA, "richardson")[0] <= threshold:
            return t
        step *= 2.0
    raise QveInputError("could not bracket a support edge")


def find_singular_points(profile: DensityProfile, model: QveModel | None = None):
    """Locate the zeros of the density on the boundary of its support.

    Starting from the coarse support of ``profile``, every outer endpoint is
    sharpened at a tiny ``eta``. Every gap between coarse intervals and every
    interior local minimum of the density is examined by the scaling of its
    minimum with ``eta``: roughly ``eta^1`` inside a gap, ``eta^(1/3)`` at a
    cusp and constant at a regular minimum. Returns a sorted list of
    ``(tau0, geometry)`` with geometry in ``{'left', 'right', 'cusp'}``.
    """
    if model is None:
        model = profile.solved_model if profile.solved_model is not None else profile.model
    if model is None:
        raise QveInputError("a model is needed to locate singular points")
    if not profile.support:
        detect_support(profile)
    taus, rho = profile.taus, profile.avg
    h = float(np.max(np.diff(taus))) if taus.size > 1 else 1e-3
    support = profile.support
    points = []
    if not support:
        return points
    left0, right0 = support[0][0], support[-1][1]
    points.append((_edge_crossing(model, left0 + h, _outward(model, left0, -1.0, h)), "left"))
    points.append((_edge_crossing(model, right0 - h, _outward(model, right0, 1.0, h)), "right"))

    regions = []
    for (l1, r1), (l2, r2) in zip(support[:-1], support[1:]):
        regions.append((r1 - h, l2 + h))
    inner = (rho[1:-1] < rho[:-2]) & (rho[1:-1] <= rho[2:])
    for j in np.flatnonzero(inner) + 1:
        t = taus[j]
        if any(l < t < r for l, r in support) and not any(a <= t <= b for a, b in regions):
            regions.append((taus[j - 1], taus[j + 1]))

    for lo, hi in regions:
        t_small, v_small = _argmin_rho(model, lo, hi, SCALING_ETAS[1])
        v_big = _rho(model, [t_small], SCALING_ETAS[0], "last")[0]
        if v_small <= 0 or v_big <= 0:
            expo = 1.0
        else:
            expo = math.log(v_big / v_small) / math.log(SCALING_ETAS[0] / SCALING_ETAS[1])
        log.debug("minimum near %.10g: rho=%.3g, eta exponent %.3f", t_small, v_small, expo)
        if expo < 0.15:
            continue  # regular interior minimum
        if expo < 0.65:
            points.append((t_small, "cusp"))
            continue
        # a gap: find its two edges around the zero at t_small
        points.append((_edge_crossing(model, lo, t_small), "right"))
        points.append((_edge_crossing(model, hi, t_small), "left"))
    points.sort()
    return points


def analyze_point(model: QveModel, tau0: float, geometry: str, neighbour_distance: float,
                  cusp_tol: float = CUSP_TOL, eta: float = BOUNDARY_ETA, labels=None,
                  window=None) -> SingularityReport:
    """Spectral data, coefficients, kind and fitted law at one boundary point."""
    sl = solve_at(model, complex(tau0, eta), tol=1e-12)
    spec = spectral_data(model, sl.m, z=complex(tau0, eta))
    sigma, psi = sigma_psi(model, tau0, sl.m, spec)
    kind = classify(sigma, psi, cusp_tol)
    pred = predicted_amplitude(kind, sl.m, spec, sigma, psi, model.weights)
    if window is None:
        if geometry == "cusp":
            w_max = min(1e-3, neighbour_distance / 4)
            window = (w_max * 1e-3, w_max)
        else:
            w_max = min(1e-2, neighbour_distance / 4)
            window = (w_max * 1e-2, w_max)
    side = {"left": "+", "right": "-", "cusp": "both"}[geometry]
    prof = local_profile(model, tau0, side, window)
    expo, amps = fit_exponent(prof, tau0, side, window)
    if labels is not None:
        amps, pred = amps[labels], pred[labels]
    return SingularityReport(
        tau0=float(tau0), kind=kind, sigma=sigma, psi=psi, fitted_exponent=expo,
        fitted_amplitude=amps, predicted_amplitude=pred, stability=psi + sigma**2,
        radius=spec.radius, gap=spec.gap, geometry=geometry, window=tuple(window),
    )


def analyze(profile: DensityProfile, cusp_tol: float = CUSP_TOL, eta: float = BOUNDARY_ETA):
    """Singularity reports for every boundary point of the profile's support."""
    model = profile.solved_model if profile.solved_model is not None else profile.model
    labels = profile.labels if profile.solved_model is not None else None
    points = find_singular_points(profile, model)
    locs = np.array([p[0] for p in points])
    reports = []
    for i, (tau0, geometry) in enumerate(points):
        others = np.delete(locs, i)
        dist = float(np.min(np.abs(others - tau0))) if others.size else math.inf
        reports.append(analyze_point(model, tau0, geometry, dist, cusp_tol, eta, labels))
    return reports
