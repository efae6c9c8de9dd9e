"""Solving the QVE ``-1/m = z + a + S m`` on the upper half-plane.

The iteration of record is the fixed-point map ``Phi(u) = -1/(z + a + S u)``,
which contracts the hyperbolic quantity :func:`hyperbolic_D`. Newton steps on
the polynomial form ``m (z + a + S m) + 1 = 0`` accelerate it; a step is only
accepted if it keeps ``Im m > 0`` and lowers the residual, otherwise the
solver falls back to plain fixed-point steps.

All heavy lifting happens in :func:`_solve_rows`, which advances a stack of
independent spectral parameters at once.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    MaxIterExceeded,
    NonPositiveImaginaryPart,
    SingularJacobian,
    ZeroDistance,
)
from .model import QveModel

__all__ = [
    "SolutionSlice",
    "SolutionGrid",
    "hyperbolic_D",
    "phi_map",
    "residual",
    "solve_at",
    "solve_many",
    "newton_polish",
    "derivative",
    "solve_grid",
    "contraction_ratio_probe",
    "contraction_factor",
    "default_eta_ladder",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-11
MAX_ITER_CAP = 200_000
NEWTON_BUDGET = 200
# Newton is only attempted once the residual is below this; further out the
# fixed-point map is cheaper and safer.
NEWTON_RADIUS = 0.5
# full Newton steps may raise the residual at most this many times in a row
MAX_STALL = 8
_CHUNK_ENTRIES = 4_000_000


@dataclass
class SolutionSlice:
    z: complex
    m: np.ndarray
    residual: float
    iterations: int


def hyperbolic_D(zeta, omega):
    """``|zeta - omega|^2 / (Im zeta Im omega)``, elementwise."""
    zeta = np.asarray(zeta, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    if np.any(zeta.imag <= 0) or np.any(omega.imag <= 0):
        raise NonPositiveImaginaryPart("hyperbolic_D needs arguments in the upper half-plane")
    out = np.abs(zeta - omega) ** 2 / (zeta.imag * omega.imag)
    return float(out) if out.ndim == 0 else out


def contraction_factor(model: QveModel, z) -> float:
    """Guaranteed per-step contraction ``(1 + (Im z)^2/||S||)^-2`` of ``Phi``."""
    if model.op_norm == 0:
        return 0.0
    return (1.0 + np.imag(z) ** 2 / model.op_norm) ** -2


def phi_map(model: QveModel, z, u):
    """Fixed-point map ``-1/(z + a + S u)``.

    ``u`` may be a vector (n,) or a stack (k, n); ``z`` a scalar or (k,).
    """
    u = np.asarray(u, dtype=complex)
    z = np.asarray(z, dtype=complex)
    if u.ndim == 2 and z.ndim == 1:
        z = z[:, None]
    return -1.0 / (z + model.a + model.apply_s(u))


def residual(model: QveModel, z, m):
    """QVE defect ``max_x |m_x + 1/(z + a_x + (S m)_x)|`` (per row for stacks)."""
    d = np.abs(np.asarray(m) - phi_map(model, z, m))
    return d.max(axis=-1)


def _default_max_iter(model, eta, tol):
    q = contraction_factor(model, 1j * eta)
    if q <= 0.0:
        return NEWTON_BUDGET
    steps = math.ceil(math.log(tol) / math.log(q)) if q < 1.0 else MAX_ITER_CAP
    return min(steps + NEWTON_BUDGET, MAX_ITER_CAP)


def _newton_batch(model, z, m, phi, r, relaxed):
    """One damped Newton step for each row; returns (m_new, r_new, accepted).

    Rows flagged ``relaxed`` take the full step whenever it stays in the
    upper half-plane and inside the Newton region, even if the residual
    grows: near singular points the residual is a poor guide and full steps
    converge where monotone backtracking crawls. Other rows backtrack until
    the residual decreases.
    """
    k, n = m.shape
    sw = model.s_weighted
    jac = np.broadcast_to(np.eye(n), (k, n, n)) - (m * phi)[:, :, None] * sw[None, :, :]
    try:
        delta = np.linalg.solve(jac, (phi - m)[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        delta = np.empty_like(m)
        for i in range(k):
            try:
                delta[i] = np.linalg.solve(jac[i], phi[i] - m[i])
            except np.linalg.LinAlgError:
                delta[i] = np.nan
    bad = ~np.all(np.isfinite(delta), axis=1)
    delta[bad] = 0.0

    m_new = m.copy()
    r_new = r.copy()
    accepted = np.zeros(k, dtype=bool)
    pending = ~bad
    if relaxed.any():
        idx = np.flatnonzero(pending & relaxed)
        cand = m[idx] + delta[idx]
        with np.errstate(all="ignore"):
            rc = residual(model, z[idx], cand)
        ok = np.all(cand.imag > 0, axis=1) & np.isfinite(rc) & (rc < NEWTON_RADIUS)
        acc = idx[ok]
        m_new[acc] = cand[ok]
        r_new[acc] = rc[ok]
        accepted[acc] = True
        pending[acc] = False
    t = np.ones(k)
    for _ in range(30):
        if not pending.any():
            break
        idx = np.flatnonzero(pending)
        cand = m[idx] + t[idx, None] * delta[idx]
        with np.errstate(all="ignore"):
            rc = residual(model, z[idx], cand)
        ok = np.all(cand.imag > 0, axis=1) & np.isfinite(rc) & (rc < (1.0 - 0.25 * t[idx]) * r[idx])
        acc = idx[ok]
        m_new[acc] = cand[ok]
        r_new[acc] = rc[ok]
        accepted[acc] = True
        pending[acc] = False
        t[idx[~ok]] *= 0.5
    return m_new, r_new, accepted


def _solve_rows(model: QveModel, z, m0, tol, max_iter, newton=True):
    """Advance a stack of independent solves until every residual is <= tol.

    Returns ``(m, residuals, iterations, converged)``.
    """
    z = np.asarray(z, dtype=complex)
    m = np.array(m0, dtype=complex, copy=True)
    k = m.shape[0]
    iters = np.zeros(k, dtype=int)
    res = residual(model, z, m)
    best = res.copy()
    stall = np.zeros(k, dtype=int)
    active = res > tol
    cooldown = np.zeros(k, dtype=int)
    while active.any():
        idx = np.flatnonzero(active & (iters < max_iter))
        if idx.size == 0:
            break
        zi, mi, ri = z[idx], m[idx], res[idx]
        phi = phi_map(model, zi, mi)
        use_newton = newton & (ri < NEWTON_RADIUS) & (cooldown[idx] == 0)
        if use_newton.any():
            nidx = np.flatnonzero(use_newton)
            relaxed = stall[idx[nidx]] < MAX_STALL
            m_new, r_new, acc = _newton_batch(model, zi[nidx], mi[nidx], phi[nidx], ri[nidx], relaxed)
            mi[nidx] = m_new
            ri[nidx] = r_new
            cooldown[idx[nidx[~acc]]] = 10
            fp = ~use_newton
            fp[nidx[~acc]] = True
        else:
            fp = np.ones(idx.size, dtype=bool)
        if fp.any():
            mi[fp] = phi[fp]
            ri[fp] = residual(model, zi[fp], mi[fp])
        cooldown[idx[fp]] = np.maximum(cooldown[idx[fp]] - 1, 0)
        improved = ri < best[idx]
        stall[idx] = np.where(improved, 0, stall[idx] + 1)
        best[idx] = np.minimum(best[idx], ri)
        m[idx] = mi
        res[idx] = ri
        iters[idx] += 1
        active[idx] = ri > tol
    return m, res, iters, ~active


def _continuation_etas(eta, start=1.0, factor=0.1):
    if eta >= start:
        return [eta]
    levels = []
    e = start
    while e > eta * 1.0001:
        levels.append(e)
        e *= factor
    levels.append(eta)
    return levels


def solve_many(model: QveModel, zs, tol=DEFAULT_TOL, max_iter=None, warm_start=None,
               continuation=True):
    """Solve at each entry of ``zs`` independently; returns ``(m, residuals, iterations)``.

    Without ``warm_start`` each solve starts at ``u = i`` and, for small
    ``Im z``, walks down a geometric ladder in ``Im z`` with fixed ``Re z``,
    warm-starting every level from the one above.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if np.any(zs.imag <= 0):
        raise NonPositiveImaginaryPart("spectral parameters must satisfy Im z > 0")
    k, n = zs.shape[0], model.n
    out = np.empty((k, n), dtype=complex)
    res = np.empty(k)
    its = np.zeros(k, dtype=int)
    chunk = max(1, _CHUNK_ENTRIES // max(n * n, 1))
    for lo in range(0, k, chunk):
        sl = slice(lo, min(lo + chunk, k))
        z = zs[sl]
        if warm_start is not None:
            m0 = np.broadcast_to(np.asarray(warm_start, dtype=complex), (z.size, n))
            ladders = [np.array([1.0])] * z.size
            etas_list = [z.imag]
        else:
            m0 = np.full((z.size, n), 1j)
            eta_min = float(z.imag.min())
            base = _continuation_etas(eta_min) if continuation else [eta_min]
            etas_list = [np.maximum(z.imag, e) for e in base]
        m = m0
        for eta_level in etas_list:
            zl = z.real + 1j * eta_level
            mi = max_iter if max_iter is not None else _default_max_iter(model, float(eta_level.min()), tol)
            m, r, it, conv = _solve_rows(model, zl, m, tol, mi)
            its[sl] += it
            if not conv.all():
                j = int(np.flatnonzero(~conv)[0])
                raise MaxIterExceeded(
                    f"no convergence at z={complex(zl[j])} after {it[j]} iterations "
                    f"(residual {r[j]:.3g} > tol {tol:.3g})",
                    last_iterate=m[j].copy(), residual=float(r[j]),
                )
        out[sl] = m
        res[sl] = r
    return out, res, its


def solve_at(model: QveModel, z, tol=DEFAULT_TOL, max_iter=None, warm_start=None) -> SolutionSlice:
    """Solve the QVE at one spectral parameter ``z`` with ``Im z > 0``."""
    z = complex(z)
    if tol <= 0:
        raise ValueError("tol must be positive")
    m, r, it = solve_many(model, [z], tol=tol, max_iter=max_iter, warm_start=warm_start)
    return SolutionSlice(z=z, m=m[0], residual=float(r[0]), iterations=int(it[0]))


def newton_polish(model: QveModel, z, m0, tol=1e-13, max_steps=30):
    """Refine an approximate solution with Newton steps.

    Each step solves ``(1 - diag(m Phi(m)) S) delta = Phi(m) - m``, the exact
    linearization of ``m (z + a + S m) + 1 = 0`` rescaled by ``-Phi(m)``; at
    the solution ``m Phi(m) = m^2``. A step leaving the upper half-plane is
    rejected in favour of a fixed-point step.
    """
    z = complex(z)
    m = np.array(m0, dtype=complex, copy=True)
    sw = model.s_weighted
    for _ in range(max_steps):
        phi = phi_map(model, z, m)
        r = float(np.max(np.abs(phi - m)))
        if r <= tol:
            break
        jac = np.eye(model.n) - (m * phi)[:, None] * sw
        try:
            delta = np.linalg.solve(jac, phi - m)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Newton Jacobian singular at z={z}") from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian(f"Newton Jacobian singular at z={z}")
        cand = m + delta
        if np.all(cand.imag > 0):
            m = cand
        else:
            m = phi
    return m


def derivative(model: QveModel, z, m):
    """``dm/dz`` from ``(1 - m^2 S) dm/dz = m^2``."""
    m = np.asarray(m, dtype=complex)
    jac = np.eye(model.n) - (m * m)[:, None] * model.s_weighted
    try:
        return np.linalg.solve(jac, m * m)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(f"1 - m^2 S singular at z={z}") from exc


def contraction_ratio_probe(model: QveModel, z, u, w) -> float:
    """``sup_x D(Phi(u)_x, Phi(w)_x) / sup_x D(u_x, w_x)``."""
    u = np.asarray(u, dtype=complex)
    w = np.asarray(w, dtype=complex)
    before = np.max(hyperbolic_D(u, w))
    if before == 0:
        raise ZeroDistance("u and w coincide")
    after = np.max(hyperbolic_D(phi_map(model, z, u), phi_map(model, z, w)))
    return float(after / before)


# -- grids -------------------------------------------------------------------

def default_eta_ladder(eta_max=1e-1, eta_min=1e-6, ratio=10 ** -0.5):
    """Geometric ladder ``eta_max, eta_max*ratio, ... , eta_min`` (descending)."""
    n = int(round(math.log(eta_min / eta_max) / math.log(ratio))) + 1
    etas = eta_max * ratio ** np.arange(n)
    if n > 1 and math.isclose(etas[-1], eta_min, rel_tol=1e-9):
        etas[-1] = eta_min  # remove rounding drift at the floor
    return etas


@dataclass
class SolutionGrid:
    """Solutions on the rectangle ``{tau_j + i eta_k}``.

    ``m`` has shape ``(len(etas), len(taus), k)`` where ``k`` is the number of
    solved components. When the solve ran on a compressed model, ``labels``
    maps each original component to its column in ``m``.
    """

    model: QveModel
    taus: np.ndarray
    etas: np.ndarray
    m: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    labels: np.ndarray | None = None
    solved_model: QveModel | None = None

    def components(self, i_eta=None):
        """Solution values expanded to every component of ``model``."""
        m = self.m if i_eta is None else self.m[i_eta]
        return m if self.labels is None else m[..., self.labels]

    def slice(self, i_eta, j_tau) -> SolutionSlice:
        m = self.m[i_eta, j_tau]
        if self.labels is not None:
            m = m[self.labels]
        return SolutionSlice(
            z=complex(self.taus[j_tau], self.etas[i_eta]),
            m=m,
            residual=float(self.residuals[i_eta, j_tau]),
            iterations=int(self.iterations[i_eta, j_tau]),
        )

    def __getitem__(self, key):
        return self.slice(*key)

    def __len__(self):
        return self.taus.size * self.etas.size

    def rows(self):
        """Yield ``(tau, eta, x_index, re_m, im_m, residual)`` records."""
        full = self.components()
        for i, eta in enumerate(self.etas):
            for j, tau in enumerate(self.taus):
                r = self.residuals[i, j]
                for x, val in enumerate(full[i, j]):
                    yield (tau, eta, x, val.real, val.imag, r)


def _predict(model, z_old, z_new, m):
    """Taylor predictor ``m + dm/dz (z_new - z_old)``; falls back to ``m``."""
    k, n = m.shape
    jac = np.broadcast_to(np.eye(n), (k, n, n)) - (m * m)[:, :, None] * model.s_weighted[None]
    try:
        dm = np.linalg.solve(jac, (m * m)[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        return m
    pred = m + dm * (z_new - z_old)[:, None]
    keep = np.all(pred.imag > 0, axis=1) & np.all(np.isfinite(pred), axis=1)
    out = m.copy()
    out[keep] = pred[keep]
    return out


def _solve_columns(model, taus, etas, tol, max_iter):
    T, E, n = taus.size, etas.size, model.n
    m_all = np.empty((E, T, n), dtype=complex)
    res = np.empty((E, T))
    its = np.zeros((E, T), dtype=int)
    chunk = max(1, _CHUNK_ENTRIES // max(n * n, 1))
    for lo in range(0, T, chunk):
        sl = slice(lo, min(lo + chunk, T))
        tau = taus[sl]
        m = None
        for i, eta in enumerate(etas):
            z = tau + 1j * eta
            if m is None:
                try:
                    m, r, it = solve_many(model, z, tol=tol, max_iter=max_iter)
                except MaxIterExceeded as exc:
                    exc.where = {"eta": float(eta), "taus": tau.tolist()}
                    raise
            else:
                z_old = tau + 1j * etas[i - 1]
                m0 = _predict(model, z_old, z, m)
                mi = max_iter if max_iter is not None else _default_max_iter(model, eta, tol)
                m, r, it, conv = _solve_rows(model, z, m0, tol, mi)
                if not conv.all():
                    j = int(np.flatnonzero(~conv)[0])
                    raise MaxIterExceeded(
                        f"grid solve failed at tau={tau[j]:.17g}, eta={eta:.3g} "
                        f"(residual {r[j]:.3g})",
                        last_iterate=m[j].copy(), residual=float(r[j]),
                        where={"tau": float(tau[j]), "eta": float(eta)},
                    )
            m_all[i, sl] = m
            res[i, sl] = r
            its[i, sl] = it
    return m_all, res, its


def solve_grid(model: QveModel, taus, etas, tol=DEFAULT_TOL, max_iter=None,
               compress=False, workers=1) -> SolutionGrid:
    """Solve on every ``tau + i eta`` with continuation downward in ``eta``.

    Each tau column starts from ``u = i`` at the top level and is warm-started
    level by level with a first-order predictor. Columns are independent and
    may be distributed over ``workers`` threads.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    etas = np.atleast_1d(np.asarray(etas, dtype=float))
    if np.any(etas <= 0) or np.any(np.diff(etas) >= 0):
        raise ValueError("etas must be positive and strictly decreasing")
    solved, labels = (model.compress() if compress else (model, None))
    if labels is not None and solved is model:
        labels = None
    if taus.size == 0:
        k = solved.n
        return SolutionGrid(model, taus, etas, np.empty((etas.size, 0, k), dtype=complex),
                            np.empty((etas.size, 0)), np.empty((etas.size, 0), dtype=int),
                            labels, solved)
    if workers > 1 and taus.size > 1:
        parts = np.array_split(np.arange(taus.size), min(workers, taus.size))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _solve_columns(solved, taus[p], etas, tol, max_iter), parts))
        m = np.concatenate([r[0] for r in results], axis=1)
        res = np.concatenate([r[1] for r in results], axis=1)
        its = np.concatenate([r[2] for r in results], axis=1)
    else:
        m, res, its = _solve_columns(solved, taus, etas, tol, max_iter)
    log.debug("solve_grid: %d points, max residual %.3g", res.size, res.max())
    return SolutionGrid(model, taus, etas, m, res, its, labels, solved)
