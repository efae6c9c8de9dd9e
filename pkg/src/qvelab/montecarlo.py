"""Random matrices with a prescribed variance profile.

A model with ``n`` components is upsampled to an ``N x N`` real symmetric
Gaussian matrix: row ``i`` (1-based) belongs to the first component whose
cumulative weight reaches ``i/N``. For uniform weights this is the usual
``ceil(i n / N)`` assignment.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .density import DensityProfile
from .errors import EmptySamples, QveInputError
from .model import QveModel

__all__ = [
    "SpectrumSample",
    "row_components",
    "sample_matrix",
    "sample_spectrum",
    "sample_spectra",
    "density_cdf",
    "empirical_distance",
    "sample_from_density",
    "write_samples_csv",
    "mc_report",
]

log = logging.getLogger(__name__)


@dataclass
class SpectrumSample:
    n_mat: int
    seed: int
    eigenvalues: np.ndarray

    def __post_init__(self):
        self.eigenvalues = np.sort(np.asarray(self.eigenvalues, dtype=float))
        if self.eigenvalues.shape != (self.n_mat,):
            raise QveInputError("eigenvalue count must equal n_mat")


def row_components(model: QveModel, n_mat: int) -> np.ndarray:
    """Component index of each of the ``n_mat`` matrix rows."""
    cum = np.cumsum(model.weights)
    cum[-1] = 1.0
    i = np.arange(1, n_mat + 1) / n_mat
    # small slack so that exact ratios like 2/4 land on the intended class
    return np.minimum(np.searchsorted(cum, i - 1e-12, side="left"), model.n - 1)


def sample_matrix(model: QveModel, n_mat: int, seed: int) -> np.ndarray:
    """``H = (X + X^T)/sqrt 2 + diag(a)`` with ``X_ij ~ N(0, s_ij / n_mat)``.

    Off-diagonal entries then have variance ``s_ij/n_mat`` and diagonal
    entries twice that.
    """
    if n_mat < model.n:
        raise QveInputError(f"n_mat={n_mat} is smaller than the model size {model.n}")
    rows = row_components(model, n_mat)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_mat, n_mat))
    x *= np.sqrt(model.s[np.ix_(rows, rows)] / n_mat)
    h = (x + x.T) / np.sqrt(2.0)
    h[np.diag_indices(n_mat)] += model.a[rows]
    return h


def sample_spectrum(model: QveModel, n_mat: int, seed: int) -> SpectrumSample:
    return SpectrumSample(n_mat, int(seed), np.linalg.eigvalsh(sample_matrix(model, n_mat, seed)))


def sample_spectra(model: QveModel, n_mat: int, seeds, workers: int = 1):
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise EmptySamples("no seeds given")
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda s: sample_spectrum(model, n_mat, s), seeds))
    return [sample_spectrum(model, n_mat, s) for s in seeds]


def density_cdf(profile: DensityProfile):
    """``(taus, cdf)`` of the average density, normalized to total mass one."""
    rho, t = profile.avg, profile.taus
    inc = 0.5 * (rho[1:] + rho[:-1]) * np.diff(t)
    cdf = np.concatenate([[0.0], np.cumsum(inc)])
    total = cdf[-1]
    if total <= 0:
        raise QveInputError("profile has no mass")
    return t, cdf / total


def empirical_distance(samples, profile: DensityProfile):
    """Kolmogorov-Smirnov and L1 distances between pooled eigenvalues and ``rho``."""
    samples = list(samples)
    if not samples:
        raise EmptySamples("no spectrum samples")
    ev = np.sort(np.concatenate([s.eigenvalues for s in samples]))
    N = ev.size
    t, cdf = density_cdf(profile)
    f_at = np.interp(ev, t, cdf, left=0.0, right=1.0)
    upper = np.arange(1, N + 1) / N
    lower = np.arange(N) / N
    ks = float(max(np.max(np.abs(upper - f_at)), np.max(np.abs(lower - f_at))))
    # L1 on the merged breakpoints: F_rho is linear between them, F_emp constant
    pts = np.union1d(t, ev)
    f_rho = np.interp(pts, t, cdf, left=0.0, right=1.0)
    f_emp = np.searchsorted(ev, pts, side="right") / N
    mid_rho = 0.5 * (f_rho[1:] + f_rho[:-1])
    mid_emp = f_emp[:-1]
    l1 = float(np.sum(np.abs(mid_emp - mid_rho) * np.diff(pts)))
    return ks, l1


def sample_from_density(profile: DensityProfile, size: int, seed: int) -> np.ndarray:
    """Draw ``size`` points from ``rho`` by inverting its CDF."""
    t, cdf = density_cdf(profile)
    u = np.random.default_rng(seed).uniform(size=size)
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(u, cdf[keep], t[keep])


def write_samples_csv(samples, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["seed", "index", "eigenvalue"])
    for s in samples:
        for i, e in enumerate(s.eigenvalues):
            w.writerow([s.seed, i, "%.17g" % e])


def mc_report(samples, profile: DensityProfile) -> dict:
    ks, l1 = empirical_distance(samples, profile)
    return {"ks": ks, "l1": l1, "n_mat": int(samples[0].n_mat), "seeds": [s.seed for s in samples]}
