from __future__ import annotations

import math

import numpy as np
import pytest

from qvelab.ensembles import BlockParams, block_model, delta_critical, semicircle_exact, semicircle_model
from qvelab.errors import GapTooSmall, QveInputError, SingularMatrix, ZeroComponent
from qvelab.model import build_model
from qvelab.solver import solve_at
from qvelab.stability import (
    build_F,
    bulk_stability_norm,
    check_radius_relation,
    gap_lower_bound,
    inverse_bound_probe,
    perron,
    resolvent_Q,
    spectral_data,
)

M2_AT_I = (3 - math.sqrt(5)) / 2  # |m(i)|^2 for the semicircle


def test_build_F_semicircle_rank_one():
    n = 6
    m = np.full(n, semicircle_exact(1j))
    K = build_F(semicircle_model(n), m)
    assert np.allclose(K, M2_AT_I * np.full((n, n), 1.0 / n), atol=1e-15)


def test_build_F_trivial_cases():
    one = build_model([1], [0], [[2.0]])
    assert build_F(one, np.array([0.5j]))[0, 0] == pytest.approx(0.5)
    zero = build_model(np.ones(3), np.zeros(3), np.zeros((3, 3)))
    assert not np.any(build_F(zero, np.full(3, 1j)))
    with pytest.raises(ZeroComponent):
        build_F(one, np.array([0j]))


def test_perron_semicircle():
    n = 5
    spec = spectral_data(semicircle_model(n), np.full(n, semicircle_exact(1j)), 1j)
    assert spec.radius == pytest.approx(M2_AT_I)
    assert np.allclose(spec.f, 1.0)
    assert spec.gap == pytest.approx(spec.radius)
    assert spec.to_dict()["z"] == [0.0, 1.0]


def test_perron_degenerate_and_zero():
    spec = perron(0.5 * np.array([[0.0, 1.0], [1.0, 0.0]]), [0.5, 0.5])
    assert spec.radius == pytest.approx(0.5) and spec.gap == pytest.approx(0.0, abs=1e-15)
    assert spec.degenerate_top
    zero = perron(np.zeros((3, 3)))
    assert zero.radius == 0 and zero.gap == 0
    with pytest.raises(QveInputError):
        perron(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_perron_eigen_equation_and_normalization(rng):
    x = rng.uniform(0.1, 1, (30, 30))
    model = build_model(rng.uniform(0.5, 1.5, 30), rng.normal(size=30), x + x.T)
    m = solve_at(model, 0.3 + 0.05j).m
    K = build_F(model, m)
    spec = perron(K, model.weights)
    w = model.weights
    assert np.sum(w * spec.f**2) == pytest.approx(1.0, abs=1e-12)
    assert np.all(spec.f > 0)
    Ff = (K @ (np.sqrt(w) * spec.f)) / np.sqrt(w)
    assert np.linalg.norm(np.sqrt(w) * (Ff - spec.radius * spec.f)) <= 1e-10
    assert spec.radius < 1.0
    assert spec.f.max() / spec.f.min() < 10


def test_radius_relation_semicircle():
    for eta in (1.0, 0.1, 1e-3):
        z = 1j * eta
        m = np.full(3, semicircle_exact(z))
        spec = spectral_data(semicircle_model(3), m, z)
        assert spec.radius == pytest.approx((eta**2 + 2 - eta * math.sqrt(eta**2 + 4)) / 2)
        assert check_radius_relation(semicircle_model(3), z, m, spec) <= 1e-13


def test_radius_relation_free_model():
    free = build_model([1], [0.3], [[0.0]])
    z = 0.2 + 0.7j
    m = np.array([-1 / (z + 0.3)])
    spec = spectral_data(free, m, z)
    assert spec.radius == 0
    assert check_radius_relation(free, z, m, spec) <= 1e-14


def test_gap_lower_bound_examples():
    n = 4
    K = build_F(semicircle_model(n), np.full(n, semicircle_exact(1j)))
    spec = perron(K)
    assert gap_lower_bound(K, spec.f) == pytest.approx(spec.gap)
    hollow = np.ones((3, 3)) - np.eye(3)
    assert gap_lower_bound(hollow / 3, np.ones(3)) == 0.0
    c = 0.7
    K2 = np.full((2, 2), c / 2)
    s2 = perron(K2)
    assert gap_lower_bound(K2, s2.f) <= s2.gap + 1e-15


def test_resolvent_zero_rhs_and_edge():
    n = 4
    K = build_F(semicircle_model(n), np.full(n, -1.0 + 0j))
    spec = perron(K)
    assert spec.radius == pytest.approx(1.0)
    assert not np.any(resolvent_Q(K, spec.f, np.zeros(n)))
    rhs = np.array([1.0, -1.0, 0.5, -0.5])
    assert np.allclose(resolvent_Q(K, spec.f, rhs), rhs)


def test_resolvent_two_point():
    K = 0.5 * np.array([[2.0, 1.0], [1.0, 2.0]])  # eigenvalues 1.5 and 0.5
    spec = perron(K, [0.5, 0.5])
    rhs = np.array([1.0, -1.0])
    assert np.allclose(resolvent_Q(K, spec.f, rhs, [0.5, 0.5]), rhs / (1 - 0.5))
    with pytest.raises(QveInputError):
        resolvent_Q(K, spec.f, np.array([1.0, 0.0]), [0.5, 0.5])


def test_resolvent_gap_too_small():
    K = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])
    spec = perron(K, [0.5, 0.5])
    with pytest.raises(GapTooSmall):
        resolvent_Q(K, spec.f, np.array([1.0, -1.0]), [0.5, 0.5], spec)


def test_bulk_stability_norm():
    zero = build_model(np.ones(3), np.zeros(3), np.zeros((3, 3)))
    assert bulk_stability_norm(zero, 1j, np.full(3, 1j)) == pytest.approx(1.0)
    n = 4
    m2 = semicircle_exact(1j) ** 2
    beta = m2 / (1 - m2)  # Sherman-Morrison for 1 - m^2 P with P the averaging projection
    expected = abs(1 + beta / n) + (n - 1) * abs(beta / n)
    assert bulk_stability_norm(semicircle_model(n), 1j, np.full(n, semicircle_exact(1j))) == pytest.approx(expected)


def test_bulk_stability_bounded_by_im_m():
    # the norm is at most a constant times <Im m>^-2 along the approach to the edge
    model = semicircle_model(1)
    ratios = []
    for eta in 10.0 ** -np.arange(2, 7):
        m = np.array([semicircle_exact(2 + 1j * eta)])
        ratios.append(bulk_stability_norm(model, 2 + 1j * eta, m) * m.imag[0] ** 2)
    assert max(ratios) <= 1.0
    with pytest.raises(SingularMatrix):
        bulk_stability_norm(model, 2.0, np.array([-1.0 + 0j]))


def test_inverse_bound_probe_examples(rng):
    # U = -1, F = 0: the gap of the zero operator is 0, so the product vanishes
    assert inverse_bound_probe(-np.ones(3), np.zeros((3, 3)), np.ones(3)) == 0.0
    n = 2
    e = np.ones(n) / math.sqrt(n)
    K = 0.5 * np.outer(e, e)  # rank one, radius 1/2
    assert inverse_bound_probe(np.ones(n), K, np.ones(n)) == pytest.approx(2 * 0.5 * 0.5)
    with pytest.raises(QveInputError):
        inverse_bound_probe(np.full(n, 2.0), K, np.ones(n))
    with pytest.raises(SingularMatrix):
        inverse_bound_probe(np.ones(n), np.outer(e, e), np.ones(n))


def test_inverse_bound_probe_random_unitaries(rng):
    n = 8
    K = build_F(semicircle_model(n), np.full(n, semicircle_exact(1j)))
    for _ in range(100):
        U = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
        assert inverse_bound_probe(U, K, np.ones(n)) <= 10


def test_cusp_spectral_data():
    model, _ = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, delta_critical(3.0)), 504).compress()
    z = 1.1338934190277 + 1e-6j
    spec = spectral_data(model, solve_at(model, z, tol=1e-12).m, z)
    assert 0.999 <= spec.radius <= 1.0
    assert spec.gap > 0.1
