from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvelab.ensembles import BlockParams, block_model, semicircle_exact, semicircle_model
from qvelab.errors import MaxIterExceeded, NonPositiveImaginaryPart, ZeroDistance
from qvelab.model import build_model
from qvelab.solver import (
    contraction_factor,
    contraction_ratio_probe,
    default_eta_ladder,
    derivative,
    hyperbolic_D,
    newton_polish,
    phi_map,
    residual,
    solve_at,
    solve_grid,
    solve_many,
)

GOLDEN = (math.sqrt(5) - 1) / 2
upper = st.builds(complex, st.floats(-50, 50), st.floats(1e-3, 50))


@pytest.mark.parametrize("z,w,expected", [(1j, 1j, 0.0), (1j, 1 + 1j, 1.0), (1j, 2j, 0.5)])
def test_hyperbolic_D_examples(z, w, expected):
    assert hyperbolic_D(z, w) == pytest.approx(expected)


def test_hyperbolic_D_rejects_real_arguments():
    with pytest.raises(NonPositiveImaginaryPart):
        hyperbolic_D(1.0 + 0j, 1j)


@settings(max_examples=200, deadline=None)
@given(upper, upper, st.floats(-20, 20), st.floats(1e-2, 1e2))
def test_metric_moebius_invariance(zeta, omega, t, lam):
    d = hyperbolic_D(zeta, omega)
    assert hyperbolic_D(zeta + t, omega + t) == pytest.approx(d, rel=1e-9, abs=1e-12)
    assert hyperbolic_D(lam * zeta, lam * omega) == pytest.approx(d, rel=1e-9, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(upper, upper, st.floats(1e-3, 10))
def test_metric_shift_contraction_identity(zeta, omega, eta):
    lhs = hyperbolic_D(1j * eta + zeta, 1j * eta + omega)
    rhs = hyperbolic_D(zeta, omega) / ((1 + eta / zeta.imag) * (1 + eta / omega.imag))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(upper, upper, st.floats(0, 1)), min_size=1, max_size=6))
def test_metric_convexity(items):
    w = np.array([p[0] for p in items])
    u = np.array([p[1] for p in items])
    c = np.array([p[2] for p in items]) + 1e-6
    assert hyperbolic_D(c @ w, c @ u) <= np.max(hyperbolic_D(w, u)) * (1 + 1e-10) + 1e-12


def test_phi_map_examples():
    sc = build_model([1], [0], [[1]])
    assert phi_map(sc, 1j, np.array([1j]))[0] == pytest.approx(0.5j)
    free = build_model([1], [1], [[0]])
    assert phi_map(free, 1j, np.array([5 + 3j]))[0] == pytest.approx((-1 + 1j) / 2)


def test_phi_map_trivial_and_lower_bounds(rng):
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 12)
    # the lower bound holds for Im z >= eta with eta <= 1, |z| <= 1/eta and |u| <= 1/eta
    for _ in range(50):
        eta = 10 ** rng.uniform(-2, 0)
        im = rng.uniform(eta, 1 / eta)
        re = rng.uniform(-1, 1) * math.sqrt(max(1 / eta**2 - im**2, 0.0))
        z = complex(re, im)
        u = (1 / eta) * rng.uniform(0, 1, 12) * np.exp(1j * rng.uniform(0, np.pi, 12))
        out = phi_map(model, z, u)
        assert np.all(np.abs(out) <= 1 / eta * (1 + 1e-12))
        assert np.all(out.imag >= eta**3 / (2 + model.op_norm) ** 2)


@pytest.mark.parametrize("z,expected", [(1j, 1j * GOLDEN), (2j, 1j * (math.sqrt(2) - 1))])
def test_solve_at_semicircle(z, expected):
    sl = solve_at(semicircle_model(5), z)
    assert np.allclose(sl.m, expected, atol=1e-11)
    assert sl.residual <= 1e-11
    assert np.all(sl.m.imag > 0)


def test_solve_at_free_model():
    z = 0.3 + 0.2j
    sl = solve_at(build_model([1], [0], [[0]]), z)
    assert sl.m[0] == pytest.approx(-1 / z)


def test_solve_rejects_real_z():
    with pytest.raises(NonPositiveImaginaryPart):
        solve_at(semicircle_model(1), 1.0 + 0j)


def test_max_iter_exceeded_carries_iterate():
    with pytest.raises(MaxIterExceeded) as info:
        solve_many(semicircle_model(1), [0.1 + 1e-8j], tol=1e-15, max_iter=1)
    assert info.value.last_iterate is not None


def test_uniqueness_from_different_starts(rng):
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 16)
    z = 0.7 + 0.05j
    a = solve_at(model, z, tol=1e-12).m
    b = solve_at(model, z, tol=1e-12, warm_start=2j + rng.uniform(0, 1, 16)).m
    assert np.max(np.abs(a - b)) <= 1e-10


def test_reflection_symmetry():
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 16)
    m1 = solve_at(model, 0.8 + 0.01j, tol=1e-12).m
    m2 = solve_at(model, -0.8 + 0.01j, tol=1e-12).m
    assert np.allclose(m2, -np.conj(m1), atol=1e-10)


def test_newton_polish():
    model = semicircle_model(3)
    exact = np.full(3, 1j * GOLDEN)
    assert np.allclose(newton_polish(model, 1j, exact), exact, atol=1e-15)
    out = newton_polish(model, 1j, np.full(3, 0.6j), max_steps=3)
    assert np.max(residual(model, 1j, out)) <= 1e-12
    free = build_model([1], [0.5], [[0]])
    out = newton_polish(free, 1j, np.array([0.3j]), max_steps=1)
    assert out[0] == pytest.approx(-1 / (1j + 0.5))


def test_derivative_matches_closed_form():
    z = 0.4 + 0.3j
    m = semicircle_exact(z)
    d = derivative(semicircle_model(1), z, np.array([m]))[0]
    h = 1e-6
    fd = (semicircle_exact(z + h) - semicircle_exact(z - h)) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-6)


def test_contraction_probe_examples():
    sc = semicircle_model(4)
    # w = 2i lies outside |w| <= 1/Im z, where the factor is not guaranteed
    r = contraction_ratio_probe(sc, 1j, np.full(4, 1j), np.full(4, 2j))
    assert r == pytest.approx(1 / 3)
    r = contraction_ratio_probe(sc, 1j, np.full(4, 1j), np.full(4, 0.5j))
    assert r == pytest.approx(1 / 6) and r <= contraction_factor(sc, 1j)
    assert contraction_factor(sc, 2j) == pytest.approx(1 / 25)
    zero = build_model(np.ones(3), np.zeros(3), np.zeros((3, 3)))
    assert contraction_ratio_probe(zero, 1j, np.full(3, 1j), np.full(3, 3j)) == 0.0
    with pytest.raises(ZeroDistance):
        contraction_ratio_probe(sc, 1j, np.full(4, 1j), np.full(4, 1j))


def test_default_ladder():
    etas = default_eta_ladder()
    assert etas[0] == pytest.approx(0.1) and etas[-1] == pytest.approx(1e-6)
    assert np.all(np.diff(etas) < 0) and etas.size == 11


def test_solve_grid_semicircle_column():
    grid = solve_grid(semicircle_model(4), [0.0], [1.0, 0.1, 0.01])
    mags = np.abs(grid.m[:, 0, 0])
    assert np.all(np.diff(np.abs(mags - 1)) < 0)
    assert grid.m[-1, 0, 0] == pytest.approx(semicircle_exact(0.01j), abs=1e-11)


def test_solve_grid_empty_and_free():
    empty = solve_grid(semicircle_model(2), [], [0.1, 0.01])
    assert empty.m.shape[1] == 0
    free = build_model(np.ones(3), np.zeros(3), np.zeros((3, 3)))
    taus, etas = np.linspace(-1, 1, 5), np.array([0.5, 0.05])
    grid = solve_grid(free, taus, etas)
    z = taus[None, :] + 1j * etas[:, None]
    assert np.allclose(grid.components()[..., 0], -1 / z)


def test_solve_grid_rejects_bad_ladder():
    with pytest.raises(ValueError):
        solve_grid(semicircle_model(1), [0.0], [0.01, 0.1])


def test_compressed_grid_matches_full():
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 20)
    taus, etas = np.linspace(-2, 2, 9), default_eta_ladder(1e-1, 1e-3)
    full = solve_grid(model, taus, etas, compress=False)
    comp = solve_grid(model, taus, etas, compress=True)
    assert np.allclose(full.components(), comp.components(), atol=1e-10)
    assert np.all(full.residuals <= 1e-11)
