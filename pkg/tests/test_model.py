from __future__ import annotations

import numpy as np
import pytest

from qvelab.ensembles import BlockParams, block_model, delta_critical
from qvelab.errors import AsymmetricKernel, DimensionMismatch, NegativeEntry
from qvelab.model import (
    build_model,
    check_assumptions,
    check_diagonal_positivity,
    check_primitivity,
    model_to_dict,
    regularity_probe,
)


def test_scalar_model_norms():
    m = build_model([1.0], [0.0], [[1.0]])
    assert m.n == 1
    assert m.op_norm == 1.0
    assert m.kappa == 2.0


def test_asymmetric_kernel_rejected():
    with pytest.raises(AsymmetricKernel):
        build_model([0.5, 0.5], [0, 0], [[0, 1], [2, 0]])


@pytest.mark.parametrize(
    "weights,a,s,exc",
    [
        ([1, 1], [0, 0], [[1, -1], [-1, 1]], NegativeEntry),
        ([1, 0], [0, 0], [[1, 1], [1, 1]], NegativeEntry),
        ([1, 1], [0], [[1, 1], [1, 1]], DimensionMismatch),
        ([1, 1], [0, 0], [[1]], DimensionMismatch),
    ],
)
def test_invalid_inputs(weights, a, s, exc):
    with pytest.raises(exc):
        build_model(weights, a, s)


def test_weights_renormalized_and_immutable():
    m = build_model([1, 2, 3], [0, 1, 2], np.ones((3, 3)))
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        m.s[0, 0] = 5.0


def test_block_model_op_norm_is_max_row_sum():
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 1.0 / 126.0), 200)
    assert model.op_norm == pytest.approx(np.max(model.s.sum(axis=1) / 200), rel=1e-14)


def test_scaling_kernel_scales_norms(rng):
    x = rng.uniform(0, 1, (6, 6))
    s = x + x.T
    a = rng.normal(size=6)
    m1 = build_model(np.ones(6), a, s)
    m2 = build_model(np.ones(6), a, 4.0 * s)
    assert m2.op_norm == pytest.approx(4.0 * m1.op_norm)
    assert m2.kappa - np.abs(a).max() == pytest.approx(2.0 * (m1.kappa - np.abs(a).max()))


def test_model_to_dict_round_trip():
    m = build_model([1, 1], [0.5, -0.5], [[1, 2], [2, 1]])
    d = model_to_dict(m)
    m2 = build_model(d["weights"], d["a"], d["s"])
    assert np.array_equal(m2.s, m.s) and np.array_equal(m2.a, m.a)


def test_compress_merges_identical_rows():
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 8)
    reduced, labels = model.compress()
    assert reduced.n == 2
    assert len(set(labels[:2])) == 1 and len(set(labels[2:])) == 1 and labels[0] != labels[2]
    assert reduced.weights[labels[0]] == pytest.approx(0.25)
    assert reduced.s[labels[0], labels[0]] == 3.0


@pytest.mark.parametrize(
    "s,expected",
    [
        (np.ones((3, 3)), 1),
        ([[0, 1], [1, 0]], None),
        ([[1, 1], [1, 0]], 2),
    ],
)
def test_primitivity(s, expected):
    model = build_model(np.ones(len(s)), np.zeros(len(s)), s)
    assert check_primitivity(model, k_max=10) == expected


def test_diagonal_positivity():
    const = build_model(np.ones(5), np.zeros(5), np.ones((5, 5)))
    assert check_diagonal_positivity(const, 0.3) == (1.0, 0.3)
    hollow = build_model(np.ones(5), np.zeros(5), np.ones((5, 5)) - np.eye(5))
    assert check_diagonal_positivity(hollow, 0.01) is None
    block = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 40)
    c, eps = check_diagonal_positivity(block, 0.1)
    assert c == pytest.approx(1.0 / 3.0) and eps == 0.1


def test_regularity_probe():
    assert regularity_probe(build_model([1], [0], [[1]]), 0.5) == pytest.approx(2.0)
    const = build_model(np.ones(10), np.zeros(10), np.ones((10, 10)))
    assert regularity_probe(const, 1e-4) == pytest.approx(1e4)
    block = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, delta_critical(3.0)), 504)
    d = np.abs(block.s[:, None, :] - block.s[None, :, :])
    gap = np.max((d**2) @ block.weights)
    assert regularity_probe(block, 1e-4) >= (4 / 504) / (1e-4 + gap)


def test_check_assumptions_report():
    model = block_model(BlockParams(3.0, 1.0, 1.0 / 3.0, 0.25), 8)
    rep = check_assumptions(model)
    assert rep.primitivity_k == 1
    assert rep.diagonal_strip is not None
    d = rep.to_dict()
    assert set(d) >= {"primitivity_k", "diagonal_strip", "regularity_value"}
