from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lsconf import core
from lsconf.errors import ConfigurationError, DegenerateInputError, LabelRangeError, ShapeError
from lsconf.rootsys import CenterMatrix, build_configuration, choose_centers, gen_rotation_2d


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_cos_metrics_frozen():
    assert core.cos_sim([1, 0], [0, 1]) == 0.0
    assert core.cos_sim([1, 1], [2, 2]) == pytest.approx(1.0)
    a = [1.0, 0.0]
    b = [math.cos(math.radians(30)), math.sin(math.radians(30))]
    assert core.cos_dist(a, b) == pytest.approx(1 - math.sqrt(3) / 2, abs=1e-15)
    with pytest.raises(DegenerateInputError):
        core.cos_sim([0, 0], [1, 0])
    with pytest.raises(ShapeError):
        core.cos_sim([1, 0, 0], [1, 0])


def test_fd_frozen():
    assert core.fd(0.5, 1.0) == 0.0
    assert core.fd(1.0, 1.0) == 0.0
    assert core.fd(2.0, 1.0) == pytest.approx(math.e - 1)
    np.testing.assert_allclose(core.fd(np.array([0.0, 3.0]), 1.0), [0.0, math.exp(2) - 1])


def test_cos_loss_frozen():
    Z = np.array([[1.0, 0.0], [0.0, 2.0]])
    Cb = np.array([[1.0, 0.0], [1.0, 0.0]])
    loss = core.cos_loss(Z, Cb)
    np.testing.assert_allclose(loss.per_sample, [0.0, 1.0])
    assert loss.value == pytest.approx(0.5)


def test_dist_loss_is_sum_with_radii():
    C = gen_rotation_2d(5)  # radius 1 for the first four, 0.5 for the fifth
    Z = C.centers[[0, 4]] + np.array([[2.0, 0.0], [0.0, 0.0]])
    loss = core.dist_loss(Z, [0, 4], C)
    np.testing.assert_allclose(loss.per_sample, [math.e - 1, 0.0])
    assert loss.value == pytest.approx(math.e - 1)


def test_combined_weights():
    C = gen_rotation_2d(4)
    Z = np.array([[3.0, 1.0], [0.5, 4.0]])
    y = [1, 1]
    d = core.dist_loss(Z, y, C).value
    c = core.cos_loss(Z, C.rows(y)).value
    assert core.combined_loss(Z, y, C, 2.0, 3.0).value == pytest.approx(2 * d + 3 * c)
    with pytest.raises(ConfigurationError):
        core.combined_loss(Z, y, C, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        core.combined_loss(Z, y, C, -1.0, 1.0)


def test_cos_loss_grad_finite_difference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        Z = rng.standard_normal((4, 6))
        Cb = rng.standard_normal((4, 6))
        g = core.cos_loss_grad(Z, Cb)
        num = central_diff(lambda x: core.cos_loss(x, Cb).value, Z)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-8)


def test_dist_and_combined_grad_finite_difference():
    rng = np.random.default_rng(1)
    C = gen_rotation_2d(8)
    for _ in range(10):
        y = rng.integers(0, 8, 5)
        Z = C.rows(y) + rng.standard_normal((5, 2)) * 2
        g = core.dist_loss_grad(Z, y, C)
        num = central_diff(lambda x: core.dist_loss(x, y, C).value, Z)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-7)
        g = core.combined_loss_grad(Z, y, C, 0.5, 2.0)
        num = central_diff(lambda x: core.combined_loss(x, y, C, 0.5, 2.0).value, Z)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-7)


def test_label_range_checked():
    C = gen_rotation_2d(4)
    with pytest.raises(LabelRangeError) as e:
        core.dist_loss(np.ones((2, 2)), [0, 4], C)
    assert e.value.index == 1 and e.value.label == 4


def test_gather_shape_is_batch_by_dim():
    C = choose_centers(build_configuration("An", 50, projection="DropLast"), 2000)
    with core.track_gather() as log:
        core.gather_centers(C, np.arange(16) * 100)
    assert log == [(16, 50)]


def test_assign_labels_frozen_and_ties():
    C = CenterMatrix(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
    Z = np.array([[1.0, 1.0], [0.1, 0.9], [-5.0, 0.1]])
    np.testing.assert_array_equal(core.assign_labels_cos(Z, C), [0, 1, 2])
    np.testing.assert_array_equal(core.assign_labels_dist(Z, C), [0, 1, 2])


def test_cos_label_ignores_center_scale():
    C = CenterMatrix(np.array([[10.0, 0.0], [0.0, 1.0]]))
    assert core.assign_labels_cos([[0.4, 0.6]], C)[0] == 1
    assert core.assign_labels_dist([[0.4, 0.6]], C)[0] == 1
    assert core.assign_labels_dist([[6.0, 0.6]], C)[0] == 0


@given(arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
@settings(max_examples=100, deadline=None)
def test_cos_label_matches_normalized_argmax(Z):
    Z = Z[np.linalg.norm(Z, axis=1) > 1e-3]
    if len(Z) == 0:
        return
    C = choose_centers(build_configuration("An", 3, projection="DropLast"), 12)
    ref = (Z / np.linalg.norm(Z, axis=1)[:, None]) @ (C.centers / C.norms[:, None]).T
    got = core.assign_labels_cos(Z, C)
    best = ref.max(axis=1)
    assert np.all(ref[np.arange(len(Z)), got] >= best - 1e-12)
