import numpy as np
import pytest

from carnot_gmt.algebra import bch_product, builtin, dilate, inverse
from carnot_gmt.errors import DomainError, PreconditionError
from carnot_gmt.metric import (
    HomogeneousQuasiNorm,
    LayerNorm,
    box_ball_constant,
    box_gauge,
    covering_number,
    euclidean_ball_sample,
    greedy_5r_cover,
    in_box,
    kill_layers,
    make_norm,
    max_cover_distance,
    min_center_separation,
    quasi_distance,
)


def brute_force_centers(norm, points, r):
    centers = []
    for idx, q in enumerate(points):
        if centers and np.min(quasi_distance(norm, q, points[centers])) < 2 * r:
            continue
        centers.append(idx)
    return centers


def test_norm_is_homogeneous_and_symmetric(any_group, rng):
    norm = make_norm(any_group)
    x = rng.normal(size=(500, any_group.n))
    for r in (0.1, 2.5):
        np.testing.assert_allclose(norm(dilate(any_group, r, x)), r * norm(x), rtol=1e-12)
    np.testing.assert_allclose(norm(inverse(any_group, x)), norm(x))


def test_distance_is_left_invariant(any_group, rng):
    norm = make_norm(any_group, layer_norm="euclidean")
    x, y, z = rng.normal(size=(3, 300, any_group.n))
    lhs = quasi_distance(norm, bch_product(any_group, z, x), bch_product(any_group, z, y))
    np.testing.assert_allclose(lhs, quasi_distance(norm, x, y), rtol=1e-9, atol=1e-12)


def test_layer_norms(heisenberg):
    x = np.array([3.0, 4.0, 0.0])
    assert make_norm(heisenberg)(x) == pytest.approx(4.0)
    assert make_norm(heisenberg, layer_norm="euclidean")(x) == pytest.approx(5.0)
    assert make_norm(heisenberg, weights=[1.0, 4.0])([0.0, 0.0, 1.0]) == pytest.approx(2.0)


def test_norm_rejects_bad_weights(heisenberg):
    with pytest.raises(DomainError):
        HomogeneousQuasiNorm(heisenberg, (1.0,), LayerNorm.SUP)
    with pytest.raises(DomainError):
        HomogeneousQuasiNorm(heisenberg, (1.0, -2.0), LayerNorm.SUP)


def test_unit_ball_is_the_unit_box(any_group, rng):
    norm = make_norm(any_group)
    x = rng.normal(size=(1000, any_group.n))
    np.testing.assert_allclose(norm(x), box_gauge(any_group, x))
    assert box_ball_constant(norm, samples=2000) == pytest.approx(1.0)


def test_box_ball_constant_with_euclidean_layers(heisenberg2):
    c = box_ball_constant(make_norm(heisenberg2, layer_norm="euclidean"), samples=20000)
    assert 1.0 < c <= 2.0 + 1e-9


def test_layer_bounds(heisenberg):
    norm = make_norm(heisenberg, weights=[2.0, 1.0])
    np.testing.assert_allclose(norm.layer_bounds(0.5), [0.25, 0.25, 0.25])


def test_quasi_triangle_constant(any_group):
    K = make_norm(any_group).K
    assert 1.0 <= K < 5.0


def test_in_box(heisenberg):
    center = np.array([1.0, -2.0, 0.5])
    inside = bch_product(heisenberg, center, [0.4, 0.1, 0.2])
    outside = bch_product(heisenberg, center, [0.1, 0.1, 1.5])
    assert in_box(heisenberg, inside, center, 1.0)
    assert not in_box(heisenberg, outside, center, 1.0)


def test_euclidean_ball_sample(rng):
    pts = euclidean_ball_sample(4, 0.3, 5000, rng)
    assert pts.shape == (5000, 4)
    assert np.linalg.norm(pts, axis=1).max() <= 0.3


def test_kill_first_layer_in_heisenberg(h1_norm, rng):
    x = rng.uniform(-0.5, 0.5, size=(200, 3))
    x /= np.maximum(1.0, np.linalg.norm(x, axis=1, keepdims=True) / 0.5)
    result = kill_layers(h1_norm, x, 1, 0.5)
    np.testing.assert_allclose(result.x_tilde[:, :2], 0.0)
    np.testing.assert_allclose(result.x_tilde[:, 2], x[:, 2], atol=1e-15)
    np.testing.assert_allclose(result.distance, np.max(np.abs(x[:, :2]), axis=1))
    assert np.all(result.ratio <= 1.0)


def test_kill_two_layers_in_engel(engel, rng):
    norm = make_norm(engel)
    x = rng.uniform(-1, 1, size=(500, 4))
    x *= 0.2 / np.linalg.norm(x, axis=1, keepdims=True)
    result = kill_layers(norm, x, 2, 0.2)
    np.testing.assert_allclose(result.x_tilde[:, :3], 0.0, atol=1e-15)
    assert result.scale == pytest.approx(0.2 ** 0.5)
    assert np.max(result.ratio) < 5.0


def test_kill_layers_preconditions(h1_norm):
    with pytest.raises(PreconditionError):
        kill_layers(h1_norm, [0.1, 0.0, 0.0], 1, 1.5)
    with pytest.raises(PreconditionError):
        kill_layers(h1_norm, [0.5, 0.5, 0.0], 1, 0.5)
    with pytest.raises(DomainError):
        kill_layers(h1_norm, [0.1, 0.0, 0.0], 0, 0.5)


@pytest.mark.parametrize("group", ["heisenberg:1", "heisenberg:2", "engel"])
def test_kill_layers_ratio_is_scale_stable(group):
    alg = builtin(group)
    norm = make_norm(alg)
    radii = [1e-1, 1e-2, 1e-3, 1e-4]
    for j in range(1, alg.step + 1):
        sups = []
        for r in radii:
            x = euclidean_ball_sample(alg.n, r, 1000, np.random.default_rng(j))
            result = kill_layers(norm, x, j, r)
            killed = np.concatenate([result.x_tilde[:, alg.layer_slices[k]] for k in range(j)], axis=1)
            assert np.all(killed == 0.0)
            sups.append(float(np.max(result.ratio)))
        assert max(sups[-2:]) <= 2.0 * max(sups[:2])


@pytest.mark.parametrize("name", ["heisenberg:1", "engel", "abelian:2"])
def test_greedy_cover_matches_brute_force(name, rng):
    alg = builtin(name)
    norm = make_norm(alg)
    points = rng.uniform(-1, 1, size=(400, alg.n))
    r = 0.2
    report = greedy_5r_cover(norm, points, r)
    assert report.center_indices == brute_force_centers(norm, points, r)
    assert min_center_separation(norm, report) >= 2 * r
    assert max_cover_distance(norm, points, report) < 2 * r <= report.cover_radius
    assert report.n_points == 400


def test_cover_of_a_horizontal_segment(h1_norm):
    t = np.linspace(0.0, 1.0, 10001)
    points = np.column_stack([t, np.zeros_like(t), np.zeros_like(t)])
    assert 49 <= covering_number(h1_norm, points, 0.01) <= 52


def test_cover_edge_cases(h1_norm):
    assert greedy_5r_cover(h1_norm, np.zeros((0, 3)), 0.1).count == 0
    single = greedy_5r_cover(h1_norm, [[0.0, 0.0, 0.0]], 0.1)
    assert single.count == 1
    assert min_center_separation(h1_norm, single) == float("inf")
    with pytest.raises(DomainError):
        greedy_5r_cover(h1_norm, [[0.0, 0.0, 0.0]], 0.0)
