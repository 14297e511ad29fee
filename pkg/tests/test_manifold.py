import numpy as np
import pytest

from torusot.manifold import (GridSpec, displacement, distance,
                              min_displacement, pairwise_distance,
                              winding_offsets, wrap)


def test_wrap_examples():
    assert wrap([1.25]) == pytest.approx([0.25])
    assert wrap([-0.1]) == pytest.approx([0.9])
    assert np.allclose(wrap([0.5, 2.0]), [0.5, 0.0])


def test_wrap_idempotent_and_range():
    rng = np.random.default_rng(7)
    x = rng.normal(0.0, 10.0, size=(500, 2))
    w = wrap(x)
    assert np.all((w >= 0.0) & (w < 1.0))
    assert np.array_equal(wrap(w), w)


def test_wrap_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap([np.nan])
    with pytest.raises(ValueError):
        wrap([np.inf, 0.0])


def test_displacement_examples():
    assert displacement([0.2], [0.7], [0]) == pytest.approx([0.5])
    assert displacement([0.2], [0.7], [-1]) == pytest.approx([-0.5])
    assert displacement([0.9], [0.1], [1]) == pytest.approx([0.2])


def test_displacement_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = wrap(rng.uniform(0, 1, 2))
        y = wrap(rng.uniform(0, 1, 2))
        for w in winding_offsets(2, 2):
            assert np.allclose(wrap(displacement(x, y, w) + x), y, atol=1e-12)


def test_distance_examples():
    assert distance([0.0], [0.4]) == pytest.approx(0.4)
    assert distance([0.0], [0.7]) == pytest.approx(0.3)
    assert distance([0.3, 0.8], [0.3, 0.8]) == 0.0


def test_distance_is_a_metric():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, size=(1000, 3, 2))
    for x, y, z in pts:
        dxy = distance(x, y)
        assert dxy == pytest.approx(distance(y, x), abs=1e-15)
        assert dxy >= 0.0
        assert dxy <= distance(x, z) + distance(z, y) + 1e-12
    assert distance([0.25, 0.75], [0.25, 0.75]) == 0.0


def test_min_displacement_halves():
    d = min_displacement([0.9], [0.1])
    assert d == pytest.approx([0.2])
    assert np.all(np.abs(min_displacement(np.zeros(2), np.array([0.5, 0.49]))) <= 0.5)


def test_pairwise_distance_matches_scalar():
    rng = np.random.default_rng(5)
    xs = rng.uniform(0, 1, (6, 2))
    ys = rng.uniform(0, 1, (4, 2))
    D = pairwise_distance(xs, ys)
    for i in range(6):
        for j in range(4):
            assert D[i, j] == pytest.approx(distance(xs[i], ys[j]), abs=1e-14)


def test_winding_offsets_order():
    w = winding_offsets(1, 2)
    assert w.shape == (9, 2)
    assert np.array_equal(w[0], [-1, -1])
    assert np.array_equal(w[-1], [1, 1])
    # lexicographic
    as_tuples = [tuple(row) for row in w]
    assert as_tuples == sorted(as_tuples)


def test_grid_spec():
    g = GridSpec(4, 1)
    assert g.n_nodes == 4
    assert np.allclose(g.points().ravel(), [0.0, 0.25, 0.5, 0.75])
    g2 = GridSpec(3, 2)
    assert g2.n_nodes == 9
    assert g2.points().shape == (9, 2)
    with pytest.raises(ValueError):
        GridSpec(1, 1)
    with pytest.raises(ValueError):
        GridSpec(4, 3)


def test_grid_neighbors_periodic():
    g = GridSpec(4, 2)
    pts = g.points()
    for axis in range(2):
        nb = g.neighbor_indices(axis, +1)
        shifted = pts[nb]
        expected = pts.copy()
        expected[:, axis] = (expected[:, axis] + 0.25) % 1.0
        assert np.allclose(shifted, expected)
