import numpy as np
import pytest

from vedflow.errors import DimensionError
from vedflow.gridmap import GridMap, grid_to_vector, map_to_grid


def _checker_map():
    mask = np.zeros((4, 5), dtype=bool)
    mask[::2, ::2] = True
    mask[1::2, 1::2] = True
    return GridMap.from_mask(mask)


def test_fully_active_ones():
    gm = GridMap.from_mask(np.ones((3, 3), dtype=bool))
    img = map_to_grid(np.ones(9), gm)
    np.testing.assert_array_equal(img, np.ones((3, 3)))


def test_one_hot_lands_on_active_position():
    gm = _checker_map()
    rows, cols = np.nonzero(gm.mask)
    for i in (0, gm.n_active - 1):
        x = np.zeros(gm.n_active)
        x[i] = 2.5
        img = map_to_grid(x, gm)
        assert img[rows[i], cols[i]] == 2.5
        assert np.count_nonzero(img) == 1


def test_round_trip_vector_side(rng):
    gm = _checker_map()
    x = rng.normal(size=gm.n_active)
    np.testing.assert_array_equal(grid_to_vector(map_to_grid(x, gm), gm), x)


def test_round_trip_image_side(rng):
    gm = _checker_map()
    img = np.full((4, 5), gm.fill_value)
    img[gm.mask] = rng.normal(size=gm.n_active)
    np.testing.assert_array_equal(map_to_grid(grid_to_vector(img, gm), gm), img)


def test_zero_image_gives_zero_vector():
    gm = _checker_map()
    np.testing.assert_array_equal(grid_to_vector(np.zeros((4, 5)), gm), np.zeros(gm.n_active))


def test_linearity_on_mask(rng):
    gm = _checker_map()
    x, y = rng.normal(size=(2, gm.n_active))
    combined = map_to_grid(2.0 * x - 3.0 * y, gm)
    separate = 2.0 * map_to_grid(x, gm) - 3.0 * map_to_grid(y, gm)
    np.testing.assert_allclose(combined[gm.mask], separate[gm.mask], rtol=0, atol=1e-15)


def test_batched_shapes(rng):
    gm = _checker_map()
    batch = rng.normal(size=(7, gm.n_active))
    imgs = map_to_grid(batch, gm)
    assert imgs.shape == (7, 4, 5)
    np.testing.assert_array_equal(grid_to_vector(imgs, gm), batch)


def test_nonzero_fill_value():
    gm = GridMap.from_mask(_checker_map().mask, fill_value=-1.0)
    img = map_to_grid(np.zeros(gm.n_active), gm)
    assert (img[~gm.mask] == -1.0).all()


def test_dimension_errors():
    gm = _checker_map()
    with pytest.raises(DimensionError):
        map_to_grid(np.zeros(gm.n_active + 1), gm)
    with pytest.raises(DimensionError):
        grid_to_vector(np.zeros((5, 5)), gm)
    with pytest.raises(DimensionError):
        GridMap(3, 3, np.ones((2, 2), dtype=bool))
