import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from massgrasp.config import get_material
from massgrasp.core import Patch, Tray
from massgrasp.errors import OutOfBoundsError
from massgrasp.patching import crop_many, crop_patch, flip_augment, flip_batch
from massgrasp.sim import init_tray

P = 30


class FixedRng:
    """Stands in for a Generator; replays the given uniform draws."""

    def __init__(self, *draws):
        self.draws = list(draws)

    def random(self):
        return self.draws.pop(0)


def plane_tray(sx, sy, rows=60, cols=80, base=50.0):
    r, c = np.mgrid[0:rows, 0:cols]
    h = base + sx * c + sy * r
    return Tray(h, np.linspace(0, 1, rows * cols).reshape(rows, cols), 5.0, get_material("coffee"))


def test_uniform_tray_gives_zero_relative_height():
    tray = Tray(np.full((40, 40), 12.5), np.zeros((40, 40)), 5.0, get_material("coffee"))
    assert not crop_patch(tray, 20, 20, P).channels[0].any()


@settings(max_examples=30, deadline=None)
@given(x=st.integers(15, 65), y=st.integers(15, 45), seed=st.integers(0, 50))
def test_center_is_exactly_zero(x, y, seed):
    tray = Tray(np.random.default_rng(seed).random((60, 80)) * 40, np.zeros((60, 80)), 5.0,
                get_material("coffee"))
    p = crop_patch(tray, x, y, P)
    assert p.channels[0, P // 2, P // 2] == 0.0
    assert p.center_xy == (x, y)


@given(sx=st.floats(-3, 3), sy=st.floats(-3, 3))
def test_plane_oracle(sx, sy):
    tray = plane_tray(sx, sy)
    ch = crop_patch(tray, 40, 30, P).channels[0]
    dr, dc = np.mgrid[-15:15, -15:15]
    np.testing.assert_allclose(ch, sx * dc + sy * dr, atol=1e-9)


def test_intensity_copied_verbatim():
    tray = plane_tray(1.0, 0.5)
    p = crop_patch(tray, 40, 30, P)
    assert np.array_equal(p.channels[1], tray.intensity[15:45, 25:55])


def test_crop_does_not_mutate():
    tray = init_tray(get_material("coffee"), 3000.0, seed=1)
    h, i = tray.heights.copy(), tray.intensity.copy()
    crop_patch(tray, 50, 30, P)
    crop_many(tray, [(20, 20), (60, 40)], P)
    assert np.array_equal(h, tray.heights) and np.array_equal(i, tray.intensity)


@pytest.mark.parametrize("x,y", [(14, 30), (30, 14), (106, 30), (30, 61), (-1, 0)])
def test_out_of_bounds(x, y):
    tray = plane_tray(0, 0, rows=75, cols=120)
    with pytest.raises(OutOfBoundsError):
        crop_patch(tray, x, y, P)
    with pytest.raises(OutOfBoundsError):
        crop_many(tray, [(x, y)], P)


def test_crop_many_matches_single_crops():
    tray = init_tray(get_material("coffee"), 3000.0, seed=2)
    pts = [(15, 15), (105, 60), (60, 37), (33, 21)]
    batch = crop_many(tray, pts, P)
    for b, (x, y) in zip(batch, pts):
        assert np.array_equal(b, crop_patch(tray, x, y, P).channels)


def test_no_flip_is_identity():
    p = crop_patch(plane_tray(1, 2), 40, 30, P)
    assert flip_augment(p, FixedRng(0.9, 0.9)) == p


def test_double_horizontal_flip_is_identity():
    p = crop_patch(plane_tray(1, 2), 40, 30, P)
    once = flip_augment(p, FixedRng(0.9, 0.1))
    assert once != p
    assert flip_augment(once, FixedRng(0.9, 0.1)) == p


@pytest.mark.parametrize("draws,neg_x,neg_y", [
    ((0.1, 0.9), False, True), ((0.9, 0.1), True, False), ((0.1, 0.1), True, True),
])
def test_flip_of_plane_negates_slope(draws, neg_x, neg_y):
    sx, sy = 1.5, -0.75
    ch = flip_augment(crop_patch(plane_tray(sx, sy), 40, 30, P), FixedRng(*draws)).channels[0]
    # flipping an even-width window maps offset d to -1 - d
    dr, dc = np.mgrid[-15:15, -15:15]
    ex = sx * ((-1 - dc) if neg_x else dc) + sy * ((-1 - dr) if neg_y else dr)
    np.testing.assert_allclose(ch, ex, atol=1e-9)
    slope_x = np.diff(ch, axis=1).mean()
    slope_y = np.diff(ch, axis=0).mean()
    assert slope_x == pytest.approx(-sx if neg_x else sx)
    assert slope_y == pytest.approx(-sy if neg_y else sy)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_flip_preserves_value_multiset(seed):
    rng = np.random.default_rng(seed)
    p = Patch(rng.normal(size=(2, 8, 8)), (4, 4))
    q = flip_augment(p, rng)
    for c in range(2):
        assert np.array_equal(np.sort(p.channels[c], axis=None), np.sort(q.channels[c], axis=None))


def test_flip_batch_flips_channels_jointly():
    rng = np.random.default_rng(0)
    batch = rng.normal(size=(64, 2, 6, 6))
    out = flip_batch(batch, np.random.default_rng(1))
    for b, o in zip(batch, out):
        variants = [b, b[:, ::-1], b[:, :, ::-1], b[:, ::-1, ::-1]]
        assert any(np.array_equal(o, v) for v in variants)
    assert not np.array_equal(out, batch)
