import numpy as np
import pytest
from hypothesis import given, strategies as st

from unrollkit import autodiff as ad
from unrollkit.channel_shift import channel_shift_augment, default_shifts
from unrollkit.sampling import MaskKind


def test_hand_example():
    x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out = channel_shift_augment(x, [(0, 1)])
    np.testing.assert_array_equal(out[1, 0], [[2, 1], [4, 3]])


def test_channel_count_and_sums(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    out = channel_shift_augment(x, [(0, 2), (1, 0), (3, 3)])
    assert out.shape == (8, 3, 8, 8)
    for k in range(1, 4):
        np.testing.assert_allclose(out[2 * k:2 * k + 2].sum(axis=(1, 2, 3)), x.sum(axis=(1, 2, 3)))


def test_validation():
    x = np.zeros((2, 1, 4, 4))
    for bad in ([], [(0, 0)], [(1, 1), (1, 1)]):
        with pytest.raises(ValueError):
            channel_shift_augment(x, bad)


def test_defaults():
    assert default_shifts(MaskKind.UNIFORM, 32, 32) == [(0, 8), (0, 16), (0, 24)]
    assert default_shifts("gaussian", 16, 32) == [(0, 8), (0, 16), (0, 24)]
    assert default_shifts(MaskKind.RADIAL, 16, 16) == [(0, 8), (8, 0), (8, 8)]
    for kind in MaskKind:
        assert 2 * (1 + len(default_shifts(kind, 64, 64))) == 8


shift_lists = st.lists(st.tuples(st.integers(-9, 9), st.integers(-9, 9)).filter(lambda s: s != (0, 0)),
                       min_size=1, max_size=4, unique=True)


@given(shift_lists, st.integers(0, 1000))
def test_projection_and_inverse_are_exact(shifts, seed):
    x = np.random.default_rng(seed).standard_normal((2, 2, 6, 5)).astype(np.float32)
    out = channel_shift_augment(x, shifts)
    assert out.shape[0] == 2 * (1 + len(shifts))
    assert np.array_equal(out[:2], x)
    for k, (dx, dy) in enumerate(shifts, start=1):
        assert np.array_equal(np.roll(out[2 * k:2 * k + 2], (-dx, -dy), axis=(2, 3)), x)


def test_receptive_field_half_fov():
    ny = 16
    x = np.zeros((2, 1, 8, ny))
    x[0, 0, 3, 2] = 1.0
    out = channel_shift_augment(x, [(0, ny // 2)])
    hits = {(int(i), int(j)) for i, j in zip(*np.nonzero(out[[0, 2], 0].sum(axis=0)))}
    assert hits == {(3, 2), (3, 2 + ny // 2)}


def test_node_path_matches_array_path(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    shifts = [(0, 3), (2, 1)]
    node = ad.parameter(x)
    out = channel_shift_augment(node, shifts)
    np.testing.assert_array_equal(out.value, channel_shift_augment(x, shifts))
    g = rng.standard_normal(out.shape)
    out.backward(g)
    expected = g[:2] + sum(np.roll(g[2 * k:2 * k + 2], (-dx, -dy), axis=(2, 3))
                           for k, (dx, dy) in enumerate(shifts, start=1))
    np.testing.assert_allclose(node.grad, expected)
