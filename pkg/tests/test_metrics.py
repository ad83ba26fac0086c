import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from unrollkit.metrics import Crop, betainc, crop_region, nmrse, paired_t_test, ssim, t_two_sided_p, window_size
from unrollkit.phantom import PhantomSpec, generate_phantom

# two-sided p-values from adaptive quadrature of the Student t density, keyed by (n, t) with n - 1 dof
T_ORACLE = {
    (5, 0.0): 1.0, (5, 1.0): 0.3739009663000591, (5, 3.0): 0.03994196807171885,
    (9, 0.0): 1.0, (9, 1.0): 0.3465935070873344, (9, 3.0): 0.01707168123378265,
    (30, 0.0): 1.0, (30, 1.0): 0.32558198801619265, (30, 3.0): 0.005499192133903391,
}


def phantom_mag(seed=0, contrast=0):
    return np.abs(generate_phantom(PhantomSpec(64, 64, 4, contrast, seed))).astype(np.float64)


def test_crop_examples():
    c = crop_region(64, 66)
    assert c.shape == (32, 44) and c == Crop(16, 48, 11, 55)
    c = crop_region(16, 12)
    assert c.shape == (8, 8) and c == Crop(4, 12, 2, 10)
    assert crop_region(64, 64).shape == (32, 43)
    for bad in ((63, 64), (64, 1), (0, 4)):
        with pytest.raises(ValueError):
            crop_region(*bad)


@given(st.integers(1, 64), st.integers(1, 64))
def test_crop_centred_and_idempotent(hx, hy):
    nx, ny = 2 * hx, 2 * hy
    c = crop_region(nx, ny)
    assert c.shape == (nx // 2, math.floor(2 * ny / 3 + 0.5))
    assert abs(c.x0 - (nx - c.x1)) <= 1 and abs(c.y0 - (ny - c.y1)) <= 1
    assert c.restrict(c) == c
    assert c.restrict(Crop(0, nx, 0, ny)) == c


def test_ssim_fixed_points():
    ref = phantom_mag()
    assert ssim(ref, ref) == 1.0
    assert nmrse(ref, ref) == 0.0
    assert nmrse(2 * ref, ref) == pytest.approx(1.0, abs=1e-12)
    assert nmrse(np.zeros_like(ref), ref) == 1.0
    zero = ssim(np.zeros_like(ref), ref)
    assert 0 < zero < 0.5


@given(arrays(np.float64, (2, 16, 16), elements=st.floats(0, 10)))
def test_ssim_identity_any_input(x):
    if x[..., 4:12, 3:13].max() <= 0:
        with pytest.raises(ValueError):
            ssim(x, x)
        return
    assert ssim(x, x) == 1.0
    assert nmrse(x, x) == 0.0


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_ssim_scale_invariance(a, seed):
    ref = phantom_mag(seed % 5)
    x = ref + 0.05 * np.random.default_rng(seed).standard_normal(ref.shape)
    assert abs(ssim(a * x, a * ref) - ssim(x, ref)) < 1e-6
    assert abs(nmrse(a * x, a * ref) - nmrse(x, ref)) < 1e-12


def test_metrics_ignore_pixels_outside_crop(rng):
    ref = phantom_mag(1)
    x = ref + 0.1 * rng.standard_normal(ref.shape)
    c = crop_region(64, 64)
    y = x.copy()
    outside = np.ones(ref.shape[-2:], bool)
    outside[c.x0:c.x1, c.y0:c.y1] = False
    y[:, outside] = rng.standard_normal(int(outside.sum()) * ref.shape[0]).reshape(ref.shape[0], -1)
    ref2 = ref.copy()
    ref2[:, outside] = 5.0
    assert ssim(x, ref) == ssim(y, ref2)
    assert nmrse(x, ref) == nmrse(y, ref2)


def test_ssim_small_crop_window_and_errors():
    assert window_size(32, 43) == 11
    assert window_size(8, 8) == 7
    assert window_size(6, 9) == 5
    with pytest.raises(ValueError):
        ssim(np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(ValueError):
        ssim(np.ones((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ValueError):
        nmrse(np.ones((8, 8)), np.zeros((8, 8)))


def test_ssim_matches_direct_window_sum(rng):
    # brute force: explicit 2D Gaussian window at every valid position
    x, ref = rng.uniform(0, 1, (12, 12)), rng.uniform(0, 1, (12, 12))
    crop = Crop(0, 12, 0, 12)
    g = np.exp(-((np.arange(11) - 5) ** 2) / (2 * 1.5 ** 2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    L = ref.max()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for i in range(2):
        for j in range(2):
            a, b = x[i:i + 11, j:j + 11], ref[i:i + 11, j:j + 11]
            ma, mb = (w * a).sum(), (w * b).sum()
            va, vb = (w * a * a).sum() - ma ** 2, (w * b * b).sum() - mb ** 2
            cov = (w * a * b).sum() - ma * mb
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    assert ssim(x, ref, crop) == pytest.approx(np.mean(vals), abs=1e-12)


def test_t_test_examples():
    t, p = paired_t_test([1, 2, 3, 4], [2, 1, 4, 3])
    assert t == 0.0 and p == 1.0
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [0, 1])
    with pytest.raises(ValueError):
        paired_t_test([1.0], [0.0])
    with pytest.raises(ValueError):
        paired_t_test([1, 2, 3], [1, 2])
    d = 1 + np.array([-1, 1, -1, 1, -1, 1, -1, 1, 0])
    t, p = paired_t_test(d, np.zeros(9))
    assert t == pytest.approx(3.0, abs=1e-12)
    assert p == pytest.approx(T_ORACLE[(9, 3.0)], abs=1e-4)


@pytest.mark.parametrize("key", sorted(T_ORACLE))
def test_t_p_values_match_quadrature(key):
    n, t = key
    assert abs(t_two_sided_p(t, n - 1) - T_ORACLE[key]) < 1e-4
    assert abs(t_two_sided_p(-t, n - 1) - T_ORACLE[key]) < 1e-4


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=30), st.integers(0, 1000))
def test_t_test_antisymmetric(a, seed):
    a = np.array(a)
    b = a + np.random.default_rng(seed).standard_normal(a.size)
    t1, p1 = paired_t_test(a, b)
    t2, p2 = paired_t_test(b, a)
    assert t1 == -t2 and p1 == p2
    assert 0.0 <= p1 <= 1.0


def test_betainc_edges_and_symmetry():
    assert betainc(2.0, 3.0, 0.0) == 0.0 and betainc(2.0, 3.0, 1.0) == 1.0
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-14)
    assert betainc(2.5, 0.5, 0.4) + betainc(0.5, 2.5, 0.6) == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ValueError):
        betainc(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        t_two_sided_p(1.0, 0)
