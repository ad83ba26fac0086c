"""Image-quality metrics on a central crop, and the paired t-test."""

from dataclasses import dataclass
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

K1, K2 = 0.01, 0.03
WINDOW, SIGMA = 11, 1.5


@dataclass(frozen=True)
class Crop:
    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def shape(self):
        return self.x1 - self.x0, self.y1 - self.y0

    def apply(self, img):
        return np.asarray(img)[..., self.x0:self.x1, self.y0:self.y1]

    def restrict(self, other):
        """Intersection with another crop (cropping a crop leaves it unchanged)."""
        return Crop(max(self.x0, other.x0), min(self.x1, other.x1),
                    max(self.y0, other.y0), min(self.y1, other.y1))


def crop_region(nx, ny):
    """Centred (nx/2) x round(2 ny / 3) rectangle."""
    if nx < 2 or ny < 2 or nx % 2 or ny % 2:
        raise ValueError(f"crop needs even extents, got {nx}x{ny}")
    cx, cy = nx // 2, int(math.floor(2 * ny / 3 + 0.5))
    x0, y0 = (nx - cx) // 2, (ny - cy) // 2
    return Crop(x0, x0 + cx, y0, y0 + cy)


def gaussian_window(size=WINDOW, sigma=SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def window_size(h, w):
    """The standard window, or the largest odd one that fits a small crop."""
    size = min(WINDOW, h, w)
    return size if size % 2 else size - 1


def _filter(img, g):
    # valid separable filtering over the last two axes
    k = g.size
    out = np.tensordot(sliding_window_view(img, k, axis=-2), g, axes=([-1], [0]))
    return np.tensordot(sliding_window_view(out, k, axis=-1), g, axes=([-1], [0]))


def _prepare(x_mag, ref_mag, crop):
    x = np.asarray(x_mag, dtype=np.float64)
    ref = np.asarray(ref_mag, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    if crop is None:
        crop = crop_region(*ref.shape[-2:])
    return crop.apply(x), crop.apply(ref)


def ssim(x_mag, ref_mag, crop=None):
    """Mean local SSIM inside the crop, averaged over frames.

    The data range is the reference maximum over the crop.
    """
    x, ref = _prepare(x_mag, ref_mag, crop)
    data_range = float(ref.max()) if ref.size else 0.0
    if data_range <= 0:
        raise ValueError("zero data range in reference crop")
    size = window_size(*ref.shape[-2:])
    if size < 1:
        raise ValueError("crop too small for SSIM")
    g = gaussian_window(size, SIGMA)
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mx, my = _filter(x, g), _filter(ref, g)
    sxx = _filter(x * x, g) - mx * mx
    syy = _filter(ref * ref, g) - my * my
    sxy = _filter(x * ref, g) - mx * my
    smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    if smap.ndim > 2:
        return float(np.mean(smap.reshape(-1, *smap.shape[-2:]).mean(axis=(-2, -1))))
    return float(smap.mean())


def nmrse(x_mag, ref_mag, crop=None):
    """||x - ref|| / ||ref|| inside the crop."""
    x, ref = _prepare(x_mag, ref_mag, crop)
    denom = float(np.sqrt(np.sum(ref ** 2)))
    if denom == 0:
        raise ValueError("zero-norm reference")
    return float(np.sqrt(np.sum((x - ref) ** 2))) / denom


def _betacf(a, b, x, max_iter=300, eps=1e-15):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, dof):
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(a, b):
    """Two-sided paired t-test on d = a - b; returns (t, p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs n >= 2")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0 or not np.isfinite(sd):
        raise ValueError("differences have zero variance; the t statistic is undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return t, t_two_sided_p(t, n - 1)
