"""Multi-coil Cartesian acquisition operator (mask * FFT * coil sensitivity)."""

from dataclasses import dataclass

import numpy as np

from .core import fft2c, ifft2c
from .sampling import _grid


@dataclass
class CoilSensitivities:
    maps: np.ndarray  # [ncoils, nx, ny]

    def __post_init__(self):
        self.maps = np.asarray(self.maps)
        if self.maps.ndim != 3 or self.maps.shape[0] < 1:
            raise ValueError(f"sensitivity maps must be [ncoils, nx, ny], got {self.maps.shape}")

    @property
    def ncoils(self):
        return self.maps.shape[0]


def simulate_sensitivities(nx, ny, ncoils, seed=0, dtype=np.complex64):
    """Smooth analytic coil profiles, normalized to unit sum-of-squares per pixel.

    Each coil is a Gaussian magnitude lobe centred on an ellipse around the
    field of view, times a small random linear phase ramp.
    """
    if ncoils < 1:
        raise ValueError("ncoils must be >= 1")
    if nx < 1 or ny < 1:
        raise ValueError("grid extents must be >= 1")
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid((np.arange(nx) - nx / 2) / nx, (np.arange(ny) - ny / 2) / ny, indexing="ij")
    rot = rng.uniform(0, 2 * np.pi)
    maps = np.empty((ncoils, nx, ny), dtype=np.complex128)
    for c in range(ncoils):
        ang = rot + 2 * np.pi * c / ncoils
        px, py = 0.55 * np.cos(ang), 0.5 * np.sin(ang)
        width = rng.uniform(0.35, 0.5)
        mag = np.exp(-((gx - px) ** 2 + (gy - py) ** 2) / (2 * width ** 2))
        ramp = rng.uniform(-np.pi, np.pi, size=2)
        phase = rng.uniform(-np.pi, np.pi) + ramp[0] * gx + ramp[1] * gy
        maps[c] = mag * np.exp(1j * phase)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0, keepdims=True))
    return CoilSensitivities(maps.astype(dtype))


def _maps(sens):
    return sens.maps if isinstance(sens, CoilSensitivities) else np.asarray(sens)


def _coil_view(maps, ndim):
    # [ncoils, nx, ny] -> [ncoils, 1, ..., 1, nx, ny] matching an image of ndim axes
    return maps.reshape(maps.shape[:1] + (1,) * (ndim - 2) + maps.shape[1:])


def _check(img_shape, maps, grid):
    if len(img_shape) < 2 or tuple(img_shape[-2:]) != maps.shape[1:]:
        raise ValueError(f"image shape {img_shape} does not match sensitivities {maps.shape}")
    if grid.shape != maps.shape[1:]:
        raise ValueError(f"mask shape {grid.shape} does not match sensitivities {maps.shape}")


def forward(x, sens, mask):
    """Image ``[..., nx, ny]`` -> masked multi-coil k-space ``[coil, ..., nx, ny]``."""
    x = np.asarray(x)
    maps = _maps(sens)
    grid = _grid(mask)
    _check(x.shape, maps, grid)
    return fft2c(_coil_view(maps, x.ndim) * x[None]) * grid


def adjoint(y, sens, mask):
    """Coil-combined zero-filled image: sum_c conj(S_c) * ifft2c(mask * y_c)."""
    y = np.asarray(y)
    maps = _maps(sens)
    grid = _grid(mask)
    if y.ndim < 3 or y.shape[0] != maps.shape[0]:
        raise ValueError(f"k-space shape {y.shape} does not match {maps.shape[0]} coils")
    _check(y.shape[1:], maps, grid)
    return np.sum(np.conj(_coil_view(maps, y.ndim - 1)) * ifft2c(y * grid), axis=0)


def normal(x, sens, mask, mu=0.0):
    """(E^H E + mu I) x."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    out = adjoint(forward(x, sens, mask), sens, mask)
    if mu:
        out = out + mu * np.asarray(x)
    return out


def retrospective_undersample(full_ksp, mask):
    """Zero the unsampled positions of fully sampled k-space (broadcast over coil and t)."""
    full_ksp = np.asarray(full_ksp)
    grid = _grid(mask)
    if full_ksp.ndim < 2 or tuple(full_ksp.shape[-2:]) != grid.shape:
        raise ValueError(f"k-space shape {full_ksp.shape} does not match mask {grid.shape}")
    return full_ksp * grid
