"""Numeric substrate: centered orthonormal FFTs, circular shifts, inner products.

Complex tensors are plain numpy arrays (complex64 for storage) with the fixed
axis order ``[coil, t, x, y]``; leading axes are optional. Reductions
accumulate in 64-bit.
"""

import numpy as np


def _check_spatial(a):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] < 1 or a.shape[-2] < 1:
        raise ValueError(f"expected at least two spatial axes with extent >= 1, got shape {a.shape}")
    return a


def fft2c(img):
    """Centered, orthonormal 2D DFT over the last two axes (DC at index n//2)."""
    img = _check_spatial(img)
    ksp = np.fft.ifftshift(img, axes=(-2, -1))
    ksp = np.fft.fft2(ksp, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(ksp, axes=(-2, -1))


def ifft2c(ksp):
    """Inverse of :func:`fft2c`."""
    ksp = _check_spatial(ksp)
    img = np.fft.ifftshift(ksp, axes=(-2, -1))
    img = np.fft.ifft2(img, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(img, axes=(-2, -1))


def circ_shift(t, axis, offset):
    """Move element ``i`` to ``(i + offset) mod extent`` along ``axis``."""
    t = np.asarray(t)
    if not -t.ndim <= axis < t.ndim:
        raise ValueError(f"axis {axis} out of range for {t.ndim}-d tensor")
    offset = int(offset) % t.shape[axis] if t.shape[axis] else 0
    if offset == 0:
        return t.copy()
    return np.roll(t, offset, axis=axis)


def inner(a, b):
    """Sum of ``conj(a_i) * b_i`` accumulated in complex128."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a.astype(np.complex128, copy=False).ravel(),
                           b.astype(np.complex128, copy=False).ravel()))


def norm(a):
    """l2 norm with 64-bit accumulation."""
    a = np.asarray(a)
    return float(np.sqrt(np.sum(np.abs(a.astype(np.complex128, copy=False)) ** 2)))
