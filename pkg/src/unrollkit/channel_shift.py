"""Receptive-field enlargement by concatenating circularly shifted input replicas."""

import numpy as np

from . import autodiff as ad
from .sampling import MaskKind


def _validate(shifts):
    shifts = [(int(dx), int(dy)) for dx, dy in shifts]
    if not shifts:
        raise ValueError("at least one shift is required")
    if (0, 0) in shifts:
        raise ValueError("(0, 0) is implicit; the unshifted copy always comes first")
    if len(set(shifts)) != len(shifts):
        raise ValueError(f"duplicate shifts in {shifts}")
    return shifts


def channel_shift_augment(x2ch, shifts):
    """[C, t, x, y] -> [C * (1 + len(shifts)), t, x, y].

    The original channels come first, then one circularly shifted copy per
    ``(dx, dy)``. Works on arrays and on autodiff nodes.
    """
    shifts = _validate(shifts)
    if isinstance(x2ch, ad.Node):
        parts = [x2ch] + [ad.roll(x2ch, (dx, dy), (2, 3)) for dx, dy in shifts]
        return ad.concat(parts, axis=0)
    x2ch = np.asarray(x2ch)
    if x2ch.ndim != 4:
        raise ValueError(f"expected [C, t, x, y], got shape {x2ch.shape}")
    parts = [x2ch] + [np.roll(x2ch, (dx, dy), axis=(2, 3)) for dx, dy in shifts]
    return np.concatenate(parts, axis=0)


def default_shifts(mask_kind, nx, ny):
    """Three replicas along the undersampled direction(s)."""
    kind = MaskKind.parse(mask_kind)
    if kind is MaskKind.RADIAL:
        return [(0, ny // 2), (nx // 2, 0), (nx // 2, ny // 2)]
    return [(0, ny // 4), (0, ny // 2), (0, 3 * ny // 4)]
