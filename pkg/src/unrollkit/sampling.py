"""Cartesian k-space undersampling masks.

Grids are boolean ``[nx, ny]`` arrays; axis 0 is kx (readout, always fully
sampled by the line-based families) and axis 1 is ky (phase encode).
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

PAPER_RATES = (4, 8, 12, 16, 20, 24)


class MaskKind(str, Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    RADIAL = "radial"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"pseudoradial": "radial", "pseudo-radial": "radial", "pseudo_radial": "radial",
                   "gaussianrandom": "gaussian", "random": "gaussian"}
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown mask kind {value!r}") from None


@dataclass
class SamplingMask:
    kind: MaskKind
    nominal_rate: int
    grid: np.ndarray
    acs_lines: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = MaskKind.parse(self.kind)
        self.grid = np.asarray(self.grid, dtype=bool)
        if self.grid.ndim != 2:
            raise ValueError("mask grid must be 2D [nx, ny]")
        if not self.grid.any():
            raise ValueError("mask samples nothing")

    @property
    def shape(self):
        return self.grid.shape

    @property
    def achieved_rate(self):
        return achieved_rate(self)


def _grid(mask):
    return mask.grid if isinstance(mask, SamplingMask) else np.asarray(mask).astype(bool)


def achieved_rate(mask):
    """nx*ny divided by the number of sampled cells."""
    grid = _grid(mask)
    count = int(np.count_nonzero(grid))
    if count == 0:
        raise ValueError("achieved rate undefined for an all-zero mask")
    return grid.size / count


def acs_range(ny, acs_lines):
    start = ny // 2 - acs_lines // 2
    return np.arange(start, start + acs_lines)


def default_acs(ny, rate):
    """Calibration lines that keep every family inside the rate/2..2*rate band.

    Starts from max(8, ny/16) and shrinks with the acceleration so that the
    ACS block never dominates the line budget at high rates.
    """
    base = max(8, ny // 16)
    return int(max(2, min(base, ny // (2 * int(rate)))))


def _check_common(nx, ny, rate, acs_lines):
    if nx < 1 or ny < 1:
        raise ValueError("grid extents must be >= 1")
    if int(rate) != rate or rate < 1:
        raise ValueError(f"rate must be a positive integer, got {rate}")
    if acs_lines < 0:
        raise ValueError("acs_lines must be >= 0")
    if acs_lines >= ny:
        raise ValueError(f"acs_lines ({acs_lines}) must be smaller than ny ({ny})")


def make_uniform_mask(nx, ny, rate, acs_lines=0, offset=0):
    """Every ``rate``-th ky line starting at ``offset`` plus the central ACS block."""
    _check_common(nx, ny, rate, acs_lines)
    rate = int(rate)
    if not 0 <= offset < rate:
        raise ValueError(f"offset must lie in [0, {rate})")
    lines = np.zeros(ny, dtype=bool)
    lines[offset::rate] = True
    lines[acs_range(ny, acs_lines)] = True
    grid = np.broadcast_to(lines, (nx, ny)).copy()
    return SamplingMask(MaskKind.UNIFORM, rate, grid, acs_lines, seed=offset)


def make_gaussian_mask(nx, ny, rate, acs_lines=0, seed=0, sigma=None):
    """Variable-density random ky lines, round(ny/rate) in total including ACS.

    Non-ACS lines are drawn without replacement with probability proportional
    to a Gaussian centred on DC (default width ny/6).
    """
    _check_common(nx, ny, rate, acs_lines)
    n_lines = int(math.floor(ny / rate + 0.5))
    if n_lines < acs_lines:
        raise ValueError(f"rate {rate} allows {n_lines} lines, fewer than the {acs_lines} ACS lines")
    if n_lines < 1:
        raise ValueError(f"rate {rate} leaves no lines on ny={ny}")
    sigma = ny / 6.0 if sigma is None else float(sigma)
    lines = np.zeros(ny, dtype=bool)
    lines[acs_range(ny, acs_lines)] = True
    candidates = np.flatnonzero(~lines)
    weights = np.exp(-0.5 * ((candidates - ny // 2) / sigma) ** 2)
    rng = np.random.default_rng(seed)
    picked = rng.choice(candidates, size=n_lines - acs_lines, replace=False, p=weights / weights.sum())
    lines[picked] = True
    grid = np.broadcast_to(lines, (nx, ny)).copy()
    return SamplingMask(MaskKind.GAUSSIAN, int(rate), grid, acs_lines, seed=seed)


def n_spokes_for(nx, ny, rate):
    return int(math.floor(max(nx, ny) * math.pi / (2.0 * rate) + 0.5))


def _rasterize_spoke(grid, theta):
    # one cell per unit step along the dominant axis, through the grid centre
    nx, ny = grid.shape
    cx, cy = nx // 2, ny // 2
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) >= abs(s):
        i = np.arange(nx)
        j = np.floor(cy + (i - cx) * (s / c) + 0.5).astype(int)
        keep = (j >= 0) & (j < ny)
        grid[i[keep], j[keep]] = True
    else:
        j = np.arange(ny)
        i = np.floor(cx + (j - cy) * (c / s) + 0.5).astype(int)
        keep = (i >= 0) & (i < nx)
        grid[i[keep], j[keep]] = True


def _spokes(nx, ny, n_spokes, jitter):
    grid = np.zeros((nx, ny), dtype=bool)
    for i in range(n_spokes):
        _rasterize_spoke(grid, (i + jitter) * math.pi / n_spokes)
    return grid


def make_pseudo_radial_mask(nx, ny, rate, seed=0, jitter=None):
    """Straight spokes through the centre, rasterized onto the Cartesian grid.

    ``jitter`` is the common angular offset in units of the spoke spacing; it
    is drawn from ``seed`` when not given.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid extents must be >= 1")
    if rate < 2:
        raise ValueError("pseudo-radial masks need rate >= 2")
    n_spokes = n_spokes_for(nx, ny, rate)
    if n_spokes < 1:
        raise ValueError(f"rate {rate} yields no spokes on a {nx}x{ny} grid")
    if jitter is None:
        jitter = float(np.random.default_rng(seed).uniform())
    grid = _spokes(nx, ny, n_spokes, jitter)
    # non-square grids can leave the rounded count just outside the [rate/2, 2 rate] band
    step = 1 if grid.size / grid.sum() > 2 * rate else -1 if grid.size / grid.sum() < rate / 2 else 0
    while step and n_spokes + step >= 1:
        trial = _spokes(nx, ny, n_spokes + step, jitter)
        n_spokes, grid = n_spokes + step, trial
        if rate / 2 <= grid.size / grid.sum() <= 2 * rate:
            break
    return SamplingMask(MaskKind.RADIAL, int(rate), grid, 0, seed=seed,
                        meta={"n_spokes": n_spokes, "jitter": jitter})


def make_mask(kind, nx, ny, rate, acs_lines=None, seed=0):
    """Dispatch on ``kind`` with the package's default ACS rule."""
    kind = MaskKind.parse(kind)
    if acs_lines is None:
        acs_lines = default_acs(ny, rate)
    if kind is MaskKind.UNIFORM:
        return make_uniform_mask(nx, ny, rate, acs_lines, offset=seed % int(rate))
    if kind is MaskKind.GAUSSIAN:
        return make_gaussian_mask(nx, ny, rate, acs_lines, seed)
    return make_pseudo_radial_mask(nx, ny, rate, seed)


def full_mask(nx, ny):
    return SamplingMask(MaskKind.UNIFORM, 1, np.ones((nx, ny), dtype=bool), 0)
