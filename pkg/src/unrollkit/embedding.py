"""Sampling-pattern statistics and contrast embedding lookup."""

from dataclasses import dataclass

import numpy as np

from .sampling import _grid

PATTERN_DIM = 17
STATS = ("count_mean", "count_var", "spacing_mean", "spacing_var")
AXES = ("kx", "ky")
HALVES = ("low_kx", "high_kx")


def pattern_feature_names():
    names = [f"{h}.{a}.{s}" for h in HALVES for a in AXES for s in STATS]
    return names + ["density"]


@dataclass
class PatternEmbedding:
    v: np.ndarray
    empty_halves: tuple = ()

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.v.shape != (PATTERN_DIM,):
            raise ValueError(f"pattern embedding must have {PATTERN_DIM} entries")

    @property
    def density(self):
        return float(self.v[-1])


def _profile_stats(profile, extent):
    # profile: normalized per-bin counts along one axis
    count_mean = float(profile.mean())
    count_var = float(profile.var())
    hits = np.flatnonzero(profile)
    if hits.size < 2:
        return [count_mean, count_var, 0.0, 0.0]
    gaps = np.diff(hits)  # integer gaps keep equal spacing at exactly zero variance
    return [count_mean, count_var, float(gaps.mean()) / extent, float(gaps.var()) / extent ** 2]


def pattern_embedding(mask):
    """17 statistics of a mask split into two halves along kx.

    For each half the mask is summed along ky (profile over kx) and along kx
    (profile over ky). Each profile contributes the mean and population
    variance of its normalized counts and of the normalized gaps between
    consecutive nonzero bins. The last entry is the overall sampling density.
    """
    grid = _grid(mask)
    if not grid.any():
        raise ValueError("pattern embedding undefined for an empty mask")
    nx, ny = grid.shape
    split = nx // 2 if nx > 1 else 1
    values = []
    empty = []
    for name, half in zip(HALVES, (grid[:split], grid[split:])):
        if half.size == 0 or not half.any():
            empty.append(name)
        if half.size == 0:
            values += [0.0] * 8
            continue
        hx, hy = half.shape
        counts = half.astype(np.float64)
        values += _profile_stats(counts.sum(axis=1) / hy, hx)
        values += _profile_stats(counts.sum(axis=0) / hx, hy)
    values.append(np.count_nonzero(grid) / grid.size)
    return PatternEmbedding(np.array(values), tuple(empty))


@dataclass
class ContrastEmbedding:
    contrast_id: int
    v: np.ndarray


def init_contrast_table(n_contrasts=4, dim=8, seed=0, dtype=np.float32):
    """Trainable C x d table, standard normal scaled by 0.02."""
    rng = np.random.default_rng(seed)
    return (0.02 * rng.standard_normal((n_contrasts, dim))).astype(dtype)


def contrast_embedding(contrast_id, table):
    table = table.value if hasattr(table, "value") else np.asarray(table)
    if not 0 <= int(contrast_id) < table.shape[0]:
        raise ValueError(f"contrast id {contrast_id} outside [0, {table.shape[0]})")
    return ContrastEmbedding(int(contrast_id), table[int(contrast_id)].copy())
