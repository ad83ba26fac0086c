"""Synthetic 2D+t cardiac-like phantoms, dataset assembly and on-disk layout."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .cfl import read_cfl, write_cfl
from .sampling import MaskKind, SamplingMask, full_mask, make_mask
from .sense import CoilSensitivities, forward, retrospective_undersample, simulate_sensitivities

N_CONTRASTS = 4
CONTRAST_NAMES = ("cine", "flow", "tagging", "mapping")

# tissue brightness per contrast: body, myocardium, blood pool, organ base
INTENSITY = np.array([
    [0.35, 0.30, 0.90, 0.55],
    [0.25, 0.45, 0.70, 0.30],
    [0.40, 0.55, 0.75, 0.45],
    [0.60, 0.80, 0.30, 0.50],
])


@dataclass(frozen=True)
class PhantomSpec:
    nx: int
    ny: int
    nt: int
    contrast_id: int = 0
    seed: int = 0
    motion_amplitude: float = 0.03

    def __post_init__(self):
        if self.nt < 4:
            raise ValueError("nt must be >= 4")
        if self.nx < 2 or self.ny < 2 or self.nx % 2 or self.ny % 2:
            raise ValueError(f"extents must be even and >= 2, got {self.nx}x{self.ny}")
        if not 0 <= self.contrast_id < N_CONTRASTS:
            raise ValueError(f"contrast_id must lie in [0, {N_CONTRASTS})")
        if not 0 <= self.motion_amplitude < 0.25:
            raise ValueError("motion_amplitude must lie in [0, 0.25)")


@dataclass
class _Ellipse:
    cx: float
    cy: float
    ax: float
    ay: float
    angle: float
    tissue: int
    jitter: float = 0.0

    def inside(self, gx, gy, grow=0.0):
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = (gx - self.cx) * c + (gy - self.cy) * s
        v = -(gx - self.cx) * s + (gy - self.cy) * c
        return (u / (self.ax + grow)) ** 2 + (v / (self.ay + grow)) ** 2 <= 1.0


def _layout(seed):
    """Seed-determined geometry shared by every contrast."""
    rng = np.random.default_rng([seed, 17])
    body = _Ellipse(0.0, 0.0, rng.uniform(0.82, 0.9), rng.uniform(0.7, 0.82), rng.uniform(-0.2, 0.2), 0)
    hx, hy = rng.uniform(-0.15, 0.15, size=2)
    r = rng.uniform(0.22, 0.3)
    ang = rng.uniform(0, np.pi)
    myo = _Ellipse(hx, hy, r, r * rng.uniform(0.8, 1.0), ang, 1)
    pool = _Ellipse(hx, hy, 0.62 * myo.ax, 0.62 * myo.ay, ang, 2)
    organs = []
    for _ in range(int(rng.integers(1, 6))):
        rad = rng.uniform(0.35, 0.65)
        phi = rng.uniform(0, 2 * np.pi)
        organs.append(_Ellipse(rad * np.cos(phi) * body.ax, rad * np.sin(phi) * body.ay,
                               rng.uniform(0.06, 0.16), rng.uniform(0.06, 0.16),
                               rng.uniform(0, np.pi), 3, rng.uniform(-0.15, 0.15)))
    phase = rng.normal(0, 0.4, size=6)
    tag_period = rng.uniform(6, 9)
    return body, myo, pool, organs, phase, tag_period


def generate_phantom(spec, phase_offset=0):
    """Complex image [nt, nx, ny] with magnitude <= 1.

    A body outline holds 1-5 static organs and a ventricle (myocardium around
    a blood pool) whose size oscillates with period ``nt``. Frame ``t`` shows
    cardiac phase ``(t + phase_offset) mod nt``.
    """
    body, myo, pool, organs, phase, tag_period = _layout(spec.seed)
    table = INTENSITY[spec.contrast_id]
    gx, gy = np.meshgrid(np.linspace(-1, 1, spec.nx, endpoint=False),
                         np.linspace(-1, 1, spec.ny, endpoint=False), indexing="ij")
    static = np.zeros((spec.nx, spec.ny))
    static[body.inside(gx, gy)] = table[0]
    for organ in organs:
        static[organ.inside(gx, gy)] = np.clip(table[3] + organ.jitter, 0.05, 1.0)

    amp = 2.0 * spec.motion_amplitude
    phi = (phase[0] + phase[1] * gx + phase[2] * gy + phase[3] * gx * gy
           + phase[4] * gx ** 2 + phase[5] * gy ** 2)
    carrier = np.exp(1j * phi)
    frames = np.empty((spec.nt, spec.nx, spec.ny), dtype=np.complex64)
    for t in range(spec.nt):
        tt = (t + phase_offset) % spec.nt
        grow = amp * np.sin(2 * np.pi * tt / spec.nt)
        img = static.copy()
        img[myo.inside(gx, gy, grow)] = table[1]
        img[pool.inside(gx, gy, 1.4 * grow)] = table[2]
        if spec.contrast_id == 2:
            fade = np.exp(-2.0 * tt / spec.nt)
            k = np.pi * spec.nx / (2 * tag_period)
            grid = (0.5 + 0.5 * np.cos(k * gx)) * (0.5 + 0.5 * np.cos(k * gy))
            img = img * (1 - 0.8 * fade * (1 - grid))
        frames[t] = img * carrier
    return frames


@dataclass
class ReconSample:
    y: np.ndarray
    mask: SamplingMask
    sens: CoilSensitivities
    target: np.ndarray
    contrast_id: int
    seed: int

    @property
    def kind(self):
        return self.mask.kind.value

    @property
    def rate(self):
        return self.mask.nominal_rate


def make_sample(kind, rate, contrast_id, seed, nx=64, ny=64, nt=8, ncoils=4):
    target = generate_phantom(PhantomSpec(nx, ny, nt, contrast_id, seed))
    mask = make_mask(kind, nx, ny, rate, seed=seed + 1)
    sens = simulate_sensitivities(nx, ny, ncoils, seed=seed + 2)
    full = forward(target, sens, full_mask(nx, ny))
    y = retrospective_undersample(full, mask).astype(np.complex64)
    return ReconSample(y, mask, sens, target, int(contrast_id), int(seed))


def sample_seed(master, index):
    return (master * 1000003 + index) % 2 ** 31


def _make_from_args(args):
    return make_sample(*args)


def build_dataset(n_per_cell, sizes, rates, kinds, contrasts, seed=0, ncoils=4, jobs=1):
    """Cartesian product of the factor lists, ``n_per_cell`` samples per cell.

    ``sizes`` holds (nx, ny, nt) triples. Order: size, kind, rate, contrast,
    repeat. Every sample seed derives from the master ``seed`` and its index.
    """
    if n_per_cell < 1 or not (sizes and rates and kinds and contrasts):
        raise ValueError("factor lists must be nonempty and n_per_cell >= 1")
    jobs_args = []
    for (nx, ny, nt), kind, rate, contrast in product(sizes, kinds, rates, contrasts):
        kind = MaskKind.parse(kind).value
        for _ in range(n_per_cell):
            s = sample_seed(seed, len(jobs_args))
            jobs_args.append((kind, int(rate), int(contrast), s, nx, ny, nt, ncoils))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_make_from_args, jobs_args))
    return [_make_from_args(a) for a in jobs_args]


def sample_dir(root, sample):
    return Path(root) / sample.kind / str(sample.rate) / str(sample.contrast_id) / str(sample.seed)


def save_sample(root, sample):
    d = sample_dir(root, sample)
    d.mkdir(parents=True, exist_ok=True)
    write_cfl(d / "y", sample.y)
    write_cfl(d / "mask", sample.mask.grid.astype(np.complex64))
    write_cfl(d / "sens", sample.sens.maps)
    write_cfl(d / "target", sample.target)
    (d / "meta.txt").write_text(
        f"kind={sample.kind}\nrate={sample.rate}\ncontrast={sample.contrast_id}\n"
        f"seed={sample.seed}\nacs_lines={sample.mask.acs_lines}\nmask_seed={sample.mask.seed}\n")
    return d


def read_meta(path):
    meta = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def load_sample(d):
    d = Path(d)
    meta = read_meta(d / "meta.txt")
    grid = read_cfl(d / "mask", ndim=2).real > 0.5
    mask = SamplingMask(meta["kind"], int(meta["rate"]), grid, int(meta.get("acs_lines", 0)),
                        seed=int(meta.get("mask_seed", 0)))
    sens = CoilSensitivities(read_cfl(d / "sens", ndim=3))
    return ReconSample(read_cfl(d / "y", ndim=4), mask, sens, read_cfl(d / "target", ndim=3),
                       int(meta["contrast"]), int(meta["seed"]))


def save_dataset(root, samples):
    return [save_sample(root, s) for s in samples]


def load_dataset(root):
    """All samples below ``root``, in sorted directory order."""
    dirs = sorted(p.parent for p in Path(root).glob("*/*/*/*/meta.txt"))
    if not dirs:
        raise FileNotFoundError(f"no samples found under {root}")
    return [load_sample(d) for d in dirs]
