"""Training of the four cascade variants and the benchmark harness."""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
import math
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint
from .metrics import K1, K2, SIGMA, WINDOW, crop_region, gaussian_window, nmrse, paired_t_test, ssim
from .networks import NetKind, NetSpec
from .unrolled import CascadeConfig, init_cascade, reconstruct, unroll


class Method(str, Enum):
    FIXED_UNET = "FixedUNet"
    ADAPTIVE_UNET = "AdaptiveUNet"
    FIXED_PCP = "FixedPCP"
    ADAPTIVE_PCP = "AdaptivePCP"

    @property
    def adaptive(self):
        return self in (Method.ADAPTIVE_UNET, Method.ADAPTIVE_PCP)

    @property
    def net_kind(self):
        return NetKind.PCP if self in (Method.FIXED_PCP, Method.ADAPTIVE_PCP) else NetKind.PLAIN


METHODS = tuple(Method)


class TrainingDiverged(RuntimeError):
    pass


# loss

def _ssim_filter(x, g):
    # x: [N, H, W, 1]; valid separable Gaussian filtering
    k = g.size
    x = ad.conv2d(x, g.reshape(k, 1, 1, 1))
    return ad.conv2d(x, g.reshape(1, k, 1, 1))


def ssim_node(x_mag, ref_mag, data_range=None):
    """Differentiable mean SSIM of x_mag (Node [t, nx, ny]) against a fixed reference."""
    ref = np.asarray(ref_mag)
    dtype = x_mag.dtype
    if data_range is None:
        data_range = float(ref.max())
    if data_range <= 0:
        raise ValueError("zero data range in reference")
    size = min(WINDOW, *ref.shape[-2:])
    size -= 1 - size % 2
    g = gaussian_window(size, SIGMA).astype(dtype)
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    shape4 = (-1,) + ref.shape[-2:] + (1,)
    x = ad.reshape(x_mag, shape4)
    r = ref.reshape(shape4).astype(dtype)
    mx, my = _ssim_filter(x, g), _ssim_filter(r, g).value
    sxx = ad.sub(_ssim_filter(ad.square(x), g), ad.square(mx))
    syy = _ssim_filter(r * r, g).value - my * my
    sxy = ad.sub(_ssim_filter(ad.mul(x, r), g), ad.mul(mx, my))
    num = ad.mul(ad.add(ad.mul(mx, 2 * my), c1), ad.add(ad.mul(sxy, 2.0), c2))
    den = ad.mul(ad.add(ad.square(mx), my * my + c1), ad.add(sxx, syy + c2))
    return ad.mean(ad.div(num, den))


def loss(x, target, alpha=1.0, beta=0.1):
    """alpha * MSE + beta * (1 - SSIM) on magnitude images.

    ``x`` is a complex or real Node (magnitudes are taken for complex input),
    ``target`` a fixed array of the same shape.
    """
    x = ad.as_node(x)
    target = np.asarray(target)
    if x.shape != target.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {target.shape}")
    x_mag = ad.cabs(x) if np.iscomplexobj(x.value) else x
    ref = np.abs(target).astype(x_mag.dtype)
    total = ad.mul(ad.mean(ad.square(ad.sub(x_mag, ref))), float(alpha))
    if beta:
        total = ad.add(total, ad.mul(ad.sub(1.0, ssim_node(x_mag, ref)), float(beta)))
    return total


# optimizer

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    skipped: int = 0


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam update of ``params`` (name -> array) in place.

    Parameters whose gradient is None are left alone and their moments are
    not touched. Returns False, leaving everything unchanged, when any
    gradient is non-finite.
    """
    live = {k: g for k, g in grads.items() if g is not None}
    for name, g in live.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name}")
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for name, g in live.items():
        p = params[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return True


# training

@dataclass
class TrainConfig:
    method: Method = Method.ADAPTIVE_PCP
    epochs: int = 20
    batch_size: int = 4
    lr: float = 2e-3
    alpha: float = 1.0
    beta: float = 0.1
    seed: int = 0
    n_ui: int = 6
    cg_iters: int = 8
    base_channels: int = 8

    def __post_init__(self):
        self.method = Method(self.method)
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 are required")

    def cascade(self):
        net = NetSpec(kind=self.method.net_kind, base_channels=self.base_channels)
        return CascadeConfig(n_ui=self.n_ui, net=net, adaptive=self.method.adaptive,
                             cg_iters=self.cg_iters)


def _flat_params(stores):
    return {f"{i}/{name}": node.value for i, store in enumerate(stores) for name, node in store.items()}


def _flat_grads(stores):
    return {f"{i}/{name}": node.grad for i, store in enumerate(stores) for name, node in store.items()}


def train(config, dataset, log=None):
    """Minibatch Adam over seeded shuffles of ``dataset``; returns a Checkpoint.

    The mean per-sample loss of every epoch is recorded. ``log`` receives
    (epoch, mean_loss) after each epoch.
    """
    if not dataset:
        raise ValueError("training needs a nonempty dataset")
    cascade = config.cascade()
    stores = init_cascade(cascade, seed=config.seed)
    params = _flat_params(stores)
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            for store in stores:
                store.zero_grad()
            for idx in batch:
                s = dataset[idx]
                out = unroll(s.y, s.mask, s.sens, s.contrast_id, cascade, stores)
                value = loss(out, s.target, config.alpha, config.beta)
                lv = float(value.value)
                if not math.isfinite(lv):
                    raise TrainingDiverged(
                        f"{config.method.value}: non-finite loss at epoch {epoch}, sample {idx} "
                        f"({s.kind}, rate {s.rate}, contrast {s.contrast_id})")
                total += lv
                ad.mul(value, 1.0 / len(batch)).backward()
            adam_step(params, _flat_grads(stores), state, config.lr)
        history.append(total / len(dataset))
        if log is not None:
            log(epoch, history[-1])
    extra = {"epochs": config.epochs, "lr": config.lr, "batch_size": config.batch_size,
             "seed": config.seed, "skipped_steps": state.skipped}
    return Checkpoint(config.method.value, cascade, stores, history, extra)


def zero_checkpoint(method=Method.ADAPTIVE_PCP, n_ui=6, seed=0):
    """Untrained cascade (pure CG-SENSE behaviour) for a method."""
    cascade = TrainConfig(method=method, epochs=0, n_ui=n_ui, seed=seed).cascade()
    return Checkpoint(Method(method).value, cascade, init_cascade(cascade, seed=seed), [], {})


# evaluation

RESULT_FIELDS = ("method", "kind", "rate", "contrast", "seed", "ssim", "nmrse")
AGG_FIELDS = ("method", "stratum", "n", "ssim_mean", "ssim_std", "nmrse_mean", "nmrse_std")
TTEST_FIELDS = ("method_a", "method_b", "stratum", "t", "p", "n")


@dataclass
class MetricsReport:
    rows: list
    aggregates: list
    ttests: list

    def mean(self, method, metric="ssim"):
        vals = [r[metric] for r in self.rows if r["method"] == method]
        return float(np.mean(vals))

    def values(self, method, metric="ssim"):
        rows = sorted((r for r in self.rows if r["method"] == method), key=_row_key)
        return np.array([r[metric] for r in rows])

    def ttest(self, a, b, stratum="all"):
        for t in self.ttests:
            if t["method_a"] == a and t["method_b"] == b and t["stratum"] == stratum:
                return t
        raise KeyError((a, b, stratum))

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, fields, rows in (("results.csv", RESULT_FIELDS, self.rows),
                                   ("aggregates.csv", AGG_FIELDS, self.aggregates),
                                   ("ttests.csv", TTEST_FIELDS, self.ttests)):
            path = directory / name
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields)
                writer.writeheader()
                writer.writerows(rows)
            paths.append(path)
        return paths


def _row_key(row):
    return (row["kind"], row["rate"], row["contrast"], row["seed"])


def evaluate_sample(ckpt, sample):
    recon = reconstruct(sample.y, sample.mask, sample.sens, sample.contrast_id, ckpt.cascade, ckpt.params)
    x, ref = np.abs(recon), np.abs(sample.target)
    crop = crop_region(*ref.shape[-2:])
    return ssim(x, ref, crop), nmrse(x, ref, crop)


def _evaluate_job(args):
    ckpt, samples = args
    return [evaluate_sample(ckpt, s) for s in samples]


def _strata(row):
    return ("all", f"kind={row['kind']}", f"kind={row['kind']},rate={row['rate']}",
            f"contrast={row['contrast']}")


def _aggregate(rows, methods):
    out = []
    for method in methods:
        groups = {}
        for r in rows:
            if r["method"] == method:
                for key in _strata(r):
                    groups.setdefault(key, []).append(r)
        for key, rs in groups.items():
            s = np.array([r["ssim"] for r in rs])
            e = np.array([r["nmrse"] for r in rs])
            out.append({"method": method, "stratum": key, "n": len(rs),
                        "ssim_mean": float(s.mean()), "ssim_std": float(s.std()),
                        "nmrse_mean": float(e.mean()), "nmrse_std": float(e.std())})
    return out


def _ttests(rows, methods):
    out = []
    by = {}
    for r in rows:
        for key in ("all", f"kind={r['kind']}"):
            by.setdefault((r["method"], key), {})[_row_key(r)] = r["ssim"]
    strata = sorted({k for _, k in by}, key=lambda k: (k != "all", k))
    for a, b in combinations(methods, 2):
        for stratum in strata:
            va, vb = by.get((a, stratum), {}), by.get((b, stratum), {})
            keys = sorted(set(va) & set(vb))
            try:
                t, p = paired_t_test([va[k] for k in keys], [vb[k] for k in keys])
            except ValueError:
                t, p = float("nan"), float("nan")
            out.append({"method_a": a, "method_b": b, "stratum": stratum, "t": t, "p": p, "n": len(keys)})
    return out


def benchmark(checkpoints, dataset, jobs=1):
    """Reconstruct every sample with every checkpoint and tabulate the metrics.

    ``checkpoints`` maps a method label to a Checkpoint. Pairwise t-tests that
    are undefined (zero-variance differences) are reported with NaN t and p.
    """
    if not checkpoints or any(c is None for c in checkpoints.values()):
        raise ValueError("benchmark needs a checkpoint for every method")
    if not dataset:
        raise ValueError("benchmark needs a nonempty dataset")
    methods = list(checkpoints)
    rows = []
    for method in methods:
        ckpt = checkpoints[method]
        if jobs > 1:
            parts = [dataset[i::jobs] for i in range(jobs)]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_evaluate_job, [(ckpt, p) for p in parts]))
            metrics = [None] * len(dataset)
            for i, res in enumerate(results):
                metrics[i::jobs] = res
        else:
            metrics = [evaluate_sample(ckpt, s) for s in dataset]
        for s, (sv, ev) in zip(dataset, metrics):
            rows.append({"method": method, "kind": s.kind, "rate": s.rate, "contrast": s.contrast_id,
                         "seed": s.seed, "ssim": sv, "nmrse": ev})
    return MetricsReport(rows, _aggregate(rows, methods), _ttests(rows, methods))
