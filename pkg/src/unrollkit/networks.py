"""Desk-scale 2.5D UNet and pattern/contrast-prompt UNet regularizers."""

from dataclasses import dataclass, asdict
from enum import Enum
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .embedding import PATTERN_DIM, init_contrast_table


class NetKind(str, Enum):
    PLAIN = "PlainUNet"
    PCP = "PCPUNet"


@dataclass(frozen=True)
class NetSpec:
    kind: NetKind = NetKind.PCP
    scales: int = 2
    base_channels: int = 8
    d_c: int = 8
    d_p: int = PATTERN_DIM
    shift_count: int = 3
    n_contrasts: int = 4
    n_prompts: int = 4
    prompt_channels: int = 4
    prompt_size: int = 8
    temporal_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "kind", NetKind(self.kind))
        if self.scales < 1:
            raise ValueError("scales must be >= 1")
        if min(self.base_channels, self.d_c, self.d_p, self.n_prompts, self.prompt_channels) < 1:
            raise ValueError("channel and embedding sizes must be >= 1")
        if self.shift_count < 0:
            raise ValueError("shift_count must be >= 0")

    @property
    def in_channels(self):
        return 2 * (1 + self.shift_count)

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


class ParamStore:
    """Named trainable tensors of one unrolled iteration."""

    def __init__(self, arrays=None):
        self._nodes = {}
        for name, value in (arrays or {}).items():
            self[name] = value

    def __setitem__(self, name, value):
        self._nodes[name] = ad.parameter(value.value if isinstance(value, ad.Node) else value)

    def __getitem__(self, name):
        return self._nodes[name]

    def __contains__(self, name):
        return name in self._nodes

    def __iter__(self):
        return iter(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def add(self, name, value):
        if name in self._nodes:
            raise KeyError(f"duplicate parameter {name!r}")
        self[name] = value

    def names(self):
        return list(self._nodes)

    def items(self):
        return self._nodes.items()

    def arrays(self):
        return {name: node.value for name, node in self._nodes.items()}

    def grads(self):
        return {name: node.grad for name, node in self._nodes.items()}

    def zero_grad(self):
        for node in self._nodes.values():
            node.grad = None

    def num_params(self):
        return int(np.sum([node.value.size for node in self._nodes.values()]))

    def astype(self, dtype):
        return ParamStore({name: node.value.astype(dtype) for name, node in self._nodes.items()})

    def copy(self):
        return ParamStore({name: node.value.copy() for name, node in self._nodes.items()})


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _add_block(store, rng, name, cin, cout, kt, dtype):
    store.add(f"{name}.conv.w", _he(rng, (3, 3, cin, cout), 9 * cin, dtype))
    store.add(f"{name}.conv.b", np.zeros(cout, dtype))
    store.add(f"{name}.tconv.w", _he(rng, (kt, cout, cout), kt * cout, dtype))
    store.add(f"{name}.tconv.b", np.zeros(cout, dtype))


def _add_prompt_bank(store, rng, name, channels, emb_dim, spec, dtype):
    k, kc, s = spec.n_prompts, spec.prompt_channels, spec.prompt_size
    store.add(f"{name}.maps", (0.1 * rng.standard_normal((k, s, s, kc))).astype(dtype))
    store.add(f"{name}.proj", (rng.standard_normal((k, emb_dim)) / np.sqrt(emb_dim)).astype(dtype))
    store.add(f"{name}.mix.w", _he(rng, (3, 3, channels + kc, channels), 9 * (channels + kc), dtype))
    store.add(f"{name}.mix.b", np.zeros(channels, dtype))


def _level_channels(spec):
    return [spec.base_channels * 2 ** level for level in range(spec.scales)]


def init_params(spec, seed=0, dtype=np.float32):
    """Deterministic initialization; the output layer starts at zero."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    chans = _level_channels(spec)
    kt = spec.temporal_kernel
    cin = spec.in_channels
    for level, ch in enumerate(chans):
        _add_block(store, rng, f"enc{level}.0", cin, ch, kt, dtype)
        _add_block(store, rng, f"enc{level}.1", ch, ch, kt, dtype)
        cin = ch
    for level in range(spec.scales - 1, 0, -1):
        if spec.kind is NetKind.PCP:
            _add_prompt_bank(store, rng, f"prompt{level}.contrast", chans[level], spec.d_c, spec, dtype)
            _add_prompt_bank(store, rng, f"prompt{level}.pattern", chans[level], spec.d_p, spec, dtype)
        _add_block(store, rng, f"dec{level}.0", chans[level] + chans[level - 1], chans[level - 1], kt, dtype)
        _add_block(store, rng, f"dec{level}.1", chans[level - 1], chans[level - 1], kt, dtype)
    store.add("out.w", np.zeros((1, 1, chans[0], 2), dtype))
    store.add("out.b", np.zeros(2, dtype))
    if spec.kind is NetKind.PCP:
        store.add("contrast_table", init_contrast_table(spec.n_contrasts, spec.d_c, seed=seed + 1, dtype=dtype))
    return store


def _block(x, params, name):
    h = ad.conv2d(x, params[f"{name}.conv.w"], params[f"{name}.conv.b"], pad=1)
    h = ad.conv1d_t(h, params[f"{name}.tconv.w"], params[f"{name}.tconv.b"])
    return ad.relu(h)


def prompt_block(features, emb, params, name):
    """Condition ``features`` [N, h, w, C] on an embedding through a prompt bank.

    Softmax attention over the bank's K prompt maps (driven by a linear
    projection of ``emb``) selects a prompt, which is resized to the feature
    resolution, concatenated to the features and mixed back to C channels by
    a 3x3 convolution.
    """
    maps, proj = params[f"{name}.maps"], params[f"{name}.proj"]
    emb = ad.as_node(emb)
    if emb.ndim != 1 or emb.shape[0] != proj.shape[1]:
        raise ValueError(f"embedding of shape {emb.shape} does not match projection {proj.shape}")
    k, s1, s2, kc = maps.shape
    n, h, w, _ = features.shape
    weights = ad.softmax(ad.matmul(proj, emb))
    prompt = ad.matmul(weights, ad.reshape(maps, (k, s1 * s2 * kc)))
    prompt = ad.resize_bilinear(ad.reshape(prompt, (s1, s2, kc)), h, w)
    prompt = ad.broadcast_to(ad.reshape(prompt, (1, h, w, kc)), (n, h, w, kc))
    merged = ad.concat([features, prompt], axis=3)
    return ad.conv2d(merged, params[f"{name}.mix.w"], params[f"{name}.mix.b"], pad=1)


@lru_cache(maxsize=None)
def _expected_shapes(spec):
    return {name: node.shape for name, node in init_params(spec).items()}


def check_params(spec, params):
    expected = _expected_shapes(spec)
    missing = [n for n in expected if n not in params]
    if missing:
        raise ValueError(f"parameters missing for {spec.kind.value}: {missing[:4]}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shape}")


def net_forward(spec, params, x2ch, c_emb=None, p_emb=None, check=True):
    """Residual regularizer: [2(1+s), t, x, y] -> [2, t, x, y] (as a Node).

    PlainUNet ignores both embeddings.
    """
    if check:
        check_params(spec, params)
    x2ch = ad.as_node(x2ch)
    if x2ch.ndim != 4 or x2ch.shape[0] != spec.in_channels:
        raise ValueError(f"input must be [{spec.in_channels}, t, x, y], got {x2ch.shape}")
    _, t, nx, ny = x2ch.shape
    factor = 2 ** (spec.scales - 1)
    if nx % factor or ny % factor:
        raise ValueError(f"spatial extents must be divisible by {factor}")
    pcp = spec.kind is NetKind.PCP
    if pcp and (c_emb is None or p_emb is None):
        raise ValueError("PCPUNet needs contrast and pattern embeddings")

    h = ad.transpose(x2ch, (1, 2, 3, 0))
    skips = []
    for level in range(spec.scales):
        if level:
            h = ad.downsample2x(h)
        h = _block(h, params, f"enc{level}.0")
        h = _block(h, params, f"enc{level}.1")
        skips.append(h)
    for level in range(spec.scales - 1, 0, -1):
        if pcp:
            h = prompt_block(h, c_emb, params, f"prompt{level}.contrast")
            h = prompt_block(h, p_emb, params, f"prompt{level}.pattern")
        h = ad.concat([ad.upsample2x(h), skips[level - 1]], axis=3)
        h = _block(h, params, f"dec{level}.0")
        h = _block(h, params, f"dec{level}.1")
    delta = ad.conv2d(h, params["out.w"], params["out.b"])
    delta = ad.transpose(delta, (3, 0, 1, 2))
    return ad.add(ad.getitem(x2ch, slice(0, 2)), delta)
