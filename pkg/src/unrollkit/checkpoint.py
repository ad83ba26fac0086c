"""Checkpoint directory: key=value config, parameter manifest and one CFL blob.

Layout::

    config.txt    method, cascade and network settings as key=value lines
    manifest.txt  "<ui> <name> <shape> <byte offset>" per parameter
    params.hdr/.cfl  all parameters concatenated, stored as real parts
    loss.txt      per-epoch training loss (optional)
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cfl import read_cfl, write_cfl
from .networks import NetKind, NetSpec, ParamStore
from .unrolled import CascadeConfig, check_cascade

_FLOAT_KEYS = {"cg_tol", "mu_init"}
_NET_INT_KEYS = {"scales", "base_channels", "d_c", "d_p", "shift_count", "n_contrasts",
                 "n_prompts", "prompt_channels", "prompt_size", "temporal_kernel"}


@dataclass
class Checkpoint:
    method: str
    cascade: CascadeConfig
    params: list
    loss_history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def has_prompts(self):
        return any(name.startswith("prompt") for store in self.params for name in store)


def config_lines(method, cascade, extra=None):
    lines = {"method": method, "n_ui": cascade.n_ui, "adaptive": int(cascade.adaptive),
             "cg_iters": cascade.cg_iters, "cg_tol": repr(cascade.cg_tol),
             "mu_init": repr(cascade.mu_init),
             "entry_map": ",".join(f"{r:g}:{e}" for r, e in cascade.entry_map)}
    for key, value in cascade.net.to_dict().items():
        lines[f"net.{key}"] = value
    for key, value in (extra or {}).items():
        lines[f"extra.{key}"] = value
    return [f"{k}={v}" for k, v in lines.items()]


def parse_config(text):
    """Inverse of :func:`config_lines`; returns (method, CascadeConfig, extra)."""
    raw = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    try:
        net = {k[4:]: raw[k] for k in raw if k.startswith("net.")}
        net = {k: (int(v) if k in _NET_INT_KEYS else v) for k, v in net.items()}
        net["kind"] = NetKind(net["kind"])
        entry_map = tuple((float(r), int(e)) for r, e in
                          (item.split(":") for item in raw["entry_map"].split(",")))
        cascade = CascadeConfig(n_ui=int(raw["n_ui"]), entry_map=entry_map, net=NetSpec(**net),
                                adaptive=bool(int(raw["adaptive"])), cg_iters=int(raw["cg_iters"]),
                                cg_tol=float(raw["cg_tol"]), mu_init=float(raw["mu_init"]))
        method = raw["method"]
    except KeyError as exc:
        raise ValueError(f"config lacks key {exc}") from None
    extra = {k[6:]: v for k, v in raw.items() if k.startswith("extra.")}
    return method, cascade, extra


def save_checkpoint(directory, ckpt):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.txt").write_text("\n".join(config_lines(ckpt.method, ckpt.cascade, ckpt.extra)) + "\n")
    chunks, manifest, offset = [], [], 0
    for ui, store in enumerate(ckpt.params):
        for name, node in store.items():
            flat = np.asarray(node.value, dtype=np.float32).ravel()
            shape = "x".join(str(d) for d in node.shape) or "scalar"
            manifest.append(f"{ui} {name} {shape} {offset}")
            chunks.append(flat)
            offset += flat.size * 8
    blob = np.concatenate(chunks) if chunks else np.zeros(0, np.float32)
    write_cfl(directory / "params", blob.astype(np.complex64))
    (directory / "manifest.txt").write_text("\n".join(manifest) + "\n")
    if ckpt.loss_history:
        (directory / "loss.txt").write_text("\n".join(repr(float(v)) for v in ckpt.loss_history) + "\n")
    return directory


def load_checkpoint(directory):
    directory = Path(directory)
    for name in ("config.txt", "manifest.txt", "params.hdr", "params.cfl"):
        if not (directory / name).exists():
            raise FileNotFoundError(f"checkpoint {directory} lacks {name}")
    method, cascade, extra = parse_config((directory / "config.txt").read_text())
    blob = read_cfl(directory / "params", ndim=1).real.astype(np.float32)
    stores = [ParamStore() for _ in range(cascade.n_ui)]
    for line in (directory / "manifest.txt").read_text().splitlines():
        if not line.strip():
            continue
        ui, name, shape, offset = line.split()
        dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
        start = int(offset) // 8
        size = int(np.prod(dims)) if dims else 1
        if start + size > blob.size:
            raise ValueError(f"manifest entry {name} runs past the parameter blob")
        stores[int(ui)].add(name, blob[start:start + size].reshape(dims).copy())
    check_cascade(cascade, stores)
    history = []
    if (directory / "loss.txt").exists():
        history = [float(v) for v in (directory / "loss.txt").read_text().split()]
    return Checkpoint(method, cascade, stores, history, extra)
