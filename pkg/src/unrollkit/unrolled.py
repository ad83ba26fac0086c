"""Adaptive unrolled cascade: rate-based entry, per-iteration regularizer and CG data consistency."""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import autodiff as ad
from .channel_shift import channel_shift_augment, default_shifts
from .core import inner, norm
from .embedding import pattern_embedding
from .networks import NetKind, NetSpec, _expected_shapes, check_params, init_params, net_forward
from .sampling import SamplingMask, _grid, achieved_rate
from .sense import _coil_view, _maps, adjoint as sense_adjoint, forward as sense_forward

DESK_ENTRY_MAP = ((4, 5), (8, 4), (12, 3), (16, 2), (20, 1), (24, 0))


@dataclass
class CascadeConfig:
    n_ui: int = 6
    entry_map: tuple = DESK_ENTRY_MAP
    net: NetSpec = field(default_factory=NetSpec)
    adaptive: bool = True
    cg_iters: int = 8
    cg_tol: float = 1e-5
    mu_init: float = 0.05

    def __post_init__(self):
        self.entry_map = tuple(sorted((float(r), int(e)) for r, e in self.entry_map))
        if self.n_ui < 1:
            raise ValueError("n_ui must be >= 1")
        if not self.entry_map:
            raise ValueError("entry_map must not be empty")
        entries = [e for _, e in self.entry_map]
        if any(not 0 <= e < self.n_ui for e in entries):
            raise ValueError(f"entry indices must lie in [0, {self.n_ui})")
        if any(a < b for a, b in zip(entries, entries[1:])):
            raise ValueError("entry_map must assign smaller-or-equal entries to higher rates")
        if entries[-1] != 0:
            raise ValueError("the highest supported rate must enter at UI 0")
        if self.cg_iters < 0 or self.mu_init <= 0:
            raise ValueError("cg_iters must be >= 0 and mu_init > 0")


def entry_index(rate, config):
    """First unrolled iteration executed for an input at acceleration ``rate``.

    Rates above the largest bracket clamp to 0 (the whole cascade); a
    non-adaptive config always starts at 0.
    """
    if rate < 1:
        raise ValueError("rate must be >= 1")
    if not config.adaptive:
        return 0
    for max_rate, entry in config.entry_map:
        if rate <= max_rate:
            return entry
    return 0


def routing_rate(mask):
    """Nominal rate of a SamplingMask, or the achieved rate of a bare grid."""
    if isinstance(mask, SamplingMask):
        return float(mask.nominal_rate)
    return achieved_rate(mask)


def init_cascade(config, seed=0, dtype=np.float32):
    """One independent ParamStore per unrolled iteration."""
    stores = []
    for i in range(config.n_ui):
        store = init_params(config.net, seed=seed * 7919 + i, dtype=dtype)
        store.add("log_mu", np.array(math.log(config.mu_init), dtype=dtype))
        stores.append(store)
    return stores


class SenseOperator:
    """E^H E for fixed sensitivities and mask, with precomputed FFT phase factors.

    Masks made of full kx rows only need the ky transform, since the kx
    transform and its inverse cancel.
    """

    def __init__(self, sens, mask):
        self.maps = _maps(sens)
        self.grid = _grid(mask)
        nx, ny = self.grid.shape
        self._fast = nx % 2 == 0 and ny % 2 == 0
        self._lines = bool(np.all(self.grid == self.grid[:1]))
        if self._fast:
            # for even extents the centred FFT is D F D up to a global sign,
            # with D the checkerboard; k-space indexing stays centred
            if self._lines:
                checker = np.where(np.arange(ny) % 2 == 0, 1, -1)[None, :]
            else:
                checker = np.where((np.add.outer(np.arange(nx), np.arange(ny)) % 2) == 0, 1, -1)
            self._maps_mod = (self.maps * checker).astype(self.maps.dtype)
            self._kmask = self.grid[:1] if self._lines else self.grid

    def normal(self, x):
        x = np.asarray(x)
        if not self._fast:
            return sense_adjoint(sense_forward(x, self.maps, self.grid), self.maps, self.grid)
        maps = _coil_view(self._maps_mod, x.ndim)
        if self._lines:
            k = np.fft.fft(maps * x[None], axis=-1, norm="ortho")
            k *= self._kmask
            img = np.fft.ifft(k, axis=-1, norm="ortho")
        else:
            k = np.fft.fft2(maps * x[None], axes=(-2, -1), norm="ortho")
            k *= self._kmask
            img = np.fft.ifft2(k, axes=(-2, -1), norm="ortho")
        return np.sum(np.conj(maps) * img, axis=0)


def cg_solve(u, y, sens, mask, mu, iters=8, tol=1e-5, history=None):
    """Solve (E^H E + mu I) x = E^H y + mu u by conjugate residuals, started at x = u.

    Conjugate residuals is the CG variant that minimises the residual over
    each Krylov space, so the residual norm never increases. It costs one
    normal-operator application per iteration, like plain CG.

    Stops after ``iters`` iterations or once the residual drops below ``tol``
    relative to the right-hand side. Relative residuals (including the
    initial one) are appended to ``history`` when a list is given.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    u = np.asarray(u)
    y = np.asarray(y)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to cg_solve")
    op = SenseOperator(sens, mask)
    a = lambda v: op.normal(v) + mu * v
    rhs = sense_adjoint(y, op.maps, op.grid) + mu * u
    rhs_norm = norm(rhs) or 1.0
    x = u.astype(rhs.dtype, copy=True)
    r = rhs - a(x)
    ar = a(r)
    p, ap = r.copy(), ar.copy()
    rar = inner(r, ar).real
    res = norm(r)
    if history is not None:
        history.append(res / rhs_norm)
    for _ in range(iters):
        if res <= tol * rhs_norm or rar <= 0:
            break
        alpha = rar / inner(ap, ap).real
        x = x + alpha * p
        r = r - alpha * ap
        ar = a(r)
        rar_next = inner(r, ar).real
        beta = rar_next / rar
        p = r + beta * p
        ap = ar + beta * ap
        rar = rar_next
        res = norm(r)
        if history is not None:
            history.append(res / rhs_norm)
    return x


def cg_graph(u, rhs_data, op, mu, iters, tol):
    """Differentiable twin of :func:`cg_solve` (same recurrences).

    ``u`` and ``mu`` are nodes; ``rhs_data`` is the constant E^H y.
    """
    a = lambda v: ad.add(ad.linop(v, op.normal, op.normal), ad.mul(mu, v))
    rhs = ad.add(rhs_data, ad.mul(mu, u))
    rhs_norm = norm(rhs.value) or 1.0
    x = u
    r = ad.sub(rhs, a(x))
    ar = a(r)
    p, ap = r, ar
    rar = ad.real(ad.vdot(r, ar))
    for _ in range(iters):
        if norm(r.value) <= tol * rhs_norm or float(rar.value) <= 0:
            break
        alpha = ad.div(rar, ad.real(ad.vdot(ap, ap)))
        x = ad.add(x, ad.mul(alpha, p))
        r = ad.sub(r, ad.mul(alpha, ap))
        ar = a(r)
        rar_next = ad.real(ad.vdot(r, ar))
        beta = ad.div(rar_next, rar)
        p = ad.add(r, ad.mul(beta, p))
        ap = ad.add(ar, ad.mul(beta, ap))
        rar = rar_next
    return x


def unroll(y, mask, sens, contrast_id, config, params, trace=None):
    """Run the cascade as a graph and return the reconstructed image node [t, x, y].

    Indices of executed iterations are appended to ``trace`` when given.
    """
    if len(params) != config.n_ui:
        raise ValueError(f"expected {config.n_ui} parameter stores, got {len(params)}")
    spec = config.net
    pcp = spec.kind is NetKind.PCP
    if not isinstance(mask, SamplingMask):
        raise TypeError("unroll needs a SamplingMask (kind drives the channel shifts)")
    op = SenseOperator(sens, mask)
    b = sense_adjoint(np.asarray(y), op.maps, op.grid)
    real_dtype = params[0]["log_mu"].dtype
    nx, ny = mask.shape
    shifts = default_shifts(mask.kind, nx, ny)
    if len(shifts) != spec.shift_count:
        raise ValueError(f"network expects {spec.shift_count} shifts, mask kind gives {len(shifts)}")
    p_emb = pattern_embedding(mask).v.astype(real_dtype) if pcp else None
    x = ad.Node(b)
    for i in range(entry_index(routing_rate(mask), config), config.n_ui):
        store = params[i]
        c_emb = ad.getitem(store["contrast_table"], int(contrast_id)) if pcp else None
        aug = channel_shift_augment(ad.to_channels(x), shifts)
        u = ad.from_channels(net_forward(spec, store, aug, c_emb, p_emb, check=False))
        x = cg_graph(u, b, op, ad.exp(store["log_mu"]), config.cg_iters, config.cg_tol)
        if trace is not None:
            trace.append(i)
    return x


def check_cascade(config, params):
    if len(params) != config.n_ui:
        raise ValueError(f"expected {config.n_ui} parameter stores, got {len(params)}")
    for store in params:
        check_params(config.net, store)
        if "log_mu" not in store:
            raise ValueError("parameter store lacks log_mu")
        allowed = set(_expected_shapes(config.net)) | {"log_mu"}
        if config.net.kind is NetKind.PCP:
            allowed.add("contrast_table")
        extra = sorted(set(store.names()) - allowed)
        if extra:
            raise ValueError(f"unexpected parameters for {config.net.kind.value}: {extra[:4]}")


def reconstruct(y, mask, sens, contrast_id, config, params, trace=None):
    """Inference through the cascade; returns a complex image [t, x, y]."""
    check_cascade(config, params)
    if pcp_contrast_out_of_range(config, contrast_id):
        raise ValueError(f"contrast id {contrast_id} outside [0, {config.net.n_contrasts})")
    with ad.no_grad():
        return unroll(y, mask, sens, contrast_id, config, params, trace).value


def pcp_contrast_out_of_range(config, contrast_id):
    return config.net.kind is NetKind.PCP and not 0 <= int(contrast_id) < config.net.n_contrasts


def fixed_variant(config):
    return replace(config, adaptive=False)
