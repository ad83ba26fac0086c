import numpy as np
import pytest

from unrollkit import autodiff as ad
from unrollkit.embedding import PATTERN_DIM
from unrollkit.networks import NetKind, NetSpec, ParamStore, check_params, init_params, net_forward, prompt_block

from gradcheck import check_grads


def small_spec(kind=NetKind.PCP, **kw):
    base = dict(kind=kind, scales=2, base_channels=4, d_c=3, d_p=5, shift_count=1,
                n_prompts=3, prompt_channels=2, prompt_size=3)
    return NetSpec(**{**base, **kw})


def randomize_output(params, rng):
    for name in ("out.w", "out.b"):
        params[name] = rng.standard_normal(params[name].shape) * 0.3
    return params


def test_zero_init_is_identity(rng):
    spec = NetSpec()
    params = init_params(spec, seed=0)
    x = rng.standard_normal((spec.in_channels, 4, 16, 16)).astype(np.float32)
    out = net_forward(spec, params, x, rng.standard_normal(spec.d_c), rng.standard_normal(PATTERN_DIM))
    assert np.array_equal(out.value, x[:2])


def test_plain_ignores_embeddings(rng):
    spec = NetSpec(kind=NetKind.PLAIN)
    params = randomize_output(init_params(spec, seed=3), rng)
    x = rng.standard_normal((spec.in_channels, 2, 8, 8))
    a = net_forward(spec, params, x, np.zeros(8), np.zeros(PATTERN_DIM)).value
    b = net_forward(spec, params, x, np.ones(8), np.ones(PATTERN_DIM)).value
    c = net_forward(spec, params, x).value
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert not any(name.startswith("prompt") for name in params)


def test_pcp_depends_on_embeddings(rng):
    spec = NetSpec()
    params = randomize_output(init_params(spec, seed=3), rng)
    x = rng.standard_normal((spec.in_channels, 2, 8, 8))
    a = net_forward(spec, params, x, np.zeros(8), np.zeros(PATTERN_DIM)).value
    b = net_forward(spec, params, x, np.ones(8), np.zeros(PATTERN_DIM)).value
    assert not np.allclose(a, b)
    with pytest.raises(ValueError):
        net_forward(spec, params, x)


def test_deterministic_init_and_forward(rng):
    spec = NetSpec()
    p1, p2 = init_params(spec, seed=4), init_params(spec, seed=4)
    for name in p1:
        assert np.array_equal(p1[name].value, p2[name].value)
    randomize_output(p1, np.random.default_rng(0))
    randomize_output(p2, np.random.default_rng(0))
    x = rng.standard_normal((spec.in_channels, 2, 8, 8)).astype(np.float32)
    c, p = rng.standard_normal(8), rng.standard_normal(PATTERN_DIM)
    assert np.array_equal(net_forward(spec, p1, x, c, p).value, net_forward(spec, p2, x, c, p).value)


def test_param_budget():
    for kind in NetKind:
        assert init_params(NetSpec(kind=kind)).num_params() <= 200_000
    pcp = init_params(NetSpec())
    assert "prompt1.contrast.maps" in pcp and "prompt1.pattern.proj" in pcp
    assert pcp["prompt1.pattern.proj"].shape == (4, PATTERN_DIM)


def test_spec_validation_and_mismatch(rng):
    with pytest.raises(ValueError):
        NetSpec(scales=0)
    with pytest.raises(ValueError):
        NetSpec(base_channels=0)
    spec = NetSpec()
    params = init_params(spec)
    bad = ParamStore(params.arrays())
    bad["enc0.0.conv.w"] = np.zeros((3, 3, 7, 8), np.float32)
    with pytest.raises(ValueError):
        check_params(spec, bad)
    with pytest.raises(ValueError):
        check_params(NetSpec(base_channels=4), params)
    with pytest.raises(ValueError):
        net_forward(spec, params, np.zeros((4, 2, 8, 8)), np.zeros(8), np.zeros(PATTERN_DIM))
    with pytest.raises(ValueError):
        net_forward(NetSpec(scales=3), init_params(NetSpec(scales=3)), np.zeros((8, 1, 6, 6)),
                    np.zeros(8), np.zeros(PATTERN_DIM))


def test_param_store_basics():
    store = ParamStore({"a": np.ones(3)})
    with pytest.raises(KeyError):
        store.add("a", np.zeros(2))
    store.add("b", np.zeros((2, 2)))
    assert store.names() == ["a", "b"] and len(store) == 2 and store.num_params() == 7
    copy = store.copy()
    copy["a"].value[0] = 5
    assert store["a"].value[0] == 1
    assert store.astype(np.float64)["b"].dtype == np.float64


def test_prompt_block_single_prompt_and_shapes(rng):
    spec = small_spec(n_prompts=1)
    params = init_params(spec, seed=1)
    feats = ad.Node(rng.standard_normal((2, 4, 6, 8)))
    out = prompt_block(feats, rng.standard_normal(3), params, "prompt1.contrast")
    assert out.shape == (2, 4, 6, 8)
    w = ad.softmax(ad.matmul(params["prompt1.contrast.proj"], rng.standard_normal(3)))
    assert w.value.tolist() == [1.0]
    assert params["prompt1.contrast.mix.w"].shape == (3, 3, 8 + 2, 8)
    with pytest.raises(ValueError):
        prompt_block(feats, np.zeros(4), params, "prompt1.contrast")


def test_prompt_block_gradients(rng):
    spec = small_spec()
    params = init_params(spec, seed=2, dtype=np.float64)
    name = "prompt1.pattern"
    mix_w = params[f"{name}.mix.w"].value
    mix_b = params[f"{name}.mix.b"].value

    def op(feats, emb, maps, proj):
        store = {f"{name}.maps": maps, f"{name}.proj": proj, f"{name}.mix.w": mix_w, f"{name}.mix.b": mix_b}
        return prompt_block(feats, emb, store, name)

    arrays = [rng.standard_normal((2, 4, 4, 8)), rng.standard_normal(5),
              params[f"{name}.maps"].value, params[f"{name}.proj"].value]
    assert check_grads(op, arrays) < 1e-4


def directional_check(fn, params, rng, eps=1e-6):
    """Per-tensor directional finite differences; a small step keeps ReLU kinks out of the stencil."""
    for node in params.values():
        node.grad = None
    fn().backward()
    worst = 0.0
    for name, node in params.items():
        d = rng.standard_normal(node.shape)
        analytic = float(np.sum(node.grad * d))
        base = node.value.copy()
        node.value = base + eps * d
        with ad.no_grad():
            plus = float(fn().value)
        node.value = base - eps * d
        with ad.no_grad():
            minus = float(fn().value)
        node.value = base
        numeric = (plus - minus) / (2 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(numeric), abs(analytic), 1e-8))
    return worst


def test_end_to_end_gradients(rng):
    spec = NetSpec(kind=NetKind.PCP, scales=2, base_channels=4, shift_count=1)
    params = randomize_output(init_params(spec, seed=5, dtype=np.float64), rng)
    for name, node in params.items():
        if name.endswith(".b"):
            node.value = rng.standard_normal(node.shape) * 0.1
    x = rng.standard_normal((spec.in_channels, 2, 8, 8))
    c_emb = rng.standard_normal(spec.d_c)
    p_emb = rng.standard_normal(spec.d_p)
    weight = rng.standard_normal((2, 2, 8, 8))
    store = {n: v for n, v in params.items() if n != "contrast_table"}
    fn = lambda: ad.sum(ad.mul(net_forward(spec, params, x, c_emb, p_emb), weight))
    assert directional_check(fn, store, rng) < 1e-3

    err = check_grads(lambda xin: net_forward(spec, params, xin, c_emb, p_emb), [x])
    assert err < 1e-3
