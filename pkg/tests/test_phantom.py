import numpy as np
import pytest
from hypothesis import given, strategies as st

from unrollkit.cfl import read_cfl, read_header, write_cfl
from unrollkit.core import norm
from unrollkit.metrics import crop_region, nmrse
from unrollkit.phantom import (INTENSITY, N_CONTRASTS, PhantomSpec, build_dataset, generate_phantom, load_dataset,
                               make_sample, save_dataset)
from unrollkit.sampling import PAPER_RATES, MaskKind, full_mask
from unrollkit.sense import adjoint, forward
from unrollkit.training import zero_checkpoint
from unrollkit.unrolled import reconstruct


def test_spec_validation():
    for bad in (dict(nt=3), dict(nx=63), dict(contrast_id=4), dict(contrast_id=-1), dict(motion_amplitude=0.3)):
        args = dict(nx=32, ny=32, nt=8) | bad
        with pytest.raises(ValueError):
            PhantomSpec(**args)


@given(st.integers(0, 10 ** 6), st.integers(0, N_CONTRASTS - 1), st.sampled_from([4, 6, 8]))
def test_cyclic_deterministic_bounded(seed, contrast, nt):
    spec = PhantomSpec(32, 32, nt, contrast, seed)
    img = generate_phantom(spec)
    assert img.shape == (nt, 32, 32) and img.dtype == np.complex64
    assert np.array_equal(img, generate_phantom(spec))
    assert np.array_equal(generate_phantom(spec, phase_offset=nt)[0], img[0])
    assert np.array_equal(generate_phantom(spec, phase_offset=1)[0], img[1])
    assert np.abs(img).max() <= 1.0


def test_motion_changes_frames():
    img = generate_phantom(PhantomSpec(64, 64, 8, 0, 3))
    assert not np.array_equal(np.abs(img[0]), np.abs(img[2]))
    still = generate_phantom(PhantomSpec(64, 64, 8, 0, 3, motion_amplitude=0.0))
    assert np.array_equal(still[0], still[5])


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_contrasts_share_supports(seed):
    # map each magnitude level back to the tissue it paints; the label images must agree
    def labels(contrast):
        mag = np.abs(generate_phantom(PhantomSpec(64, 64, 4, contrast, seed, motion_amplitude=0.0)))[0]
        return mag > 0

    assert np.array_equal(labels(0), labels(1))
    a = np.abs(generate_phantom(PhantomSpec(64, 64, 4, 0, seed)))
    b = np.abs(generate_phantom(PhantomSpec(64, 64, 4, 1, seed)))
    # the level sets of the two images partition the grid identically
    pairs = {(round(float(x), 5), round(float(y), 5)) for x, y in zip(a.ravel(), b.ravel())}
    assert len({p[0] for p in pairs}) == len(pairs) == len({p[1] for p in pairs})
    assert not np.array_equal(a, b)


def test_intensity_table_in_unit_range():
    assert INTENSITY.shape == (N_CONTRASTS, 4)
    assert np.all((INTENSITY > 0) & (INTENSITY <= 1))


def test_fully_sampled_round_trip():
    s = make_sample("uniform", 4, 1, seed=5, nx=32, ny=32, nt=4)
    full = forward(s.target, s.sens, full_mask(32, 32))
    back = adjoint(full, s.sens, full_mask(32, 32))
    assert norm(back - s.target) / norm(s.target) < 1e-5


def test_sample_is_retrospective_undersampling():
    s = make_sample("gaussian", 8, 2, seed=9, nx=32, ny=32, nt=4)
    full = forward(s.target, s.sens, full_mask(32, 32))
    assert np.array_equal(s.y, np.where(s.mask.grid, full, 0).astype(np.complex64))
    assert s.kind == "gaussian" and s.rate == 8


def test_dataset_count_order_and_rates():
    ds = build_dataset(2, [(64, 64, 4)], PAPER_RATES, [k.value for k in MaskKind], range(4), seed=1)
    assert len(ds) == 144
    assert [s.kind for s in ds[:48]] == ["uniform"] * 48
    assert len({s.seed for s in ds}) == 144
    for s in ds:
        assert s.rate / 2 <= s.mask.achieved_rate <= 2 * s.rate


def test_dataset_reproducible_and_parallel():
    args = (1, [(16, 16, 4)], [4, 8], ["uniform", "radial"], [0, 3])
    a = build_dataset(*args, seed=4)
    b = build_dataset(*args, seed=4, jobs=2)
    for x, y in zip(a, b):
        assert np.array_equal(x.y, y.y) and np.array_equal(x.target, y.target)
        assert np.array_equal(x.mask.grid, y.mask.grid) and np.array_equal(x.sens.maps, y.sens.maps)
    c = build_dataset(*args, seed=5)
    assert not np.array_equal(a[0].target, c[0].target)
    with pytest.raises(ValueError):
        build_dataset(1, [], [4], ["uniform"], [0])


def test_adjoint_aliasing_exceeds_cg_sense():
    s = make_sample("uniform", 8, 0, seed=3, nt=8)
    crop = crop_region(64, 64)
    ref = np.abs(s.target)
    alias = np.abs(adjoint(s.y, s.sens, s.mask))
    scale = np.sum(alias * ref) / np.sum(alias * alias)
    ckpt = zero_checkpoint()
    recon = np.abs(reconstruct(s.y, s.mask, s.sens, s.contrast_id, ckpt.cascade, ckpt.params))
    assert nmrse(scale * alias, ref, crop) > nmrse(recon, ref, crop)


def test_dataset_save_load(tmp_path):
    ds = build_dataset(1, [(16, 16, 4)], [4], ["gaussian", "radial"], [1], seed=3)
    save_dataset(tmp_path, ds)
    assert (tmp_path / "gaussian" / "4" / "1" / str(ds[0].seed) / "y.cfl").exists()
    back = sorted(load_dataset(tmp_path), key=lambda s: s.kind)
    for s, t in zip(ds, back):
        assert np.array_equal(s.y, t.y) and np.array_equal(s.target, t.target)
        assert np.array_equal(s.mask.grid, t.mask.grid) and np.array_equal(s.sens.maps, t.sens.maps)
        assert (s.kind, s.rate, s.contrast_id, s.seed) == (t.kind, t.rate, t.contrast_id, t.seed)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nothing")


# CFL container

def test_cfl_round_trip_and_layout(tmp_path, rng):
    x = (rng.standard_normal((2, 6, 4)) + 1j * rng.standard_normal((2, 6, 4))).astype(np.complex64)
    write_cfl(tmp_path / "a", x)
    assert (tmp_path / "a.hdr").read_text().splitlines()[1] == "4 6 2 1 1"
    back = read_cfl(tmp_path / "a")
    assert back.tobytes() == x.tobytes() and back.shape == x.shape
    raw = np.fromfile(tmp_path / "a.cfl", dtype="<f4")
    assert raw[0] == x[0, 0, 0].real and raw[1] == x[0, 0, 0].imag and raw[2] == x[0, 0, 1].real


def test_cfl_single_frame_header_and_size(tmp_path):
    write_cfl(tmp_path / "img", np.ones((16, 16), np.complex64))
    assert (tmp_path / "img.hdr").read_text() == "# Dimensions\n16 16 1 1 1\n"
    assert (tmp_path / "img.cfl").stat().st_size == 8 * 16 * 16
    assert read_header(tmp_path / "img") == [16, 16, 1, 1, 1]


def test_cfl_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_cfl(tmp_path / "missing")
    write_cfl(tmp_path / "x", np.zeros((3, 4), np.complex64))
    with open(tmp_path / "x.cfl", "ab") as fh:
        fh.write(b"\0" * 8)
    with pytest.raises(ValueError):
        read_cfl(tmp_path / "x")
    write_cfl(tmp_path / "y", np.zeros((3, 4), np.complex64))
    with pytest.raises(ValueError):
        read_cfl(tmp_path / "y", ndim=1)
    with pytest.raises(ValueError):
        write_cfl(tmp_path / "z", np.zeros((1,) * 6))
    (tmp_path / "w.hdr").write_text("# Dimensions\n4 x\n")
    with pytest.raises(ValueError):
        read_cfl(tmp_path / "w")


def test_cfl_ndim_restores_leading_singletons(tmp_path):
    x = np.arange(6, dtype=np.complex64).reshape(1, 2, 3)
    write_cfl(tmp_path / "s", x)
    assert read_cfl(tmp_path / "s").shape == (2, 3)
    assert read_cfl(tmp_path / "s", ndim=3).shape == (1, 2, 3)
