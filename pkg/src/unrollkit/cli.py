"""Command-line entry point: ``unrollkit <subcommand> ...``."""

import argparse
import csv
import os
from pathlib import Path
import shutil
import sys

import numpy as np

from .cfl import read_cfl, write_cfl
from .checkpoint import load_checkpoint, save_checkpoint
from .embedding import PATTERN_DIM, pattern_embedding
from .metrics import crop_region, nmrse, ssim
from .phantom import PhantomSpec, build_dataset, generate_phantom, load_dataset, load_sample, save_dataset
from .sampling import PAPER_RATES, MaskKind, SamplingMask, achieved_rate, make_mask
from .sense import CoilSensitivities
from .training import METHODS, Method, TrainConfig, benchmark, train
from .unrolled import reconstruct

SEED_ENV = "UNROLLKIT_SEED"


class Outputs:
    """Tracks paths created by a command so a failure can remove them."""

    def __init__(self):
        self.paths = []

    def claim(self, path):
        path = Path(path)
        if not path.exists():
            self.paths.append(path)
        return path

    def claim_stem(self, stem):
        for suffix in (".hdr", ".cfl"):
            self.claim(str(stem) + suffix)
        return stem

    def rollback(self):
        for path in reversed(self.paths):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()


def _kind(value):
    try:
        return MaskKind.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(value):
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def _kind_list(value):
    return [_kind(v).value for v in value.split(",") if v]


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def cmd_mask(args, out):
    mask = make_mask(args.kind, args.nx, args.ny, args.rate, acs_lines=args.acs, seed=_seed(args))
    if args.out:
        write_cfl(out.claim_stem(args.out), mask.grid.astype(np.complex64))
    print(f"achieved rate {mask.achieved_rate:.6g}")


def _embedding_rows(kinds, rates, seeds, nx, ny):
    for kind in kinds:
        for rate in rates:
            for seed in seeds:
                v = pattern_embedding(make_mask(kind, nx, ny, rate, seed=seed)).v
                yield [kind, rate, seed] + [repr(float(x)) for x in v]


def cmd_embed(args, out):
    header = ["kind", "rate", "seed"] + [f"v{i}" for i in range(PATTERN_DIM)]
    if args.sweep:
        base = _seed(args)
        rows = _embedding_rows(args.kinds, args.rates, range(base, base + args.seeds), args.nx, args.ny)
    else:
        grid = read_cfl(args.mask, ndim=2).real > 0.5
        v = pattern_embedding(grid).v
        rate = args.rate if args.rate is not None else f"{achieved_rate(grid):.6g}"
        rows = [[args.kind.value if args.kind else "unknown", rate, _seed(args)] + [repr(float(x)) for x in v]]
    fh = open(out.claim(args.out), "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_phantom(args, out):
    spec = PhantomSpec(args.nx, args.ny, args.nt, args.contrast, _seed(args), args.motion)
    write_cfl(out.claim_stem(args.out), generate_phantom(spec))


def cmd_dataset(args, out):
    samples = build_dataset(args.n_per_cell, [(args.nx, args.ny, args.nt)], args.rates, args.kinds,
                            args.contrasts, seed=_seed(args), ncoils=args.ncoils, jobs=args.jobs)
    out.claim(args.out)
    save_dataset(args.out, samples)
    print(f"{len(samples)} samples written to {args.out}")


def cmd_train(args, out):
    dataset = load_dataset(args.data)
    cfg = TrainConfig(method=args.method, epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      alpha=args.alpha, beta=args.beta, seed=_seed(args), n_ui=args.n_ui)
    log = None if args.quiet else (lambda e, l: print(f"epoch {e} loss {l:.6g}", flush=True))
    ckpt = train(cfg, dataset, log=log)
    out.claim(args.out)
    save_checkpoint(args.out, ckpt)


def _recon_inputs(args):
    if args.sample:
        s = load_sample(args.sample)
        ref = s.target if args.ref is None else read_cfl(args.ref, ndim=3)
        return s.y, s.mask, s.sens, s.contrast_id, ref
    if not (args.y and args.mask and args.sens):
        raise ValueError("recon needs --sample or all of --y, --mask and --sens")
    grid = read_cfl(args.mask, ndim=2).real > 0.5
    rate = args.rate if args.rate is not None else max(1, int(round(achieved_rate(grid))))
    mask = SamplingMask(args.kind or MaskKind.UNIFORM, rate, grid)
    sens = CoilSensitivities(read_cfl(args.sens, ndim=3))
    y = read_cfl(args.y, ndim=4)
    ref = read_cfl(args.ref, ndim=3) if args.ref else None
    return y, mask, sens, args.contrast, ref


def cmd_recon(args, out):
    ckpt = load_checkpoint(args.ckpt)
    y, mask, sens, contrast, ref = _recon_inputs(args)
    x = reconstruct(y, mask, sens, contrast, ckpt.cascade, ckpt.params)
    write_cfl(out.claim_stem(args.out), x)
    if ref is not None:
        crop = crop_region(*ref.shape[-2:])
        print(f"ssim {ssim(np.abs(x), np.abs(ref), crop):.6f}")
        print(f"nmrse {nmrse(np.abs(x), np.abs(ref), crop):.6f}")


def cmd_bench(args, out):
    dataset = load_dataset(args.data)
    checkpoints = {}
    for item in args.ckpt:
        label, _, path = item.rpartition("=")
        ckpt = load_checkpoint(path)
        label = label or ckpt.method
        if label in checkpoints:
            raise ValueError(f"duplicate method label {label!r}; use label=dir")
        checkpoints[label] = ckpt
    report = benchmark(checkpoints, dataset, jobs=args.jobs)
    out.claim(args.out)
    report.write(args.out)
    for label in checkpoints:
        print(f"{label}: ssim {report.mean(label):.4f} nmrse {report.mean(label, 'nmrse'):.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="unrollkit", description="Adaptive unrolled dynamic MRI reconstruction.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=None, help=f"random seed (fallback ${SEED_ENV}, then 0)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("mask", cmd_mask, "generate a sampling mask")
    sp.add_argument("--kind", type=_kind, required=True)
    sp.add_argument("--nx", type=int, default=64)
    sp.add_argument("--ny", type=int, default=64)
    sp.add_argument("--rate", type=int, required=True)
    sp.add_argument("--acs", type=int, default=None, help="central ACS lines (default: rate-dependent)")
    sp.add_argument("--out", help="output stem (.hdr/.cfl)")

    sp = add("embed", cmd_embed, "pattern embeddings as CSV")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--mask", help="mask stem to embed")
    src.add_argument("--sweep", action="store_true", help="kinds x rates x seeds sweep")
    sp.add_argument("--kind", type=_kind, default=None, help="label for --mask rows")
    sp.add_argument("--rate", type=int, default=None, help="label for --mask rows")
    sp.add_argument("--kinds", type=_kind_list, default=[k.value for k in MaskKind])
    sp.add_argument("--rates", type=_int_list, default=list(PAPER_RATES))
    sp.add_argument("--seeds", type=int, default=50, help="seeds per (kind, rate) in a sweep")
    sp.add_argument("--nx", type=int, default=64)
    sp.add_argument("--ny", type=int, default=64)
    sp.add_argument("--out", help="CSV path (default stdout)")

    sp = add("phantom", cmd_phantom, "write a synthetic 2D+t phantom")
    sp.add_argument("--nx", type=int, default=64)
    sp.add_argument("--ny", type=int, default=64)
    sp.add_argument("--nt", type=int, default=8)
    sp.add_argument("--contrast", type=int, default=0)
    sp.add_argument("--motion", type=float, default=0.03)
    sp.add_argument("--out", required=True)

    sp = add("dataset", cmd_dataset, "build and write a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-per-cell", type=int, default=1)
    sp.add_argument("--nx", type=int, default=64)
    sp.add_argument("--ny", type=int, default=64)
    sp.add_argument("--nt", type=int, default=8)
    sp.add_argument("--ncoils", type=int, default=4)
    sp.add_argument("--rates", type=_int_list, default=[8, 16, 24])
    sp.add_argument("--kinds", type=_kind_list, default=[k.value for k in MaskKind])
    sp.add_argument("--contrasts", type=_int_list, default=[0, 1, 2, 3])
    sp.add_argument("--jobs", type=int, default=1)

    sp = add("train", cmd_train, "train one method and write its checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--method", choices=[m.value for m in METHODS], default=Method.ADAPTIVE_PCP.value)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--batch-size", type=int, default=4)
    sp.add_argument("--lr", type=float, default=TrainConfig.lr)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=0.1)
    sp.add_argument("--n-ui", type=int, default=6)
    sp.add_argument("--quiet", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("recon", cmd_recon, "reconstruct one sample")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--sample", help="sample directory written by `dataset`")
    sp.add_argument("--y")
    sp.add_argument("--mask")
    sp.add_argument("--sens")
    sp.add_argument("--kind", type=_kind, default=None)
    sp.add_argument("--rate", type=int, default=None)
    sp.add_argument("--contrast", type=int, default=0)
    sp.add_argument("--ref", help="reference image stem for SSIM/NMRSE")
    sp.add_argument("--out", required=True)

    sp = add("bench", cmd_bench, "evaluate checkpoints on a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", action="append", required=True, help="[label=]checkpoint_dir, repeatable")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Outputs()
    try:
        args.func(args, out)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        out.rollback()
        print(f"unrollkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.rollback()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
