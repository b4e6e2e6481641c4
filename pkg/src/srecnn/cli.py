"""Command line interface: gen, mask, train, recon, eval, check-equivariance, figures.

Set ``SRECNN_NUM_THREADS`` to cap the BLAS thread pool.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import mri, sret

log = logging.getLogger("srecnn")

THREADS_ENV = "SRECNN_NUM_THREADS"


def _limit_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("%s set but threadpoolctl is not installed", THREADS_ENV)
        return None
    return threadpool_limits(int(n))


def _filters(text):
    parts = text.replace(",", "-").split("-")
    try:
        return tuple(int(p) for p in parts if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad filter list {text!r}") from None


def cmd_gen(args):
    from .phantom import AcquisitionConfig, build_dataset
    acq = AcquisitionConfig(coils=args.coils, accel=args.accel, noise_std=args.noise_std)
    build_dataset(args.out, args.n_train, args.n_val, args.n_test, args.size, args.frames,
                  acq, args.seed)
    print(f"wrote {args.n_train + args.n_val + args.n_test} samples to {args.out}")


def cmd_mask(args):
    m = mri.make_kt_mask(args.size, args.frames, args.accel, args.seed)
    sret.save(args.out, m)
    print(f"mask {m.shape}, sampled fraction {m.mean():.4f}")


def cmd_train(args):
    from .model import UnrolledConfig, save_model
    from .train import TrainConfig, train
    mcfg = UnrolledConfig(unrolls=args.unrolls, group_order=args.group_order,
                          spatial_size=args.spatial_size, temporal_size=args.temporal_size,
                          filters=args.filters, mode=args.mode, seed=args.seed,
                          extra={"accel": args.accel})
    cfg = TrainConfig(data=args.data, model=mcfg, epochs=args.epochs, batch_size=args.batch_size,
                      lr=args.lr, decay=args.decay, accel=args.accel, seed=args.seed,
                      augment=not args.no_augment, max_train=args.max_train,
                      checkpoint_every=args.checkpoint_every,
                      checkpoint_dir=args.out + ".ckpt" if args.checkpoint_every else None)
    model, history = train(cfg)
    save_model(model, args.out)
    last = f", final loss {history[-1]:.5f}" if history else ""
    print(f"saved {args.mode} model ({model.parameter_count()} parameters){last}")


def cmd_recon(args):
    from .model import load_model, reconstruct
    from .tensor import no_grad
    model = load_model(args.model)
    y = sret.load(args.sample + ".y.sret")
    mask = sret.load(args.sample + ".mask.sret")
    coils = sret.load(args.sample + ".coils.sret")
    with no_grad():
        rec = reconstruct(y, coils, mask, model).data
    sret.save(args.out, rec)
    print(f"wrote {args.out}")


def cmd_eval(args):
    from .model import load_model
    from .train import evaluate, summarize
    model = load_model(args.model)
    records = evaluate(model, args.data, args.split, args.accel, args.csv)
    for method, stats in summarize(records).items():
        p, s = stats["psnr_db"], stats["ssim"]
        print(f"{method:12s} PSNR {p[0]:.3f} ({p[1]:.3f})  SSIM {s[0]:.4f} ({s[1]:.4f})")


def cmd_check(args):
    from .checks import block_error, default_threshold, layer_errors, network_error
    from .equivariant import RotationGroup
    group = RotationGroup(args.group_order)
    g = args.angle_index % group.order
    threshold = args.threshold or default_threshold(group, args.mode)
    if args.mode == "layer":
        errs = layer_errors(group, g, size=args.size, seed=args.seed)
    elif args.mode == "block":
        errs = {"block": block_error(group, g, size=args.size, seed=args.seed)}
    else:
        errs = {"network": network_error(group, g, size=args.size, seed=args.seed)}
    worst = max(errs.values())
    for name, e in errs.items():
        print(f"{name:12s} {e:.3e}")
    ok = worst <= threshold
    print(f"s={group.order} angle={np.degrees(group.angle(g)):.1f}deg max error {worst:.3e} "
          f"threshold {threshold:.1e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_figures(args):
    from .figures import export_figures
    paths = export_figures(sret.load(args.recon), sret.load(args.truth), args.out_dir)
    print(f"wrote {len(paths)} figures to {args.out_dir}")


def build_parser():
    p = argparse.ArgumentParser(prog="srecnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="generate a phantom dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n-train", type=int, default=100)
    s.add_argument("--n-val", type=int, default=10)
    s.add_argument("--n-test", type=int, default=20)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--frames", type=int, default=8)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--accel", type=float, default=8.0)
    s.add_argument("--noise-std", type=float, default=0.0)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("mask", help="write a k-t sampling mask")
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--accel", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("train", help="train an unrolled model")
    s.add_argument("--data", required=True)
    s.add_argument("--accel", type=float, default=None)
    s.add_argument("--mode", choices=("sre", "plain"), default="sre")
    s.add_argument("--group-order", type=int, default=4)
    s.add_argument("--unrolls", type=int, default=2)
    s.add_argument("--filters", type=_filters, default=(8, 8, 2))
    s.add_argument("--spatial-size", type=int, default=3)
    s.add_argument("--temporal-size", type=int, default=3)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--decay", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--batch-size", type=int, default=1)
    s.add_argument("--max-train", type=int, default=None)
    s.add_argument("--no-augment", action="store_true")
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("recon", help="reconstruct one sample")
    s.add_argument("--model", required=True)
    s.add_argument("--sample", required=True, help="path prefix, e.g. DIR/sample_0000")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("eval", help="PSNR/SSIM of a model on a split")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--accel", type=float, default=None)
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("check-equivariance", help="measure rotation equivariance")
    s.add_argument("--group-order", type=int, default=4)
    s.add_argument("--mode", choices=("layer", "block", "network"), default="layer")
    s.add_argument("--angle-index", type=int, default=1)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threshold", type=float, default=None)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("figures", help="export PGM figures")
    s.add_argument("--recon", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_figures)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limits = _limit_threads()
    try:
        return args.func(args) or 0
    except (ValueError, OSError) as e:
        print(f"srecnn {args.command}: error: {e}", file=sys.stderr)
        return 2
    finally:
        if limits is not None:
            limits.unregister()


if __name__ == "__main__":
    sys.exit(main())
