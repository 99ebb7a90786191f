"""Command line interface: generate, train, eval, probe, swap, gradcheck."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import data as dat
from .config import RunConfig, parse_config


def _cmd_generate(args) -> int:
    train, test = dat.generate_dataset(args.seed, per_class=args.per_class,
                                       T=args.T, mode=args.mode)
    os.makedirs(args.out, exist_ok=True)
    dat.save_dataset(os.path.join(args.out, "train.bin"), train)
    dat.save_dataset(os.path.join(args.out, "test.bin"), test)
    print(f"wrote {len(train.label)} train / {len(test.label)} test sequences "
          f"to {args.out} (T={args.T}, D={train.D}, mode={args.mode})")
    return 0


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg.validate()


def _cmd_train(args) -> int:
    from .trainer import train

    cfg = _load_config(args)
    t0 = time.time()
    out = train(cfg, args.data, args.out, resume_from=args.resume)
    print(f"run complete in {time.time() - t0:.1f}s -> {out}")
    return 0


def _cmd_eval(args) -> int:
    from .trainer import evaluate

    acc = evaluate(args.run, args.data, split=args.split)
    print(f"source_acc={acc['source_acc']:.4f} target_acc={acc['target_acc']:.4f}")
    return 0


def _cmd_probe(args) -> int:
    from .probes import PROBE_COLUMNS, run_probe

    acc = run_probe(args.run, args.data)
    print(",".join(PROBE_COLUMNS))
    print(",".join(f"{acc[c]:.4f}" for c in PROBE_COLUMNS))
    return 0


def _cmd_swap(args) -> int:
    from .trainer import swap_demo

    paths = swap_demo(args.run, args.data, args.pairs, args.out)
    print(f"wrote {len(paths)} panels to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import FLOAT32_TOL, FLOAT64_TOL, run_battery

    results = run_battery(args.seed)
    ok = True
    for name, e32, e64, passed in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name:24s} "
              f"float32: {e32:.3e} (<{FLOAT32_TOL:.0e})  "
              f"float64: {e64:.3e} (<{FLOAT64_TOL:.0e})")
    print(f"{sum(p for *_, p in results)}/{len(results)} cases passed")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="svada",
                                description="Disentangled sequential VAE for "
                                            "video domain adaptation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build the two-domain video corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--T", type=int, default=8)
    g.add_argument("--mode", choices=["image", "feature"], default="image")
    g.set_defaults(fn=_cmd_generate)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", default=None)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--resume", default=None,
                   help="checkpoint file to resume from")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="top-1 accuracy per domain")
    e.add_argument("--run", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "test"], default="test")
    e.set_defaults(fn=_cmd_eval)

    pr = sub.add_parser("probe", help="disentanglement probes")
    pr.add_argument("--run", required=True)
    pr.add_argument("--data", required=True)
    pr.set_defaults(fn=_cmd_probe)

    s = sub.add_parser("swap", help="static-latent swap image panels")
    s.add_argument("--run", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pairs", type=int, default=4)
    s.set_defaults(fn=_cmd_swap)

    gc = sub.add_parser("gradcheck", help="gradient correctness battery")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(fn=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
