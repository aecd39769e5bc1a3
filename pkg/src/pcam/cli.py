"""Command-line entry point: ``pcam {train,register,eval,ablate,gen-data}``.

Exit codes: 0 success, 2 registration failure, 3 I/O or parse error,
4 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import pipeline
from .checkpoint import Checkpoint
from .config import apply_overrides, load_config
from .exceptions import (
    CheckpointError,
    ConfigError,
    DegenerateWeightsError,
    ParameterError,
    ParseError,
    RankDeficiencyError,
)

EXIT_OK = 0
EXIT_REGISTRATION = 2
EXIT_IO = 3
EXIT_CONFIG = 4


def _shared(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="training seed (train.seed)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set train.epochs=5 (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="pcam", description="Learned rigid point-cloud registration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _shared(p)

    p = sub.add_parser("register", help="register two XYZ clouds with a checkpoint")
    _shared(p)
    p.add_argument("checkpoint")
    p.add_argument("P", help="source cloud (.xyz)")
    p.add_argument("Q", help="target cloud (.xyz)")
    p.add_argument("--meta", help="ground-truth .meta file for metrics")
    p.add_argument("--tau", type=float, help="confidence threshold (default: the tuned one)")
    p.add_argument("--icp", action="store_true", help="refine with ICP")
    p.add_argument("--dump-pairs", type=int, default=0, metavar="N",
                   help="write the N highest-confidence matched pairs")
    p.add_argument("--map", choices=("soft", "sparse"), help="correspondence map")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _shared(p)
    p.add_argument("checkpoint")
    p.add_argument("--tau", type=float)
    p.add_argument("--icp", action="store_true")
    p.add_argument("--map", choices=("soft", "sparse"))
    p.add_argument("--per-pair", action="store_true", help="also emit one record per pair")

    p = sub.add_parser("ablate", help="train and compare attention/loss variants")
    _shared(p)
    p.add_argument("--variants", nargs="+", metavar="COMBINE[/MAP[/LOSSES]]",
                   help="default: product, last_layer, no_intermediate x soft, sparse")
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="training seeds (default: --seed or 0)")

    p = sub.add_parser("gen-data", help="write synthetic train/val/test splits")
    _shared(p)
    return parser


def _config(args, base=None):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if base is not None and args.config is None:
        return apply_overrides(base.copy(), overrides).validate()
    return load_config(args.config, overrides)


def _cmd_train(args, out):
    cfg = _config(args)
    pipeline.train(cfg, args.out or ".", emit=out)
    return EXIT_OK


def _cmd_register(args, out):
    ckpt = Checkpoint.load(args.checkpoint)
    meta = args.meta
    if meta is None:
        guess = Path(str(args.P).removesuffix("_P.xyz") + ".meta")
        meta = guess if str(args.P).endswith("_P.xyz") else None
    try:
        reg, P = pipeline.register_files(ckpt, args.P, args.Q, tau=args.tau, icp=args.icp or None,
                                         map_mode=args.map, meta_path=meta)
    except (DegenerateWeightsError, RankDeficiencyError) as exc:
        out(pipeline.format_record({"status": "failed", "reason": type(exc).__name__}))
        return EXIT_REGISTRATION
    T = reg.registration.transform
    out(f"status=ok transform={','.join(f'{v:.12f}' for v in T.to_list())}")
    if reg.result is not None:
        out(pipeline.format_record({"te": reg.result.te, "re_deg": math.degrees(reg.result.re),
                                    "success": reg.result.success}))
    if args.dump_pairs:
        directory = Path(args.out or ".")
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "pairs.txt"
        pipeline.write_pairs_dump(pipeline.top_pairs(P, reg.registration, args.dump_pairs), path)
        out(pipeline.format_record({"event": "dump", "path": str(path)}))
    return EXIT_OK


def _cmd_eval(args, out):
    ckpt = Checkpoint.load(args.checkpoint)
    cfg = _config(args, base=ckpt.config)
    summary, _ = pipeline.evaluate(ckpt, cfg, tau=args.tau, icp=args.icp or None, map_mode=args.map,
                                   emit=out, per_pair=args.per_pair)
    out(pipeline.format_table([summary], ("pairs",) + pipeline.REPORT_KEYS))
    return EXIT_OK


def _cmd_ablate(args, out):
    cfg = _config(args)
    variants = pipeline.ATTENTION_VARIANTS
    if args.variants:
        variants = tuple(pipeline.Variant.parse(v) for v in args.variants)
    seeds = args.seeds or [cfg.train.seed]
    rows = pipeline.ablate(cfg, variants, seeds, emit=out)
    out(pipeline.format_table(rows, ("variant",) + pipeline.REPORT_KEYS))
    return EXIT_OK


def _cmd_gen_data(args, out):
    cfg = _config(args)
    pipeline.gen_data(cfg, args.out or "data", emit=out)
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "register": _cmd_register,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gen-data": _cmd_gen_data,
}


def main(argv=None, out=None):
    out = out or (lambda line: print(line, flush=True))
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, CheckpointError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
