"""Command-line front end.

    volumize theory [kind] --config c.txt --out dir --seed 7 [--check]
    volumize sweep          --config c.txt --out dir --seed 7 --workers 4 [--resume]
    volumize train          --config c.txt --out dir --seed 7 [--resume]
    volumize quantize       --config c.txt --out dir --seed 7
    volumize spectral       --config c.txt --out dir --seed 7

Exit codes: 0 success, 1 config/usage error, 2 runtime or numeric error,
3 a `theory --check` run whose acceptance checks did not pass. Every run
writes an effective_config.txt echo next to its CSVs.
"""

import argparse
import sys

from . import runs
from .config import (QUANTIZE_SCHEMA, SPECTRAL_SCHEMA, SWEEP_SCHEMA,
                     THEORY_SCHEMA, TRAIN_SCHEMA, load_config, parse_kv_file,
                     apply_schema)
from .errors import ConfigError, VolumizeError

THEORY_KINDS = ("fig4a", "fig4b", "theorem1", "theorem3")


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2 (2 means a run
    # blew up at runtime here)
    def error(self, message):
        raise ConfigError(message)


def _seed(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="volumize",
                description="Wall-regularized training toolkit: theory "
                            "oracles, grid sweeps, quantization, and "
                            "spectral audits.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False, resume=False):
        sp.add_argument("--config", default=None, metavar="PATH",
                        help="flat key=value config file (defaults apply without it)")
        sp.add_argument("--out", default="out", metavar="DIR",
                        help="output directory (created if missing)")
        sp.add_argument("--seed", type=_seed, default=0, metavar="U64")
        if workers:
            sp.add_argument("--workers", type=int, default=1, metavar="N",
                            help="parallel cell workers")
        if resume:
            sp.add_argument("--resume", action="store_true",
                            help="skip/continue already-computed work in --out")

    sp = sub.add_parser("theory", help="closed forms vs Monte-Carlo/flow oracles")
    sp.add_argument("kind", nargs="?", choices=THEORY_KINDS, default=None,
                    help="which table to produce (or set kind= in the config)")
    sp.add_argument("--check", action="store_true",
                    help="exit 3 unless all built-in checks pass")
    common(sp)

    sp = sub.add_parser("sweep", help="(v, alpha) grid sweep on synthetic blobs")
    common(sp, workers=True, resume=True)

    sp = sub.add_parser("train", help="single training run with checkpointing")
    common(sp, resume=True)

    sp = sub.add_parser("quantize", help="train with periodic wall rounding")
    common(sp)

    sp = sub.add_parser("spectral", help="contractive-walls training + bound audit")
    common(sp)
    return p


def _load(path, schema):
    try:
        return load_config(path, schema)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help lands here with code 0
            return int(exc.code or 0)

        if args.command == "theory":
            raw = {}
            if args.config:
                try:
                    raw = parse_kv_file(args.config)
                except OSError as exc:
                    raise ConfigError(f"cannot read config: {exc}") from exc
            if args.kind is not None:
                raw["kind"] = args.kind
            cfg = apply_schema(raw, THEORY_SCHEMA,
                               source=args.config or "command line")
            path, ok = runs.run_theory(cfg, args.out, args.seed)
            print(f"wrote {path}")
            if args.check:
                print("checks: " + ("pass" if ok else "FAIL"))
                return 0 if ok else 3
            return 0

        if args.command == "sweep":
            cfg = _load(args.config, SWEEP_SCHEMA)
            path = runs.run_sweep_cmd(cfg, args.out, args.seed,
                                      workers=args.workers, resume=args.resume)
            print(f"wrote {path}")
            return 0

        if args.command == "train":
            cfg = _load(args.config, TRAIN_SCHEMA)
            path, traj = runs.run_train(cfg, args.out, args.seed,
                                        resume=args.resume)
            print(f"wrote {path}")
            print(f"best={traj.best:.6f} last={traj.last:.6f} gap={traj.gap:.6f}")
            return 0

        if args.command == "quantize":
            cfg = _load(args.config, QUANTIZE_SCHEMA)
            path, float_acc, quant_acc = runs.run_quantize(cfg, args.out, args.seed)
            print(f"wrote {path}")
            print(f"float_test_acc={float_acc:.6f} quantized_test_acc={quant_acc:.6f}")
            return 0

        if args.command == "spectral":
            cfg = _load(args.config, SPECTRAL_SCHEMA)
            path, report = runs.run_spectral(cfg, args.out, args.seed)
            print(f"wrote {path}")
            print(f"smax_product={report.smax_product:.9f} "
                  f"empirical={report.empirical:.9f} ok={report.ok}")
            return 0

        raise ConfigError(f"unknown command {args.command!r}")  # pragma: no cover

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except VolumizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
