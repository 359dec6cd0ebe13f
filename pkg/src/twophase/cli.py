"""Command-line front end: corrupt, detect, restore, psnr, bench.

Exit codes: 0 success, 1 usage or invalid parameters, 2 I/O failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .amf_detector import AmfConfig, adaptive_median, save_mask
from .bench import ExperimentConfig, rows_to_csv, run_benchmark
from .image_core import GrayImage, PGMError, load_pgm, save_pgm
from .metrics import psnr
from .noise_model import NoiseSpec, corrupt
from .restoration import METHODS, ContinuationSchedule, StopCriteria, restore

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt_db(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4f}"


def _mask_path(out: str, given: str | None) -> str:
    return given if given else str(Path(out).with_suffix("")) + ".mask.pbm"


def cmd_corrupt(args) -> int:
    if args.ratio is not None:
        if args.p is not None or args.q is not None:
            raise UsageError("use either --ratio or --p/--q, not both")
        spec = NoiseSpec.symmetric(args.ratio, args.seed)
    else:
        spec = NoiseSpec(p=args.p or 0.0, q=args.q or 0.0, seed=args.seed)
    img = load_pgm(args.input)
    noisy, truth = corrupt(img, spec)
    save_pgm(noisy, args.output)
    mask_out = _mask_path(args.output, args.mask_out)
    save_mask(truth, mask_out)
    print(f"corrupted={truth.count} of {truth.flags.size} pixels; mask={mask_out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    img = load_pgm(args.input)
    mask, u0 = adaptive_median(img, AmfConfig(w_max=args.w_max))
    save_pgm(u0, args.output)
    mask_out = _mask_path(args.output, args.mask_out)
    save_mask(mask, mask_out)
    print(f"detected={mask.count} of {mask.flags.size} pixels; mask={mask_out}")
    return EXIT_OK


def cmd_restore(args) -> int:
    img = load_pgm(args.input)
    reference = load_pgm(args.reference) if args.reference else None
    stop = StopCriteria(args.rel_u_tol, args.rel_f_tol, args.ite_max)
    schedule = ContinuationSchedule.default(args.alpha_min)
    mask, u0 = adaptive_median(img, AmfConfig(w_max=args.w_max))
    restored, report = restore(img, mask, u0, args.method, schedule, stop)
    if not all(math.isfinite(s.final_cost) for s in report.outer_stages):
        print("numerical failure: non-finite functional value", file=sys.stderr)
        return EXIT_NUMERIC
    save_pgm(restored, args.output)
    fields = [
        f"method={args.method}",
        f"noisy={mask.count}",
        f"stages={len(report.outer_stages)}",
        f"iterations={report.total_iterations}",
        f"time_s={report.elapsed_seconds:.4f}",
        f"stop={report.stop_reason}",
    ]
    if reference is not None:
        written = GrayImage(restored.quantized())
        fields.append(f"psnr_db={_fmt_db(psnr(reference, restored))}")
        fields.append(f"psnr_quantized_db={_fmt_db(psnr(reference, written))}")
    print(" ".join(fields))
    return EXIT_OK


def cmd_psnr(args) -> int:
    value = psnr(load_pgm(args.reference), load_pgm(args.test), args.peak)
    print(_fmt_db(value))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = ExperimentConfig(
        images=args.images,
        ratios=tuple(args.ratio or (0.3, 0.5, 0.7, 0.9)),
        methods=tuple(args.method or METHODS),
        repetitions=args.reps,
        seed_base=args.seed,
        w_max=args.w_max,
        schedule=ContinuationSchedule.default(args.alpha_min),
        stop=StopCriteria(args.rel_u_tol, args.rel_f_tol, args.ite_max),
        output_csv=args.out,
        timing=not args.no_timing,
        workers=args.workers,
    )
    rows = run_benchmark(cfg)
    if not args.out:
        sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK


def _add_solver_flags(p, with_method=True):
    if with_method:
        p.add_argument("--method", choices=METHODS, default="relax")
    p.add_argument("--w-max", type=int, default=39, help="largest AMF window side (odd)")
    p.add_argument("--alpha-min", type=float, default=1.0, help="last continuation alpha bound")
    p.add_argument("--rel-u-tol", type=float, default=1e-4)
    p.add_argument("--rel-f-tol", type=float, default=1e-4)
    p.add_argument("--ite-max", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twophase", description="Two-phase salt-and-pepper noise removal.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("corrupt", help="add seeded salt-and-pepper noise")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--ratio", type=float, help="total noise ratio, split evenly into salt and pepper")
    p.add_argument("--p", type=float, help="pepper probability")
    p.add_argument("--q", type=float, help="salt probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-out", help="ground-truth mask path (PBM); default <output>.mask.pbm")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("detect", help="adaptive median detection; writes the AMF image and mask")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--w-max", type=int, default=39)
    p.add_argument("--mask-out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("restore", help="detect and restore noisy pixels")
    p.add_argument("input")
    p.add_argument("output")
    _add_solver_flags(p)
    p.add_argument("--reference", help="clean image; adds PSNR columns to the report line")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("psnr", help="PSNR of a test image against a reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--peak", type=float, default=255.0)
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("bench", help="averaged timing/PSNR table as CSV")
    p.add_argument("images", nargs="+", help="clean PGM images")
    p.add_argument("--ratio", type=float, action="append", help="noise ratio (repeatable)")
    p.add_argument("--method", choices=METHODS, action="append", help="method (repeatable)")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path; default stdout")
    p.add_argument("--no-timing", action="store_true", help="write zero times (deterministic CSV)")
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p, with_method=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"twophase: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, PGMError) as exc:
        print(f"twophase: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"twophase: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"twophase: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
