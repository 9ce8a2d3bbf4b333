"""Command line entry point: ``nrhdr <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from nrhdr.config import ConfigError, PipelineConfig, load_config
from nrhdr.core import SensorLayout, make_layout
from nrhdr.io import write_png
from nrhdr.metrics import QualityReport
from nrhdr.pipeline import PipelineError, evaluate_corpus, run_pipeline, spectrum_image, stage
from nrhdr.recon import reconstruct
from nrhdr.sensor import all_valid_frame, sample, sampled_image
from nrhdr.synth import coherence_report, stripes


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [camera] [recon] [display] [run] sections")
    p.add_argument("--seed", type=int, help="layout seed for the non-regular sensor")
    p.add_argument("--layout", choices=("regular", "nonregular", "both"), help="sensor layouts to run")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrhdr", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("zoneplate", help="zoneplate experiment on both sensors")
    _common(p)
    p.add_argument("--size", type=int)

    p = sub.add_parser("stripes", help="stripe aliasing experiment with spectral coherence report")
    _common(p)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--period", type=int, default=2)
    p.add_argument("--orientation", choices=("vertical", "horizontal"), default="vertical")

    p = sub.add_parser("simulate", help="simulate and reconstruct one PFM image")
    _common(p)
    p.add_argument("input", help="grayscale PFM reference")

    p = sub.add_parser("evaluate", help="evaluate every PFM in a directory, write a CSV")
    _common(p)
    p.add_argument("directory")
    p.add_argument("--csv", help="CSV path (default OUT/corpus.csv)")
    p.add_argument("--workers", type=int, help="images processed in parallel")

    p = sub.add_parser("layout", help="dump or inspect a sensor layout")
    _common(p)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--corner", type=int, default=None, help="regular layout corner (0-3)")
    p.add_argument("--inspect", metavar="FILE", help="summarize an existing layout file")
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.layout is not None:
        changes["layouts"] = args.layout
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "size", None) is not None:
        changes["size"] = args.size
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes)


def _print_reports(reports) -> None:
    for r in reports:
        print(f"{r.image_id:<20} {r.layout:<11} PSNR {QualityReport.format_db(r.psnr_db):>10} dB"
              f"   PU21-PSNR {QualityReport.format_db(r.pu21_psnr_db):>10} dB")


def cmd_stripes(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with stage("input"):
        img = stripes(args.size, args.period, args.orientation)
    # the stripe line: half the period along the varying axis
    f = args.size // args.period
    true_freq = (0, f) if args.orientation == "vertical" else (f, 0)
    print(f"{'layout':<11} {'signal':>8} {'ratio_sampled':>14} {'ratio_recon':>12}")
    for kind in cfg.layout_kinds:
        layout = make_layout(kind, args.size, args.size, seed=cfg.seed, regular_corner=cfg.regular_corner)
        with stage("sample"):
            frame = all_valid_frame(sample(img, layout))
        zero_filled = sampled_image(frame)
        with stage("reconstruct"):
            rec = reconstruct(frame, cfg.recon)
        a = coherence_report(zero_filled, true_freq)
        b = coherence_report(rec, true_freq)
        print(f"{kind:<11} {'stripes':>8} {a.spurious_ratio:>14.4f} {b.spurious_ratio:>12.4f}")
        if cfg.emit_spectrum:
            write_png(spectrum_image(zero_filled), out / f"stripes_{kind}_spectrum.png")
        if cfg.emit_tonemap:
            write_png(np.clip(rec.data, 0, 1), out / f"stripes_{kind}_recon.png")
    return 0


def cmd_layout(args, cfg: PipelineConfig) -> int:
    if args.inspect:
        lay = SensorLayout.load(args.inspect)
    else:
        kind = "nonregular" if cfg.layouts == "both" else cfg.layouts
        corner = cfg.regular_corner if args.corner is None else args.corner
        lay = make_layout(kind, args.width, args.height, seed=cfg.seed, regular_corner=corner)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            lay.save(args.out)
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(lay.to_text())
            return 0
    hist = np.bincount(lay.corner.ravel(), minlength=4) / lay.n_blocks
    print(f"{lay.kind.value} {lay.block_cols}x{lay.block_rows} blocks, seed {lay.seed}")
    print("corner shares: " + "  ".join(f"{q}:{h:.3f}" for q, h in enumerate(hist)))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.verb == "zoneplate":
            _print_reports(run_pipeline(cfg.replace(source="zoneplate")))
        elif args.verb == "simulate":
            _print_reports(run_pipeline(cfg.replace(source=args.input)))
        elif args.verb == "evaluate":
            rows = evaluate_corpus(args.directory, cfg, args.csv)
            for r in rows:
                print(f"{r['filename']:<28} {r['layout']:<11} {r['psnr_db']:>12} {r['pu21_psnr_db']:>12} {r['error']}")
        elif args.verb == "stripes":
            return cmd_stripes(args, cfg)
        elif args.verb == "layout":
            return cmd_layout(args, cfg)
    except ConfigError as exc:
        print(f"nrhdr: [config] {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"nrhdr: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"nrhdr: [{args.verb}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
