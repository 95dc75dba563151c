"""Command line entry point.

    endoseg -i <video> -m <model> -o <output folder>

``-i`` and ``-m`` may be repeated; every input is processed with every
model. Exit status is 0 on success, 1 when any pair failed and 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import shlex
import sys

from .errors import ConfigError, EndosegError, OutOfRange
from .ingest import IO_MODES, Transcoder, open_frame_source
from .metadata import parse_metadata, validate_metadata
from .pipeline import RunConfig, RuntimeProfile, estimate_runtime, format_estimate, reference_profile, run_batch
from .render import OverlayStyle

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="endoseg",
        description="Annotate videos with lesion segmentation overlays and a detection timeline.",
    )
    p.add_argument("-i", "--input", action="append", default=[], metavar="VIDEO",
                   help="input video file, or frame directory with --io-mode frame_directory (repeatable)")
    p.add_argument("-m", "--model", action="append", default=[], metavar="SPEC",
                   help="backend: mock:<seed>, replay:<metadata.json> or external:<model file> (repeatable)")
    p.add_argument("-o", "--output", metavar="DIR", help="output folder")
    p.add_argument("--threshold", type=float, default=0.50, help="minimum detection confidence (default 0.50)")
    p.add_argument("--io-mode", choices=IO_MODES, default="video", help="input/output mode (default video)")
    p.add_argument("--no-metadata", action="store_true", help="do not write <name>.meta.json files")
    p.add_argument("--estimate", action="store_true",
                   help="print the estimated processing time and exit without processing")
    p.add_argument("--ms-per-frame", type=float, help="per-frame time for --estimate (default: reference table)")
    p.add_argument("--duration", type=float, help="video length in seconds for --estimate without inputs")
    p.add_argument("--fps", type=float, default=25.0, help="frame rate for --estimate without inputs")
    p.add_argument("--alpha", type=float, default=0.45, help="overlay opacity")
    p.add_argument("--no-boxes", action="store_true", help="do not draw bounding boxes")
    p.add_argument("--no-labels", action="store_true", help="do not draw labels")
    p.add_argument("--bar-height", type=int, help="timeline bar height in pixels")
    p.add_argument("--timing", action="store_true", help="record wall-clock timing in the metadata")
    p.add_argument("--workers", type=int, default=1, help="concurrent segmentation workers")
    p.add_argument("--runner", help="model runner command for external backends, e.g. 'python run.py {model}'")
    p.add_argument("--decoder-cmd", help="decoder command template ({input})")
    p.add_argument("--encoder-cmd", help="encoder command template ({output} {width} {height} {fps})")
    p.add_argument("--probe-cmd", help="probe command template ({input})")
    p.add_argument("--validate", metavar="META", help="check a metadata file for internal consistency and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _transcoder(args) -> Transcoder:
    defaults = Transcoder()
    return Transcoder(
        probe=shlex.split(args.probe_cmd) if args.probe_cmd else defaults.probe,
        decode=shlex.split(args.decoder_cmd) if args.decoder_cmd else defaults.decode,
        encode=shlex.split(args.encoder_cmd) if args.encoder_cmd else defaults.encode,
    )


def _estimate(args, transcoder: Transcoder) -> int:
    total = 0.0
    n_models = max(1, len(args.model))
    if args.input:
        for inp in args.input:
            info, _ = open_frame_source(inp, args.io_mode, transcoder)
            profile = (RuntimeProfile((info.width, info.height), args.ms_per_frame) if args.ms_per_frame
                       else reference_profile(info.width, info.height))
            total += n_models * estimate_runtime(profile, info.fps, info.frame_count / info.fps)
    elif args.duration is not None:
        profile = RuntimeProfile((1920, 1080), args.ms_per_frame or reference_profile(1920, 1080).avg_ms_per_frame)
        total = n_models * estimate_runtime(profile, args.fps, args.duration)
    else:
        raise ConfigError("--estimate needs -i inputs or --duration")
    print(format_estimate(total))
    return EXIT_OK


def _validate(path: str) -> int:
    meta = parse_metadata(path)
    problems = validate_metadata(meta)
    for line in problems:
        print(line)
    print("ok" if not problems else f"{len(problems)} problem(s)")
    return EXIT_OK if not problems else EXIT_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.validate:
            return _validate(args.validate)
        transcoder = _transcoder(args)
        if args.estimate:
            return _estimate(args, transcoder)
        if not args.output:
            raise ConfigError("an output folder (-o) is required")
        cfg = RunConfig(
            inputs=args.input,
            models=args.model,
            output_dir=args.output,
            confidence_threshold=args.threshold,
            style=OverlayStyle(alpha=args.alpha, draw_boxes=not args.no_boxes, draw_labels=not args.no_labels),
            bar_height=args.bar_height,
            emit_metadata=not args.no_metadata,
            io_mode=args.io_mode,
            record_timing=args.timing,
            transcoder=transcoder,
            runner_command=shlex.split(args.runner) if args.runner else ("{model}",),
            workers=args.workers,
        )
        summary = run_batch(cfg)
    except (ConfigError, OutOfRange) as exc:
        print(f"endoseg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EndosegError as exc:
        print(f"endoseg: {exc}", file=sys.stderr)
        return EXIT_FAILED
    for res in summary.results:
        print(f"ok     {res.input} [{res.model}] -> {res.output}")
    for inp, spec, exc in summary.failures:
        print(f"failed {inp} [{spec}]: {exc}", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
