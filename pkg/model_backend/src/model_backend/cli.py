"""Command line entry points: serve the protocol, dump samples, show info."""

from __future__ import annotations

import argparse
import json
import sys

from .config import ENGINES, from_env, with_overrides
from .samples import write_samples
from .server import ModelBackendHandler, serve


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--engine", choices=ENGINES, help="engine selection (default: env or auto)")
    parser.add_argument("--device", help="inference device, e.g. cpu or cuda:0")
    parser.add_argument("--max-side", type=int, help="downscale images beyond this side length before detection")
    parser.add_argument("--detector-weights", help="Grounding DINO checkpoint path")
    parser.add_argument("--detector-config", help="Grounding DINO model config path")
    parser.add_argument("--segmenter-weights", help="SAM checkpoint path")
    parser.add_argument("--sam-model-type", help="SAM registry key, e.g. vit_h")


def _config_from(args: argparse.Namespace):
    return with_overrides(
        from_env(),
        engine=args.engine,
        device=args.device,
        max_side=args.max_side,
        detector_weights=args.detector_weights,
        detector_config=args.detector_config,
        segmenter_weights=args.segmenter_weights,
        sam_model_type=args.sam_model_type,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-backend",
        description="Detector/segmenter model server speaking NDJSON on stdio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="serve ping/detect/segment until stdin closes")
    _add_config_flags(p_serve)

    p_info = sub.add_parser("info", help="print the ping reply and exit")
    _add_config_flags(p_info)

    p_samples = sub.add_parser("samples", help="write the bundled sample images")
    p_samples.add_argument("--out", required=True, help="destination directory")

    args = parser.parse_args(argv)

    if args.command == "samples":
        for path in write_samples(args.out):
            print(path)
        return 0

    try:
        handler = ModelBackendHandler(_config_from(args))
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "info":
        print(json.dumps(handler.ping(), indent=2, sort_keys=True))
        return 0

    try:
        serve(handler, sys.stdin, sys.stdout)
    except (KeyboardInterrupt, BrokenPipeError):
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
