"""Command line entry point: ``vocalbeat-export export --model ... --in ... --out ...``"""

from __future__ import annotations

import argparse
import sys

from .errors import ExporterError, UsageError
from .export import MODEL_SOURCES, ExportConfig, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vocalbeat-export",
        description="Export speech-SSL hidden layers to .sslb feature files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="run one WAV file through a model")
    exp.add_argument("--model", required=True, choices=sorted(MODEL_SOURCES),
                     help="which pretrained checkpoint to use")
    exp.add_argument("--in", dest="in_path", required=True, metavar="WAV",
                     help="input audio file")
    exp.add_argument("--out", dest="out_path", required=True, metavar="SSLB",
                     help="where to write the embeddings")
    exp.add_argument("--device", default="cpu",
                     help="torch device to run on (default: cpu)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; fold its exit codes into ours
        return 0 if not exc.code else 1
    try:
        summary = export(ExportConfig(args.model, args.in_path,
                                      args.out_path, args.device))
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 1
    except ExporterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {summary['out']}: {summary['n_layers']} layers x "
          f"{summary['n_frames']} frames x {summary['dim']} dim "
          f"@ {summary['fps']:g} fps")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
