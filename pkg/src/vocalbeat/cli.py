"""Command-line surface: segment, features, train, infer, eval.

Every run writes one JSON manifest next to its outputs recording the
command, the fully resolved configuration, input/output paths, the seed,
wall-clock seconds and the toolkit version. Exit codes: 0 success, 1 usage
error, 2 data error (unreadable or malformed inputs), 3 internal error.
Errors print a single machine-parsable line ``error: <Class>: <message>``
to stderr. VOCALBEAT_THREADS caps the worker pool used by the file-level
parallel commands (features over a directory, eval).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .audio import (DEFAULT_MIN_SILENCE_SECONDS, DEFAULT_RMS_THRESHOLD,
                    load_audio, normalize_rms, resample, save_audio,
                    split_silence)
from .beats import load_beats, save_beats
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import (DEFAULT_MAX_BPM, DEFAULT_MIN_BPM,
                      DEFAULT_OBSERVATION_LAMBDA, DEFAULT_TRANSITION_LAMBDA,
                      DecoderConfig, decode_beats)
from .embeddings import (layer_combine, read_embeddings, write_embeddings,
                         write_features)
from .errors import DataError, UsageError
from .metrics import evaluate_corpus
from .network import ModelConfig, forward
from .spectral import DEFAULT_FPS, spectral_features
from .training import (DEFAULT_BATCH_SIZE, DEFAULT_BATCHES_PER_EPOCH,
                       DEFAULT_EXCERPT_SECONDS, DEFAULT_LR, train)


def worker_count() -> int:
    env = os.environ.get("VOCALBEAT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"VOCALBEAT_THREADS={env!r} is not an integer") \
                from exc
    return os.cpu_count() or 1


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit, so run() owns
    the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    p = _Parser(prog="vocalbeat",
                description="Beat tracking for isolated singing voices.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    seg = sub.add_parser("segment", help="split a track on long silences")
    seg.add_argument("--in", dest="in_path", required=True)
    seg.add_argument("--beats", required=True,
                     help="beat annotation remapped into each segment")
    seg.add_argument("--out-dir", required=True)
    seg.add_argument("--rms-threshold", type=float,
                     default=DEFAULT_RMS_THRESHOLD)
    seg.add_argument("--min-silence", type=float,
                     default=DEFAULT_MIN_SILENCE_SECONDS)

    feat = sub.add_parser("features", help="extract frame-wise features")
    feat.add_argument("--frontend", choices=("spec", "ssl"), required=True)
    feat.add_argument("--in", dest="in_path", required=True,
                      help="wav (spec) or sslb (ssl); a directory processes "
                           "every matching file inside")
    feat.add_argument("--out", required=True)
    feat.add_argument("--fps", type=float, default=DEFAULT_FPS)

    tr = sub.add_parser("train", help="train the activation network")
    tr.add_argument("--frontend", choices=("spec", "ssl"), required=True)
    tr.add_argument("--data", required=True,
                    help="JSON manifest of feature/beats path pairs")
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--model-dim", type=int, default=768)
    tr.add_argument("--heads", type=int, default=4)
    tr.add_argument("--head-dim", type=int, default=192)
    tr.add_argument("--ffn-dim", type=int, default=1024)
    tr.add_argument("--epochs", type=int, default=100)
    tr.add_argument("--patience", type=int, default=20)
    tr.add_argument("--lr", type=float, default=DEFAULT_LR)
    tr.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    tr.add_argument("--batches-per-epoch", type=int,
                    default=DEFAULT_BATCHES_PER_EPOCH)
    tr.add_argument("--excerpt-seconds", type=float,
                    default=DEFAULT_EXCERPT_SECONDS)

    inf = sub.add_parser("infer", help="decode beats for one track")
    inf.add_argument("--model", required=True)
    inf.add_argument("--in", dest="in_path", required=True,
                     help="wav or sslb")
    inf.add_argument("--out", required=True, help="output beats file")
    inf.add_argument("--fps", type=float, default=None,
                     help="decoder fps; defaults to the feature rate")
    inf.add_argument("--min-bpm", type=float, default=DEFAULT_MIN_BPM)
    inf.add_argument("--max-bpm", type=float, default=DEFAULT_MAX_BPM)
    inf.add_argument("--transition-lambda", type=float,
                     default=DEFAULT_TRANSITION_LAMBDA)
    inf.add_argument("--observation-lambda", type=float,
                     default=DEFAULT_OBSERVATION_LAMBDA)

    ev = sub.add_parser("eval", help="score estimated against reference beats")
    ev.add_argument("--ref-dir", required=True)
    ev.add_argument("--est-dir", required=True)
    ev.add_argument("--report", required=True, help="JSON report path")
    ev.add_argument("--csv", default=None, help="optional CSV report path")
    ev.add_argument("--pi", action="store_true",
                    help="print phase-inclusive aggregates too")
    return p


def _write_manifest(path: Path, command: str, args: argparse.Namespace,
                    inputs: list[str], outputs: list[str], seed,
                    wall_seconds: float, extra: dict | None = None) -> None:
    config = {k: v for k, v in vars(args).items() if k != "command"}
    doc = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "wall_seconds": wall_seconds,
        "version": __version__,
    }
    if extra:
        doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_segment(args) -> tuple[Path, list[str], list[str], dict]:
    waveform = load_audio(args.in_path)
    beats = load_beats(args.beats)
    segments = split_silence(normalize_rms(waveform), beats,
                             rms_threshold=args.rms_threshold,
                             min_silence_seconds=args.min_silence)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.in_path).stem
    outputs: list[str] = []
    seg_info = []
    for i, seg in enumerate(segments):
        wav_path = out_dir / f"{stem}_seg{i}.wav"
        beats_path = out_dir / f"{stem}_seg{i}.beats"
        save_audio(wav_path, seg.waveform)
        save_beats(beats_path, seg.beats if seg.beats is not None else [])
        outputs += [str(wav_path), str(beats_path)]
        seg_info.append({"offset_seconds": seg.source_offset_seconds,
                         "duration_seconds": seg.waveform.duration})
    return (out_dir / "run_manifest.json", [args.in_path, args.beats],
            outputs, {"segments": seg_info})


SPECTRAL_SAMPLE_RATE = 44100


def _spectral_input(path):
    """Audio at the rate the spectral front end expects."""
    return resample(load_audio(path), SPECTRAL_SAMPLE_RATE)


def _features_one(frontend: str, fps: float, in_path: Path,
                  out_path: Path) -> None:
    if frontend == "spec":
        features = spectral_features(_spectral_input(in_path), fps=fps)
        write_features(out_path, features)
    else:
        write_embeddings(out_path, read_embeddings(in_path))


def _cmd_features(args) -> tuple[Path, list[str], list[str], dict]:
    in_path = Path(args.in_path)
    pattern = "*.wav" if args.frontend == "spec" else "*.sslb"
    if in_path.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = sorted(in_path.glob(pattern))
        if not files:
            raise DataError(f"no {pattern} files in {in_path}")
        jobs = [(f, out_dir / (f.stem + ".sslb")) for f in files]
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            list(pool.map(lambda j: _features_one(args.frontend, args.fps,
                                                  j[0], j[1]), jobs))
        return (out_dir / "run_manifest.json", [str(f) for f, _ in jobs],
                [str(o) for _, o in jobs], {})
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _features_one(args.frontend, args.fps, in_path, out_path)
    return (Path(str(out_path) + ".manifest.json"), [str(in_path)],
            [str(out_path)], {})


def _load_train_manifest(path: str) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    items = doc["items"] if isinstance(doc, dict) else doc
    if not isinstance(items, list) or not items:
        raise DataError(f"{path}: expected a non-empty list of items")
    out = []
    for i, item in enumerate(items):
        if "features" not in item or "beats" not in item:
            raise DataError(f"{path}: item {i} needs 'features' and 'beats'")
        out.append({"features": item["features"], "beats": item["beats"],
                    "split": item.get("split")})
    return out


def _load_corpus(items: list[dict], frontend: str):
    corpus = []
    n_layers = None
    for item in items:
        emb = read_embeddings(item["features"])
        if n_layers is None:
            n_layers = emb.n_layers
        elif emb.n_layers != n_layers:
            raise DataError(f"{item['features']}: {emb.n_layers} layers, "
                            f"other files have {n_layers}")
        if frontend == "spec":
            if emb.n_layers != 1:
                raise DataError(f"{item['features']}: spectral features must "
                                f"be single-layer, found {emb.n_layers}")
            features = layer_combine(emb, [1.0])
        else:
            features = emb
        corpus.append(((features, load_beats(item["beats"])), item["split"]))
    return corpus, n_layers


def _cmd_train(args) -> tuple[Path, list[str], list[str], dict]:
    items = _load_train_manifest(args.data)
    corpus, n_layers = _load_corpus(items, args.frontend)
    cfg = ModelConfig(input_dim=corpus[0][0][0].dim, model_dim=args.model_dim,
                      heads=args.heads, head_dim=args.head_dim,
                      ffn_dim=args.ffn_dim, seed=args.seed,
                      n_embedding_layers=(n_layers if args.frontend == "ssl"
                                          else None))
    train_items = [pair for pair, split in corpus if split != "val"]
    val_items = [pair for pair, split in corpus if split == "val"]
    log_path = args.out + ".log.jsonl"
    params, history = train(
        train_items,
        cfg, epochs=args.epochs, early_stop_patience=args.patience,
        lr=args.lr, batch_size=args.batch_size,
        excerpt_seconds=args.excerpt_seconds,
        batches_per_epoch=args.batches_per_epoch, seed=args.seed,
        val_corpus=val_items or None, log_path=log_path)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_path, params)
    extra = {"epochs_run": len(history),
             "best_val_loss": min(h["val_loss"] for h in history)}
    inputs = [args.data] + [i["features"] for i in items]
    return (Path(str(out_path) + ".manifest.json"), inputs,
            [str(out_path), log_path], extra)


def _cmd_infer(args) -> tuple[Path, list[str], list[str], dict]:
    params = load_checkpoint(args.model)
    in_path = Path(args.in_path)
    t0 = time.perf_counter()
    if in_path.suffix.lower() == ".sslb":
        emb = read_embeddings(in_path)
        fps = emb.fps
        if params.config.n_embedding_layers is not None:
            features = emb.data
        else:
            if emb.n_layers != 1:
                raise DataError(
                    f"{in_path}: model expects combined features, file has "
                    f"{emb.n_layers} layers")
            features = layer_combine(emb, [1.0]).frames
    else:
        fps = args.fps if args.fps is not None else DEFAULT_FPS
        features = spectral_features(_spectral_input(in_path), fps=fps).frames
    _, activations = forward(params, features)
    decoder_fps = args.fps if args.fps is not None else float(fps)
    cfg = DecoderConfig(fps=decoder_fps, min_bpm=args.min_bpm,
                        max_bpm=args.max_bpm,
                        transition_lambda=args.transition_lambda,
                        observation_lambda=args.observation_lambda)
    beats = decode_beats(activations, float(fps), cfg)
    seconds = time.perf_counter() - t0
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_beats(out_path, beats)
    extra = {"infer_seconds": seconds, "n_frames": int(len(activations)),
             "n_beats": len(beats)}
    return (Path(str(out_path) + ".manifest.json"),
            [args.model, str(in_path)], [str(out_path)], extra)


def _cmd_eval(args) -> tuple[Path, list[str], list[str], dict]:
    ref_dir, est_dir = Path(args.ref_dir), Path(args.est_dir)
    if not ref_dir.is_dir():
        raise DataError(f"not a directory: {ref_dir}")
    if not est_dir.is_dir():
        raise DataError(f"not a directory: {est_dir}")
    ref_files = sorted(ref_dir.glob("*.beats"))
    if not ref_files:
        raise DataError(f"no .beats files in {ref_dir}")
    pairs = []
    ids = []
    for ref_path in ref_files:
        est_path = est_dir / ref_path.name
        if not est_path.exists():
            raise DataError(f"missing estimate for {ref_path.name}")
        pairs.append((load_beats(ref_path), load_beats(est_path)))
        ids.append(ref_path.stem)
    report = evaluate_corpus(pairs, track_ids=ids,
                             max_workers=worker_count())
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = [str(report_path)]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
        outputs.append(args.csv)
    shown = ["f_measure", "p_score", "cemgil", "goto"]
    if args.pi:
        shown += [f"pi_{m}" for m in shown[:4]]
    summary = "  ".join(f"{k}={report.aggregate[k]:.3f}" for k in shown)
    print(f"{len(pairs)} tracks  {summary}")
    return (Path(str(report_path) + ".manifest.json"),
            [str(ref_dir), str(est_dir)], outputs, {})


_COMMANDS = {
    "segment": _cmd_segment,
    "features": _cmd_features,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
}

_DATA_ERRORS = (DataError, ValueError, FileNotFoundError, IsADirectoryError,
                NotADirectoryError, PermissionError)


def run(argv=None) -> int:
    """Execute one CLI command; returns the process exit code."""
    t0 = time.perf_counter()
    try:
        args = _build_parser().parse_args(argv)
        manifest_path, inputs, outputs, extra = _COMMANDS[args.command](args)
        _write_manifest(manifest_path, args.command, args, inputs, outputs,
                        getattr(args, "seed", None),
                        time.perf_counter() - t0, extra)
        return 0
    except UsageError as exc:
        first, _, usage = str(exc).partition("\n")
        print(f"error: UsageError: {first}", file=sys.stderr)
        if usage:
            print(usage, file=sys.stderr, end="")
        return 1
    except _DATA_ERRORS as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive catch-all
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
