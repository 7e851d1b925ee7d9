"""CLI tests: exit codes, error lines, manifests, and the synthetic
end-to-end round trip (clicks -> features -> train -> infer -> eval)."""

import json

import numpy as np
import pytest
from helpers import sine

from vocalbeat import __version__, cli
from vocalbeat.audio import Waveform, save_audio
from vocalbeat.beats import BeatAnnotation, load_beats, save_beats
from vocalbeat.checkpoint import save_checkpoint
from vocalbeat.embeddings import (EmbeddingTensor, read_embeddings,
                                  write_embeddings, write_features)
from vocalbeat.errors import UsageError
from vocalbeat.network import ModelConfig, init_model
from vocalbeat.spectral import FeatureSequence, spectral_features


# ------------------------------------------------------------- helpers


def make_feature_file(path, rng, frames=60, dim=6, fps=50.0):
    data = rng.normal(0.0, 1.0, (frames, dim))
    write_features(path, FeatureSequence(data, fps))


def make_click_wav(path, rng, seconds=8.0, sample_rate=44100):
    """Noise-burst clicks on a quiet noise floor; returns the beat times."""
    bpm = rng.uniform(110.0, 140.0)
    n = int(seconds * sample_rate)
    x = rng.normal(0.0, 0.005, n)
    env = np.exp(-np.arange(int(0.03 * sample_rate)) / (0.005 * sample_rate))
    period = 60.0 / bpm
    t = period
    beats = []
    while t < seconds - 0.05:
        i = int(t * sample_rate)
        seg = min(env.size, n - i)
        x[i:i + seg] += 0.7 * env[:seg] * rng.normal(0.0, 1.0, seg)
        beats.append(t)
        t += period
    save_audio(path, Waveform(x, sample_rate))
    return BeatAnnotation(np.array(beats))


# --------------------------------------------------------- worker count


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("VOCALBEAT_THREADS", "3")
    assert cli.worker_count() == 3
    monkeypatch.setenv("VOCALBEAT_THREADS", "0")
    assert cli.worker_count() == 1
    monkeypatch.delenv("VOCALBEAT_THREADS")
    assert cli.worker_count() >= 1
    monkeypatch.setenv("VOCALBEAT_THREADS", "many")
    with pytest.raises(UsageError, match="VOCALBEAT_THREADS"):
        cli.worker_count()


# ----------------------------------------------------------- exit codes


def test_missing_required_flag_exits_1(capsys):
    assert cli.run(["segment"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: UsageError:")
    assert "usage:" in err


def test_unknown_command_exits_1(capsys):
    assert cli.run(["transcribe"]) == 1
    assert capsys.readouterr().err.startswith("error: UsageError:")


def test_unreadable_input_exits_2(tmp_path, capsys):
    beats = tmp_path / "x.beats"
    save_beats(beats, BeatAnnotation(np.array([1.0])))
    rc = cli.run(["segment", "--in", str(tmp_path / "missing.wav"),
                  "--beats", str(beats), "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("error: AudioReadError:")
    assert err.count("\n") == 1


def test_internal_error_exits_3(monkeypatch, capsys):
    def boom(args):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli._COMMANDS, "eval", boom)
    rc = cli.run(["eval", "--ref-dir", "r", "--est-dir", "e",
                  "--report", "x.json"])
    assert rc == 3
    assert capsys.readouterr().err == "error: RuntimeError: boom\n"


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == __version__


# -------------------------------------------------------------- segment


def test_segment_splits_and_writes_manifest(tmp_path, capsys):
    sr = 8000
    voiced_a = sine(200.0, 5.0, sample_rate=sr).samples
    gap = np.zeros(10 * sr)
    voiced_b = sine(200.0, 10.0, sample_rate=sr).samples
    wav = tmp_path / "take.wav"
    save_audio(wav, Waveform(np.concatenate([voiced_a, gap, voiced_b]), sr))
    beats = tmp_path / "take.beats"
    save_beats(beats, BeatAnnotation(np.array([1.0, 2.0, 16.0, 20.0])))
    out = tmp_path / "segs"

    assert cli.run(["segment", "--in", str(wav), "--beats", str(beats),
                    "--out-dir", str(out)]) == 0

    np.testing.assert_allclose(load_beats(out / "take_seg0.beats").times,
                               [1.0, 2.0], atol=1e-6)
    np.testing.assert_allclose(load_beats(out / "take_seg1.beats").times,
                               [1.0, 5.0], atol=1e-6)
    assert (out / "take_seg0.wav").exists()
    assert (out / "take_seg1.wav").exists()

    doc = json.loads((out / "run_manifest.json").read_text())
    assert doc["command"] == "segment"
    assert doc["config"]["rms_threshold"] == 0.01
    assert doc["config"]["min_silence"] == 8.0
    assert doc["version"] == __version__
    offsets = [s["offset_seconds"] for s in doc["segments"]]
    assert offsets == pytest.approx([0.0, 15.0], abs=0.011)
    durations = [s["duration_seconds"] for s in doc["segments"]]
    assert durations == pytest.approx([5.0, 10.0], abs=0.011)


# ------------------------------------------------------------- features


def test_features_single_file(tmp_path):
    wav = tmp_path / "tone.wav"
    save_audio(wav, sine(440.0, 1.5))
    out = tmp_path / "tone_feats.sslb"
    assert cli.run(["features", "--frontend", "spec", "--in", str(wav),
                    "--out", str(out)]) == 0
    emb = read_embeddings(out)
    assert emb.n_layers == 1
    assert emb.dim == 480
    assert emb.fps == 100.0
    doc = json.loads((tmp_path / "tone_feats.sslb.manifest.json").read_text())
    assert doc["command"] == "features"
    assert doc["config"]["fps"] == 100.0
    assert doc["outputs"] == [str(out)]


def test_features_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("VOCALBEAT_THREADS", "2")
    in_dir = tmp_path / "wavs"
    in_dir.mkdir()
    save_audio(in_dir / "a.wav", sine(330.0, 1.0))
    save_audio(in_dir / "b.wav", sine(440.0, 1.0))
    out_dir = tmp_path / "feats"
    assert cli.run(["features", "--frontend", "spec", "--in", str(in_dir),
                    "--out", str(out_dir)]) == 0
    assert read_embeddings(out_dir / "a.sslb").dim == 480
    assert read_embeddings(out_dir / "b.sslb").dim == 480
    doc = json.loads((out_dir / "run_manifest.json").read_text())
    assert doc["inputs"] == [str(in_dir / "a.wav"), str(in_dir / "b.wav")]


def test_features_empty_directory_exits_2(tmp_path, capsys):
    in_dir = tmp_path / "empty"
    in_dir.mkdir()
    rc = cli.run(["features", "--frontend", "spec", "--in", str(in_dir),
                  "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "no *.wav files" in capsys.readouterr().err


def test_features_ssl_passthrough_is_bitwise(tmp_path):
    rng = np.random.default_rng(1)
    src = tmp_path / "emb.sslb"
    write_embeddings(src, EmbeddingTensor(
        rng.normal(0.0, 1.0, (3, 40, 6)).astype(np.float32), fps=50.0))
    out = tmp_path / "copy.sslb"
    assert cli.run(["features", "--frontend", "ssl", "--in", str(src),
                    "--out", str(out)]) == 0
    assert out.read_bytes() == src.read_bytes()


def test_features_rerun_is_byte_identical(tmp_path):
    wav = tmp_path / "tone.wav"
    save_audio(wav, sine(523.25, 1.0))
    out_a = tmp_path / "a.sslb"
    out_b = tmp_path / "b.sslb"
    assert cli.run(["features", "--frontend", "spec", "--in", str(wav),
                    "--out", str(out_a)]) == 0
    assert cli.run(["features", "--frontend", "spec", "--in", str(wav),
                    "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


# ---------------------------------------------------------------- train


def write_training_setup(tmp_path, rng, as_list=False):
    items = []
    for i in range(3):
        feat = tmp_path / f"t{i}.sslb"
        make_feature_file(feat, rng)
        ann = tmp_path / f"t{i}.beats"
        save_beats(ann, BeatAnnotation(np.array([0.3, 0.7, 1.1])))
        items.append({"features": str(feat), "beats": str(ann),
                      "split": "val" if i == 2 else "train"})
    manifest = tmp_path / "data.json"
    doc = items if as_list else {"items": items}
    manifest.write_text(json.dumps(doc))
    return manifest


TRAIN_FLAGS = ["--model-dim", "8", "--heads", "2", "--head-dim", "4",
               "--ffn-dim", "16", "--epochs", "2", "--patience", "5",
               "--batch-size", "2", "--batches-per-epoch", "2",
               "--excerpt-seconds", "0.5", "--seed", "0"]


def test_train_cli_runs_and_reproduces(tmp_path):
    rng = np.random.default_rng(7)
    manifest = write_training_setup(tmp_path, rng)
    ckpt_a = tmp_path / "a.ckpt"
    ckpt_b = tmp_path / "b.ckpt"
    argv = ["train", "--frontend", "spec", "--data", str(manifest)]
    assert cli.run(argv + ["--out", str(ckpt_a)] + TRAIN_FLAGS) == 0
    assert cli.run(argv + ["--out", str(ckpt_b)] + TRAIN_FLAGS) == 0
    assert ckpt_a.read_bytes() == ckpt_b.read_bytes()

    doc = json.loads((tmp_path / "a.ckpt.manifest.json").read_text())
    assert doc["command"] == "train"
    assert doc["config"]["model_dim"] == 8
    assert doc["epochs_run"] == 2
    assert doc["best_val_loss"] == pytest.approx(
        min(json.loads(line)["val_loss"]
            for line in (tmp_path / "a.ckpt.log.jsonl").read_text()
            .splitlines()))


def test_train_manifest_list_form(tmp_path):
    rng = np.random.default_rng(8)
    manifest = write_training_setup(tmp_path, rng, as_list=True)
    ckpt = tmp_path / "m.ckpt"
    assert cli.run(["train", "--frontend", "spec", "--data", str(manifest),
                    "--out", str(ckpt)] + TRAIN_FLAGS) == 0
    assert ckpt.exists()


def test_train_manifest_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli.run(["train", "--frontend", "spec", "--data", str(bad),
                  "--out", str(tmp_path / "x.ckpt")] + TRAIN_FLAGS)
    assert rc == 2
    assert "not valid JSON" in capsys.readouterr().err

    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text(json.dumps([{"features": "only.sslb"}]))
    rc = cli.run(["train", "--frontend", "spec", "--data", str(incomplete),
                  "--out", str(tmp_path / "y.ckpt")] + TRAIN_FLAGS)
    assert rc == 2
    assert "'features' and 'beats'" in capsys.readouterr().err


# ---------------------------------------------------------------- infer


def test_infer_wav_to_beats(tmp_path):
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, init_model(ModelConfig(
        input_dim=480, model_dim=8, heads=2, head_dim=4, ffn_dim=16, seed=0)))
    wav = tmp_path / "tone.wav"
    waveform = sine(440.0, 2.0)
    save_audio(wav, waveform)
    out = tmp_path / "est.beats"
    assert cli.run(["infer", "--model", str(ckpt), "--in", str(wav),
                    "--out", str(out)]) == 0
    est = load_beats(out)
    doc = json.loads((tmp_path / "est.beats.manifest.json").read_text())
    assert doc["n_frames"] == spectral_features(waveform).frames.shape[0]
    assert doc["n_beats"] == len(est)
    assert doc["infer_seconds"] >= 0.0
    assert doc["inputs"] == [str(ckpt), str(wav)]


def test_infer_sslb_input_uses_embedded_fps(tmp_path):
    ckpt = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, init_model(ModelConfig(
        input_dim=6, model_dim=8, heads=2, head_dim=4, ffn_dim=16, seed=1)))
    rng = np.random.default_rng(2)
    feat = tmp_path / "track.sslb"
    make_feature_file(feat, rng, frames=100, dim=6, fps=50.0)
    out = tmp_path / "est.beats"
    assert cli.run(["infer", "--model", str(ckpt), "--in", str(feat),
                    "--out", str(out)]) == 0
    assert out.exists()
    load_beats(out)  # parses, possibly empty


# ----------------------------------------------------------------- eval


def write_eval_dirs(tmp_path, shift=0.0):
    ref_dir = tmp_path / "ref"
    est_dir = tmp_path / "est"
    ref_dir.mkdir()
    est_dir.mkdir()
    for i in range(3):
        times = np.arange(1, 9) * 0.5 + 0.1 * i
        save_beats(ref_dir / f"track{i}.beats", BeatAnnotation(times))
        save_beats(est_dir / f"track{i}.beats", BeatAnnotation(times + shift))
    return ref_dir, est_dir


def test_eval_identity_reports_ones(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("VOCALBEAT_THREADS", "2")
    ref_dir, est_dir = write_eval_dirs(tmp_path)
    report = tmp_path / "report.json"
    csv = tmp_path / "report.csv"
    rc = cli.run(["eval", "--ref-dir", str(ref_dir), "--est-dir",
                  str(est_dir), "--report", str(report), "--csv", str(csv),
                  "--pi"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("3 tracks")
    assert "f_measure=1.000" in out
    assert "pi_goto=1.000" in out
    doc = json.loads(report.read_text())
    for name in ("f_measure", "p_score", "cemgil", "goto"):
        assert doc["aggregate"][name] == 1.0
    assert [t["track_id"] for t in doc["tracks"]] == \
        ["track0", "track1", "track2"]
    assert csv.read_text().startswith("track_id,f_measure")
    assert (tmp_path / "report.json.manifest.json").exists()


def test_eval_missing_estimate_exits_2(tmp_path, capsys):
    ref_dir, est_dir = write_eval_dirs(tmp_path)
    (est_dir / "track1.beats").unlink()
    rc = cli.run(["eval", "--ref-dir", str(ref_dir), "--est-dir",
                  str(est_dir), "--report", str(tmp_path / "r.json")])
    assert rc == 2
    assert "missing estimate for track1.beats" in capsys.readouterr().err


def test_eval_on_file_exits_2(tmp_path, capsys):
    ref_dir, _ = write_eval_dirs(tmp_path)
    not_dir = tmp_path / "plain.txt"
    not_dir.write_text("x")
    rc = cli.run(["eval", "--ref-dir", str(ref_dir), "--est-dir",
                  str(not_dir), "--report", str(tmp_path / "r.json")])
    assert rc == 2
    assert "not a directory" in capsys.readouterr().err


# ---------------------------------------------------------- end to end


def test_end_to_end_synthetic_round_trip(tmp_path):
    rng = np.random.default_rng(42)
    wav_dir = tmp_path / "wavs"
    wav_dir.mkdir()
    ref_dir = tmp_path / "ref"
    ref_dir.mkdir()
    beats_by_name = {}
    for i in range(8):
        name = f"click{i}"
        beats = make_click_wav(wav_dir / f"{name}.wav", rng)
        beats_by_name[name] = beats
        save_beats(tmp_path / f"{name}.beats", beats)

    feat_dir = tmp_path / "feats"
    assert cli.run(["features", "--frontend", "spec", "--in", str(wav_dir),
                    "--out", str(feat_dir)]) == 0

    # first six tracks train (one as validation), the last two are held out
    items = []
    for i in range(6):
        items.append({"features": str(feat_dir / f"click{i}.sslb"),
                      "beats": str(tmp_path / f"click{i}.beats"),
                      "split": "val" if i == 5 else "train"})
    manifest = tmp_path / "data.json"
    manifest.write_text(json.dumps({"items": items}))
    ckpt = tmp_path / "model.ckpt"
    assert cli.run(["train", "--frontend", "spec", "--data", str(manifest),
                    "--out", str(ckpt), "--model-dim", "32", "--heads", "2",
                    "--head-dim", "16", "--ffn-dim", "64", "--epochs", "2",
                    "--patience", "5", "--batch-size", "4",
                    "--batches-per-epoch", "40", "--excerpt-seconds", "4",
                    "--lr", "3e-4", "--seed", "0"]) == 0

    est_dir = tmp_path / "est"
    est_dir.mkdir()
    for name in ("click6", "click7"):
        save_beats(ref_dir / f"{name}.beats", beats_by_name[name])
        assert cli.run(["infer", "--model", str(ckpt),
                        "--in", str(wav_dir / f"{name}.wav"),
                        "--out", str(est_dir / f"{name}.beats")]) == 0

    report = tmp_path / "report.json"
    assert cli.run(["eval", "--ref-dir", str(ref_dir), "--est-dir",
                    str(est_dir), "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["aggregate"]["f_measure"] > 0.9
