"""Run a pretrained speech model over a WAV file and save its activations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .audio import TARGET_SAMPLE_RATE, load_wav, to_model_rate
from .errors import ModelLoadError, UsageError
from .sslb import write_sslb

# Hub checkpoints keyed by the short names the CLI accepts.  WavLM exports
# every encoder layer plus the convolutional front-end output; DistilHuBERT
# is distilled to a single useful representation, so only the final hidden
# state is kept.
MODEL_SOURCES = {
    "wavlm-base-plus": "microsoft/wavlm-base-plus",
    "distilhubert": "ntu-spml/distilhubert",
}
ALL_LAYERS = {
    "wavlm-base-plus": True,
    "distilhubert": False,
}

# Both architectures stride 320 samples per frame at 16 kHz.
FPS = 50.0


@dataclass
class ExportConfig:
    model_name: str
    in_path: str
    out_path: str
    device: str = "cpu"


def load_model(model_name: str, device: str = "cpu"):
    if model_name not in MODEL_SOURCES:
        known = ", ".join(sorted(MODEL_SOURCES))
        raise UsageError(f"unknown model {model_name!r}, expected one of: {known}")
    from transformers import AutoModel

    source = MODEL_SOURCES[model_name]
    try:
        model = AutoModel.from_pretrained(source)
    except Exception as exc:
        raise ModelLoadError(f"cannot load {source}: {exc}") from exc
    return model.to(device).eval()


def extract_layers(model, samples: np.ndarray, all_layers: bool) -> np.ndarray:
    """Forward ``samples`` (float32, 16 kHz) and stack hidden states.

    Returns (n_layers, n_frames, dim) float32.  With ``all_layers`` the
    stack holds the front-end output followed by every encoder layer;
    otherwise just the final hidden state.
    """
    device = next(model.parameters()).device
    x = torch.from_numpy(np.ascontiguousarray(samples, dtype=np.float32))
    x = x[None, :].to(device)
    with torch.no_grad():
        out = model(x, output_hidden_states=all_layers)
    if all_layers:
        stacked = torch.stack(out.hidden_states, dim=0)[:, 0]
    else:
        stacked = out.last_hidden_state[0][None]
    return stacked.cpu().numpy().astype(np.float32)


def export(cfg: ExportConfig) -> dict:
    """Export one file, returning a summary of what was written."""
    if cfg.model_name not in MODEL_SOURCES:
        known = ", ".join(sorted(MODEL_SOURCES))
        raise UsageError(f"unknown model {cfg.model_name!r}, "
                         f"expected one of: {known}")
    # read the audio first so bad inputs fail before the slow model load
    samples, rate = load_wav(cfg.in_path)
    samples = to_model_rate(samples, rate)
    model = load_model(cfg.model_name, cfg.device)
    layers = extract_layers(model, samples, ALL_LAYERS[cfg.model_name])
    write_sslb(cfg.out_path, layers, FPS)
    n_layers, n_frames, dim = layers.shape
    return {
        "model": cfg.model_name,
        "in": cfg.in_path,
        "out": cfg.out_path,
        "n_layers": int(n_layers),
        "n_frames": int(n_frames),
        "dim": int(dim),
        "fps": FPS,
        "input_seconds": round(samples.size / TARGET_SAMPLE_RATE, 3),
    }
