"""Beat tracking for isolated singing voices.

Pipeline: RMS-normalized audio is split on long silences, turned into
log-mel (or precomputed SSL-embedding) features, scored frame-by-frame by
a linear-attention activation network, and decoded into beat times with a
tempo/phase HMM. A metrics suite (F-measure, Cemgil, P-score, Goto, and
their phase-inclusive variants) closes the loop.
"""

__version__ = "0.1.0"

from .audio import (Waveform, VocalSegment, frame_rms, load_audio,
                    normalize_rms, resample, save_audio, split_silence)
from .beats import BeatAnnotation, load_beats, save_beats
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import DecoderConfig, build_state_space, decode_beats, viterbi
from .embeddings import (EmbeddingTensor, layer_combine, read_embeddings,
                         write_embeddings, write_features)
from .metrics import (MetricReport, cemgil, evaluate_corpus, f_measure, goto,
                      offbeat_shift, p_score, pi_metric)
from .network import (ModelConfig, ModelParams, backward, bce_with_logits,
                      forward, init_model, linear_attention, make_targets)
from .spectral import FeatureSequence, log_mel, spectral_features
from .training import adam_step, sample_excerpt, train

__all__ = [
    "BeatAnnotation", "DecoderConfig", "EmbeddingTensor", "FeatureSequence",
    "MetricReport", "ModelConfig", "ModelParams", "VocalSegment", "Waveform",
    "adam_step", "backward", "bce_with_logits", "build_state_space", "cemgil",
    "decode_beats", "evaluate_corpus", "f_measure", "forward", "frame_rms",
    "goto", "init_model", "layer_combine", "linear_attention", "load_audio",
    "load_beats", "load_checkpoint", "log_mel", "make_targets",
    "normalize_rms", "offbeat_shift", "p_score", "pi_metric",
    "read_embeddings", "resample", "sample_excerpt", "save_audio",
    "save_beats", "save_checkpoint", "spectral_features", "split_silence",
    "train", "viterbi", "write_embeddings", "write_features",
]
