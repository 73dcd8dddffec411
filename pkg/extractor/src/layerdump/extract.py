"""Causal sliding-window extraction into per-layer MTX1 files.

Row ``i`` of every output matrix is computed from the audio window
ending at ``(i + 1) * stride``; the window is zero-padded on the left
until enough audio exists.  Truncating the audio therefore never
changes rows whose window lies before the cut.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import SAMPLE_RATE, build_model
from .mtx import write_mtx


@dataclass
class ExtractorConfig:
    model: str
    audio: dict                  # story_id -> wav path
    out: str
    layers: object = "all"       # "all" or list of indices
    window_s: float = 64.0
    stride_s: float = 0.010
    batch_size: int = 128
    seed: int = 0
    checkpoint: str | None = None
    arch: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if self.stride_s <= 0:
            raise ValueError("stride_s must be positive")
        samples = self.stride_s * SAMPLE_RATE
        if abs(samples - round(samples)) > 1e-9:
            raise ValueError(
                f"stride {self.stride_s}s is not a whole number of samples "
                f"at {SAMPLE_RATE} Hz")
        if not self.audio:
            raise ValueError("no audio inputs given")


def load_wav(path):
    """Mono 16 kHz PCM16/PCM32 wav as float32 in [-1, 1]."""
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: audio must be mono")
        if f.getframerate() != SAMPLE_RATE:
            raise ValueError(
                f"{path}: sample rate {f.getframerate()} != {SAMPLE_RATE}")
        width = f.getsampwidth()
        raw = f.readframes(f.getnframes())
    if width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float32) / 2 ** 31
    else:
        raise ValueError(f"{path}: unsupported sample width {width}")
    return data


def window_rows(n_samples, window_s, stride_s):
    """(n_rows, window_samples, stride_samples) for a signal length."""
    stride = int(round(stride_s * SAMPLE_RATE))
    window = int(round(window_s * SAMPLE_RATE))
    n_rows = n_samples // stride
    return n_rows, window, stride


def extract_layers(model, audio, window_s, stride_s, batch_size=128):
    """Run the model over every trailing window; returns per-layer arrays."""
    n_rows, window, stride = window_rows(len(audio), window_s, stride_s)
    if n_rows < 1:
        raise ValueError("audio shorter than one stride")
    per_layer = [[] for _ in range(model.layer_count)]
    for start in range(0, n_rows, batch_size):
        rows = range(start, min(start + batch_size, n_rows))
        batch = np.zeros((len(rows), window), dtype=np.float32)
        for j, i in enumerate(rows):
            end = (i + 1) * stride
            lo = max(0, end - window)
            batch[j, window - (end - lo):] = audio[lo:end]
        outs = model.run(batch)
        for k, out in enumerate(outs):
            per_layer[k].append(np.asarray(out, dtype=np.float32))
    return [np.vstack(chunks) for chunks in per_layer]


def extract(config: ExtractorConfig):
    """Dump per-layer feature files for every configured story.

    Returns the list of written file paths.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    model = build_model(config.model, arch=config.arch,
                        checkpoint=config.checkpoint, seed=config.seed)
    wanted = (range(model.layer_count) if config.layers == "all"
              else [int(i) for i in config.layers])
    for k in wanted:
        if not 0 <= k < model.layer_count:
            raise ValueError(
                f"layer {k} out of range (model has {model.layer_count})")
    rate_hz = 1.0 / config.stride_s
    written = []
    for story_id, wav_path in sorted(config.audio.items()):
        audio = load_wav(wav_path)
        layers = extract_layers(model, audio, config.window_s,
                                config.stride_s, config.batch_size)
        for k in wanted:
            path = out / f"{story_id}__{config.model}_layer{k:02d}.mtx"
            write_mtx(path, layers[k], {
                "kind": "feature",
                "label": f"{config.model}/layer{k}",
                "rate_hz": rate_hz,
                "causal": True,
                "window_s": config.window_s,
                "stride_s": config.stride_s,
                "story_id": story_id,
            })
            written.append(path)
    (out / "extract.json").write_text(json.dumps({
        "model": config.model,
        "layers": [int(k) for k in wanted],
        "window_s": config.window_s,
        "stride_s": config.stride_s,
        "seed": config.seed,
        "files": [p.name for p in written],
    }, indent=1))
    return written
