import wave

import numpy as np
import pytest

TINY_HUBERT = dict(hidden_size=32, num_hidden_layers=12,
                   num_attention_heads=2, intermediate_size=64,
                   conv_dim=(16,) * 7, num_conv_pos_embeddings=16,
                   num_conv_pos_embedding_groups=4)


def write_wav(path, audio, rate=16000):
    pcm = np.clip(audio, -1.0, 1.0)
    pcm = (pcm * 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(pcm.tobytes())


@pytest.fixture
def tone_wav(tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(2 * 16000) / 16000
    audio = 0.3 * np.sin(2 * np.pi * 300 * t) + 0.05 * rng.standard_normal(
        t.size)
    path = tmp_path / "tone.wav"
    write_wav(path, audio)
    return path
