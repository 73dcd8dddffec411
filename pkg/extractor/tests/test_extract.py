import json

import numpy as np
import pytest

from layerdump.extract import ExtractorConfig, extract, extract_layers, \
    load_wav
from layerdump.models import build_model

from conftest import TINY_HUBERT, write_wav


@pytest.fixture(scope="module")
def tiny_hubert():
    return build_model("hubert", arch=TINY_HUBERT, seed=0)


def test_row_count_matches_stride(tiny_hubert):
    rng = np.random.default_rng(0)
    audio = rng.uniform(-0.2, 0.2, 3 * 16000).astype(np.float32)
    layers = extract_layers(tiny_hubert, audio, window_s=0.5, stride_s=0.01,
                            batch_size=64)
    assert len(layers) == 13
    assert all(l.shape[0] == 300 for l in layers)
    assert layers[0].shape[1] == 16  # conv encoder width
    assert layers[1].shape[1] == 32  # contextualizer width


def test_causality_under_truncation(tiny_hubert):
    rng = np.random.default_rng(1)
    audio = rng.uniform(-0.2, 0.2, 2 * 16000).astype(np.float32)
    full = extract_layers(tiny_hubert, audio, window_s=0.4, stride_s=0.01,
                          batch_size=50)
    half = extract_layers(tiny_hubert, audio[:16000], window_s=0.4,
                          stride_s=0.01, batch_size=50)
    for k in range(13):
        shared = half[k].shape[0] - 1  # up to one stride before the cut
        assert np.array_equal(full[k][:shared], half[k][:shared]), f"layer {k}"


def test_deterministic_dump(tmp_path, tone_wav):
    cfg = dict(model="hubert", arch=TINY_HUBERT, seed=3,
               audio={"s": str(tone_wav)}, window_s=0.4, stride_s=0.02,
               batch_size=32)
    a = extract(ExtractorConfig(out=str(tmp_path / "a"), **cfg))
    b = extract(ExtractorConfig(out=str(tmp_path / "b"), **cfg))
    assert len(a) == len(b) == 13
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_layer_subset_and_metadata(tmp_path, tone_wav):
    written = extract(ExtractorConfig(
        model="hubert", arch=TINY_HUBERT, seed=0,
        audio={"s": str(tone_wav)}, out=str(tmp_path), layers=[0, 9],
        window_s=0.4, stride_s=0.02, batch_size=64))
    assert len(written) == 2
    meta = json.loads((tmp_path / written[1].name).with_suffix(
        ".mtx.meta.json").read_text())
    assert meta["label"] == "hubert/layer9"
    assert meta["rate_hz"] == 50.0
    assert meta["causal"] is True


def test_bad_layer_index_rejected(tmp_path, tone_wav):
    with pytest.raises(ValueError, match="out of range"):
        extract(ExtractorConfig(model="hubert", arch=TINY_HUBERT,
                                audio={"s": str(tone_wav)},
                                out=str(tmp_path), layers=[99],
                                window_s=0.4, stride_s=0.02))


def test_stride_must_divide_samples(tmp_path, tone_wav):
    with pytest.raises(ValueError, match="whole number"):
        ExtractorConfig(model="hubert", audio={"s": str(tone_wav)},
                        out=str(tmp_path), stride_s=0.0101010101)


def test_load_wav_validates(tmp_path):
    write_wav(tmp_path / "w.wav", np.zeros(1000), rate=8000)
    with pytest.raises(ValueError, match="sample rate"):
        load_wav(tmp_path / "w.wav")


@pytest.mark.parametrize("family,arch,expected_layers", [
    ("apc", dict(hidden=16, layers=3), 4),
    ("wav2vec", dict(enc_dim=8, ctx_dim=8, ctx_layers=3), 4),
    ("deepspeech2", dict(conv_ch=8, hidden=16, layers=2), 3),
])
def test_other_families_smoke(family, arch, expected_layers):
    model = build_model(family, arch=arch, seed=0)
    assert model.layer_count == expected_layers
    rng = np.random.default_rng(0)
    audio = rng.uniform(-0.3, 0.3, 16000).astype(np.float32)
    layers = extract_layers(model, audio, window_s=0.5, stride_s=0.05,
                            batch_size=10)
    assert len(layers) == expected_layers
    assert all(l.shape[0] == 20 for l in layers)
    assert all(np.isfinite(l).all() for l in layers)


def test_unknown_family_rejected():
    with pytest.raises(ValueError, match="unknown model family"):
        build_model("gpt", arch={})
