"""Model adapters: one callable surface over five architecture families.

Each adapter exposes ``layer_count`` and ``run(batch)``, where ``batch``
is float32 audio of shape (B, samples) at 16 kHz and the result is a
list with one (B, dim) array per layer: index 0 is the encoder output
(or the input representation for models without an encoder module),
followed by every contextualizer layer.  Only the final frame of each
hidden sequence is returned; the sliding-window driver in ``extract``
turns that into a causal feature stream.

Pretrained weights are loaded from a checkpoint when given; otherwise
the adapter is randomly initialized (seeded), which is enough for
contract and causality testing.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

SAMPLE_RATE = 16000

HUBERT_ARCH = dict(hidden_size=768, num_hidden_layers=12,
                   num_attention_heads=12, intermediate_size=3072)
WAV2VEC2_ARCH = dict(hidden_size=768, num_hidden_layers=12,
                     num_attention_heads=12, intermediate_size=3072)


def _log_mel(batch, n_mels=40, hop=160, win=400):
    """Batched log-mel frames, (B, T', n_mels), torch end to end."""
    b, n = batch.shape
    n_fft = 512
    window = torch.hann_window(win)
    spec = torch.stft(batch, n_fft=n_fft, hop_length=hop, win_length=win,
                      window=window, center=False, return_complex=True)
    power = spec.abs() ** 2  # (B, bins, T')
    bins = torch.linspace(0, SAMPLE_RATE / 2, n_fft // 2 + 1)
    mel_pts = 700.0 * (10.0 ** (torch.linspace(
        0.0, 2595.0 * np.log10(1 + (SAMPLE_RATE / 2) / 700.0),
        n_mels + 2) / 2595.0) - 1.0)
    filters = torch.zeros(n_mels, bins.numel())
    for j in range(n_mels):
        lo, c, hi = mel_pts[j], mel_pts[j + 1], mel_pts[j + 2]
        rising = (bins - lo) / torch.clamp(c - lo, min=1e-6)
        falling = (hi - bins) / torch.clamp(hi - c, min=1e-6)
        filters[j] = torch.clamp(torch.minimum(rising, falling), min=0.0)
    mel = torch.einsum("bft,mf->btm", power, filters)
    return torch.log(torch.clamp(mel, min=1e-10))


class _TransformersAdapter:
    """HuBERT / wav2vec 2.0 via the transformers implementations."""

    def __init__(self, family, arch=None, checkpoint=None, seed=0):
        from transformers import (HubertConfig, HubertModel, Wav2Vec2Config,
                                  Wav2Vec2Model)
        cfg_cls, model_cls, defaults = {
            "hubert": (HubertConfig, HubertModel, HUBERT_ARCH),
            "wav2vec2": (Wav2Vec2Config, Wav2Vec2Model, WAV2VEC2_ARCH),
        }[family]
        if checkpoint:
            self.model = model_cls.from_pretrained(checkpoint)
        else:
            params = dict(defaults)
            params.update(arch or {})
            torch.manual_seed(seed)
            self.model = model_cls(cfg_cls(**params))
        self.model.eval()
        self.layer_count = self.model.config.num_hidden_layers + 1

    @torch.no_grad()
    def run(self, batch):
        x = torch.as_tensor(batch, dtype=torch.float32)
        conv = self.model.feature_extractor(x)  # (B, C, T')
        out = self.model(x, output_hidden_states=True)
        layers = [conv[:, :, -1].numpy()]
        layers += [h[:, -1].numpy() for h in out.hidden_states[1:]]
        return layers


class _ApcAdapter:
    """Autoregressive GRU over log-mel input frames.

    Layer 0 is the input representation (log mel), layers 1..L the GRU
    layer outputs.
    """

    def __init__(self, arch=None, checkpoint=None, seed=0):
        params = dict(n_mels=40, hidden=512, layers=3)
        params.update(arch or {})
        torch.manual_seed(seed)
        self.n_mels = params["n_mels"]
        self.grus = nn.ModuleList()
        dim = self.n_mels
        for _ in range(params["layers"]):
            self.grus.append(nn.GRU(dim, params["hidden"], batch_first=True))
            dim = params["hidden"]
        if checkpoint:
            state = torch.load(checkpoint, map_location="cpu")
            self.grus.load_state_dict(state)
        self.grus.eval()
        self.layer_count = params["layers"] + 1

    @torch.no_grad()
    def run(self, batch):
        x = torch.as_tensor(batch, dtype=torch.float32)
        frames = _log_mel(x, n_mels=self.n_mels)
        layers = [frames[:, -1].numpy()]
        h = frames
        for gru in self.grus:
            h, _ = gru(h)
            layers.append(h[:, -1].numpy())
        return layers


class _ConvStack(nn.Module):
    def __init__(self, dims, kernels, strides, in_ch=1):
        super().__init__()
        self.convs = nn.ModuleList()
        ch = in_ch
        for d, k, s in zip(dims, kernels, strides):
            self.convs.append(nn.Conv1d(ch, d, k, stride=s))
            ch = d

    def forward(self, x, collect=False):
        outs = []
        for conv in self.convs:
            x = torch.relu(conv(x))
            outs.append(x)
        return outs if collect else x


class _Wav2vecAdapter:
    """Fully convolutional: 7-layer encoder + 12-layer context network."""

    def __init__(self, arch=None, checkpoint=None, seed=0):
        params = dict(enc_dim=512, ctx_dim=512, ctx_layers=12)
        params.update(arch or {})
        torch.manual_seed(seed)
        e = params["enc_dim"]
        self.encoder = _ConvStack([e] * 7, (10, 8, 4, 4, 4, 1, 1),
                                  (5, 4, 2, 2, 2, 1, 1))
        c = params["ctx_dim"]
        self.context = _ConvStack([c] * params["ctx_layers"],
                                  [3] * params["ctx_layers"],
                                  [1] * params["ctx_layers"], in_ch=e)
        if checkpoint:
            state = torch.load(checkpoint, map_location="cpu")
            self.encoder.load_state_dict(state["encoder"])
            self.context.load_state_dict(state["context"])
        self.encoder.eval()
        self.context.eval()
        self.layer_count = params["ctx_layers"] + 1

    @torch.no_grad()
    def run(self, batch):
        x = torch.as_tensor(batch, dtype=torch.float32)[:, None, :]
        z = self.encoder(x)
        layers = [z[:, :, -1].numpy()]
        for out in self.context(z, collect=True):
            layers.append(out[:, :, -1].numpy())
        return layers


class _DeepSpeech2Adapter:
    """Supervised baseline shape: 2 conv layers over log-mel + 5 LSTMs."""

    def __init__(self, arch=None, checkpoint=None, seed=0):
        params = dict(n_mels=40, conv_ch=32, hidden=512, layers=5)
        params.update(arch or {})
        torch.manual_seed(seed)
        self.n_mels = params["n_mels"]
        ch = params["conv_ch"]
        self.conv = nn.Sequential(
            nn.Conv1d(self.n_mels, ch, 11, stride=2), nn.ReLU(),
            nn.Conv1d(ch, ch, 11, stride=1), nn.ReLU())
        self.lstms = nn.ModuleList()
        dim = ch
        for _ in range(params["layers"]):
            self.lstms.append(nn.LSTM(dim, params["hidden"],
                                      batch_first=True))
            dim = params["hidden"]
        if checkpoint:
            state = torch.load(checkpoint, map_location="cpu")
            self.conv.load_state_dict(state["conv"])
            self.lstms.load_state_dict(state["lstms"])
        self.conv.eval()
        self.lstms.eval()
        self.layer_count = params["layers"] + 1

    @torch.no_grad()
    def run(self, batch):
        x = torch.as_tensor(batch, dtype=torch.float32)
        frames = _log_mel(x, n_mels=self.n_mels).transpose(1, 2)
        z = self.conv(frames)
        layers = [z[:, :, -1].numpy()]
        h = z.transpose(1, 2)
        for lstm in self.lstms:
            h, _ = lstm(h)
            layers.append(h[:, -1].numpy())
        return layers


FAMILIES = {
    "hubert": lambda **kw: _TransformersAdapter("hubert", **kw),
    "wav2vec2": lambda **kw: _TransformersAdapter("wav2vec2", **kw),
    "apc": _ApcAdapter,
    "wav2vec": _Wav2vecAdapter,
    "deepspeech2": _DeepSpeech2Adapter,
}


def build_model(name, arch=None, checkpoint=None, seed=0):
    if name not in FAMILIES:
        raise ValueError(
            f"unknown model family {name!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[name](arch=arch, checkpoint=checkpoint, seed=seed)
