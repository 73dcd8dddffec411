"""Hand-engineered feature spaces computed from audio and alignments.

Four streams, all at a common 100 Hz frame rate so they can be mixed
freely downstream: log mel-filterbank energies, spectrotemporal
modulation energies, binary articulatory features sampled from phoneme
alignments, and impulse-coded word embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dataio import AlignmentTable, FeatureMatrix

LOG_FLOOR = 1e-10


@dataclass
class MelSpec:
    """Log-energy mel spectrogram with its framing parameters."""

    frames: np.ndarray  # (T, M) log energies
    frame_hop_s: float = 0.010
    frame_len_s: float = 0.025
    n_mels: int = 40
    sample_rate_hz: float = 16000.0
    center_freqs_hz: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if not np.isfinite(self.frames).all():
            raise ValueError("mel energies must be finite")
        if self.n_mels < 8:
            raise ValueError("need at least 8 mel channels")

    @property
    def frame_rate_hz(self):
        return 1.0 / self.frame_hop_s


@dataclass
class ModulationBank:
    """Grid of temporal rates and spectral scales for modulation filters.

    Output dimensionality is ``2 * len(rates) * len(scales)`` (downward
    and upward sweep directions).
    """

    rates_hz: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    scales_cyc_per_oct: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        for name, vals in (("rates", self.rates_hz),
                           ("scales", self.scales_cyc_per_oct)):
            v = tuple(float(x) for x in vals)
            if not v or min(v) <= 0 or any(b <= a for a, b in zip(v, v[1:])):
                raise ValueError(f"{name} must be positive and ascending")
        self.rates_hz = tuple(float(x) for x in self.rates_hz)
        self.scales_cyc_per_oct = tuple(float(x)
                                        for x in self.scales_cyc_per_oct)

    @property
    def n_channels(self):
        return 2 * len(self.rates_hz) * len(self.scales_cyc_per_oct)

    def channel_names(self):
        names = []
        for d in ("down", "up"):
            for r in self.rates_hz:
                for s in self.scales_cyc_per_oct:
                    names.append(f"{d}_r{r:g}_s{s:g}")
        return names


# ---------------------------------------------------------------------------
# Mel filterbank


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, float) / 2595.0) - 1.0)


def mel_filterbank(n_mels, n_fft, sample_rate_hz, f_min=0.0, f_max=None):
    """Triangular mel filters; returns (filters (n_mels, bins), centers_hz)."""
    if f_max is None:
        f_max = sample_rate_hz / 2.0
    points = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max),
                                   n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    filters = np.zeros((n_mels, bins.size))
    for j in range(n_mels):
        lo, c, hi = points[j:j + 3]
        rising = (bins - lo) / max(c - lo, 1e-12)
        falling = (hi - bins) / max(hi - c, 1e-12)
        filters[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return filters, points[1:-1]


def mel_spectrogram(audio, rate_hz, frame_hop_s=0.010, frame_len_s=0.025,
                    n_mels=40):
    """Log mel energies of a mono waveform at the configured frame rate.

    Frame ``i`` covers samples ``[i*hop, i*hop + frame_len)`` (tail
    zero-padded), so a ``D``-second signal yields ``ceil(D / hop)``
    frames.  Energies are floored at 1e-10 before the log.
    """
    audio = np.asarray(audio, dtype=float)
    if audio.ndim != 1:
        raise ValueError("expected mono audio (1-D array)")
    if audio.size == 0:
        raise ValueError("empty audio")
    if rate_hz < 16000:
        raise ValueError("sample rate must be at least 16 kHz")
    hop = int(round(frame_hop_s * rate_hz))
    flen = int(round(frame_len_s * rate_hz))
    n_frames = int(np.ceil(audio.size / hop))
    n_fft = 1 << (flen - 1).bit_length()
    window = np.hanning(flen)
    padded = np.concatenate([audio, np.zeros(flen)])
    frames = np.stack([padded[i * hop:i * hop + flen] for i in range(n_frames)])
    spec = np.abs(np.fft.rfft(frames * window, n=n_fft, axis=1)) ** 2
    filters, centers = mel_filterbank(n_mels, n_fft, rate_hz)
    energies = np.log(np.maximum(spec @ filters.T, LOG_FLOOR))
    return MelSpec(energies, frame_hop_s=frame_hop_s, frame_len_s=frame_len_s,
                   n_mels=n_mels, sample_rate_hz=rate_hz,
                   center_freqs_hz=centers)


def fbank(audio, rate_hz, **kwargs):
    """Log mel-filterbank energies as a feature stream ("FBANK")."""
    mel = mel_spectrogram(audio, rate_hz, **kwargs)
    return FeatureMatrix(mel.frames, rate_hz=mel.frame_rate_hz, label="fbank")


# ---------------------------------------------------------------------------
# Spectrotemporal modulation energies


def _temporal_kernel(rate_hz, frame_rate_hz):
    """Causal gamma-envelope complex carrier tuned to one temporal rate."""
    duration = min(3.5 / rate_hz, 6.0)
    n = max(int(np.ceil(duration * frame_rate_hz)), 4)
    t = np.arange(n) / frame_rate_hz
    envelope = (rate_hz * t) ** 2 * np.exp(-3.5 * rate_hz * t)
    return envelope * np.exp(2j * np.pi * rate_hz * t)


def _spectral_kernel(scale_cyc_per_oct, oct_per_chan):
    """Complex Gabor on the mel-channel axis tuned to one spectral scale."""
    w = scale_cyc_per_oct * oct_per_chan  # cycles per channel
    sigma = 1.0 / (2.0 * w)
    half = int(np.ceil(3.0 * sigma))
    c = np.arange(-half, half + 1)
    return np.exp(-0.5 * (c / sigma) ** 2) * np.exp(2j * np.pi * w * c)


def spectrotemporal(mel: MelSpec, bank: ModulationBank | None = None):
    """Modulation-energy features from a log mel spectrogram.

    Each channel is the per-frame mean magnitude of the spectrogram
    filtered by a separable 2-D kernel: a causal complex carrier along
    time (temporal rate) times a complex Gabor along the mel-channel axis
    (spectral scale), combined in both sweep directions.  The global
    spectrogram mean is removed first and every kernel is zero-mean, so
    the output is invariant to constant offsets of the input (silence
    maps to all zeros).

    The mel-channel axis is treated as uniform in octaves at the mean
    spacing of the filter centers; the bank must be supported by that
    density (at least two channels per cycle of the largest scale).
    """
    bank = bank or ModulationBank()
    frames = np.asarray(mel.frames, dtype=float)
    t_len, m = frames.shape
    if mel.center_freqs_hz is not None:
        centers = np.asarray(mel.center_freqs_hz, float)
        total_oct = np.log2(centers[-1] / centers[0])
    else:
        total_oct = 7.0
    oct_per_chan = total_oct / (m - 1)
    max_scale = max(bank.scales_cyc_per_oct)
    if max_scale * oct_per_chan >= 0.5:
        raise ValueError(
            f"bank dims exceed spectrogram support: scale {max_scale:g} "
            f"cyc/oct needs >= {2 * max_scale:.1f} channels/octave, "
            f"spectrogram has {1 / oct_per_chan:.1f}")
    x = frames - frames.mean()
    frame_rate = mel.frame_rate_hz
    n_rates = len(bank.rates_hz)
    n_scales = len(bank.scales_cyc_per_oct)
    out = np.empty((t_len, bank.n_channels))
    temporal = {}
    for r in bank.rates_hz:
        h = _temporal_kernel(r, frame_rate)
        # causal alignment: row t only sees rows <= t
        temporal[r] = fftconvolve(x.astype(complex), h[:, None],
                                  mode="full")[:t_len]
    for d in range(2):
        for ri, r in enumerate(bank.rates_hz):
            for si, s in enumerate(bank.scales_cyc_per_oct):
                g = _spectral_kernel(s, oct_per_chan)
                if d == 1:
                    g = np.conj(g)
                z = fftconvolve(temporal[r], g[None, :], mode="full", axes=1)
                halfg = (g.size - 1) // 2
                z = z[:, halfg:halfg + m]
                col = d * n_rates * n_scales + ri * n_scales + si
                out[:, col] = np.abs(z).mean(axis=1)
    return FeatureMatrix(out, rate_hz=frame_rate, label="spectrotemporal")


# ---------------------------------------------------------------------------
# Articulatory features


@dataclass
class ArticulationTable:
    """Phoneme label -> 14-dim binary articulatory vector."""

    feature_names: list
    vectors: dict

    def __post_init__(self):
        if len(self.feature_names) != 14:
            raise ValueError("articulation table must define 14 features")
        for lab, vec in self.vectors.items():
            if len(vec) != 14:
                raise ValueError(f"phoneme {lab!r}: vector length != 14")

    def lookup(self, label):
        """Vector for a phoneme label; stress digits are stripped."""
        key = label.strip()
        base = key.rstrip("0123456789")
        for cand in (key, base, base.upper(), key.lower()):
            if cand in self.vectors:
                return self.vectors[cand]
        raise KeyError(label)


def load_articulation_table(path=None):
    """Load the shipped ARPAbet articulation table (or a compatible TSV)."""
    if path is None:
        ref = resources.files("voxenc").joinpath(
            "data/arpabet_articulation.tsv")
        text = ref.read_text()
    else:
        text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    names = header[1:]
    vectors = {}
    for ln in lines[1:]:
        parts = ln.split("\t")
        vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
    return ArticulationTable(feature_names=names, vectors=vectors)


def articulation_stream(phonemes: AlignmentTable,
                        table: ArticulationTable | None = None,
                        rate_hz=100.0, duration_s=None):
    """Frame-rate articulatory features from a phoneme alignment.

    Each frame carries the articulatory vector of the phoneme active at
    the frame midpoint; frames outside any interval are zero.  Unknown
    phoneme labels raise, reporting the interval start time.
    """
    table = table or load_articulation_table()
    if duration_s is None:
        duration_s = float(phonemes.end_s.max()) if len(phonemes) else 1.0
    n = int(np.ceil(duration_s * rate_hz))
    dim = len(table.feature_names)
    out = np.zeros((max(n, 2), dim))
    mids = (np.arange(n) + 0.5) / rate_hz
    idx = np.searchsorted(phonemes.start_s, mids, side="right") - 1
    for i, j in enumerate(idx):
        if j < 0 or mids[i] >= phonemes.end_s[j]:
            continue
        label = phonemes.labels[j]
        try:
            out[i] = table.lookup(label)
        except KeyError:
            raise ValueError(
                f"unknown phoneme {label!r} at {phonemes.start_s[j]:.2f} s"
            ) from None
    return FeatureMatrix(out, rate_hz=rate_hz, label="articulation")


# ---------------------------------------------------------------------------
# Word embedding stream


@dataclass
class EmbeddingTable:
    """Word -> dense vector lookup with a fixed vocabulary."""

    vocabulary: list
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if len(self.vocabulary) != self.vectors.shape[0]:
            raise ValueError("vocabulary / vector count mismatch")
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding vectors must be finite")
        lowered = [w.lower() for w in self.vocabulary]
        if len(set(lowered)) != len(lowered):
            raise ValueError("vocabulary must be unique (case-insensitive)")
        self._index = {w: i for i, w in enumerate(lowered)}

    @property
    def dim(self):
        return self.vectors.shape[1]

    def get(self, word):
        i = self._index.get(word.lower())
        return None if i is None else self.vectors[i]


def load_embedding_table(path):
    """Read a TSV of `word<TAB>v1<TAB>...` rows."""
    words, rows = [], []
    with open(path) as f:
        for ln in f:
            ln = ln.rstrip("\n")
            if not ln.strip():
                continue
            parts = ln.split("\t")
            words.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return EmbeddingTable(words, np.array(rows))


def save_embedding_table(table: EmbeddingTable, path):
    with open(path, "w") as f:
        for w, vec in zip(table.vocabulary, table.vectors):
            f.write(w + "\t" + "\t".join(f"{v:.8g}" for v in vec) + "\n")


def word_stream(words: AlignmentTable, emb: EmbeddingTable, rate_hz=100.0,
                duration_s=None):
    """Impulse-coded word embeddings: each word's vector is placed on the
    single frame at its end time; all other frames are zero.

    Out-of-vocabulary words contribute a zero vector and are counted in
    the returned pair ``(features, oov_count)``.
    """
    if words.kind != "word":
        raise ValueError("word_stream needs a word alignment table")
    if duration_s is None:
        duration_s = float(words.end_s.max()) if len(words) else 1.0
    n = max(int(np.ceil(duration_s * rate_hz)), 2)
    out = np.zeros((n, emb.dim))
    oov = 0
    for s, e, lab in zip(words.start_s, words.end_s, words.labels):
        vec = emb.get(lab)
        if vec is None:
            oov += 1
            continue
        frame = min(int(np.floor(e * rate_hz)), n - 1)
        out[frame] += vec
    return FeatureMatrix(out, rate_hz=rate_hz, label="words"), oov
