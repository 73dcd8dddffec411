"""Synthetic datasets with known ground truth.

Generators mirror the real data path closely enough that every fitting
and analysis claim can be checked at desk scale: features are seeded
AR(1) processes, responses are lag-mixed linear combinations of
designated feature spaces plus Gaussian noise, and the analytic
correlation ceiling 1/sqrt(1 + noise_var/signal_var) is written next to
the data.  A hierarchy generator produces per-layer feature streams that
interpolate between an "acoustic" and a "semantic" latent space, with
voxels assigned a preferred level, for layer-selectivity checks.  Probe
streams carry phoneme/word structure at 100 Hz so classification and
embedding probes can run end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import (AlignmentTable, DatasetManifest, FeatureMatrix,
                     ResponseMatrix, StoryEntry, save_manifest, write_matrix)
from .acoustic import EmbeddingTable, save_embedding_table
from .timeseries import DelayConfig, fir_delays, zscore_columns
from .util import pearson_columns, rng_from

FIR_KERNEL = (0.2, 0.4, 0.3, 0.1)  # ground-truth lag mix over delays 1..4 TR

_PHONEMES = ["AA", "AE", "AH", "B", "D", "EH", "F", "IY", "K", "L",
             "M", "N", "P", "R", "S", "T", "UW", "V", "W", "Z"]


@dataclass
class SimSpec:
    """Knobs for the synthetic dataset family."""

    n_stories: int = 10
    story_len_tr: int = 300
    test_len_tr: int | None = None
    n_voxels: int = 50
    n_features: int = 8
    n_spaces: int = 1
    space_gains: tuple | None = None  # per-space signal amplitude
    tr_seconds: float = 2.0
    noise_sd: float = 0.0
    ar_phi: float = 0.9
    seed: int = 0
    # hierarchy options
    n_layers: int = 0
    latent_dim: int = 6
    layer_jitter_sd: float = 0.7
    # probe-stream options
    probe_len_s: float = 0.0
    probe_rate_hz: float = 100.0
    vocab_size: int = 30
    embedding_dim: int = 16
    phoneme_sig_sd: float = 1.0

    def __post_init__(self):
        if self.n_stories < 2:
            raise ValueError("need at least 2 stories (1 train + 1 test)")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.test_len_tr is None:
            self.test_len_tr = self.story_len_tr
        if self.space_gains is None:
            self.space_gains = tuple([1.0] * self.n_spaces)
        if len(self.space_gains) != self.n_spaces:
            raise ValueError("space_gains length must match n_spaces")


@dataclass
class SimStory:
    story_id: str
    features: dict           # label -> FeatureMatrix (TR rate)
    response: ResponseMatrix
    role: str = "train"
    alignments: dict = field(default_factory=dict)  # kind -> AlignmentTable
    probe_features: dict = field(default_factory=dict)
    alt_responses: dict = field(default_factory=dict)


@dataclass
class SimDataset:
    spec: SimSpec
    stories: list
    ground_truth: dict
    embeddings: EmbeddingTable | None = None
    roi_masks: dict = field(default_factory=dict)

    def labels(self):
        return sorted(self.stories[0].features)

    def design(self, labels, role, delays=None, response_key=None):
        """In-memory equivalent of pipeline.build_xy for tests."""
        if isinstance(labels, str):
            labels = [labels]
        delays = delays or DelayConfig()
        stories = [s for s in self.stories if s.role == role]
        designs = []
        for label in labels:
            blocks = []
            for s in stories:
                arr = zscore_columns(s.features[label].data,
                                     tolerate_constant=True)
                blocks.append(fir_delays(arr, delays))
            designs.append(np.vstack(blocks))
        if response_key is None:
            y = np.vstack([s.response.data for s in stories])
        else:
            y = np.vstack([s.alt_responses[response_key].data
                           for s in stories])
        slices = []
        start = 0
        for d in designs:
            slices.append((start, start + d.shape[1]))
            start += d.shape[1]
        return np.hstack(designs), y, slices


def _ar1(rng, t_len, dim, phi):
    """AR(1) columns with unit marginal variance."""
    innov_sd = np.sqrt(1.0 - phi * phi)
    x = np.empty((t_len, dim))
    x[0] = rng.standard_normal(dim)
    noise = rng.standard_normal((t_len - 1, dim)) * innov_sd
    for t in range(1, t_len):
        x[t] = phi * x[t - 1] + noise[t - 1]
    return x


def _lagged_signal(features, weights, kernel=FIR_KERNEL):
    """FIR-lagged linear mix: sum_d k_d * (F[t-d] @ W), zero-padded."""
    proj = features @ weights
    out = np.zeros_like(proj)
    for d, k in enumerate(kernel, start=1):
        out[d:] += k * proj[:-d]
    return out


def analytic_ceiling(noise_sd, signal_var=1.0):
    """Expected corr(signal, signal + noise) at the given noise level."""
    return 1.0 / np.sqrt(1.0 + (noise_sd ** 2) / signal_var)


def gen_dataset(spec: SimSpec) -> SimDataset:
    """Multi-story dataset: AR(1) feature spaces driving all voxels.

    Each space contributes through its own weight matrix, scaled by
    ``space_gains``; the per-voxel clean signal is normalized to unit
    variance over the training stories before noise is added, so the
    correlation ceiling is exactly ``analytic_ceiling(noise_sd)`` (up to
    sampling error).  Responses are z-scored per story.
    """
    rng = rng_from(spec.seed, 1)
    weights = [rng.standard_normal((spec.n_features, spec.n_voxels))
               / np.sqrt(spec.n_features) for _ in range(spec.n_spaces)]
    lengths = [spec.story_len_tr] * (spec.n_stories - 1) + [spec.test_len_tr]
    feats, signals = [], []
    for i, t_len in enumerate(lengths):
        srng = rng_from(spec.seed, 2, i)
        # z-scored per story before mixing, so responses stay exactly
        # linear in the per-story-standardized design downstream
        f_spaces = [zscore_columns(_ar1(srng, t_len, spec.n_features,
                                        spec.ar_phi))
                    for _ in range(spec.n_spaces)]
        sig = sum(g * _lagged_signal(f, w)
                  for g, f, w in zip(spec.space_gains, f_spaces, weights))
        feats.append(f_spaces)
        signals.append(sig)
    train_sig = np.vstack(signals[:-1])
    scale = train_sig.std(axis=0)
    scale[scale == 0] = 1.0

    stories = []
    test_parts = None
    test_y = None
    for i, t_len in enumerate(lengths):
        sig = signals[i] / scale
        nrng = rng_from(spec.seed, 3, i)
        y = sig + spec.noise_sd * nrng.standard_normal(sig.shape)
        y = zscore_columns(y, tolerate_constant=True)
        if i == len(lengths) - 1:
            test_parts = [g * _lagged_signal(f, w) / scale
                          for g, f, w in zip(spec.space_gains, feats[i],
                                             weights)]
            test_y = y
        stories.append(SimStory(
            story_id=f"story{i:02d}",
            features={f"space{j}": FeatureMatrix(
                feats[i][j], rate_hz=1.0 / spec.tr_seconds,
                label=f"space{j}")
                for j in range(spec.n_spaces)},
            response=ResponseMatrix(y, tr_seconds=spec.tr_seconds,
                                    preprocessed=True),
            role="test" if i == len(lengths) - 1 else "train",
        ))
    ceiling = np.full(spec.n_voxels, analytic_ceiling(spec.noise_sd))
    # oracle on the realized test story: the population-optimal model for
    # space j predicts exactly its own signal part
    per_label_oracle = {
        f"space{j}": pearson_columns(test_y, test_parts[j])
        for j in range(spec.n_spaces)
    }
    gt = {
        "weights": weights,
        "ceiling": ceiling,
        "noise_sd": spec.noise_sd,
        "fir_kernel": list(FIR_KERNEL),
        "space_gains": list(spec.space_gains),
        "per_label_ceiling": _per_space_ceiling(spec),
        "per_label_oracle": per_label_oracle,
    }
    return SimDataset(spec=spec, stories=stories, ground_truth=gt)


def _per_space_ceiling(spec: SimSpec):
    """Best-case test correlation of each single-space model.

    With independent unit-variance space signals mixed with gains g_j and
    noise_sd sigma, a model seeing only space j predicts its own part, so

        rho_j = g_j / sqrt(sum_k g_k^2 + sigma^2)
    """
    g = np.asarray(spec.space_gains, float)
    total = (g * g).sum() + spec.noise_sd ** 2
    return {f"space{j}": float(g[j] / np.sqrt(total))
            for j in range(spec.n_spaces)}


def gen_nested_features(spec: SimSpec, subset_size=None, extra_dim=None):
    """Column-subset and superset constructions with known partitions.

    Emits labels "base" (P columns), "subset" (the first ``subset_size``
    columns of base), and "superset" (base plus ``extra_dim`` independent
    informative columns).  Two response sets are generated:

    - ``nested``: half the voxels are driven only through the subset
      columns (expected dominant partition: intersection when base is
      paired with subset), half only through the complement (expected
      dominant: unique-to-base).
    - ``superset``: every voxel is driven by base and by the extra
      columns, so the superset has unique variance and base has none.

    Ground truth records the expected dominant label per voxel.
    """
    if subset_size is None:
        subset_size = spec.n_features // 2
    if extra_dim is None:
        extra_dim = max(spec.n_features // 2, 2)
    if subset_size >= spec.n_features:
        raise ValueError("subset must be a strict subset")
    rng = rng_from(spec.seed, 11)
    v = spec.n_voxels
    half = v // 2
    w_sub = np.zeros((spec.n_features, v))
    w_sub[:subset_size, :half] = rng.standard_normal(
        (subset_size, half)) / np.sqrt(subset_size)
    comp = spec.n_features - subset_size
    w_comp = np.zeros((spec.n_features, v))
    w_comp[subset_size:, half:] = rng.standard_normal(
        (comp, v - half)) / np.sqrt(comp)
    w_nested = w_sub + w_comp
    w_base_all = rng.standard_normal((spec.n_features, v)) / np.sqrt(
        spec.n_features)
    w_extra = rng.standard_normal((extra_dim, v)) / np.sqrt(extra_dim)

    lengths = [spec.story_len_tr] * (spec.n_stories - 1) + [spec.test_len_tr]
    stories = []
    sig_nested_all, sig_super_all = [], []
    per_story = []
    for i, t_len in enumerate(lengths):
        srng = rng_from(spec.seed, 12, i)
        base = zscore_columns(_ar1(srng, t_len, spec.n_features, spec.ar_phi))
        extra = zscore_columns(_ar1(srng, t_len, extra_dim, spec.ar_phi))
        sig_nested = _lagged_signal(base, w_nested)
        sig_super = (_lagged_signal(base, w_base_all)
                     + _lagged_signal(extra, w_extra))
        per_story.append((base, extra, sig_nested, sig_super))
        if i < len(lengths) - 1:
            sig_nested_all.append(sig_nested)
            sig_super_all.append(sig_super)
    scale_n = np.vstack(sig_nested_all).std(axis=0)
    scale_s = np.vstack(sig_super_all).std(axis=0)
    scale_n[scale_n == 0] = 1.0
    scale_s[scale_s == 0] = 1.0

    for i, (base, extra, sig_nested, sig_super) in enumerate(per_story):
        nrng = rng_from(spec.seed, 13, i)
        noise = spec.noise_sd * nrng.standard_normal(sig_nested.shape)
        rate = 1.0 / spec.tr_seconds
        features = {
            "base": FeatureMatrix(base, rate_hz=rate, label="base"),
            "subset": FeatureMatrix(base[:, :subset_size], rate_hz=rate,
                                    label="subset"),
            "superset": FeatureMatrix(np.hstack([base, extra]), rate_hz=rate,
                                      label="superset"),
        }
        resp = {
            "nested": ResponseMatrix(
                zscore_columns(sig_nested / scale_n + noise,
                               tolerate_constant=True),
                tr_seconds=spec.tr_seconds, preprocessed=True),
            "superset": ResponseMatrix(
                zscore_columns(sig_super / scale_s + noise,
                               tolerate_constant=True),
                tr_seconds=spec.tr_seconds, preprocessed=True),
        }
        stories.append(SimStory(
            story_id=f"story{i:02d}", features=features,
            response=resp["nested"],
            role="test" if i == len(lengths) - 1 else "train",
            alt_responses=resp))

    expected_dominant = np.array([0] * half + [1] * (v - half), dtype=np.int8)
    gt = {
        "subset_columns": list(range(subset_size)),
        "extra_dim": extra_dim,
        "expected_dominant_nested": expected_dominant,
        "noise_sd": spec.noise_sd,
    }
    return SimDataset(spec=spec, stories=stories, ground_truth=gt)


def gen_layer_hierarchy(spec: SimSpec, n_layers=None) -> SimDataset:
    """Per-layer features interpolating acoustic -> semantic latents.

    Layer ``l`` (0-based) mixes the acoustic latent with weight
    ``(L - l) / L`` and the semantic latent with weight ``l / L``, plus
    layer-private jitter, so information content varies with depth.
    Voxels are split into an acoustic-preferring and a semantic-preferring
    population (recorded in ``ground_truth["voxel_level"]`` and as ROI
    masks).
    """
    L = n_layers or spec.n_layers or 13
    if L < 3:
        raise ValueError("need at least 3 layers")
    rng = rng_from(spec.seed, 21)
    q = spec.latent_dim
    p = spec.n_features
    v = spec.n_voxels
    map_a = rng.standard_normal((q, p)) / np.sqrt(q)
    map_s = rng.standard_normal((q, p)) / np.sqrt(q)
    half = v // 2
    voxel_level = np.array([0.0] * half + [1.0] * (v - half))
    w_a = rng.standard_normal((q, v)) / np.sqrt(q)
    w_s = rng.standard_normal((q, v)) / np.sqrt(q)

    lengths = [spec.story_len_tr] * (spec.n_stories - 1) + [spec.test_len_tr]
    stories = []
    signals = []
    latents = []
    for i, t_len in enumerate(lengths):
        srng = rng_from(spec.seed, 22, i)
        a = _ar1(srng, t_len, q, spec.ar_phi)
        s = _ar1(srng, t_len, q, spec.ar_phi)
        sig = (_lagged_signal(a, w_a) * (1.0 - voxel_level)
               + _lagged_signal(s, w_s) * voxel_level)
        latents.append((a, s))
        signals.append(sig)
    scale = np.vstack(signals[:-1]).std(axis=0)
    scale[scale == 0] = 1.0

    for i, t_len in enumerate(lengths):
        a, s = latents[i]
        srng = rng_from(spec.seed, 23, i)
        features = {}
        for l in range(L):
            wa = (L - l) / L
            ws = l / L
            jitter = spec.layer_jitter_sd * srng.standard_normal((t_len, p))
            data = wa * (a @ map_a) + ws * (s @ map_s) + jitter
            features[f"layer{l:02d}"] = FeatureMatrix(
                data, rate_hz=1.0 / spec.tr_seconds, label=f"layer{l:02d}")
        nrng = rng_from(spec.seed, 24, i)
        y = signals[i] / scale + spec.noise_sd * nrng.standard_normal(
            signals[i].shape)
        y = zscore_columns(y, tolerate_constant=True)
        stories.append(SimStory(
            story_id=f"story{i:02d}", features=features,
            response=ResponseMatrix(y, tr_seconds=spec.tr_seconds,
                                    preprocessed=True),
            role="test" if i == len(lengths) - 1 else "train"))
    gt = {
        "voxel_level": voxel_level,
        "n_layers": L,
        "noise_sd": spec.noise_sd,
        "ceiling": np.full(v, analytic_ceiling(spec.noise_sd)),
    }
    roi = {"roi_acoustic": list(range(half)),
           "roi_semantic": list(range(half, v))}
    return SimDataset(spec=spec, stories=stories, ground_truth=gt,
                      roi_masks=roi)


# ---------------------------------------------------------------------------
# Probe streams (100 Hz) with phoneme/word structure


def _random_alignment(rng, duration_s, labels_pool, dur_lo, dur_hi, kind):
    starts, ends, labels = [], [], []
    t = float(rng.uniform(0.0, 0.05))
    while True:
        dur = float(rng.uniform(dur_lo, dur_hi))
        if t + dur > duration_s - 1e-9:
            break
        starts.append(t)
        ends.append(t + dur)
        labels.append(labels_pool[int(rng.integers(len(labels_pool)))])
        t += dur
        if rng.uniform() < 0.1:  # occasional gap
            t += float(rng.uniform(0.01, 0.05))
    return AlignmentTable(np.array(starts), np.array(ends), labels, kind=kind)


def add_probe_streams(dataset: SimDataset, n_layers=None):
    """Attach 100 Hz probe features, targets, and alignments to a dataset.

    Layer streams share the dataset's acoustic->semantic gradient: the
    acoustic latent carries per-phoneme signature vectors, the semantic
    latent carries a linear readout of the active word's embedding.
    Regression targets ("target_acoustic") are a linear function of the
    acoustic latent.  Also builds the word embedding table.
    """
    spec = dataset.spec
    if spec.probe_len_s <= 0:
        raise ValueError("spec.probe_len_s must be positive")
    L = n_layers or spec.n_layers or 4
    rng = rng_from(spec.seed, 31)
    q = spec.latent_dim
    p = spec.n_features
    vocab = [f"w{i:02d}" for i in range(spec.vocab_size)]
    emb = EmbeddingTable(vocab, rng.standard_normal(
        (spec.vocab_size, spec.embedding_dim)))
    emb_to_latent = rng.standard_normal((spec.embedding_dim, q)) / np.sqrt(
        spec.embedding_dim)
    ph_sig = {ph: spec.phoneme_sig_sd * rng.standard_normal(q)
              for ph in _PHONEMES}
    map_a = rng.standard_normal((q, p)) / np.sqrt(q)
    map_s = rng.standard_normal((q, p)) / np.sqrt(q)
    target_map = rng.standard_normal((q, max(4, q))) / np.sqrt(q)

    n = int(round(spec.probe_len_s * spec.probe_rate_hz))
    mids = (np.arange(n) + 0.5) / spec.probe_rate_hz
    for i, story in enumerate(dataset.stories):
        srng = rng_from(spec.seed, 32, i)
        phones = _random_alignment(srng, spec.probe_len_s, _PHONEMES,
                                   0.05, 0.15, "phoneme")
        words = _random_alignment(srng, spec.probe_len_s, vocab,
                                  0.2, 0.4, "word")
        a = 0.3 * _ar1(srng, n, q, 0.95)
        idx = np.searchsorted(phones.start_s, mids, side="right") - 1
        for t, j in enumerate(idx):
            if j >= 0 and mids[t] < phones.end_s[j]:
                a[t] += ph_sig[phones.labels[j]]
        s = 0.3 * _ar1(srng, n, q, 0.95)
        widx = np.searchsorted(words.start_s, mids, side="right") - 1
        for t, j in enumerate(widx):
            if j >= 0 and mids[t] < words.end_s[j]:
                vec = emb.get(words.labels[j])
                s[t] += vec @ emb_to_latent
        story.alignments = {"phonemes": phones, "words": words}
        story.probe_features = {}
        for l in range(L):
            wa = (L - l) / L
            ws = l / L
            jitter = spec.layer_jitter_sd * srng.standard_normal((n, p))
            data = wa * (a @ map_a) + ws * (s @ map_s) + jitter
            story.probe_features[f"probe{l:02d}"] = FeatureMatrix(
                data, rate_hz=spec.probe_rate_hz, label=f"probe{l:02d}")
        story.probe_features["target_acoustic"] = FeatureMatrix(
            a @ target_map, rate_hz=spec.probe_rate_hz,
            label="target_acoustic")
    dataset.embeddings = emb
    dataset.ground_truth["probe_layers"] = [f"probe{l:02d}" for l in range(L)]
    return dataset


# ---------------------------------------------------------------------------
# Writing to disk


def _write_alignment(table: AlignmentTable, path):
    with open(path, "w") as f:
        f.write("start_s,end_s,label\n")
        for s, e, lab in zip(table.start_s, table.end_s, table.labels):
            f.write(f"{s:.6f},{e:.6f},{lab}\n")


def write_dataset(dataset: SimDataset, outdir):
    """Write MTX1 features/responses, alignments, embeddings, manifest.

    The layout matches real ingests, so every downstream command treats
    synthetic and recorded data identically.  Returns the manifest path.
    """
    outdir = Path(outdir)
    (outdir / "stories").mkdir(parents=True, exist_ok=True)
    entries = []
    for story in dataset.stories:
        sdir = outdir / "stories" / story.story_id
        sdir.mkdir(exist_ok=True)
        feature_paths = {}
        for label, fm in {**story.features, **story.probe_features}.items():
            rel = f"stories/{story.story_id}/{label}.mtx"
            write_matrix(fm, outdir / rel)
            feature_paths[label] = rel
        rel_resp = f"stories/{story.story_id}/response.mtx"
        write_matrix(story.response, outdir / rel_resp)
        alignment_paths = {}
        for kind, table in story.alignments.items():
            rel = f"stories/{story.story_id}/{kind}.csv"
            _write_alignment(table, outdir / rel)
            alignment_paths[kind] = rel
        entries.append(StoryEntry(
            story_id=story.story_id,
            duration_s=story.response.data.shape[0] * story.response.tr_seconds,
            feature_paths=feature_paths,
            response_path=rel_resp,
            alignment_paths=alignment_paths,
            role=story.role,
        ))
    manifest = DatasetManifest(stories=entries, roi_masks=dataset.roi_masks,
                               seed=dataset.spec.seed)
    manifest_path = save_manifest(manifest, outdir / "manifest.json")
    if dataset.embeddings is not None:
        save_embedding_table(dataset.embeddings, outdir / "embeddings.tsv")
    def jsonable(val):
        if isinstance(val, np.ndarray):
            return val.tolist()
        if isinstance(val, dict):
            return {k: jsonable(v) for k, v in val.items()}
        if isinstance(val, (list, tuple)):
            return [jsonable(v) for v in val]
        if isinstance(val, (np.floating, np.integer)):
            return val.item()
        return val

    (outdir / "ground_truth.json").write_text(
        json.dumps(jsonable(dataset.ground_truth)))
    return manifest_path
