"""Dataset assembly: from per-story matrices to fit-ready designs.

Stimulus features are z-scored per story, delay-expanded per story (so
lags never bleed across story boundaries), and concatenated in manifest
order.  Responses are assumed preprocessed per story.  When several
feature labels are combined, each label keeps a contiguous column band
in the delayed design so banded solvers can address it.
"""

from __future__ import annotations

import numpy as np

from .dataio import DatasetManifest, read_matrix, read_sidecar
from .timeseries import DelayConfig, fir_delays, zscore_columns


def assemble_design(per_story_features, delays: DelayConfig = None,
                    zscore=True):
    """Z-score, delay-expand, and stack per-story feature arrays."""
    delays = delays or DelayConfig()
    blocks = []
    for arr in per_story_features:
        arr = np.asarray(arr, float)
        if zscore:
            arr = zscore_columns(arr, tolerate_constant=True)
        blocks.append(fir_delays(arr, delays))
    return np.vstack(blocks)


def assemble_responses(per_story_responses):
    return np.vstack([np.asarray(a, float) for a in per_story_responses])


def load_label(manifest: DatasetManifest, story, label):
    """Read one labeled feature stream for one story."""
    try:
        rel = story.feature_paths[label]
    except KeyError:
        raise KeyError(
            f"story {story.story_id!r} has no feature label {label!r}; "
            f"available: {sorted(story.feature_paths)}") from None
    return read_matrix(manifest.resolve(rel))


def build_xy(manifest: DatasetManifest, labels, role, delays=None,
             zscore=True, strict=False):
    """Design matrix and response matrix for one role's stories.

    ``labels`` may be a single label or a list; each label is delayed
    separately and occupies a contiguous column band of the returned
    design, recorded in ``band_slices``.

    Returns ``(X, Y, band_slices)``.
    """
    if isinstance(labels, str):
        labels = [labels]
    delays = delays or DelayConfig()
    stories = manifest.by_role(role)
    if not stories:
        raise ValueError(f"manifest has no {role!r} stories")
    per_label = [[] for _ in labels]  # positional: labels may repeat
    responses = []
    for story in stories:
        resp = read_matrix(manifest.resolve(story.response_path))
        for j, label in enumerate(labels):
            fm = load_label(manifest, story, label)
            if strict:
                meta = read_sidecar(manifest.resolve(
                    story.feature_paths[label]))
                if not (meta.get("validated") or meta.get("causal")):
                    raise ValueError(
                        f"strict mode: feature {label!r} of story "
                        f"{story.story_id!r} has not passed contract "
                        "validation")
            if fm.data.shape[0] != resp.data.shape[0]:
                raise ValueError(
                    f"story {story.story_id!r}: feature {label!r} has "
                    f"{fm.data.shape[0]} rows but response has "
                    f"{resp.data.shape[0]}; run the preparation stages")
            per_label[j].append(fm.data)
        responses.append(resp.data)
    designs = [assemble_design(blocks, delays, zscore=zscore)
               for blocks in per_label]
    y = assemble_responses(responses)
    slices = []
    start = 0
    for d in designs:
        slices.append((start, start + d.shape[1]))
        start += d.shape[1]
    return np.hstack(designs), y, slices
