"""On-disk exchange formats: MTX1 matrices, dataset manifests, alignments.

The binary container ("MTX1") is deliberately minimal so that readers are
trivial in any language:

    offset  size  field
    0       4     magic, ASCII "MTX1"
    4       1     version (1)
    5       1     dtype code (1 = float32, 2 = float64)
    6       1     ndim (2)
    7       1     reserved (0)
    8       8     rows, unsigned little-endian
    16      8     cols, unsigned little-endian
    24      ...   payload, row-major, little-endian

Metadata (sampling rate, label, flags) lives in a JSON sidecar at
``<path>.meta.json`` so the payload stays mmap-friendly.
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MTX1"
VERSION = 1
HEADER = struct.Struct("<4sBBBBQQ")
HEADER_SIZE = HEADER.size  # 24 bytes
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR_KIND = {"f4": 1, "f8": 2}


class MatrixFormatError(ValueError):
    """Malformed or inconsistent MTX1 file."""


class ManifestError(ValueError):
    """Invalid dataset manifest."""


class AlignmentError(ValueError):
    """Invalid alignment table."""


@dataclass
class FeatureMatrix:
    """Time x feature-dim matrix with a sampling rate and provenance label.

    ``causal`` marks streams produced by the end-of-window extraction rule
    (each row only depends on audio up to its own timestamp).
    """

    data: np.ndarray
    rate_hz: float
    label: str = ""
    causal: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError("feature data must be 2-D (time x dim)")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        t, p = self.data.shape
        if t < 2 or p < 1:
            raise ValueError(f"degenerate feature shape {self.data.shape}")

    @property
    def duration_s(self):
        return self.data.shape[0] / self.rate_hz


@dataclass
class ResponseMatrix:
    """Time-at-TR x voxel matrix of BOLD responses.

    When ``preprocessed`` is True each column must be zero-mean and
    unit-variance (population variance), which is validated on
    construction.
    """

    data: np.ndarray
    tr_seconds: float = 2.0
    preprocessed: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError("response data must be 2-D (TR x voxel)")
        if self.tr_seconds <= 0:
            raise ValueError("tr_seconds must be positive")
        if self.preprocessed:
            mu = np.abs(self.data.mean(axis=0)).max()
            var = self.data.var(axis=0)
            if mu > 1e-6 or np.abs(var - 1.0).max() > 1e-4:
                raise ValueError(
                    "preprocessed responses must be zero-mean, unit-variance "
                    f"(max |mean| = {mu:.3g}, worst var deviation = "
                    f"{np.abs(var - 1.0).max():.3g})")

    @property
    def n_voxels(self):
        return self.data.shape[1]


@dataclass
class AlignmentTable:
    """Sorted, non-overlapping labeled intervals (phonemes or words)."""

    start_s: np.ndarray
    end_s: np.ndarray
    labels: list
    kind: str  # "phoneme" | "word"
    n_reordered: int = 0

    def __post_init__(self):
        self.start_s = np.asarray(self.start_s, dtype=float)
        self.end_s = np.asarray(self.end_s, dtype=float)
        if self.kind not in ("phoneme", "word"):
            raise AlignmentError(f"unknown alignment kind {self.kind!r}")
        if not (len(self.start_s) == len(self.end_s) == len(self.labels)):
            raise AlignmentError("alignment columns disagree in length")

    def __len__(self):
        return len(self.labels)


@dataclass
class StoryEntry:
    story_id: str
    duration_s: float
    feature_paths: dict
    response_path: str
    alignment_paths: dict = field(default_factory=dict)
    role: str = "train"


@dataclass
class DatasetManifest:
    stories: list
    roi_masks: dict = field(default_factory=dict)
    seed: int = 0
    path: Path | None = None

    def by_role(self, role):
        return [s for s in self.stories if s.role == role]

    def story_ids(self):
        return [s.story_id for s in self.stories]

    def resolve(self, rel):
        """Resolve a manifest-relative path."""
        p = Path(rel)
        if p.is_absolute() or self.path is None:
            return p
        return self.path.parent / p


# ---------------------------------------------------------------------------
# MTX1 read / write


def write_matrix(m, path):
    """Write a FeatureMatrix or ResponseMatrix as an MTX1 file + sidecar.

    float32 payloads are kept as float32; everything else is stored as
    float64.  Raises on non-finite values (store a mask declaration in the
    sidecar by hand if NaNs are intentional).
    """
    path = Path(path)
    data = np.asarray(m.data)
    if not np.isfinite(data).all():
        raise ValueError("refusing to write non-finite values")
    if data.dtype == np.float32:
        code, dt = _CODE_FOR_KIND["f4"], _DTYPE_CODES[1]
    else:
        code, dt = _CODE_FOR_KIND["f8"], _DTYPE_CODES[2]
    rows, cols = data.shape
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, code, 2, 0, rows, cols))
        f.write(np.ascontiguousarray(data, dtype=dt).tobytes())
    meta = {"dtype": "f4" if code == 1 else "f8", "rows": rows, "cols": cols}
    if isinstance(m, FeatureMatrix):
        meta.update(kind="feature", rate_hz=m.rate_hz, label=m.label,
                    causal=bool(m.causal))
    elif isinstance(m, ResponseMatrix):
        meta.update(kind="response", tr_seconds=m.tr_seconds,
                    preprocessed=bool(m.preprocessed))
    else:
        raise TypeError(f"cannot serialize {type(m).__name__}")
    sidecar_path(path).write_text(json.dumps(meta, indent=1))


def sidecar_path(path):
    return Path(str(path) + ".meta.json")


def read_sidecar(path):
    sp = sidecar_path(path)
    if not sp.exists():
        raise MatrixFormatError(f"missing sidecar {sp}")
    return json.loads(sp.read_text())


def read_header(path):
    """Parse and validate the 24-byte header; returns (dtype, rows, cols)."""
    path = Path(path)
    size = path.stat().st_size
    if size < HEADER_SIZE:
        raise MatrixFormatError(f"{path}: file shorter than header")
    with open(path, "rb") as f:
        magic, version, code, ndim, reserved, rows, cols = HEADER.unpack(
            f.read(HEADER_SIZE))
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPE_CODES:
        raise MatrixFormatError(f"{path}: unsupported dtype code {code}")
    if ndim != 2:
        raise MatrixFormatError(f"{path}: ndim must be 2, got {ndim}")
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"{path}: degenerate shape {rows}x{cols}")
    dt = _DTYPE_CODES[code]
    expected = HEADER_SIZE + rows * cols * dt.itemsize
    if size != expected:
        raise MatrixFormatError(
            f"{path}: payload length mismatch (file {size} bytes, header "
            f"implies {expected})")
    return dt, int(rows), int(cols)


def read_matrix(path):
    """Read an MTX1 file back into its FeatureMatrix/ResponseMatrix form."""
    path = Path(path)
    dt, rows, cols = read_header(path)
    with open(path, "rb") as f:
        f.seek(HEADER_SIZE)
        data = np.fromfile(f, dtype=dt, count=rows * cols)
    data = data.reshape(rows, cols)
    meta = read_sidecar(path)
    if not meta.get("mask") and not np.isfinite(data).all():
        raise MatrixFormatError(
            f"{path}: non-finite values without a mask declaration")
    kind = meta.get("kind")
    if kind == "feature":
        return FeatureMatrix(data, rate_hz=meta["rate_hz"],
                             label=meta.get("label", ""),
                             causal=bool(meta.get("causal", False)))
    if kind == "response":
        return ResponseMatrix(data, tr_seconds=meta.get("tr_seconds", 2.0),
                              preprocessed=bool(meta.get("preprocessed",
                                                         False)))
    raise MatrixFormatError(f"{path}: sidecar kind {kind!r} not recognized")


# ---------------------------------------------------------------------------
# Alignment CSV


def read_alignment(path, kind, strict=False):
    """Parse a `start_s,end_s,label` CSV into a validated AlignmentTable.

    Rows arriving out of order are sorted (counted in ``n_reordered`` and
    warned about), or rejected outright under ``strict`` (used by manifest
    validation, which names the first offending row).  Overlapping
    intervals are always an error.
    """
    path = Path(path)
    starts, ends, labels = [], [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
                "start_s", "end_s", "label"]:
            raise AlignmentError(
                f"{path}: expected header 'start_s,end_s,label', got {header}")
        for i, row in enumerate(reader):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise AlignmentError(f"{path}: row {i + 2} has {len(row)} fields")
            s, e, lab = float(row[0]), float(row[1]), row[2].strip()
            if s < 0 or e < 0:
                raise AlignmentError(f"{path}: negative time at row {i + 2}")
            if e <= s:
                raise AlignmentError(
                    f"{path}: end <= start at row {i + 2} ({s} >= {e})")
            if not lab:
                raise AlignmentError(f"{path}: empty label at row {i + 2}")
            starts.append(s)
            ends.append(e)
            labels.append(lab)
    starts = np.asarray(starts, float)
    ends = np.asarray(ends, float)
    n_reordered = 0
    if len(starts) and np.any(np.diff(starts) < 0):
        if strict:
            first = int(np.where(np.diff(starts) < 0)[0][0]) + 1
            raise AlignmentError(
                f"{path}: rows out of order, first offending row "
                f"{first + 2} (start {starts[first]} after "
                f"{starts[first - 1]})")
        order = np.argsort(starts, kind="stable")
        n_reordered = int(np.sum(order != np.arange(len(order))))
        warnings.warn(f"{path}: {n_reordered} rows out of order, sorted")
        starts = starts[order]
        ends = ends[order]
        labels = [labels[j] for j in order]
    for j in range(1, len(starts)):
        if starts[j] < ends[j - 1] - 1e-9:
            raise AlignmentError(
                f"{path}: interval {j} ([{starts[j]}, {ends[j]}] "
                f"{labels[j]!r}) overlaps the previous one")
    return AlignmentTable(starts, ends, labels, kind=kind,
                          n_reordered=n_reordered)


# ---------------------------------------------------------------------------
# Manifest


def load_manifest(path, check_files=True):
    """Load and validate a dataset manifest JSON.

    Validation covers: unique story ids, known roles, at most one test
    story, referenced files present (reported with story context), ROI
    mask indices within the voxel count, and parsable alignment tables.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    raw = json.loads(path.read_text())
    stories = []
    seen = set()
    for entry in raw.get("stories", []):
        sid = entry.get("story_id")
        if sid in seen:
            raise ManifestError(f"duplicate story_id {sid!r}")
        seen.add(sid)
        role = entry.get("role", "train")
        if role not in ("train", "val", "test"):
            raise ManifestError(f"story {sid!r}: unknown role {role!r}")
        stories.append(StoryEntry(
            story_id=sid,
            duration_s=float(entry.get("duration_s", 0.0)),
            feature_paths=dict(entry.get("feature_paths", {})),
            response_path=entry.get("response_path", ""),
            alignment_paths=dict(entry.get("alignment_paths", {})),
            role=role,
        ))
    if not stories:
        raise ManifestError(f"{path}: no stories")
    if len([s for s in stories if s.role == "test"]) > 1:
        raise ManifestError("at most one test story is permitted")
    manifest = DatasetManifest(
        stories=stories,
        roi_masks={k: list(map(int, v))
                   for k, v in raw.get("roi_masks", {}).items()},
        seed=int(raw.get("seed", 0)),
        path=path,
    )
    if check_files:
        _check_manifest_files(manifest)
    return manifest


def _check_manifest_files(manifest):
    n_voxels = None
    for s in manifest.stories:
        for label, rel in s.feature_paths.items():
            p = manifest.resolve(rel)
            if not p.exists():
                raise ManifestError(
                    f"story {s.story_id!r}: feature {label!r} path missing "
                    f"({p})")
        if s.response_path:
            p = manifest.resolve(s.response_path)
            if not p.exists():
                raise ManifestError(
                    f"story {s.story_id!r}: response path missing ({p})")
            _, _, cols = read_header(p)
            if n_voxels is None:
                n_voxels = cols
            elif cols != n_voxels:
                raise ManifestError(
                    f"story {s.story_id!r}: voxel count {cols} differs from "
                    f"{n_voxels}")
        for kind, rel in s.alignment_paths.items():
            p = manifest.resolve(rel)
            if not p.exists():
                raise ManifestError(
                    f"story {s.story_id!r}: alignment {kind!r} path missing "
                    f"({p})")
            read_alignment(p, "phoneme" if kind.startswith("phon") else "word",
                           strict=True)
    if n_voxels is not None:
        for name, idx in manifest.roi_masks.items():
            bad = [i for i in idx if i < 0 or i >= n_voxels]
            if bad:
                raise ManifestError(
                    f"ROI {name!r}: voxel indices out of range: {bad[:5]}")


def save_manifest(manifest, path):
    """Serialize a DatasetManifest back to JSON."""
    path = Path(path)
    doc = {
        "stories": [
            {
                "story_id": s.story_id,
                "duration_s": s.duration_s,
                "feature_paths": s.feature_paths,
                "response_path": s.response_path,
                "alignment_paths": s.alignment_paths,
                "role": s.role,
            }
            for s in manifest.stories
        ],
        "roi_masks": manifest.roi_masks,
        "seed": manifest.seed,
    }
    path.write_text(json.dumps(doc, indent=1))
    manifest.path = path
    return path
