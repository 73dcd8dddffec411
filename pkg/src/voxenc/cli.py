"""Pipeline commands tying the analysis stages together.

Every command reads a JSON run configuration (``--config``), honors
``--seed`` / ``--threads`` / ``--out`` / ``--manifest`` overrides, writes
its artifacts under ``<out>/<command>/``, and records them in a
``run.json`` provenance file (config hash, seed, package version, output
list).  Errors exit nonzero with a machine-readable JSON object on
stderr: code 2 for missing files or invalid configuration, 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import acoustic, layersel, probing, simulate, varpart
from .dataio import (DatasetManifest, FeatureMatrix, ManifestError,
                     StoryEntry, load_manifest, read_matrix, save_manifest,
                     write_matrix)
from .pipeline import build_xy
from .probing import ProbeResult
from .ridge import CvPlan, fit_ridge_cv, load_fit, predict, save_fit
from .timeseries import (DelayConfig, LanczosConfig, lanczos_resample,
                         preprocess_response, trim_edges)

CONFIG_ERRORS = (ManifestError, FileNotFoundError, KeyError)


class ConfigError(ValueError):
    pass


def _sha256_json(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _load_config(args):
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            raise ConfigError(f"config not found: {cfg_path}")
        cfg = json.loads(cfg_path.read_text())
    else:
        cfg = {}
    if args.out:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.manifest:
        cfg["manifest"] = args.manifest
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    if "out" not in cfg:
        raise ConfigError("an output directory is required (--out)")
    return cfg


def _grid_from(cfg):
    g = cfg.get("grid", {})
    if "values" in g:
        return np.asarray(g["values"], float)
    return np.logspace(np.log10(g.get("min", 1e-2)),
                       np.log10(g.get("max", 1e5)), int(g.get("num", 15)))


def _plan_from(cfg):
    c = cfg.get("cv", {})
    return CvPlan(n_iterations=int(c.get("n_iterations", 50)),
                  n_chunks=int(c.get("n_chunks", 40)),
                  chunk_len_tr=int(c.get("chunk_len_tr", 10)),
                  seed=int(cfg.get("seed", 0)))


def _delays_from(cfg):
    return DelayConfig(tuple(cfg.get("delays", [1, 2, 3, 4])))


def _manifest_from(cfg):
    if "manifest" not in cfg:
        raise ConfigError("config needs a 'manifest' path")
    return load_manifest(cfg["manifest"])


def _encoding_labels(cfg, manifest):
    """Configured labels, or every TR-rate feature of the first story."""
    if cfg.get("labels"):
        return list(cfg["labels"])
    from .dataio import read_sidecar
    story = manifest.stories[0]
    resp_meta = read_sidecar(manifest.resolve(story.response_path))
    tr_rate = 1.0 / float(resp_meta.get("tr_seconds", 2.0))
    labels = []
    for label, rel in sorted(story.feature_paths.items()):
        meta = read_sidecar(manifest.resolve(rel))
        if abs(meta.get("rate_hz", 0.0) - tr_rate) < 1e-9:
            labels.append(label)
    if not labels:
        raise ConfigError("no TR-rate feature labels found; set 'labels'")
    return labels


def _finish(cfg, command, outputs):
    """Write the provenance record; returns the command output dir."""
    cmd_dir = Path(cfg["out"]) / command
    cmd_dir.mkdir(parents=True, exist_ok=True)
    rel = [str(Path(o).relative_to(cmd_dir)) if str(o).startswith(str(cmd_dir))
           else str(o) for o in outputs]
    record = {
        "command": command,
        "config_hash": _sha256_json(cfg),
        "seed": cfg["seed"],
        "threads": cfg["threads"],
        "version": __version__,
        "outputs": sorted(rel),
    }
    (cmd_dir / "run.json").write_text(json.dumps(record, indent=1))
    return cmd_dir


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg):
    sc = dict(cfg.get("simulate", {}))
    kind = sc.pop("kind", "spaces")
    probe_layers = sc.pop("probe_layers", 0)
    fields = {k: v for k, v in sc.items()
              if k in simulate.SimSpec.__dataclass_fields__}
    fields["seed"] = cfg["seed"]
    if "space_gains" in fields and fields["space_gains"] is not None:
        fields["space_gains"] = tuple(fields["space_gains"])
    spec = simulate.SimSpec(**fields)
    if kind == "spaces":
        ds = simulate.gen_dataset(spec)
    elif kind == "hierarchy":
        ds = simulate.gen_layer_hierarchy(spec)
    else:
        raise ConfigError(f"unknown simulate kind {kind!r}")
    if probe_layers:
        simulate.add_probe_streams(ds, n_layers=int(probe_layers))
    out = Path(cfg["out"]) / "simulate"
    manifest_path = simulate.write_dataset(ds, out)
    outputs = sorted(str(p) for p in out.rglob("*") if p.is_file())
    _finish(cfg, "simulate", outputs)
    return {"manifest": str(manifest_path)}


def cmd_features(cfg):
    from scipy.io import wavfile

    fc = cfg.get("features", {})
    manifest = _manifest_from(cfg)
    streams = fc.get("streams", ["fbank"])
    out = Path(cfg["out"]) / "features"
    out.mkdir(parents=True, exist_ok=True)
    audio_map = fc.get("audio", {})
    emb = (acoustic.load_embedding_table(fc["embeddings"])
           if "embeddings" in fc else None)
    art = acoustic.load_articulation_table(fc.get("articulation_table"))
    outputs = []
    new_entries = []
    for story in manifest.stories:
        feature_paths = dict(story.feature_paths)
        audio = None
        if story.story_id in audio_map:
            rate, wav = wavfile.read(audio_map[story.story_id])
            if wav.ndim > 1:
                raise ConfigError(f"{story.story_id}: audio must be mono")
            if wav.dtype.kind == "i":
                wav = wav / float(np.iinfo(wav.dtype).max)
            audio = (wav, rate)
        for stream in streams:
            fm = _compute_stream(stream, story, manifest, audio, art, emb, fc)
            if fm is None:
                continue
            rel = f"{story.story_id}__{stream}.mtx"
            write_matrix(fm, out / rel)
            outputs.append(out / rel)
            feature_paths[stream] = rel
        new_entries.append(StoryEntry(
            story_id=story.story_id, duration_s=story.duration_s,
            feature_paths=feature_paths,
            response_path=str((manifest.resolve(story.response_path)).resolve())
            if story.response_path else "",
            alignment_paths={k: str(manifest.resolve(v).resolve())
                             for k, v in story.alignment_paths.items()},
            role=story.role))
    new_manifest = DatasetManifest(stories=new_entries,
                                   roi_masks=manifest.roi_masks,
                                   seed=manifest.seed)
    mpath = save_manifest(new_manifest, out / "manifest.json")
    outputs.append(mpath)
    _finish(cfg, "features", outputs)
    return {"manifest": str(mpath)}


def _compute_stream(stream, story, manifest, audio, art, emb, fc):
    from .dataio import read_alignment

    if stream == "fbank":
        if audio is None:
            return None
        return acoustic.fbank(audio[0], audio[1],
                              n_mels=int(fc.get("n_mels", 40)))
    if stream == "spectrotemporal":
        if audio is None:
            return None
        bank = acoustic.ModulationBank(
            rates_hz=tuple(fc.get("rates_hz", (1, 2, 4, 8, 16, 32))),
            scales_cyc_per_oct=tuple(fc.get("scales_cyc_per_oct",
                                            (0.25, 0.5, 1, 2, 4, 8))))
        # the modulation bank needs a finer spectral axis than FBANK's
        mel = acoustic.mel_spectrogram(
            audio[0], audio[1], n_mels=int(fc.get("strf_n_mels", 176)))
        return acoustic.spectrotemporal(mel, bank)
    if stream == "articulation":
        rel = story.alignment_paths.get("phonemes")
        if rel is None:
            return None
        table = read_alignment(manifest.resolve(rel), "phoneme")
        return acoustic.articulation_stream(table, art,
                                            duration_s=story.duration_s)
    if stream == "words":
        rel = story.alignment_paths.get("words")
        if rel is None or emb is None:
            return None
        table = read_alignment(manifest.resolve(rel), "word")
        fm, _ = acoustic.word_stream(table, emb, duration_s=story.duration_s)
        return fm
    raise ConfigError(f"unknown feature stream {stream!r}")


def cmd_resample(cfg):
    rc = cfg.get("resample", {})
    manifest = _manifest_from(cfg)
    lanczos = LanczosConfig(target_rate_hz=float(rc.get("target_rate_hz", 0.5)),
                            a=int(rc.get("a", 3)),
                            cutoff_hz=rc.get("cutoff_hz"))
    trim_tr = int(rc.get("trim_tr", 0))
    wanted = rc.get("labels")
    out = Path(cfg["out"]) / "resample"
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    new_entries = []
    for story in manifest.stories:
        feature_paths = {}
        for label, rel in story.feature_paths.items():
            fm = read_matrix(manifest.resolve(rel))
            if (wanted and label not in wanted) or \
                    fm.rate_hz <= lanczos.target_rate_hz:
                feature_paths[label] = str(manifest.resolve(rel).resolve())
                continue
            res = lanczos_resample(fm, lanczos)
            if trim_tr:
                res = trim_edges(res, n_tr=trim_tr)
            new_rel = f"{story.story_id}__{label}.mtx"
            write_matrix(res, out / new_rel)
            outputs.append(out / new_rel)
            feature_paths[label] = new_rel
        new_entries.append(StoryEntry(
            story_id=story.story_id, duration_s=story.duration_s,
            feature_paths=feature_paths,
            response_path=str(manifest.resolve(story.response_path).resolve())
            if story.response_path else "",
            alignment_paths={k: str(manifest.resolve(v).resolve())
                             for k, v in story.alignment_paths.items()},
            role=story.role))
    mpath = save_manifest(DatasetManifest(new_entries, manifest.roi_masks,
                                          manifest.seed),
                          out / "manifest.json")
    outputs.append(mpath)
    _finish(cfg, "resample", outputs)
    return {"manifest": str(mpath)}


def cmd_preprocess(cfg):
    pc = cfg.get("preprocess", {})
    manifest = _manifest_from(cfg)
    out = Path(cfg["out"]) / "preprocess"
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    new_entries = []
    for story in manifest.stories:
        resp = read_matrix(manifest.resolve(story.response_path))
        clean = preprocess_response(resp,
                                    window_s=float(pc.get("window_s", 120.0)),
                                    order=int(pc.get("order", 2)),
                                    n_tr=int(pc.get("trim_tr", 10)))
        rel = f"{story.story_id}__response.mtx"
        write_matrix(clean, out / rel)
        outputs.append(out / rel)
        new_entries.append(StoryEntry(
            story_id=story.story_id, duration_s=story.duration_s,
            feature_paths={k: str(manifest.resolve(v).resolve())
                           for k, v in story.feature_paths.items()},
            response_path=rel,
            alignment_paths={k: str(manifest.resolve(v).resolve())
                             for k, v in story.alignment_paths.items()},
            role=story.role))
    mpath = save_manifest(DatasetManifest(new_entries, manifest.roi_masks,
                                          manifest.seed),
                          out / "manifest.json")
    outputs.append(mpath)
    _finish(cfg, "preprocess", outputs)
    return {"manifest": str(mpath)}


def cmd_fit(cfg, strict=False):
    manifest = _manifest_from(cfg)
    labels = _encoding_labels(cfg, manifest)
    grid = _grid_from(cfg)
    plan = _plan_from(cfg)
    delays = _delays_from(cfg)
    if len(manifest.by_role("test")) != 1:
        raise ConfigError("encoding runs need exactly one test story")
    out = Path(cfg["out"]) / "fit"
    outputs = []
    for label in labels:
        x, y, _ = build_xy(manifest, label, "train", delays=delays,
                           strict=strict)
        fit = fit_ridge_cv(x, y, grid=grid, plan=plan,
                           n_threads=int(cfg["threads"]))
        fdir = save_fit(fit, out / label)
        outputs.extend(p for p in fdir.iterdir())
    _finish(cfg, "fit", outputs)
    return {"labels": labels}


def cmd_eval(cfg):
    manifest = _manifest_from(cfg)
    labels = _encoding_labels(cfg, manifest)
    delays = _delays_from(cfg)
    out = Path(cfg["out"]) / "eval"
    outputs = []
    for label in labels:
        fit_dir = Path(cfg["out"]) / "fit" / label
        if not fit_dir.exists():
            raise ConfigError(f"no fit found for label {label!r}; run fit")
        fit = load_fit(fit_dir)
        x, y, _ = build_xy(manifest, label, "test", delays=delays)
        scores = varpart.evaluate(y, predict(fit, x), label=label)
        ldir = out / label
        ldir.mkdir(parents=True, exist_ok=True)
        rho = scores.rho.reshape(-1, 1)
        write_matrix(FeatureMatrix(np.nan_to_num(rho), rate_hz=1.0,
                                   label=f"scores/{label}"),
                     ldir / "scores.mtx")
        doc = {
            "label": label,
            "n_test_tr": scores.n_test_tr,
            "mean_rho": float(np.nanmean(scores.rho)),
            "n_flagged": int(scores.flagged.sum()),
            "flagged_voxels": [int(i) for i in np.where(scores.flagged)[0]],
            "n_no_signal": int((fit.best_cv <= 0).sum()),
            "roi_means": {
                name: float(np.nanmean(scores.rho[idx]))
                for name, idx in manifest.roi_masks.items()
            },
        }
        (ldir / "scores.json").write_text(json.dumps(doc, indent=1))
        outputs.extend([ldir / "scores.mtx", ldir / "scores.mtx.meta.json",
                        ldir / "scores.json"])
    _finish(cfg, "eval", outputs)
    return {"labels": labels}


def cmd_varpart(cfg):
    manifest = _manifest_from(cfg)
    vc = cfg.get("varpart", {})
    pairs = vc.get("pairs")
    if not pairs:
        raise ConfigError("varpart config needs 'pairs'")
    delays = _delays_from(cfg)
    plan = _plan_from(cfg)
    grid = _grid_from(cfg)
    threshold = float(vc.get("threshold", 0.15))
    out = Path(cfg["out"]) / "varpart"
    outputs = []
    for l1, l2 in pairs:
        x_tr, y_tr, sl = build_xy(manifest, [l1, l2], "train", delays=delays)
        x_te, y_te, _ = build_xy(manifest, [l1, l2], "test", delays=delays)
        (a0, a1), (b0, b1) = sl
        result = varpart.run_varpart(
            x_tr[:, a0:a1], x_tr[:, b0:b1], y_tr,
            x_te[:, a0:a1], x_te[:, b0:b1], y_te,
            grid=grid, plan=plan,
            banded_grid_size=int(vc.get("grid_size", 10)),
            threshold=threshold, n_threads=int(cfg["threads"]))
        pdir = out / f"{l1}__vs__{l2}"
        pdir.mkdir(parents=True, exist_ok=True)
        vecs = np.column_stack([
            np.nan_to_num(result.rho1), np.nan_to_num(result.rho2),
            np.nan_to_num(result.rho_joint), np.nan_to_num(result.inter),
            np.nan_to_num(result.unique1), np.nan_to_num(result.unique2),
            result.dominant.astype(float), result.mask.astype(float)])
        write_matrix(FeatureMatrix(vecs, rate_hz=1.0,
                                   label=f"varpart/{l1}__vs__{l2}"),
                     pdir / "partition.mtx")
        doc = {"pair": [l1, l2], **varpart.partition_summary(result)}
        (pdir / "partition.json").write_text(json.dumps(doc, indent=1))
        outputs.extend([pdir / "partition.mtx",
                        pdir / "partition.mtx.meta.json",
                        pdir / "partition.json"])
    _finish(cfg, "varpart", outputs)
    return {"pairs": pairs}


def cmd_layerpca(cfg):
    manifest = _manifest_from(cfg)
    lc = cfg.get("layerpca", {})
    labels = lc.get("labels") or _encoding_labels(cfg, manifest)
    threshold = float(lc.get("threshold", 0.15))
    score_vecs = []
    for label in labels:
        sdir = Path(cfg["out"]) / "eval" / label
        if not sdir.exists():
            raise ConfigError(f"no eval scores for {label!r}; run eval")
        score_vecs.append(read_matrix(sdir / "scores.mtx").data[:, 0])
    perf = layersel.build_perf_matrix(score_vecs, threshold=threshold)
    centered = layersel.double_center(perf.c)
    k = min(int(lc.get("k", 10)), min(centered.shape))
    pca = layersel.pca_svd(centered, k)
    out = Path(cfg["out"]) / "layerpca"
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(FeatureMatrix(pca.scores, rate_hz=1.0, label="pc_scores"),
                 out / "scores.mtx")
    write_matrix(FeatureMatrix(pca.loadings, rate_hz=1.0, label="pc_loadings"),
                 out / "loadings.mtx")
    write_matrix(FeatureMatrix(
        perf.voxel_index_map.reshape(-1, 1).astype(float), rate_hz=1.0,
        label="voxel_index_map"), out / "voxels.mtx")
    correlations = {}
    for other in lc.get("correlate_with", []):
        sdir = Path(cfg["out"]) / "eval" / other
        if not sdir.exists():
            raise ConfigError(f"no eval scores for {other!r}; run eval")
        rho = read_matrix(sdir / "scores.mtx").data[:, 0]
        roi = manifest.roi_masks.get(lc.get("roi")) if lc.get("roi") else None
        correlations[other] = layersel.correlate_maps(
            pca.scores[:, 0], perf.voxel_index_map,
            varpart.VoxelScores(rho, label=other), restrict=roi)
    doc = {
        "labels": labels,
        "threshold": threshold,
        "n_retained": int(perf.c.shape[0]),
        "varexp": [float(v) for v in pca.varexp],
        "pc1_loadings": [float(v) for v in pca.loadings[:, 0]],
        "correlations": correlations,
    }
    (out / "pca.json").write_text(json.dumps(doc, indent=1))
    outputs = [out / n for n in ("scores.mtx", "scores.mtx.meta.json",
                                 "loadings.mtx", "loadings.mtx.meta.json",
                                 "voxels.mtx", "voxels.mtx.meta.json",
                                 "pca.json")]
    _finish(cfg, "layerpca", outputs)
    return doc


def cmd_probe(cfg):
    manifest = _manifest_from(cfg)
    pc = cfg.get("probe", {})
    layers = pc.get("layers") or sorted(
        label for label in manifest.stories[0].feature_paths
        if label.startswith("probe"))
    if not layers:
        raise ConfigError("probe config needs 'layers'")
    tasks = pc.get("tasks")
    if not tasks:
        raise ConfigError("probe config needs 'tasks'")
    seeds = [int(s) for s in pc.get("seeds", [0, 1, 2])]
    result = ProbeResult()
    for seed in seeds:
        split = probing.split_stories(manifest.story_ids(),
                                      seed=cfg["seed"] + seed)
        for task in tasks:
            _run_probe_task(manifest, task, layers, split, seed, result, pc)
    out = Path(cfg["out"]) / "probe"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["layer", "task", "seed",
                                               "metric", "value", "baseline"])
        writer.writeheader()
        for row in sorted(result.rows, key=lambda r: (r["task"], r["layer"],
                                                      r["seed"], r["metric"])):
            writer.writerow(row)
    curves = {}
    for task in tasks:
        name = task["name"]
        metric = _task_metric(task)
        vals = result.values(name, layers, metric=metric)
        norm, flat = probing.normalize_curves(vals, metric=metric)
        curves[name] = {"layers": layers, "metric": metric,
                        "raw": [float(v) for v in vals],
                        "normalized": [float(v) for v in norm],
                        "constant": bool(flat)}
    (out / "curves.json").write_text(json.dumps(curves, indent=1))
    _finish(cfg, "probe", [out / "results.csv", out / "curves.json"])
    return curves


def _task_metric(task):
    return {"regression": "mean-corr", "classification":
            ("perplexity" if task.get("target", task["name"]) == "word"
             else "accuracy"),
            "bottleneck": "mean-corr"}[task["kind"]]


def _split_frames(manifest, split, label, subsample):
    parts = {}
    for part, ids in split.items():
        rows = []
        for story in manifest.stories:
            if story.story_id not in ids:
                continue
            fm = read_matrix(manifest.resolve(story.feature_paths[label]))
            rows.append(fm.data[::subsample])
        parts[part] = np.vstack(rows)
    return parts


def _split_pooled(manifest, split, label, alignment_key):
    from .dataio import read_alignment

    feats, labs = {}, {}
    for part, ids in split.items():
        xs, ys = [], []
        for story in manifest.stories:
            if story.story_id not in ids:
                continue
            fm = read_matrix(manifest.resolve(story.feature_paths[label]))
            table = read_alignment(
                manifest.resolve(story.alignment_paths[alignment_key]),
                "phoneme" if alignment_key.startswith("phon") else "word")
            pooled, _ = probing.pool_spans(fm, table)
            xs.append(pooled)
            ys.extend(table.labels)
        feats[part] = np.vstack(xs)
        labs[part] = ys
    return feats, labs


def _run_probe_task(manifest, task, layers, split, seed, result, pc):
    name, kind = task["name"], task["kind"]
    subsample = int(task.get("subsample", pc.get("subsample", 5)))
    if kind == "regression":
        target = _split_frames(manifest, split, task["target"], subsample)
        for layer in layers:
            x = _split_frames(manifest, split, layer, subsample)
            res = probing.regression_probe(
                x["train"], target["train"], x["val"], target["val"],
                x["test"], target["test"])
            result.add(layer, name, seed, "mean-corr", res["metric"])
        return
    alignment_key = task.get("alignment", "phonemes")
    if kind == "classification":
        metric = _task_metric(task)
        for layer in layers:
            x, labs = _split_pooled(manifest, split, layer, alignment_key)
            res = probing.classifier_probe(
                x["train"], labs["train"], x["val"], labs["val"],
                x["test"], labs["test"])
            base = probing.most_frequent_baseline(labs["train"], labs["test"],
                                                  classes=res["classes"])
            result.add(layer, name, seed, "accuracy", res["accuracy"],
                       baseline=base["accuracy"])
            result.add(layer, name, seed, "perplexity", res["perplexity"],
                       baseline=base["perplexity"])
        return
    if kind == "bottleneck":
        emb_path = task.get("embeddings")
        if emb_path is None:
            raise ConfigError(f"task {name!r} needs an 'embeddings' path")
        emb = acoustic.load_embedding_table(emb_path)
        for layer in layers:
            x, labs = _split_pooled(manifest, split, layer, alignment_key)
            xs, ys = {}, {}
            for part in x:
                vecs = [emb.get(w) for w in labs[part]]
                keep = [i for i, v in enumerate(vecs) if v is not None]
                xs[part] = x[part][keep]
                ys[part] = np.array([vecs[i] for i in keep])
            res = probing.bottleneck_probe(
                xs["train"], ys["train"], xs["val"], ys["val"],
                xs["test"], ys["test"], seed=seed)
            result.add(layer, name, seed, "mean-corr", res["metric"])
        return
    raise ConfigError(f"unknown probe kind {kind!r}")


def cmd_report(cfg):
    manifest = _manifest_from(cfg)
    out_root = Path(cfg["out"])
    report = {"seed": cfg["seed"], "version": __version__,
              "labels": {}, "varpart": {}, "layerpca": None, "probe": None,
              "notes": {"sem": "omitted: single synthetic subject",
                        "zscore": "per story, population variance"}}
    eval_dir = out_root / "eval"
    if eval_dir.exists():
        for ldir in sorted(eval_dir.iterdir()):
            if (ldir / "scores.json").exists():
                report["labels"][ldir.name] = json.loads(
                    (ldir / "scores.json").read_text())
    vp_dir = out_root / "varpart"
    if vp_dir.exists():
        for pdir in sorted(vp_dir.iterdir()):
            if (pdir / "partition.json").exists():
                report["varpart"][pdir.name] = json.loads(
                    (pdir / "partition.json").read_text())
    if (out_root / "layerpca" / "pca.json").exists():
        report["layerpca"] = json.loads(
            (out_root / "layerpca" / "pca.json").read_text())
    if (out_root / "probe" / "curves.json").exists():
        report["probe"] = json.loads(
            (out_root / "probe" / "curves.json").read_text())
    out = out_root / "report"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1,
                                                sort_keys=True))
    with open(out / "report.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label", "roi", "mean_rho"])
        for label, doc in sorted(report["labels"].items()):
            writer.writerow([label, "all", f"{doc['mean_rho']:.6f}"])
            for roi, val in sorted(doc.get("roi_means", {}).items()):
                writer.writerow([label, roi, f"{val:.6f}"])
    _finish(cfg, "report", [out / "report.json", out / "report.csv"])
    return report


COMMANDS = {
    "simulate": cmd_simulate,
    "features": cmd_features,
    "resample": cmd_resample,
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "varpart": cmd_varpart,
    "layerpca": cmd_layerpca,
    "probe": cmd_probe,
    "report": cmd_report,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="voxenc",
        description="Voxel-wise encoding model pipeline")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--manifest", help="dataset manifest path")
    parser.add_argument("--strict", action="store_true",
                        help="refuse feature inputs not marked causal")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "fit":
            COMMANDS["fit"](cfg, strict=args.strict)
        else:
            COMMANDS[args.command](cfg)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        _emit_error(exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _emit_error(exc)
        return 1
    return 0


def _emit_error(exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(doc), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
