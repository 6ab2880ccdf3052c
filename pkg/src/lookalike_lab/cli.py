"""Command-line pipeline: synth -> ingest -> train -> match -> analyze -> report.

Artifacts live under one output directory with fixed names, so each stage
finds its prerequisites by convention:

    manifest.csv images.csv embeddings.emb        (synth / ingest inputs)
    pairs_train.csv pairs_test.csv head.hed
    history.csv val_scores.csv train_meta.csv      (train)
    match_<score>_<filter>/{histogram,summary,retained,subject_max,meta}.csv
    analysis/*.csv  report/*.svg

Every CSV starts with a provenance comment block (tool version, config
hash, seed, procedure parameters); reruns with the same configuration and
seed are byte-identical.  Exit codes: 0 success, 1 data error (one
machine-readable ERROR line on stderr), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, datamodel, head, match_engine, pairing, scoring, synth
from .errors import LookalikeLabError, NoTwinPairs, ParseError
from .svgplot import SvgPlot

ENV_SEED = "LOOKALIKE_LAB_SEED"


@dataclass(frozen=True)
class RunConfig:
    """Typed view of the plain-text key = value configuration."""

    out_dir: str = "out"
    seed: int = 0
    synth_n_twin_pairs: int = 100
    synth_n_singles: int = 20
    synth_images_per_subject: int = 4
    synth_dim: int = 16
    synth_sigma_image: float = 0.05
    synth_delta_twin: float = 0.3
    synth_spread: float = 3.0
    data_manifest: str = ""
    data_images_map: str = ""
    data_embeddings: str = ""
    train_learning_rate: float = 1e-5
    train_margin: float = 0.5
    train_epochs: int = 4
    train_steps_per_epoch: int = 0          # 0 = one step per training pair
    train_optimizer: str = "sgd"
    train_momentum_beta: float = 0.9
    train_d_out: int = 16
    train_activation: str = "identity"
    train_hidden_dim: int = 0               # 0 = same as d_out
    train_init_noise: float = 1e-3
    train_split_fraction: float = 0.8
    train_lookalike_k: int = 1
    train_hardest_fraction: float = 1.0
    match_metric: str = scoring.COSINE_MAPPED
    match_block_size: int = 512
    match_workers: int = 1
    match_bins: int = 512
    analyze_fmr_target: float = 1e-3
    analyze_normalization: str = analysis.MINMAX
    analyze_sweep_points: int = 41

    def config_hash(self) -> str:
        """Hash of the semantic configuration; the output location is
        excluded so relocated reruns stay byte-identical."""
        items = []
        for f in fields(self):
            if f.name == "out_dir":
                continue
            items.append(f"{f.name}={getattr(self, f.name)}")
        return hashlib.sha256("\n".join(sorted(items)).encode()).hexdigest()[:16]


_KEY_MAP = {f.name.replace("_", ".", 1) if f.name.startswith(("synth_", "data_", "train_", "match_", "analyze_"))
            else f.name: f.name
            for f in fields(RunConfig)}


def load_config(path) -> RunConfig:
    """Parse the documented `key = value` grammar; unknown keys are usage
    errors, not warnings."""
    values: dict[str, object] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(path, lineno, f"expected key = value, got {line!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in _KEY_MAP:
                raise ParseError(path, lineno, f"unknown configuration key {key!r}")
            field_name = _KEY_MAP[key]
            ftype = RunConfig.__dataclass_fields__[field_name].type
            try:
                if ftype == "int":
                    values[field_name] = int(value)
                elif ftype == "float":
                    values[field_name] = float(value)
                else:
                    values[field_name] = value
            except ValueError:
                raise ParseError(path, lineno, f"bad value {value!r} for {key}") from None
    return RunConfig(**values)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "out_dir", None):
        cfg = replace(cfg, out_dir=args.out_dir)
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        cfg = replace(cfg, seed=int(env_seed))
    return cfg


def _provenance(cfg: RunConfig, procedure: str, **params) -> list[str]:
    lines = [
        f"tool=lookalike-lab {__version__}",
        f"config_hash={cfg.config_hash()}",
        f"seed={cfg.seed}",
        f"procedure={procedure}",
    ]
    lines.extend(f"{k}={v}" for k, v in sorted(params.items()))
    return lines


def _data_paths(cfg: RunConfig) -> tuple[Path, Path, Path]:
    out = Path(cfg.out_dir)
    manifest = Path(cfg.data_manifest) if cfg.data_manifest else out / "manifest.csv"
    images = Path(cfg.data_images_map) if cfg.data_images_map else out / "images.csv"
    emb = Path(cfg.data_embeddings) if cfg.data_embeddings else out / "embeddings.emb"
    return manifest, images, emb


def _require(path: Path, stage_hint: str) -> Path:
    if not path.exists():
        raise LookalikeLabError(f"missing input file {path} ({stage_hint})")
    return path


def _load_dataset(cfg: RunConfig):
    manifest, images, emb = _data_paths(cfg)
    graph = datamodel.read_manifest(_require(manifest, "run `synth` or point data.manifest at it"))
    image_map = datamodel.read_image_map(_require(images, "run `synth` or point data.images_map at it"))
    store = datamodel.read_embeddings(_require(emb, "run `synth` or point data.embeddings at it"))
    owners = datamodel.resolve_owners(store, image_map, graph)
    return graph, image_map, store, owners


# --- subcommands ---

def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = synth.SynthConfig(
        n_twin_pairs=cfg.synth_n_twin_pairs, n_singles=cfg.synth_n_singles,
        images_per_subject=cfg.synth_images_per_subject, dim=cfg.synth_dim,
        sigma_image=cfg.synth_sigma_image, delta_twin=cfg.synth_delta_twin,
        spread=cfg.synth_spread, seed=cfg.seed)
    graph, store, _ = synth.generate(config)
    datamodel.write_manifest(out / "manifest.csv", graph)
    datamodel.write_image_map(out / "images.csv", synth.image_map_for(store))
    datamodel.write_embeddings(out / "embeddings.emb", store)
    print(f"synth: {len(graph.subjects)} subjects, {len(store)} images, dim {store.dim} -> {out}")
    return 0


def cmd_ingest(cfg: RunConfig, args) -> int:
    graph = datamodel.read_manifest(_require(Path(args.manifest), "ingest input"))
    image_map = datamodel.read_image_map(_require(Path(args.images_map), "ingest input"))
    store = datamodel.read_embeddings(_require(Path(args.embeddings), "ingest input"))
    datamodel.resolve_owners(store, image_map, graph)
    n_twin_pairs = len(graph.twin_edges)
    print(f"ingest: {len(graph.subjects)} subjects ({n_twin_pairs} twin pairs), "
          f"{len(store)} images, dim {store.dim}: OK")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    graph, image_map, store, owners = _load_dataset(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def scorer(u, v):
        return scoring.comparison_score(u, v, cfg.match_metric)

    if args.pairs:
        all_pairs = pairing.read_pairs_csv(_require(Path(args.pairs), "pairs CSV"))
        subj_of = dict(zip(store.image_ids, owners))
        subjects = sorted({subj_of[p.a] for p in all_pairs} | {subj_of[p.b] for p in all_pairs})
        split = pairing.split_subjects(subjects, cfg.train_split_fraction, cfg.seed, graph)
        train_pairs = [p for p in all_pairs
                       if subj_of[p.a] in split.train_subjects and subj_of[p.b] in split.train_subjects]
        test_pairs = [p for p in all_pairs
                      if subj_of[p.a] in split.test_subjects and subj_of[p.b] in split.test_subjects]
    else:
        subject_filter = None
        if cfg.train_hardest_fraction < 1.0:
            subject_filter = pairing.select_hardest_twin_pairs(
                store, owners, graph, scorer, cfg.train_hardest_fraction)
        train_pairs, test_pairs, split = pairing.build_training_set(
            store, owners, graph,
            split_fraction=cfg.train_split_fraction, seed=cfg.seed,
            subject_filter=subject_filter,
            lookalike_k=cfg.train_lookalike_k, metric=cfg.match_metric)

    config = head.TrainConfig(
        learning_rate=cfg.train_learning_rate, margin=cfg.train_margin,
        epochs=cfg.train_epochs,
        steps_per_epoch=cfg.train_steps_per_epoch or None,
        seed=cfg.seed, optimizer=cfg.train_optimizer,
        momentum_beta=cfg.train_momentum_beta, d_out=cfg.train_d_out,
        activation=cfg.train_activation,
        hidden_dim=cfg.train_hidden_dim or None,
        init_noise=cfg.train_init_noise)
    params, history = head.train(train_pairs, test_pairs, store, config)

    head_path = Path(args.out_head) if args.out_head else out / "head.hed"
    head.write_head(head_path, params)
    prov = _provenance(cfg, "train", margin=config.margin,
                       learning_rate=config.learning_rate, epochs=config.epochs,
                       optimizer=config.optimizer)
    pairing.write_pairs_csv(out / "pairs_train.csv", train_pairs, prov)
    pairing.write_pairs_csv(out / "pairs_test.csv", test_pairs, prov)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as f:
        for line in prov:
            f.write(f"# {line}\n")
        f.write("epoch,mean_loss,val_auc\n")
        for h in history:
            f.write(f"{h.epoch},{h.mean_loss:.12g},{h.val_auc:.12g}\n")

    # held-out verification scores: negated head-space distance, higher = more similar
    index = {img: i for i, img in enumerate(store.image_ids)}
    rows = store.matrix64()
    raw_distances = []
    with open(out / "val_scores.csv", "w", newline="", encoding="utf-8") as f:
        for line in prov:
            f.write(f"# {line}\n")
        f.write("image_a,image_b,label,score\n")
        for p in test_pairs:
            d = scoring.raw_similarity(params, rows[index[p.a]], rows[index[p.b]])
            raw_distances.append(d)
            f.write(f"{p.a},{p.b},{p.label},{-d:.12g}\n")
    for p in train_pairs:
        raw_distances.append(scoring.raw_similarity(params, rows[index[p.a]], rows[index[p.b]]))
    reference_max = max(raw_distances) if raw_distances else 0.0
    with open(out / "train_meta.csv", "w", newline="", encoding="utf-8") as f:
        for line in prov:
            f.write(f"# {line}\n")
        f.write("key,value\n")
        f.write(f"reference_max,{reference_max:.12g}\n")
        f.write(f"train_pairs,{len(train_pairs)}\n")
        f.write(f"test_pairs,{len(test_pairs)}\n")
        f.write(f"train_subjects,{len(split.train_subjects)}\n")
        f.write(f"test_subjects,{len(split.test_subjects)}\n")
    best = max((h.val_auc for h in history if np.isfinite(h.val_auc)), default=float("nan"))
    print(f"train: {len(train_pairs)} train / {len(test_pairs)} test pairs, "
          f"best val AUC {best:.4f} -> {head_path}")
    return 0


def _read_meta(path: Path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#") or line.strip() in ("", "key,value"):
                continue
            key, _, value = line.strip().partition(",")
            meta[key] = value
    return meta


def _build_job(cfg: RunConfig, args, graph, image_map, store) -> match_engine.MatchJob:
    if args.score == "comparison":
        kind = match_engine.ComparisonKind(cfg.match_metric)
    else:
        head_path = Path(args.head) if args.head else Path(cfg.out_dir) / "head.hed"
        params = head.read_head(_require(head_path, "run `train` first"))
        if args.inversion == scoring.CALIBRATED:
            if args.reference_max is not None:
                ref = args.reference_max
            else:
                meta = _read_meta(_require(Path(cfg.out_dir) / "train_meta.csv",
                                           "run `train` first or pass --reference-max"))
                ref = float(meta["reference_max"])
            kind = match_engine.SimilarityKind(params, scoring.CALIBRATED, ref)
        else:
            kind = match_engine.SimilarityKind(params, scoring.BATCH_RELATIVE)
    return match_engine.MatchJob(
        store=store, graph=graph, image_map=image_map, kind=kind,
        pair_filter=args.pair_filter, block_size=cfg.match_block_size,
        bins=cfg.match_bins, workers=args.workers or cfg.match_workers)


def cmd_match(cfg: RunConfig, args) -> int:
    graph, image_map, store, owners = _load_dataset(cfg)
    job = _build_job(cfg, args, graph, image_map, store)

    if args.retain_at is None or args.retain_at == "T":
        # default to the experimental twin threshold where the run has twin
        # pairs to average; two passes, since T is this run's own mean
        first = match_engine.run_match(job, retain_threshold=None)
        try:
            threshold = analysis.twin_threshold(first, args.score).value
        except NoTwinPairs:
            if args.retain_at == "T":
                raise
            threshold = None
    else:
        threshold = float(args.retain_at)

    acc = match_engine.run_match(job, retain_threshold=threshold)
    out = Path(cfg.out_dir) / (args.out_name or f"match_{args.score}_{args.pair_filter}")
    out.mkdir(parents=True, exist_ok=True)
    inversion = getattr(job.kind, "inversion", "")
    ref = ""
    if isinstance(job.kind, match_engine.SimilarityKind):
        ref = f"{acc.bin_edges[-1]:.12g}"
    prov = _provenance(cfg, "match", score=args.score, filter=args.pair_filter,
                       metric=getattr(job.kind, "metric", ""), inversion=inversion,
                       reference_max=ref,
                       retain_threshold="" if threshold is None else f"{threshold:.12g}")
    match_engine.write_histogram_csv(out / "histogram.csv", acc, prov)
    match_engine.write_summary_csv(out / "summary.csv", acc, prov)
    match_engine.write_retained_csv(out / "retained.csv", acc, job.kind, prov)
    match_engine.write_subject_max_csv(out / "subject_max.csv", acc, prov)
    with open(out / "meta.csv", "w", newline="", encoding="utf-8") as f:
        for line in prov:
            f.write(f"# {line}\n")
        f.write("key,value\n")
        f.write(f"score,{args.score}\n")
        f.write(f"filter,{args.pair_filter}\n")
        f.write(f"total_pairs,{acc.pair_count}\n")
        f.write(f"retain_threshold,{'' if threshold is None else format(threshold, '.12g')}\n")
        f.write(f"reference_max,{ref}\n")
    print(f"match: scored {acc.pair_count} pairs"
          f"{'' if threshold is None else f', retained {len(acc.retained)} >= {threshold:.6g}'} -> {out}")
    return 0


def _analysis_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir) / "analysis"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _match_artifacts(cfg: RunConfig, name: str) -> tuple[list, dict[str, str], Path]:
    match_dir = Path(cfg.out_dir) / name
    retained = match_engine.read_retained_csv(_require(match_dir / "retained.csv",
                                                       "run `match` first"))
    meta = _read_meta(_require(match_dir / "meta.csv", "run `match` first"))
    return retained, meta, match_dir


def cmd_analyze(cfg: RunConfig, args) -> int:
    out = _analysis_dir(cfg)
    mode = args.what

    if mode == "threshold":
        match_dir = Path(cfg.out_dir) / args.match_name
        meta = _read_meta(_require(match_dir / "meta.csv", "run `match` first"))
        with open(_require(match_dir / "summary.csv", "run `match` first"), encoding="utf-8") as f:
            rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
        twin = [r for r in rows if r["pair_class"] == analysis.IDENTICAL_TWIN_LABEL]
        if not twin:
            raise LookalikeLabError("no identical-twin pairs in the match summary")
        t = analysis.TwinThreshold(float(twin[0]["mean"]), meta.get("score", ""),
                                   int(twin[0]["count"]))
        prov = _provenance(cfg, "twin_threshold", source=t.source, n_pairs=t.n_pairs)
        with open(out / "threshold.csv", "w", newline="", encoding="utf-8") as f:
            for line in prov:
                f.write(f"# {line}\n")
            f.write("value,source,n_pairs\n")
            f.write(f"{t.value:.12g},{t.source},{t.n_pairs}\n")
        print(f"analyze threshold: T = {t.value:.6g} over {t.n_pairs} twin pairs")
        return 0

    if mode == "table":
        retained, meta, _ = _match_artifacts(cfg, args.match_name)
        threshold = _resolve_threshold(cfg, args)
        total = int(meta["total_pairs"])
        rows = analysis.above_threshold_table(retained, threshold, total)
        prov = _provenance(cfg, "above_threshold_table",
                           threshold=f"{threshold:.12g}", total_pairs=total,
                           denominator="unordered pairs scored by the match run")
        analysis.write_table_csv(out / "table.csv", rows, prov)
        print(f"analyze table: {rows[-1].count} pairs >= {threshold:.6g} "
              f"({rows[-1].percent_of_matches:.4g}% of {total})")
        return 0

    if mode == "roc":
        scores_path = _require(Path(args.scores) if args.scores
                               else Path(cfg.out_dir) / "val_scores.csv", "run `train` first")
        genuine, impostor = _read_labelled_scores(scores_path)
        curve = analysis.roc(genuine, impostor)
        metrics = analysis.verification_metrics(curve, genuine, impostor,
                                                fmr_target=cfg.analyze_fmr_target)
        prov = _provenance(cfg, "roc", scores=scores_path.name,
                           genuine=curve.genuine_count, impostor=curve.impostor_count)
        analysis.write_roc_csv(out / "roc.csv", curve, prov)
        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as f:
            for line in prov:
                f.write(f"# {line}\n")
            f.write("auc,eer,eer_threshold,fnmr_at_fmr,fmr_target,fmr_floor,fmr_target_reachable\n")
            f.write(f"{metrics.auc:.12g},{metrics.eer:.12g},{metrics.eer_threshold:.12g},"
                    f"{metrics.fnmr_at_fmr:.12g},{metrics.fmr_target:.12g},"
                    f"{metrics.fmr_floor:.12g},{int(metrics.fmr_target_reachable)}\n")
        print(f"analyze roc: AUC {metrics.auc:.4f}, EER {metrics.eer:.4f}, "
              f"FNMR@FMR({metrics.fmr_target:g}) {metrics.fnmr_at_fmr:.4f}"
              + ("" if metrics.fmr_target_reachable else
                 f" (target below floor {metrics.fmr_floor:.3g})"))
        return 0

    if mode == "baseline":
        retained, meta, match_dir = _match_artifacts(cfg, args.match_name)
        twin_scores = [r.score for r in retained
                       if r.class_label == analysis.IDENTICAL_TWIN_LABEL]
        with open(match_dir / "summary.csv", encoding="utf-8") as f:
            summary = list(csv.DictReader(line for line in f if not line.startswith("#")))
        scored = sum(int(r["count"]) for r in summary
                     if r["pair_class"] == analysis.IDENTICAL_TWIN_LABEL)
        if len(twin_scores) < scored:
            raise LookalikeLabError(
                f"retained list is censored ({len(twin_scores)} of {scored} twin pairs); "
                "rerun `match` with --retain-at below the score range")
        base = analysis.similarity_baseline(twin_scores)
        prov = _provenance(cfg, "similarity_baseline", n=base.n,
                           percentile_rule="linear interpolation between order statistics",
                           score=meta.get("score", ""))
        with open(out / "baseline.csv", "w", newline="", encoding="utf-8") as f:
            for line in prov:
                f.write(f"# {line}\n")
            f.write("mean,q1,q2,q3,q4_threshold,n\n")
            f.write(f"{base.mean:.12g},{base.q1:.12g},{base.q2:.12g},"
                    f"{base.q3:.12g},{base.q4_threshold:.12g},{base.n}\n")
        print(f"analyze baseline: mean {base.mean:.6g}, q4 threshold {base.q4_threshold:.6g} "
              f"over {base.n} twin pairs")
        return 0

    if mode in ("correlate", "bland-altman"):
        comp_retained, comp_meta, _ = _match_artifacts(cfg, args.comparison_name)
        sim_retained, sim_meta, _ = _match_artifacts(cfg, args.similarity_name)
        joined = _join_scores(comp_retained, sim_retained)
        if mode == "correlate":
            rep = analysis.correlate(joined)
            prov = _provenance(cfg, "correlate", n=rep.n, level="image pairs",
                               comparison=comp_meta.get("score", ""),
                               similarity=sim_meta.get("score", ""))
            with open(out / "correlation.csv", "w", newline="", encoding="utf-8") as f:
                for line in prov:
                    f.write(f"# {line}\n")
                f.write("pearson_r,slope,intercept,n\n")
                f.write(f"{rep.pearson_r:.12g},{rep.slope:.12g},{rep.intercept:.12g},{rep.n}\n")
            _write_points_csv(out / "correlation_points.csv",
                              joined, ["comparison_score", "similarity_score"], prov)
            print(f"analyze correlate: r = {rep.pearson_r:.4f}, "
                  f"fit y = {rep.slope:.4g} x + {rep.intercept:.4g} over {rep.n} pairs")
        else:
            rep = analysis.bland_altman(joined, normalization=cfg.analyze_normalization)
            prov = _provenance(cfg, "bland_altman", n=len(rep.diffs),
                               normalization=rep.normalization, sd="population")
            with open(out / "bland_altman.csv", "w", newline="", encoding="utf-8") as f:
                for line in prov:
                    f.write(f"# {line}\n")
                f.write("mean_diff,loa_low,loa_high,n\n")
                f.write(f"{rep.mean_diff:.12g},{rep.loa_low:.12g},{rep.loa_high:.12g},{len(rep.diffs)}\n")
            _write_points_csv(out / "bland_altman_points.csv",
                              list(zip(rep.means, rep.diffs)), ["mean", "diff"], prov)
            print(f"analyze bland-altman: mean diff {rep.mean_diff:.4g}, "
                  f"LoA [{rep.loa_low:.4g}, {rep.loa_high:.4g}]")
        return 0

    if mode == "sweep":
        _, meta, match_dir = _match_artifacts(cfg, args.match_name)
        subject_max = _read_subject_max(match_dir / "subject_max.csv")
        if not subject_max:
            raise LookalikeLabError("match run recorded no non-mated subject maxima")
        values = sorted(subject_max.values())
        thresholds = (np.linspace(0.0, values[-1], cfg.analyze_sweep_points)
                      if args.thresholds is None else
                      np.asarray([float(t) for t in args.thresholds.split(",")]))
        points = analysis.lookalike_sweep(subject_max, thresholds)
        prov = _provenance(cfg, "lookalike_sweep", identities=len(subject_max),
                           score=meta.get("score", ""))
        analysis.write_sweep_csv(out / "sweep.csv", points, prov)
        print(f"analyze sweep: {len(points)} thresholds over {len(subject_max)} identities")
        return 0

    raise LookalikeLabError(f"unknown analyze mode {mode!r}")


def _resolve_threshold(cfg: RunConfig, args) -> float:
    if args.threshold is not None:
        return float(args.threshold)
    path = _require(Path(cfg.out_dir) / "analysis" / "threshold.csv",
                    "run `analyze threshold` first or pass --threshold")
    with open(path, encoding="utf-8") as f:
        rows = [line for line in f if not line.startswith("#")]
    return float(rows[1].split(",")[0])


def _read_labelled_scores(path: Path) -> tuple[list[float], list[float]]:
    genuine, impostor = [], []
    with open(path, encoding="utf-8") as f:
        header_seen = False
        for line in f:
            if line.startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            parts = line.strip().split(",")
            if len(parts) != 4:
                continue
            _, _, label, score = parts
            (genuine if int(label) == pairing.LABEL_SIMILAR else impostor).append(float(score))
    return genuine, impostor


def _read_subject_max(path: Path) -> dict[str, float]:
    out: dict[str, float] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#") or line.startswith("subject_id") or not line.strip():
                continue
            sid, _, value = line.strip().partition(",")
            out[sid] = float(value)
    return out


def _join_scores(comp_retained, sim_retained) -> list[tuple[float, float]]:
    sim_by_pair = {(r.image_a, r.image_b): r.score for r in sim_retained}
    joined = []
    for r in comp_retained:
        key = (r.image_a, r.image_b)
        if key in sim_by_pair:
            joined.append((r.score, sim_by_pair[key]))
    if not joined:
        raise LookalikeLabError("no common pairs between the two match runs")
    return joined


def _write_points_csv(path, points, columns, header_lines) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        f.write(",".join(columns) + "\n")
        for x, y in points:
            f.write(f"{x:.12g},{y:.12g}\n")


def cmd_report(cfg: RunConfig, args) -> int:
    out = Path(args.report_dir) if args.report_dir else Path(cfg.out_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    analysis_dir = Path(cfg.out_dir) / "analysis"
    made = []

    roc_path = analysis_dir / "roc.csv"
    if roc_path.exists():
        ts, fmrs, fnmrs = [], [], []
        with open(roc_path, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") or line.startswith("threshold"):
                    continue
                t, fm, fn = line.strip().split(",")
                ts.append(float(t)); fmrs.append(float(fm)); fnmrs.append(float(fn))
        plot = SvgPlot("Verification ROC", "false match rate", "1 - false non-match rate")
        plot.add_line("ROC", fmrs, [1.0 - v for v in fnmrs])
        plot.add_line("chance", [0.0, 1.0], [0.0, 1.0])
        plot.write(out / "roc.svg")
        made.append("roc.svg")

    for match_dir in sorted(Path(cfg.out_dir).glob("match_*")):
        hist_path = match_dir / "histogram.csv"
        if not hist_path.exists():
            continue
        per_class: dict[str, tuple[list, list]] = {}
        with open(hist_path, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") or line.startswith("bin_lo"):
                    continue
                lo, hi, label, count = line.strip().split(",")
                xs, ys = per_class.setdefault(label, ([], []))
                xs.extend((float(lo), float(hi)))
                ys.extend((int(count), int(count)))
        plot = SvgPlot(f"Score distribution ({match_dir.name})", "score", "pair count")
        for label in sorted(per_class):
            xs, ys = per_class[label]
            plot.add_line(label, xs, ys)
        plot.write(out / f"{match_dir.name}_histogram.svg")
        made.append(f"{match_dir.name}_histogram.svg")

    corr_points = analysis_dir / "correlation_points.csv"
    corr_fit = analysis_dir / "correlation.csv"
    if corr_points.exists() and corr_fit.exists():
        xs, ys = [], []
        with open(corr_points, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") or line.startswith("comparison"):
                    continue
                x, y = line.strip().split(",")
                xs.append(float(x)); ys.append(float(y))
        with open(corr_fit, encoding="utf-8") as f:
            rows = [line for line in f if not line.startswith("#")]
        _, slope, intercept, _ = rows[1].strip().split(",")
        slope, intercept = float(slope), float(intercept)
        plot = SvgPlot("Comparison vs similarity score", "comparison score", "similarity score")
        plot.add_scatter("pairs", xs, ys)
        if xs:
            lo, hi = min(xs), max(xs)
            plot.add_line("least-squares fit", [lo, hi],
                          [slope * lo + intercept, slope * hi + intercept])
        plot.write(out / "correlation.svg")
        made.append("correlation.svg")

    ba_points = analysis_dir / "bland_altman_points.csv"
    ba_summary = analysis_dir / "bland_altman.csv"
    if ba_points.exists() and ba_summary.exists():
        xs, ys = [], []
        with open(ba_points, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") or line.startswith("mean"):
                    continue
                x, y = line.strip().split(",")
                xs.append(float(x)); ys.append(float(y))
        with open(ba_summary, encoding="utf-8") as f:
            rows = [line for line in f if not line.startswith("#")]
        mean_diff, loa_low, loa_high, _ = (float(v) for v in rows[1].strip().split(","))
        plot = SvgPlot("Score agreement", "pair mean (normalized)", "pair difference")
        plot.add_scatter("pairs", xs, ys)
        plot.add_hline(mean_diff, f"mean {mean_diff:.3g}")
        plot.add_hline(loa_low, f"LoA {loa_low:.3g}")
        plot.add_hline(loa_high, f"LoA {loa_high:.3g}")
        plot.write(out / "bland_altman.svg")
        made.append("bland_altman.svg")

    sweep_path = analysis_dir / "sweep.csv"
    if sweep_path.exists():
        xs, ys = [], []
        with open(sweep_path, encoding="utf-8") as f:
            for line in f:
                if line.startswith("#") or line.startswith("threshold"):
                    continue
                t, count, _ = line.strip().split(",")
                xs.append(float(t)); ys.append(int(count))
        plot = SvgPlot("Look-alike identities vs similarity threshold",
                       "similarity threshold", "identities with a look-alike")
        plot.add_line("identities", xs, ys)
        plot.write(out / "sweep.svg")
        made.append("sweep.svg")

    if not made:
        raise LookalikeLabError("no analysis artifacts found; run `analyze` first")
    print(f"report: wrote {', '.join(made)} -> {out}")
    return 0


# --- argument parsing ---

def _threshold_arg(value: str) -> str:
    if value == "T":
        return value
    try:
        float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'T' or a number, got {value!r}") from None
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lookalike-lab",
        description="Twin-calibrated facial-similarity experiments over embedding files.")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out-dir", help="override the configured output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate a synthetic twin world")

    p = sub.add_parser("ingest", help="validate manifest/images/embeddings inputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images-map", required=True)
    p.add_argument("--embeddings", required=True)

    p = sub.add_parser("train", help="train the similarity projection head")
    p.add_argument("--pairs", help="labelled pairs CSV (default: mine and build from the dataset)")
    p.add_argument("--out-head", help="output parameter file (default: <out>/head.hed)")

    p = sub.add_parser("match", help="all-to-all scoring run")
    p.add_argument("--score", choices=["comparison", "similarity"], required=True)
    p.add_argument("--filter", dest="pair_filter",
                   choices=list(match_engine.PAIR_FILTERS), default=match_engine.NONMATED_ONLY)
    p.add_argument("--retain-at", type=_threshold_arg,
                   help="score threshold for retained pairs; 'T' uses this "
                        "run's identical-twin mean (two passes)")
    p.add_argument("--head", help="head parameter file for similarity scoring")
    p.add_argument("--inversion", choices=list(scoring.INVERSION_MODES),
                   default=scoring.BATCH_RELATIVE)
    p.add_argument("--reference-max", type=float,
                   help="calibrated inversion reference (default: train_meta.csv)")
    p.add_argument("--workers", type=int, help="override match.workers")
    p.add_argument("--out-name", help="artifact directory name (default: match_<score>_<filter>)")

    p = sub.add_parser("analyze", help="statistical procedures over match/train artifacts")
    p.add_argument("what", choices=["threshold", "table", "roc", "baseline",
                                    "correlate", "bland-altman", "sweep"])
    p.add_argument("--match-name", default="match_comparison_nonmated",
                   help="match artifact directory (threshold/table/baseline/sweep)")
    p.add_argument("--comparison-name", default="match_comparison_nonmated")
    p.add_argument("--similarity-name", default="match_similarity_nonmated")
    p.add_argument("--threshold", type=float, help="explicit table threshold")
    p.add_argument("--scores", help="labelled score CSV for roc (default: <out>/val_scores.csv)")
    p.add_argument("--thresholds", help="comma-separated sweep thresholds")

    p = sub.add_parser("report", help="emit SVG figures for all computed analyses")
    p.add_argument("--out-dir", dest="report_dir",
                   help="report target directory (default: <workspace>/report)")

    return parser


_HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "match": cmd_match,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except (ParseError, OSError) as exc:
        print(f"ERROR {json.dumps({'kind': type(exc).__name__, 'message': str(exc)})}",
              file=sys.stderr)
        return 2
    cfg = _apply_overrides(cfg, args)
    try:
        return _HANDLERS[args.command](cfg, args)
    except LookalikeLabError as exc:
        print(f"ERROR {json.dumps({'kind': type(exc).__name__, 'message': str(exc)})}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
