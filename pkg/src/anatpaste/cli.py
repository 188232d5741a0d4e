"""Command-line interface.

Subcommands: phantom, segment, augment, train, score, eval, pipeline.
Exit codes: 0 success, 2 configuration/schema error, 3 I/O error,
4 computation/data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from functools import partial
from pathlib import Path

from . import config as cfgmod
from . import pipeline as pl
from .augment import anat_paste_ablated, cut_paste_scar
from .classifier import (
    AUGMENT_MODES,
    load_checkpoint,
    penultimate_features,
    save_checkpoint,
    train,
)
from .errors import (
    AnatPasteError,
    ConfigError,
    NoValidPlacementError,
    ParseError,
)
from .imageio import read_image, write_image, write_mask
from .metrics import best_f1_threshold, metrics_at
from .phantom import generate
from .rng import substream
from .scoring import KdeScorer, anomaly_scores
from .segmentation import segment_lungs

log = logging.getLogger("anatpaste")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_COMPUTE = 4


def _expand_inputs(paths) -> list:
    """Resolve files and directories (sorted *.png / *.pgm) to image paths."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            found = sorted(q for q in p.iterdir() if q.suffix.lower() in (".png", ".pgm"))
            out.extend(found)
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"input not found: {p}")
    return out


def _load_config(args) -> dict:
    cfg = cfgmod.parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        cfg["runs"] = args.runs
    if getattr(args, "mode", None) is not None:
        cfg["mode"] = args.mode
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _phantom_task(args_tuple):
    pcfg, index, cls, sid, out_dir = args_tuple
    sample = generate(pcfg, index, cls)
    write_image(Path(out_dir) / "images" / f"{sid}.png", sample.image)
    write_mask(Path(out_dir) / "masks" / f"{sid}_lung.png", sample.gt_lung)
    write_mask(Path(out_dir) / "masks" / f"{sid}_lesion.png", sample.gt_lesion)


def cmd_phantom(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    corpus = pl.build_phantom_corpus(cfg, cfg["seed"])
    pl.write_manifest(out_dir / "manifest.csv", corpus.manifest)
    pcfg = cfgmod.phantom_config(cfg, cfg["seed"])
    tasks = [(pcfg, int(row["index"]), row["class"], row["id"], out_dir)
             for row in corpus.manifest]
    pl.pmap(_phantom_task, tasks, args.parallel)
    log.info("wrote %d phantom samples to %s", len(tasks), out_dir)
    return EXIT_OK


def _segment_task(task, seg_cfg, out_dir, snapshots):
    path = Path(task)
    img = read_image(path)
    result = segment_lungs(img, seg_cfg, keep_stages=snapshots)
    write_mask(Path(out_dir) / f"{path.stem}_mask.png", result.mask)
    if snapshots and result.stages:
        for name, stage in result.stages.items():
            target = Path(out_dir) / f"{path.stem}_stage_{name}.png"
            if stage.dtype == bool:
                write_mask(target, stage)
            else:
                write_image(target, stage)
    return result.degenerate


def cmd_segment(args) -> int:
    cfg = _load_config(args)
    seg_cfg = cfgmod.seg_config(cfg)
    inputs = _expand_inputs(args.inputs)
    task = partial(_segment_task, seg_cfg=seg_cfg, out_dir=args.out, snapshots=args.snapshots)
    degenerate = pl.pmap(task, inputs, args.parallel)
    for path, deg in zip(inputs, degenerate):
        if deg:
            log.warning("%s: degenerate image, wrote an empty mask", path)
    log.info("segmented %d images into %s", len(inputs), args.out)
    return EXIT_OK


def _augment_task(task, cfg, mode, out_dir):
    path, image_index, n_reps, seed = task
    img = read_image(path)
    lung = None
    if mode in ("anat", "anat-noblur"):
        lung = segment_lungs(img, cfgmod.seg_config(cfg)).mask
    rows = []
    for rep in range(n_reps):
        rng = substream(seed, image_index, rep)
        try:
            if mode == "cutpaste-scar":
                outcome = cut_paste_scar(img, cfgmod.scar_config(cfg), rng)
            else:
                ablation = {"anat": None, "anat-noseg": "no_segmentation",
                            "anat-noblur": "no_blur"}[mode]
                outcome = anat_paste_ablated(img, lung, cfgmod.aug_config(cfg), rng, ablation)
        except NoValidPlacementError as exc:
            rows.append(None)
            log.warning("%s rep %d: %s", path, rep, exc)
            continue
        stem = f"{Path(path).stem}_aug{rep}"
        write_image(Path(out_dir) / f"{stem}.png", outcome.anomaly_image)
        write_image(Path(out_dir) / f"{stem}_mask.png", outcome.soft_mask)
        s, d = outcome.patch_src_rect, outcome.patch_dst_rect
        rows.append([Path(path).stem, rep, seed, mode,
                     s.x, s.y, d.x, d.y, s.w, s.h,
                     outcome.shape_kind,
                     pl.fmt(outcome.shape_center[0]), pl.fmt(outcome.shape_center[1]),
                     pl.fmt(outcome.shape_half_axes[0]), pl.fmt(outcome.shape_half_axes[1]),
                     pl.fmt(outcome.fill_value), pl.fmt(outcome.blur_radius),
                     "" if outcome.rotation_deg is None else pl.fmt(outcome.rotation_deg)])
    return rows


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    mode = cfg["mode"]
    inputs = _expand_inputs(args.inputs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(path, i, cfg["aug.n_per_image"], cfg["seed"]) for i, path in enumerate(inputs)]
    all_rows = pl.pmap(partial(_augment_task, cfg=cfg, mode=mode, out_dir=out_dir),
                       tasks, args.parallel)
    with open(out_dir / "provenance.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "rep", "seed", "mode", "src_x", "src_y", "dst_x", "dst_y",
                         "patch_w", "patch_h", "shape", "center_x", "center_y",
                         "half_a", "half_b", "fill", "blur_radius", "rotation_deg"])
        for rows in all_rows:
            for row in rows:
                if row is not None:
                    writer.writerow(row)
    log.info("augmented %d images (mode=%s) into %s", len(inputs), mode, out_dir)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    mode = cfg["mode"]
    inputs = _expand_inputs(args.inputs)
    images = [read_image(p) for p in inputs]
    masks = None
    if mode in ("anat", "anat-noblur"):
        seg_cfg = cfgmod.seg_config(cfg)
        masks = pl.pmap(partial(pl.segment_mask, seg_cfg), images, args.parallel)
    desc = cfgmod.descriptor(cfg)
    model, train_log = train(images, masks, cfgmod.aug_config(cfg),
                             cfgmod.train_config(cfg, cfg["seed"], mode),
                             descriptor=desc, scar_cfg=cfgmod.scar_config(cfg))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "model.ckpt", model, desc)
    pl.write_train_log(out_dir / "train_log.csv", train_log)
    feats = penultimate_features(model, images, desc)
    pl.write_features_csv(out_dir / "train_features.csv",
                          [p.stem for p in inputs], feats)
    log.info("trained on %d normals (mode=%s); artifacts in %s", len(images), mode, out_dir)
    return EXIT_OK


def _manifest_labels(paths) -> dict:
    labels = {}
    for p in paths:
        p = Path(p)
        manifest = (p if p.is_dir() else p.parent) / "manifest.csv"
        if manifest.exists():
            with open(manifest, newline="") as fh:
                for row in csv.DictReader(fh):
                    labels[row["id"]] = 1 if row.get("class") == "abnormal" else 0
    return labels


def cmd_score(args) -> int:
    cfg = _load_config(args)
    model, desc = load_checkpoint(args.model)
    _, refs = pl.read_features_csv(args.features)
    scorer = KdeScorer(bandwidth=cfg["kde.bandwidth"]).fit(refs)
    inputs = _expand_inputs(args.inputs)
    images = [read_image(p) for p in inputs]
    ids = [p.stem for p in inputs]
    feats = penultimate_features(model, images, desc)
    labels_by_id = _manifest_labels(args.inputs)
    labels = [labels_by_id[i] for i in ids] if all(i in labels_by_id for i in ids) else None
    score_set = anomaly_scores(scorer, feats, ids=ids, labels=labels)
    out_dir = Path(args.out)
    pl.write_scores_csv(out_dir / "scores.csv", score_set)
    log.info("scored %d images into %s", len(ids), out_dir / "scores.csv")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    ls = pl.read_scores_csv(args.scores)
    if cfg["eval.threshold"] != "":
        threshold = float(cfg["eval.threshold"])
        chosen = "configured"
    else:
        threshold, _ = best_f1_threshold(ls)
        chosen = "best-f1"
    report = metrics_at(ls, threshold)
    out_dir = Path(args.out)
    pl.write_metrics(out_dir, report, extra={"threshold_source": chosen})
    pl.write_roc_csv(out_dir / "roc.csv", ls)
    print(f"auc={pl.fmt(report.auc)} accuracy={pl.fmt(report.accuracy)} "
          f"f1={pl.fmt(report.f1)} threshold={pl.fmt(report.threshold)}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgmod.write_config(out_dir / "config.txt", cfg)
    pl.run_pipeline(cfg, out_dir, runs=cfg["runs"], mode=cfg["mode"],
                    parallel=args.parallel)
    print((out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anatpaste",
        description="Lung-constrained paste augmentation and anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, inputs=False, snapshots=False):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
        p.add_argument("--mode", choices=AUGMENT_MODES, default=None,
                       help="augmentation mode (overrides config)")
        p.add_argument("--runs", type=int, default=None, help="run count (overrides config)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--parallel", type=int, default=1, help="worker processes")
        if snapshots:
            p.add_argument("--snapshots", action="store_true",
                           help="export intermediate stage images")
        if inputs:
            p.add_argument("inputs", nargs="+", help="image files or directories")
        return p

    common(sub.add_parser("phantom", help="generate a synthetic corpus"))
    common(sub.add_parser("segment", help="segment lung fields"), inputs=True, snapshots=True)
    common(sub.add_parser("augment", help="write augmented images"), inputs=True)
    common(sub.add_parser("train", help="train the pretext classifier"), inputs=True)
    p_score = common(sub.add_parser("score", help="score images against a trained model"),
                     inputs=True)
    p_score.add_argument("--model", required=True, help="model checkpoint")
    p_score.add_argument("--features", required=True, help="reference features CSV")
    p_eval = common(sub.add_parser("eval", help="metrics from a labeled scores CSV"))
    p_eval.add_argument("scores", help="scores CSV with a label column")
    common(sub.add_parser("pipeline", help="full multi-run pipeline with ensemble"))
    return parser


COMMANDS = {
    "phantom": cmd_phantom,
    "segment": cmd_segment,
    "augment": cmd_augment,
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return EXIT_IO
    except AnatPasteError as exc:
        log.error("computation error: %s", exc)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
