"""End-to-end orchestration: corpus, per-run training, scoring, ensembling.

Run r uses seed (base_seed + r).  Per run: train the pretext classifier on
the training normals, fit a KDE on their penultimate features, normalise
validation scores, choose the best-F1 threshold on validation, then score
and evaluate the test split at that threshold.  Normalised test scores are
averaged across runs for the ensemble row.  Every artifact is a pure
function of (config, seed), so reruns are byte-identical regardless of the
worker count.
"""

from __future__ import annotations

import csv
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .classifier import save_checkpoint
from .detector import AnatPasteDetector
from .errors import AnatPasteError, ParseError
from .imageio import read_image, write_image, write_mask
from .metrics import LabeledScores, MetricsReport, best_f1_threshold, metrics_at, roc_curve
from .phantom import generate_corpus
from .scoring import ScoreSet, anomaly_scores, ensemble_average
from .segmentation import segment_lungs


def fmt(v) -> str:
    """Shortest-round-trip decimal text for a float (deterministic output)."""
    return repr(float(v))


def pmap(fn, items, workers: int = 1):
    """Order-preserving map, optionally across processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    train_ids: list = field(default_factory=list)
    train_images: list = field(default_factory=list)
    val_ids: list = field(default_factory=list)
    val_images: list = field(default_factory=list)
    val_labels: list = field(default_factory=list)
    test_ids: list = field(default_factory=list)
    test_images: list = field(default_factory=list)
    test_labels: list = field(default_factory=list)
    manifest: list = field(default_factory=list)
    samples: dict = field(default_factory=dict)   # id -> PhantomSample (generated corpora)


def build_phantom_corpus(cfg: dict, seed: int) -> Corpus:
    """Generate disjoint train/val/test phantom splits from one seed."""
    pcfg = cfgmod.phantom_config(cfg, seed)
    corpus = Corpus()
    n_train = cfg["phantom.train_normals"]
    splits = [
        ("train", n_train, 0, 0),
        ("val", cfg["phantom.val_normals"], cfg["phantom.val_abnormals"], n_train),
        ("test", cfg["phantom.test_normals"], cfg["phantom.test_abnormals"],
         n_train + cfg["phantom.val_normals"] + cfg["phantom.val_abnormals"]),
    ]
    for split, n_norm, n_abn, start in splits:
        samples, manifest = generate_corpus(pcfg, n_norm, n_abn,
                                            start_index=start, id_prefix=f"{split}_")
        for row in manifest:
            row["split"] = split
            corpus.manifest.append(row)
        for sid, sample in samples:
            corpus.samples[sid] = sample
            if split == "train":
                corpus.train_ids.append(sid)
                corpus.train_images.append(sample.image)
            elif split == "val":
                corpus.val_ids.append(sid)
                corpus.val_images.append(sample.image)
                corpus.val_labels.append(sample.label)
            else:
                corpus.test_ids.append(sid)
                corpus.test_images.append(sample.image)
                corpus.test_labels.append(sample.label)
    ids = corpus.train_ids + corpus.val_ids + corpus.test_ids
    assert len(ids) == len(set(ids)), "split ids must be disjoint"
    return corpus


def load_corpus(directory) -> Corpus:
    """Load a corpus written by the `phantom` subcommand."""
    directory = Path(directory)
    manifest_path = directory / "manifest.csv"
    corpus = Corpus()
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "class", "split"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(f"{manifest_path}: manifest needs columns {sorted(required)}")
        for line_no, row in enumerate(reader, start=2):
            sid, cls, split = row["id"], row["class"], row["split"]
            if cls not in ("normal", "abnormal"):
                raise ParseError(f"bad class {cls!r}", line=line_no)
            img = read_image(directory / "images" / f"{sid}.png")
            label = 1 if cls == "abnormal" else 0
            corpus.manifest.append(row)
            if split == "train":
                corpus.train_ids.append(sid)
                corpus.train_images.append(img)
            elif split == "val":
                corpus.val_ids.append(sid)
                corpus.val_images.append(img)
                corpus.val_labels.append(label)
            elif split == "test":
                corpus.test_ids.append(sid)
                corpus.test_images.append(img)
                corpus.test_labels.append(label)
            else:
                raise ParseError(f"bad split {split!r}", line=line_no)
    return corpus


def write_manifest(path, manifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["id", "class", "split", "seed", "index", "lesions"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in manifest:
            writer.writerow([row.get(c, "") for c in cols])


def write_corpus_images(directory, corpus: Corpus) -> None:
    directory = Path(directory)
    for sid, sample in corpus.samples.items():
        write_image(directory / "images" / f"{sid}.png", sample.image)
        write_mask(directory / "masks" / f"{sid}_lung.png", sample.gt_lung)
        write_mask(directory / "masks" / f"{sid}_lesion.png", sample.gt_lesion)


# ---------------------------------------------------------------------------
# Tabular artifacts
# ---------------------------------------------------------------------------

def write_features_csv(path, ids, features) -> None:
    features = np.asarray(features)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + [f"f{i}" for i in range(features.shape[1])])
        for sid, row in zip(ids, features):
            writer.writerow([sid] + [fmt(v) for v in row])


def read_features_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ParseError(f"{path}: expected header id,f0,...")
        ids, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError("wrong column count", line=line_no)
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from exc
    return ids, np.asarray(rows, dtype=np.float64)


def write_scores_csv(path, score_set: ScoreSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with_labels = score_set.labels is not None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "raw", "score"] + (["label"] if with_labels else []))
        for i, sid in enumerate(score_set.ids):
            row = [sid, fmt(score_set.raw[i]), fmt(score_set.score[i])]
            if with_labels:
                row.append(int(score_set.labels[i]))
            writer.writerow(row)


def read_scores_csv(path) -> LabeledScores:
    """Scores CSV with labels, as written by `write_scores_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "raw", "score"]:
            raise ParseError(f"{path}: expected header id,raw,score[,label]")
        if "label" not in header:
            raise ParseError(f"{path}: label column required for evaluation")
        ids, scores, labels = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError("wrong column count", line=line_no)
            ids.append(row[0])
            try:
                scores.append(float(row[2]))
                labels.append(int(row[3]))
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from exc
    return LabeledScores(ids=ids, scores=np.asarray(scores), labels=np.asarray(labels))


def write_metrics(out_dir, report: MetricsReport, extra=None) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fields = {
        "auc": fmt(report.auc), "accuracy": fmt(report.accuracy), "f1": fmt(report.f1),
        "threshold": fmt(report.threshold), "tp": report.tp, "fp": report.fp,
        "tn": report.tn, "fn": report.fn,
    }
    fields.update(extra or {})
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(fields))
        writer.writerow([fields[k] for k in fields])
    lines = [f"{k:>10}: {v}" for k, v in fields.items()]
    (out_dir / "metrics.txt").write_text("\n".join(lines) + "\n")


def write_roc_csv(path, ls: LabeledScores) -> None:
    fpr, tpr, thresholds = roc_curve(ls)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for f, t, thr in zip(fpr, tpr, thresholds):
            writer.writerow([fmt(f), fmt(t), fmt(thr)])


def write_train_log(path, log) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "mean_loss"])
        for row in log:
            writer.writerow([row["epoch"], fmt(row["lr"]), fmt(row["mean_loss"])])


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

class StageFailure(AnatPasteError):
    """A pipeline stage failed; carries the stage name and run index."""


def _stage(run_index, name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except AnatPasteError as exc:
        raise StageFailure(f"run {run_index}, stage {name}: {exc}") from exc


def run_single(run_index: int, cfg: dict, corpus: Corpus, masks, out_dir, mode: str):
    """One seeded train/score/evaluate cycle; returns per-run results."""
    out_dir = Path(out_dir)
    seed = cfg["seed"] + run_index
    detector = AnatPasteDetector(
        seg_config=cfgmod.seg_config(cfg),
        aug_config=cfgmod.aug_config(cfg),
        scar_config=cfgmod.scar_config(cfg),
        descriptor=cfgmod.descriptor(cfg),
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        base_lr=cfg["train.base_lr"],
        momentum=cfg["train.momentum"],
        weight_decay=cfg["train.weight_decay"],
        hidden=tuple(int(v) for v in cfg["train.hidden"].split(",")),
        bandwidth=cfg["kde.bandwidth"],
        mode=mode,
        random_state=seed,
    )
    _stage(run_index, "train", detector.fit, corpus.train_images, lung_masks=masks)
    save_checkpoint(out_dir / "model.ckpt", detector.model_, detector.descriptor_)
    write_train_log(out_dir / "train_log.csv", detector.train_log_)

    train_feats = _stage(run_index, "features", detector.embed, corpus.train_images)
    write_features_csv(out_dir / "train_features.csv", corpus.train_ids, train_feats)

    val_feats = detector.embed(corpus.val_images)
    test_feats = detector.embed(corpus.test_images)
    val_set = _stage(run_index, "score-val", anomaly_scores, detector.scorer_, val_feats,
                     ids=corpus.val_ids, labels=corpus.val_labels)
    norm = val_set.normalization if cfg["kde.freeze_normalization"] else None
    test_set = _stage(run_index, "score-test", anomaly_scores, detector.scorer_, test_feats,
                      ids=corpus.test_ids, labels=corpus.test_labels, normalization=norm)
    write_scores_csv(out_dir / "val_scores.csv", val_set)
    write_scores_csv(out_dir / "test_scores.csv", test_set)

    val_ls = LabeledScores(ids=val_set.ids, scores=val_set.score, labels=val_set.labels)
    threshold, val_f1 = _stage(run_index, "threshold", best_f1_threshold, val_ls)
    test_ls = LabeledScores(ids=test_set.ids, scores=test_set.score, labels=test_set.labels)
    report = _stage(run_index, "evaluate", metrics_at, test_ls, threshold)
    write_metrics(out_dir, report, extra={"val_f1": fmt(val_f1), "run": run_index, "seed": seed})
    write_roc_csv(out_dir / "roc.csv", test_ls)
    return {"run": run_index, "seed": seed, "report": report,
            "val_set": val_set, "test_set": test_set}


def _run_task(run_index, cfg, corpus, masks, base_out, mode):
    return run_single(run_index, cfg, corpus, masks,
                      Path(base_out) / f"run{run_index}", mode)


def run_pipeline(cfg: dict, out_dir, runs=None, mode=None, parallel: int = 1) -> dict:
    """Multi-seed pipeline plus ensemble; returns the summary dictionary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = cfg["runs"] if runs is None else runs
    mode = cfg["mode"] if mode is None else mode

    if cfg["paths.corpus"]:
        corpus = load_corpus(cfg["paths.corpus"])
    else:
        corpus = build_phantom_corpus(cfg, cfg["seed"])
    write_manifest(out_dir / "corpus" / "manifest.csv", corpus.manifest)
    if cfg["phantom.write_images"] and corpus.samples:
        write_corpus_images(out_dir / "corpus", corpus)

    masks = None
    if mode in ("anat", "anat-noblur"):
        seg_cfg = cfgmod.seg_config(cfg)
        masks = pmap(partial(segment_mask, seg_cfg), corpus.train_images, parallel)

    task = partial(_run_task, cfg=cfg, corpus=corpus, masks=masks,
                   base_out=out_dir, mode=mode)
    results = pmap(task, range(runs), parallel)

    ensemble_val = ensemble_average([r["val_set"] for r in results])
    ensemble_test = ensemble_average([r["test_set"] for r in results])
    ens_dir = out_dir / "ensemble"
    write_scores_csv(ens_dir / "val_scores.csv", ensemble_val)
    write_scores_csv(ens_dir / "test_scores.csv", ensemble_test)
    ens_val_ls = LabeledScores(ids=ensemble_val.ids, scores=ensemble_val.score,
                               labels=ensemble_val.labels)
    threshold, _ = best_f1_threshold(ens_val_ls)
    ens_test_ls = LabeledScores(ids=ensemble_test.ids, scores=ensemble_test.score,
                                labels=ensemble_test.labels)
    ensemble_report = metrics_at(ens_test_ls, threshold)
    write_metrics(ens_dir, ensemble_report)
    write_roc_csv(ens_dir / "roc.csv", ens_test_ls)

    summary = _write_summary(out_dir, results, ensemble_report, mode)
    return summary


def segment_mask(seg_cfg, img):
    """Picklable helper so mask computation can run in worker processes."""
    return segment_lungs(img, seg_cfg).mask


def _write_summary(out_dir, results, ensemble_report, mode) -> dict:
    per_run = [r["report"] for r in results]
    aucs = [r.auc for r in per_run]
    accs = [r.accuracy for r in per_run]
    f1s = [r.f1 for r in per_run]

    def mean_std(values):
        if len(values) == 1:
            return values[0], 0.0
        return statistics.mean(values), statistics.stdev(values)

    rows = []
    for r in results:
        rep = r["report"]
        rows.append({"run": str(r["run"]), "auc": fmt(rep.auc), "accuracy": fmt(rep.accuracy),
                     "f1": fmt(rep.f1), "threshold": fmt(rep.threshold)})
    m_auc, s_auc = mean_std(aucs)
    m_acc, s_acc = mean_std(accs)
    m_f1, s_f1 = mean_std(f1s)
    rows.append({"run": "mean", "auc": fmt(m_auc), "accuracy": fmt(m_acc),
                 "f1": fmt(m_f1), "threshold": ""})
    rows.append({"run": "std", "auc": fmt(s_auc), "accuracy": fmt(s_acc),
                 "f1": fmt(s_f1), "threshold": ""})
    rows.append({"run": "ensemble", "auc": fmt(ensemble_report.auc),
                 "accuracy": fmt(ensemble_report.accuracy),
                 "f1": fmt(ensemble_report.f1),
                 "threshold": fmt(ensemble_report.threshold)})

    with open(Path(out_dir) / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "auc", "accuracy", "f1", "threshold"])
        for row in rows:
            writer.writerow([row["run"], row["auc"], row["accuracy"], row["f1"], row["threshold"]])

    lines = [f"mode: {mode}", f"runs: {len(results)}"]
    for row in rows:
        lines.append(f"  {row['run']:>8}  AUC={row['auc']}  ACC={row['accuracy']}  F1={row['f1']}")
    (Path(out_dir) / "summary.txt").write_text("\n".join(lines) + "\n")

    return {
        "mode": mode,
        "per_run_auc": aucs,
        "per_run_accuracy": accs,
        "per_run_f1": f1s,
        "mean_auc": m_auc,
        "std_auc": s_auc,
        "ensemble_auc": ensemble_report.auc,
        "ensemble_accuracy": ensemble_report.accuracy,
        "ensemble_f1": ensemble_report.f1,
        "ensemble_report": ensemble_report,
    }
