"""Metrics: PCKh@0.5 pose scoring, classification reports, checkpoint averaging.

A joint is PCKh-correct when its error is strictly less than half the
ground-truth head segment length. Classification reports carry per-class
precision/recall, overall accuracy, and a row-normalized confusion matrix in
percent; checkpoint evaluation averages the three retained models the way the
result tables do.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ACTIONS, Dataset
from .errors import DegenerateHeadError
from .features import head_segment_length
from .model import ModelConfig, _prepare_eval_examples, load_checkpoint, predict
from .skeleton import JOINT_NAMES, MIRROR_PAIRS, NUM_JOINTS, Pose


def pckh(pred: Pose, gt: Pose) -> np.ndarray:
    """Per-joint booleans: error < 0.5 * ground-truth head segment length.

    Joints whose ground truth is invalid come back False; report builders
    exclude them from denominators via gt.valid. Raises DegenerateHeadError
    when the ground-truth head segment is unusable.
    """
    half = 0.5 * head_segment_length(gt)
    err = np.linalg.norm(pred.xy - gt.xy, axis=1)
    return (err < half) & gt.valid


@dataclass
class PckhReport:
    per_joint: list                 # 18 correct fractions (0 when never evaluated)
    per_joint_evaluated: list       # 18 evaluation counts
    overall: float
    total_correct: int
    total_evaluated: int
    excluded_frames: int            # degenerate ground-truth head segments

    def to_dict(self):
        return {
            "per_joint": {name: self.per_joint[j] for j, name in enumerate(JOINT_NAMES)},
            "per_joint_evaluated": {name: self.per_joint_evaluated[j] for j, name in enumerate(JOINT_NAMES)},
            "overall": self.overall,
            "total_correct": self.total_correct,
            "total_evaluated": self.total_evaluated,
            "excluded_frames": self.excluded_frames,
        }

    def render_text(self) -> str:
        """Aligned per-part table with left/right sides and their mean."""
        singles = ["head_top", "upper_neck", "thorax", "pelvis"]
        lines = [f"{'Part':<22}{'PCKh@0.5':>10}", "-" * 32]

        def pct(j):
            return f"{100.0 * self.per_joint[j]:.2f}%"

        for name in singles:
            lines.append(f"{name:<22}{pct(JOINT_NAMES.index(name)):>10}")
        for l, r in MIRROR_PAIRS:
            mean = 0.5 * (self.per_joint[l] + self.per_joint[r])
            label = JOINT_NAMES[l][2:]
            lines.append(f"{label + ' (l/r/mean)':<22}{pct(l):>10}{pct(r):>10}{100.0 * mean:>9.2f}%")
        top, end = JOINT_NAMES.index("stick_top"), JOINT_NAMES.index("stick_end")
        mean = 0.5 * (self.per_joint[top] + self.per_joint[end])
        lines.append(f"{'stick (top/end/mean)':<22}{pct(top):>10}{pct(end):>10}{100.0 * mean:>9.2f}%")
        lines.append("-" * 32)
        lines.append(f"{'Overall':<22}{100.0 * self.overall:>9.2f}%")
        if self.excluded_frames:
            lines.append(f"(excluded {self.excluded_frames} frames with degenerate head segments)")
        return "\n".join(lines)


def pckh_report(pred_poses, gt_poses) -> PckhReport:
    """Aggregate pckh over paired pose lists; degenerate-gt frames are excluded but counted."""
    pred_poses = list(pred_poses)
    gt_poses = list(gt_poses)
    if len(pred_poses) != len(gt_poses) or not pred_poses:
        raise ValueError(f"need equal, non-empty pose lists, got {len(pred_poses)} and {len(gt_poses)}")
    correct = np.zeros(NUM_JOINTS, dtype=np.int64)
    evaluated = np.zeros(NUM_JOINTS, dtype=np.int64)
    excluded = 0
    for pred, gt in zip(pred_poses, gt_poses):
        try:
            ok = pckh(pred, gt)
        except DegenerateHeadError:
            excluded += 1
            continue
        evaluated += gt.valid
        correct += ok
    total_eval = int(evaluated.sum())
    per_joint = [float(correct[j] / evaluated[j]) if evaluated[j] else 0.0 for j in range(NUM_JOINTS)]
    return PckhReport(
        per_joint=per_joint,
        per_joint_evaluated=[int(v) for v in evaluated],
        overall=float(correct.sum() / total_eval) if total_eval else 0.0,
        total_correct=int(correct.sum()),
        total_evaluated=total_eval,
        excluded_frames=excluded,
    )


@dataclass
class ClassificationReport:
    precision: list                 # 4 floats
    recall: list
    precision_defined: list         # False where the class was never predicted
    accuracy: float
    confusion: list                 # 4x4 row percentages (rows: true class)
    class_counts: list

    def to_dict(self):
        return {
            "precision": dict(zip(ACTIONS, self.precision)),
            "recall": dict(zip(ACTIONS, self.recall)),
            "precision_defined": dict(zip(ACTIONS, self.precision_defined)),
            "accuracy": self.accuracy,
            "confusion_percent": {a: dict(zip(ACTIONS, row)) for a, row in zip(ACTIONS, self.confusion)},
            "class_counts": dict(zip(ACTIONS, self.class_counts)),
        }


def classification_report(preds, gts) -> ClassificationReport:
    """Per-class precision/recall, accuracy, and a row-normalized confusion matrix.

    Labels may be action names or indices. Precision of a never-predicted
    class reports 0 with its defined-flag cleared.
    """
    def to_idx(seq):
        return [ACTIONS.index(v) if isinstance(v, str) else int(v) for v in seq]

    p = to_idx(list(preds))
    g = to_idx(list(gts))
    if len(p) != len(g) or not p:
        raise ValueError(f"need equal, non-empty label lists, got {len(p)} and {len(g)}")
    k = len(ACTIONS)
    counts = np.zeros((k, k), dtype=np.int64)   # [true, pred]
    for gi, pi in zip(g, p):
        counts[gi, pi] += 1

    precision, recall, defined = [], [], []
    for c in range(k):
        tp = counts[c, c]
        pred_c = counts[:, c].sum()
        true_c = counts[c, :].sum()
        defined.append(bool(pred_c > 0))
        precision.append(float(tp / pred_c) if pred_c else 0.0)
        recall.append(float(tp / true_c) if true_c else 0.0)
    accuracy = float(np.trace(counts) / counts.sum())
    confusion = []
    for c in range(k):
        row_total = counts[c, :].sum()
        row = (100.0 * counts[c, :] / row_total) if row_total else np.zeros(k)
        confusion.append([float(v) for v in row])
    return ClassificationReport(
        precision=precision,
        recall=recall,
        precision_defined=defined,
        accuracy=accuracy,
        confusion=confusion,
        class_counts=[int(counts[c, :].sum()) for c in range(k)],
    )


@dataclass
class EvalSummary:
    model_cfg: dict
    checkpoints: list               # [{epoch, val_accuracy, path}]
    per_checkpoint: list            # ClassificationReport dicts, same order
    mean_accuracy: float
    mean_precision: dict
    mean_recall: dict
    mean_confusion: dict
    joints_from: str = "gt"

    def to_dict(self):
        return {
            "model_cfg": self.model_cfg,
            "checkpoints": self.checkpoints,
            "per_checkpoint": self.per_checkpoint,
            "mean_accuracy": self.mean_accuracy,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "mean_confusion_percent": self.mean_confusion,
            "joints_from": self.joints_from,
        }

    def render_text(self) -> str:
        tag = ("+ST" if self.model_cfg["use_stick"] else "-ST") + ", " + (
            "+OF" if self.model_cfg["use_flow"] else "-OF"
        )
        short = ("Fw.", "Bw.", "Ps.", "St.")
        lines = [f"Combination {tag}", ""]
        lines.append(f"{'Accuracy':<12}" + "".join(f"{i + 1:>9}" for i in range(len(self.per_checkpoint))) + f"{'Avg.':>9}")
        accs = [r["accuracy"] for r in self.per_checkpoint]
        lines.append(f"{'':<12}" + "".join(f"{100 * a:>8.2f}%" for a in accs) + f"{100 * self.mean_accuracy:>8.2f}%")
        lines.append("")
        lines.append(f"{'':<12}" + "".join(f"{s:>9}" for s in short))
        lines.append(f"{'Precision':<12}" + "".join(f"{100 * self.mean_precision[a]:>8.2f}%" for a in ACTIONS))
        lines.append(f"{'Recall':<12}" + "".join(f"{100 * self.mean_recall[a]:>8.2f}%" for a in ACTIONS))
        lines.append("")
        lines.append("Mean confusion (rows: true class, % of sequences):")
        lines.append(f"{'':<12}" + "".join(f"{s:>9}" for s in short))
        for a in ACTIONS:
            row = self.mean_confusion[a]
            lines.append(f"{a:<12}" + "".join(f"{row[b]:>8.2f}%" for b in ACTIONS))
        return "\n".join(lines)


def evaluate_checkpoints(ckpt_paths, dataset: Dataset, model_cfg: ModelConfig, split: str = "test",
                         joints_from: str = "gt") -> EvalSummary:
    """Score each checkpoint on a split and average the metrics across them.

    `joints_from="pred"` builds the latent features from decoder output
    instead of the annotations; the split then needs confidence/PAF maps.
    """
    ckpt_paths = [Path(p) for p in ckpt_paths]
    if not ckpt_paths:
        raise ValueError("need at least one checkpoint")
    if joints_from not in ("gt", "pred"):
        raise ValueError(f"joints_from must be 'gt' or 'pred', got {joints_from!r}")
    counter = {"skipped": 0}
    from .model import _load_examples  # shares the loader with training

    data = _load_examples(dataset, split, need_flow=model_cfg.use_flow)
    examples = _prepare_eval_examples(dataset, data, model_cfg, counter, joints_from)
    if not examples:
        raise ValueError(f"no usable sequences in split {split!r}")
    gts = [ex[2] for ex in examples]
    latents = np.stack([ex[0] for ex in examples]).astype(np.float32)
    flows = np.stack([ex[1] for ex in examples]).astype(np.float32) if model_cfg.use_flow else None

    reports = []
    infos = []
    for path in ckpt_paths:
        net, manifest = load_checkpoint(path, expect_cfg=model_cfg)
        probs = predict(net, latents, flows)
        preds = probs.argmax(axis=1).tolist()
        reports.append(classification_report(preds, gts))
        infos.append({"epoch": manifest["epoch"], "val_accuracy": manifest["val_accuracy"], "path": path.name})

    k = len(ACTIONS)
    mean_precision = {a: float(np.mean([r.precision[i] for r in reports])) for i, a in enumerate(ACTIONS)}
    mean_recall = {a: float(np.mean([r.recall[i] for r in reports])) for i, a in enumerate(ACTIONS)}
    mean_conf = {
        a: {b: float(np.mean([r.confusion[i][j] for r in reports])) for j, b in enumerate(ACTIONS)}
        for i, a in enumerate(ACTIONS)
    }
    return EvalSummary(
        model_cfg=model_cfg.to_dict(),
        checkpoints=infos,
        per_checkpoint=[r.to_dict() for r in reports],
        mean_accuracy=float(np.mean([r.accuracy for r in reports])),
        mean_precision=mean_precision,
        mean_recall=mean_recall,
        mean_confusion=mean_conf,
        joints_from=joints_from,
    )


def write_report(summary: EvalSummary, json_path) -> None:
    """report.json plus an aligned report.txt next to it."""
    json_path = Path(json_path)
    json_path.write_text(json.dumps(summary.to_dict(), indent=1, sort_keys=True))
    json_path.with_suffix(".txt").write_text(summary.render_text() + "\n")
