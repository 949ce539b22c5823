"""Evaluation protocol: clip-level unknown detection and closed-set
multi-label classification (micro/macro F1 and mAP), aggregated over
dataset variants as mean with sample standard deviation."""

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class UnknownDetectionReport:
    """Binary confusion over clips; "unknown present" is the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.total

    def as_dict(self):
        return {"accuracy": self.accuracy, "tp": self.tp, "tn": self.tn,
                "fp": self.fp, "fn": self.fn}


def unknown_detection_accuracy(decisions, truth):
    """Score 0/1 unknown-presence decisions against the true flags."""
    decisions = [int(d) for d in decisions]
    truth = [int(t) for t in truth]
    if len(decisions) != len(truth):
        raise ValueError("decisions and truth must have equal length")
    tp = sum(1 for d, t in zip(decisions, truth) if d == 1 and t == 1)
    tn = sum(1 for d, t in zip(decisions, truth) if d == 0 and t == 0)
    fp = sum(1 for d, t in zip(decisions, truth) if d == 1 and t == 0)
    fn = sum(1 for d, t in zip(decisions, truth) if d == 0 and t == 1)
    return UnknownDetectionReport(tp=tp, tn=tn, fp=fp, fn=fn)


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def micro_f1(pred_sets, true_sets):
    """F1 over TP/FP/FN pooled across all classes and clips."""
    if len(pred_sets) != len(true_sets):
        raise ValueError("prediction/truth length mismatch")
    if not pred_sets:
        raise ValueError("empty evaluation set")
    tp = fp = fn = 0
    for pred, true in zip(pred_sets, true_sets):
        pred, true = set(pred), set(true)
        tp += len(pred & true)
        fp += len(pred - true)
        fn += len(true - pred)
    return _f1(tp, fp, fn)


def macro_f1(pred_sets, true_sets, class_ids):
    """Unweighted mean of per-class F1, with the 0/0 -> 0 convention."""
    if len(pred_sets) != len(true_sets):
        raise ValueError("prediction/truth length mismatch")
    if not pred_sets:
        raise ValueError("empty evaluation set")
    scores = []
    for c in class_ids:
        tp = sum(1 for p, t in zip(pred_sets, true_sets) if c in p and c in t)
        fp = sum(1 for p, t in zip(pred_sets, true_sets) if c in p and c not in t)
        fn = sum(1 for p, t in zip(pred_sets, true_sets) if c not in p and c in t)
        scores.append(_f1(tp, fp, fn))
    return float(np.mean(scores))


def average_precision(scores, truth):
    """AP for one class: precision at each positive rank, averaged.

    Clips are ranked by descending score with ties kept in clip order.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=int)
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = truth[order]
    ranks = np.nonzero(hits)[0] + 1
    precisions = np.cumsum(hits)[ranks - 1] / ranks
    return float(precisions.sum() / n_pos)


def mean_average_precision(score_matrix, truth_matrix, class_ids=None):
    """Unweighted mean AP over classes with at least one positive.

    Returns (mAP, per-class AP dict); classes without positives are
    excluded and logged.
    """
    score_matrix = np.asarray(score_matrix, dtype=float)
    truth_matrix = np.asarray(truth_matrix, dtype=int)
    if score_matrix.shape != truth_matrix.shape:
        raise ValueError("score and truth matrices must have the same shape")
    n_classes = score_matrix.shape[1]
    if class_ids is None:
        class_ids = list(range(n_classes))
    per_class, skipped = {}, []
    for j, c in enumerate(class_ids):
        if truth_matrix[:, j].sum() == 0:
            skipped.append(c)
            continue
        per_class[c] = average_precision(score_matrix[:, j], truth_matrix[:, j])
    if skipped:
        log.info("mAP: excluded %d classes without positives: %s", len(skipped), skipped)
    if not per_class:
        raise ValueError("no class has a positive example")
    return float(np.mean(list(per_class.values()))), per_class


@dataclass
class ClosedSetReport:
    micro_f1: float
    macro_f1: float
    map: float
    per_class_ap: dict

    def as_dict(self):
        return {"micro_f1": self.micro_f1, "macro_f1": self.macro_f1, "map": self.map}


def closed_set_report(pred_sets, true_sets, score_matrix, class_ids):
    """All closed-set metrics for one model on one variant.

    Every true label must be a closed-set class; a clip carrying an
    out-of-vocabulary label means the caller failed to filter unknown
    clips and is rejected outright.
    """
    known = set(class_ids)
    for i, t in enumerate(true_sets):
        stray = set(t) - known
        if stray:
            raise ValueError(f"clip {i} carries non-closed-set classes {sorted(stray)}")
    truth_matrix = np.zeros((len(true_sets), len(class_ids)), dtype=int)
    pos = {c: j for j, c in enumerate(class_ids)}
    for i, t in enumerate(true_sets):
        for c in t:
            truth_matrix[i, pos[c]] = 1
    map_score, per_class = mean_average_precision(score_matrix, truth_matrix, class_ids)
    return ClosedSetReport(
        micro_f1=micro_f1(pred_sets, true_sets),
        macro_f1=macro_f1(pred_sets, true_sets, class_ids),
        map=map_score,
        per_class_ap=per_class,
    )


@dataclass
class VariantAggregate:
    """Mean and sample SD (ddof=1) of each metric over the variants."""

    stats: dict                 # metric -> (mean, sd)
    n_variants: int

    def mean(self, metric):
        return self.stats[metric][0]

    def sd(self, metric):
        return self.stats[metric][1]


def aggregate_variants(reports, expected_variants=5):
    """Aggregate one report dict per variant into mean (SD) statistics."""
    if len(reports) != expected_variants:
        raise ValueError(f"expected {expected_variants} variant reports, got {len(reports)}")
    keys = set(reports[0])
    for r in reports[1:]:
        if set(r) != keys:
            raise ValueError("variant reports carry different metrics")
    stats = {}
    for k in sorted(keys):
        values = np.array([r[k] for r in reports], dtype=float)
        stats[k] = (float(values.mean()), float(values.std(ddof=1)))
    return VariantAggregate(stats=stats, n_variants=len(reports))


def format_mean_sd(mean, sd, kind):
    """Render "mean (SD)": percent with 1 decimal for accuracies,
    3 decimals for F1/mAP-style fractions."""
    if kind == "accuracy":
        return f"{100 * mean:.1f} ({100 * sd:.1f})"
    return f"{mean:.3f} ({sd:.3f})"
