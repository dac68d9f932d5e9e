"""Discrimination and calibration metrics for binary classifiers.

Thresholding is strict everywhere: an instance is predicted positive
when its probability is ``> tau``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

PROB_EPS = 1e-7


def _as_arrays(labels, probs):
    y = np.asarray(labels, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} probabilities")
    return y, p


def _require_both_classes(y):
    n_pos = int(np.sum(y == 1))
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("both classes must be present")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(labels, probs, tau: float) -> ConfusionCounts:
    y, p = _as_arrays(labels, probs)
    pred = p > tau
    pos = y == 1
    return ConfusionCounts(
        tp=int(np.sum(pos & pred)),
        tn=int(np.sum(~pos & ~pred)),
        fp=int(np.sum(~pos & pred)),
        fn=int(np.sum(pos & ~pred)),
    )


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall and F1, with 0 substituted for any 0/0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class CurvePoints:
    """Points of a ROC or PR curve, one per distinct threshold.

    ``thresholds`` is strictly decreasing; point ``k`` classifies as
    positive every instance with probability ``>= thresholds[k]``.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray


def _cumulative_counts(y, p):
    # counts of positives/negatives scoring >= each distinct threshold, descending
    order = np.argsort(-p, kind="mergesort")
    p_sorted = p[order]
    y_sorted = y[order]
    last_of_group = np.r_[np.diff(p_sorted) != 0, True]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = np.cumsum(1 - y_sorted)[last_of_group]
    return tps, fps, p_sorted[last_of_group]


def roc_curve(labels, probs) -> CurvePoints:
    y, p = _as_arrays(labels, probs)
    _require_both_classes(y)
    tps, fps, thr = _cumulative_counts(y, p)
    return CurvePoints("roc", fps / fps[-1], tps / tps[-1], thr)


def auc_roc(labels, probs) -> float:
    """Trapezoidal area under the ROC curve, anchored at (0, 0)."""
    curve = roc_curve(labels, probs)
    x = np.r_[0.0, curve.x]
    y = np.r_[0.0, curve.y]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def pr_curve(labels, probs) -> CurvePoints:
    y, p = _as_arrays(labels, probs)
    if not np.any(y == 1):
        raise ValueError("no positive labels; precision-recall curve undefined")
    tps, fps, thr = _cumulative_counts(y, p)
    return CurvePoints("pr", tps / tps[-1], tps / (tps + fps), thr)


def auc_pr(labels, probs) -> float:
    """Average precision: sum over thresholds of precision times recall gain."""
    curve = pr_curve(labels, probs)
    recall_gain = np.diff(np.r_[0.0, curve.x])
    return float(np.sum(recall_gain * curve.y))


def bce(labels, probs) -> float:
    y, p = _as_arrays(labels, probs)
    p = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def brier(labels, probs) -> float:
    y, p = _as_arrays(labels, probs)
    return float(np.mean((y - p) ** 2))


def mdr(probs) -> float:
    """Mean default rate in percent."""
    p = np.asarray(probs, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("mean default rate of an empty vector")
    return float(np.mean(p) * 100)


@dataclass(frozen=True)
class ReliabilityBins:
    """Equal-width reliability bins over (0, 1].

    Bin ``m`` (1-based) covers ``((m-1)/M, m/M]``; empty bins hold NaN for
    ``accuracy`` and ``confidence``.
    """

    n_bins: int
    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return np.arange(self.n_bins) / self.n_bins

    @property
    def upper(self) -> np.ndarray:
        return np.arange(1, self.n_bins + 1) / self.n_bins

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_index", "lower", "upper", "count", "accuracy", "confidence"])
            for m in range(self.n_bins):
                w.writerow([
                    m + 1,
                    _fmt(self.lower[m]),
                    _fmt(self.upper[m]),
                    int(self.counts[m]),
                    _fmt(self.accuracy[m]),
                    _fmt(self.confidence[m]),
                ])


def bin_index(probs, n_bins: int) -> np.ndarray:
    """0-based bin of each probability; 0 itself goes to the first bin."""
    p = np.asarray(probs, dtype=float)
    idx = np.ceil(p * n_bins).astype(int)
    # undo round-up when p*M lands a hair above an integer
    idx = np.where((idx - 1) / n_bins >= p, idx - 1, idx)
    return np.clip(idx, 1, n_bins) - 1


def reliability_bins(labels, probs, tau: float | None = None, n_bins: int = 10) -> ReliabilityBins:
    """Per-bin counts, accuracy and mean confidence.

    With ``tau=None`` a bin's accuracy is its observed event rate (share of
    positive labels).  With a threshold it is the share of instances whose
    thresholded prediction ``p > tau`` equals the label.
    """
    if n_bins < 1:
        raise ValueError("number of bins must be >= 1")
    y, p = _as_arrays(labels, probs)
    idx = bin_index(p, n_bins)
    if tau is None:
        hits = y
    else:
        hits = ((p > tau).astype(float) == y).astype(float)
    counts = np.bincount(idx, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=hits, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=p, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, acc_sum / counts, np.nan)
        conf = np.where(counts > 0, conf_sum / counts, np.nan)
    return ReliabilityBins(n_bins, counts, acc, conf)


def ece(bins: ReliabilityBins) -> float:
    filled = bins.counts > 0
    if not filled.any():
        raise ValueError("all reliability bins are empty")
    gaps = np.abs(bins.accuracy[filled] - bins.confidence[filled])
    return float(np.sum(bins.counts[filled] / bins.n * gaps))


def mce(bins: ReliabilityBins) -> float:
    filled = bins.counts > 0
    if not filled.any():
        raise ValueError("all reliability bins are empty")
    return float(np.max(np.abs(bins.accuracy[filled] - bins.confidence[filled])))


@dataclass
class MetricsReport:
    confusion: ConfusionCounts
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    auc_pr: float | None
    bce: float
    brier: float
    mdr_percent: float
    ece: float
    mce: float
    bins: ReliabilityBins = field(repr=False)
    tau: float = 0.5

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("confusion", "bins")}
        out["confusion"] = asdict(self.confusion)
        out["bins"] = {
            "n_bins": self.bins.n_bins,
            "counts": self.bins.counts.tolist(),
            "accuracy": [None if np.isnan(a) else float(a) for a in self.bins.accuracy],
            "confidence": [None if np.isnan(c) else float(c) for c in self.bins.confidence],
        }
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(dumps(self.to_dict()) + "\n")


def full_report(labels, probs, tau: float, n_bins: int = 10,
                bin_accuracy: str = "events") -> MetricsReport:
    """Every discrimination and calibration metric for one set of predictions.

    ``bin_accuracy`` selects the reliability-bin accuracy: ``"events"`` for
    the observed event rate, ``"thresholded"`` for agreement of ``p > tau``
    with the label.  The curve areas are ``None`` when only one class is
    present.
    """
    if bin_accuracy not in ("events", "thresholded"):
        raise ValueError(f"unknown bin accuracy {bin_accuracy!r}")
    y, p = _as_arrays(labels, probs)
    c = confusion_counts(y, p, tau)
    precision, recall, f1 = precision_recall_f1(c)
    n_pos = int(np.sum(y == 1))
    has_both = 0 < n_pos < y.size
    bins = reliability_bins(y, p, tau if bin_accuracy == "thresholded" else None, n_bins)
    return MetricsReport(
        confusion=c,
        precision=precision,
        recall=recall,
        f1=f1,
        auc_roc=auc_roc(y, p) if has_both else None,
        auc_pr=auc_pr(y, p) if has_both else None,
        bce=bce(y, p),
        brier=brier(y, p),
        mdr_percent=mdr(p),
        ece=ece(bins),
        mce=mce(bins),
        bins=bins,
        tau=float(tau),
    )


def _fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def dumps(obj) -> str:
    """JSON text; floats use ``repr`` so they round-trip bit-exactly."""
    return json.dumps(obj, indent=2, allow_nan=False)
