"""Saliency evaluation: P-R curves, adaptive-threshold F-measure, MAE.

Saliency maps are expected as integer pixel values in [0, 255]; ground
truths are binary masks.  Binarization is strict (value > threshold), so
curves are reproducible bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

CURVE_POINTS = 256
DEFAULT_THETA_SQ = 0.3


@dataclass(frozen=True)
class ImageEval:
    precision: float
    recall: float
    f_measure: float
    mae: float
    pr: np.ndarray  # (256, 2) columns (precision, recall), row index = threshold


def _as_saliency(sm: np.ndarray) -> np.ndarray:
    sm = np.asarray(sm)
    if sm.ndim != 2:
        raise ContractError("saliency map must be 2-D")
    values = np.rint(sm).astype(np.int64)
    if values.min() < 0 or values.max() > 255:
        raise ContractError("saliency values must lie in [0, 255]")
    return values


def binarize(sm: np.ndarray, threshold: int) -> np.ndarray:
    """Pixels strictly above the threshold."""
    return _as_saliency(sm) > threshold


def precision_recall(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Set precision/recall of a binary prediction; empty prediction gives
    precision 0, empty ground truth gives recall 0."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ContractError(
            f"prediction {pred.shape} and ground truth {gt.shape} differ in shape"
        )
    inter = float(np.logical_and(pred, gt).sum())
    n_pred = float(pred.sum())
    n_gt = float(gt.sum())
    precision = inter / n_pred if n_pred > 0 else 0.0
    recall = inter / n_gt if n_gt > 0 else 0.0
    return precision, recall


def f_measure(
    precision: float, recall: float, theta_sq: float = DEFAULT_THETA_SQ
) -> float:
    denom = theta_sq * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + theta_sq) * precision * recall / denom


def mae(sm01: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute per-pixel difference; both inputs in [0, 1]."""
    sm01 = np.asarray(sm01, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if sm01.shape != gt.shape:
        raise ContractError(
            f"saliency {sm01.shape} and ground truth {gt.shape} differ in shape"
        )
    return float(np.abs(sm01 - gt).mean())


def pr_curve(sm: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Precision/recall at every threshold 0..255, as a (256, 2) array."""
    values = _as_saliency(sm)
    gt = np.asarray(gt).astype(bool)
    if values.shape != gt.shape:
        raise ContractError("saliency and ground truth differ in shape")
    hist_all = np.bincount(values.ravel(), minlength=CURVE_POINTS).astype(np.float64)
    hist_tp = np.bincount(values[gt].ravel(), minlength=CURVE_POINTS).astype(np.float64)
    # suffix sums: predictions with value > t
    above_all = np.concatenate([np.cumsum(hist_all[::-1])[::-1], [0.0]])
    above_tp = np.concatenate([np.cumsum(hist_tp[::-1])[::-1], [0.0]])
    pred = above_all[1:]
    tp = above_tp[1:]
    n_gt = float(gt.sum())
    precision = np.divide(tp, pred, out=np.zeros(CURVE_POINTS), where=pred > 0)
    recall = tp / n_gt if n_gt > 0 else np.zeros(CURVE_POINTS)
    return np.stack([precision, recall], axis=1)


def adaptive_threshold(sm: np.ndarray) -> int:
    """Twice the mean saliency value, rounded half-up and capped at 255."""
    values = _as_saliency(sm)
    return min(255, int(np.floor(2.0 * values.mean() + 0.5)))


def evaluate_pair(
    sm: np.ndarray, gt: np.ndarray, theta_sq: float = DEFAULT_THETA_SQ
) -> ImageEval:
    """Full per-image report: adaptive-threshold P/R/F, MAE, and the curve."""
    values = _as_saliency(sm)
    threshold = adaptive_threshold(values)
    p, r = precision_recall(values > threshold, gt)
    return ImageEval(
        precision=p,
        recall=r,
        f_measure=f_measure(p, r, theta_sq),
        mae=mae(values / 255.0, np.asarray(gt).astype(bool)),
        pr=pr_curve(values, gt),
    )


def mean_curve(curves: list) -> np.ndarray:
    """Dataset curve: pointwise mean over per-image curves."""
    if not curves:
        raise ContractError("cannot average an empty set of curves")
    return np.mean(np.stack(curves), axis=0)


def write_pr_curve_csv(path, curve: np.ndarray) -> None:
    if curve.shape != (CURVE_POINTS, 2):
        raise ContractError("curve must have shape (256, 2)")
    lines = ["threshold,precision,recall"]
    for t in range(CURVE_POINTS):
        lines.append(f"{t},{curve[t, 0]:.6f},{curve[t, 1]:.6f}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_csv(path, rows: list) -> None:
    """Rows are (name, ImageEval); a dataset-mean row is appended."""
    lines = ["image,precision,recall,f_measure,mae"]
    for name, ev in rows:
        lines.append(
            f"{name},{ev.precision:.6f},{ev.recall:.6f},{ev.f_measure:.6f},{ev.mae:.6f}"
        )
    if rows:
        means = [
            float(np.mean([getattr(ev, field) for _, ev in rows]))
            for field in ("precision", "recall", "f_measure", "mae")
        ]
        lines.append("mean," + ",".join(f"{m:.6f}" for m in means))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
