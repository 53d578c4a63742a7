"""Saliency evaluation: PR curve, max F-measure, MAE and S-measure.

Prediction maps are arrays of reals; ground truths are {0, 1} arrays of the
same shape. The PR curve and F-measure min-max normalise each prediction and
quantise it to 256 grey levels before thresholding; MAE and S-measure use
the prediction values as given (they must lie in [0, 1]).
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .data import netpbm

BETA2 = 0.3
ALPHA = 0.5
EPS = np.finfo(np.float64).eps


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim != 2:
        raise ValueError(f"expected 2-D maps, got shape {pred.shape}")
    if not np.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary (0/1)")
    return pred, gt.astype(bool)


def normalize(pred):
    """Min-max normalise to [0, 1]; constant maps are only clipped."""
    pred = np.asarray(pred, dtype=np.float64)
    lo, hi = pred.min(), pred.max()
    if hi - lo < EPS:
        return np.clip(pred, 0.0, 1.0)
    return (pred - lo) / (hi - lo)


def quantize(pred):
    """Normalised prediction as integer grey levels 0..255."""
    return np.rint(normalize(pred) * 255.0).astype(np.int64)


def threshold_counts(pred, gt):
    """TP, FP and FN for every threshold t = 0..255 (positive iff level >= t)."""
    pred, gt = _check_pair(pred, gt)
    q = quantize(pred)
    fg_hist = np.bincount(q[gt], minlength=256)
    bg_hist = np.bincount(q[~gt], minlength=256)
    # number of pixels with level >= t
    tp = np.cumsum(fg_hist[::-1])[::-1]
    fp = np.cumsum(bg_hist[::-1])[::-1]
    fn = gt.sum() - tp
    return tp, fp, fn


def _precision_recall(tp, fp, fn):
    tp = tp.astype(np.float64)
    pos = tp + fp
    real = tp + fn
    precision = np.where(pos > 0, tp / np.maximum(pos, 1), 1.0)
    recall = np.where(real > 0, tp / np.maximum(real, 1), 1.0)
    return precision, recall


def pr_curve(preds, gts):
    """Dataset-level (256, 3) array of (threshold, precision, recall).

    Counts are accumulated over all images before dividing. An empty
    predicted set gives precision 1; a ground truth with no foreground
    gives recall 1.
    """
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground truths")
    if not preds:
        raise ValueError("need at least one prediction")
    tp = np.zeros(256, dtype=np.int64)
    fp = np.zeros(256, dtype=np.int64)
    fn = np.zeros(256, dtype=np.int64)
    for p, g in zip(preds, gts):
        a, b, c = threshold_counts(p, g)
        tp += a
        fp += b
        fn += c
    precision, recall = _precision_recall(tp, fp, fn)
    return np.column_stack([np.arange(256), precision, recall])


def f_beta(precision, recall, beta2=BETA2):
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    den = beta2 * precision + recall
    return np.where(den > 0, (1 + beta2) * precision * recall / np.where(den > 0, den, 1.0), 0.0)


def f_measure_curve(preds, gts, beta2=BETA2):
    curve = pr_curve(preds, gts)
    return f_beta(curve[:, 1], curve[:, 2], beta2)


def f_measure_max(preds, gts, beta2=BETA2):
    return float(f_measure_curve(preds, gts, beta2).max())


def mae(pred, gt):
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


# -- S-measure --------------------------------------------------------------


def _object_score(values):
    """Similarity of a region's prediction values to an all-ones target."""
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def s_object(pred, gt):
    fg = gt.mean()
    o_fg = _object_score(pred[gt])
    o_bg = _object_score(1.0 - pred[~gt])
    return fg * o_fg + (1.0 - fg) * o_bg


def _round_half_up(v):
    return int(np.floor(v + 0.5))


def centroid(gt):
    """1-based split point (x, y): the foreground centroid rounded half up."""
    h, w = gt.shape
    if not gt.any():
        return _round_half_up(w / 2), _round_half_up(h / 2)
    ys, xs = np.nonzero(gt)
    return _round_half_up(xs.mean() + 1), _round_half_up(ys.mean() + 1)


def _ssim(pred, gt):
    n = pred.size
    x = pred.mean()
    y = gt.mean()
    sx = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    if beta == 0:
        return 1.0
    return 0.0


def s_region(pred, gt):
    h, w = gt.shape
    area = h * w
    x, y = centroid(gt)
    g = gt.astype(np.float64)
    score = 0.0
    for rows, cols in ((slice(0, y), slice(0, x)), (slice(0, y), slice(x, w)),
                       (slice(y, h), slice(0, x)), (slice(y, h), slice(x, w))):
        gp = g[rows, cols]
        if gp.size == 0:
            continue
        score += gp.size / area * _ssim(pred[rows, cols], gp)
    return score


def s_measure(pred, gt, alpha=ALPHA):
    """Structure measure alpha*S_o + (1-alpha)*S_r, floored at 0."""
    pred, gt = _check_pair(pred, gt)
    fg = gt.mean()
    if fg == 0:
        return float(1.0 - pred.mean())
    if fg == 1:
        return float(pred.mean())
    score = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt)
    return float(max(score, 0.0))


# -- dataset evaluation -----------------------------------------------------


@dataclass
class MetricsReport:
    f_beta_max: float
    f_beta_mean: float
    mae: float
    s_measure: float
    pr: np.ndarray = field(repr=False)
    count: int = 0

    def rows(self):
        return [
            ("max_f_beta", self.f_beta_max),
            ("mean_f_beta", self.f_beta_mean),
            ("mae", self.mae),
            ("s_measure", self.s_measure),
        ]

    def write_csv(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for name, val in self.rows():
                w.writerow([name, f"{val:.6f}"])
        with open(os.path.join(out_dir, "pr_curve.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.pr:
                w.writerow([int(t), f"{p:.6f}", f"{r:.6f}"])


def evaluate(preds, gts, beta2=BETA2, alpha=ALPHA):
    """Aggregate metrics over paired maps; MAE and S-measure are per-image means."""
    preds, gts = list(preds), list(gts)
    pr = pr_curve(preds, gts)
    fcurve = f_beta(pr[:, 1], pr[:, 2], beta2)
    maes = [mae(p, g) for p, g in zip(preds, gts)]
    sms = [s_measure(p, g, alpha) for p, g in zip(preds, gts)]
    return MetricsReport(
        f_beta_max=float(fcurve.max()),
        f_beta_mean=float(fcurve.mean()),
        mae=float(np.mean(maes)),
        s_measure=float(np.mean(sms)),
        pr=pr,
        count=len(preds),
    )


def evaluate_dataset(pred_dir, gt_dir):
    """Match ``*.pgm`` files by name in two directories and evaluate them."""
    preds = {f for f in os.listdir(pred_dir) if f.endswith(".pgm")}
    gts = {f for f in os.listdir(gt_dir) if f.endswith(".pgm")}
    unmatched = sorted(preds ^ gts)
    if unmatched:
        raise FileNotFoundError(f"unmatched files: {unmatched}")
    if not preds:
        raise FileNotFoundError(f"no .pgm files in {pred_dir}")
    names = sorted(preds)
    p = [netpbm.load_map(os.path.join(pred_dir, n)) for n in names]
    g = [netpbm.load_mask(os.path.join(gt_dir, n)) for n in names]
    return evaluate(p, g)
