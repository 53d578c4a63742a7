"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (explicit loops, direct
formulas) and shares no code with the package.
"""

import math

import numpy as np


def conv2d_loops(x, w, b=None, stride=1, padding=0, dilation=1):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((n, o, ho, wo), dtype=np.float64)
    for bi in range(n):
        for oi in range(o):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0 if b is None else float(b[oi])
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                r = y * stride - padding + i * dilation
                                q = xx * stride - padding + j * dilation
                                if 0 <= r < h and 0 <= q < wd:
                                    acc += float(x[bi, ci, r, q]) * float(w[oi, ci, i, j])
                    out[bi, oi, y, xx] = acc
    return out


def fold_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, 4 * c, h // 2, w // 2), dtype=x.dtype)
    for bi in range(n):
        for ci in range(c):
            for dy in range(2):
                for dx in range(2):
                    for i in range(h // 2):
                        for j in range(w // 2):
                            out[bi, 4 * ci + 2 * dy + dx, i, j] = x[bi, ci, 2 * i + dy, 2 * j + dx]
    return out


def folded_atrous_loops(x, w, b, dilation):
    """Fold by the index formula, dilated same-size conv, unfold by inverting the formula."""
    k = w.shape[2]
    folded = fold_loops(x)
    y = conv2d_loops(folded, w, b, padding=dilation * (k - 1) // 2, dilation=dilation)
    n, c4, h, wd = y.shape
    out = np.zeros((n, c4 // 4, 2 * h, 2 * wd))
    for bi in range(n):
        for ci in range(c4 // 4):
            for dy in range(2):
                for dx in range(2):
                    for i in range(h):
                        for j in range(wd):
                            out[bi, ci, 2 * i + dy, 2 * j + dx] = y[bi, 4 * ci + 2 * dy + dx, i, j]
    return out


def bilinear_loops(x, th, tw):
    """Half-pixel-centre bilinear resampling, one output pixel at a time."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, th, tw))

    def coord(i, src, dst):
        s = (i + 0.5) * src / dst - 0.5
        s = min(max(s, 0.0), src - 1.0)
        lo = int(math.floor(s))
        hi = min(lo + 1, src - 1)
        return lo, hi, s - lo

    for y in range(th):
        y0, y1, fy = coord(y, h, th)
        for xx in range(tw):
            x0, x1, fx = coord(xx, w, tw)
            out[:, :, y, xx] = ((1 - fy) * (1 - fx) * x[:, :, y0, x0] + (1 - fy) * fx * x[:, :, y0, x1]
                                + fy * (1 - fx) * x[:, :, y1, x0] + fy * fx * x[:, :, y1, x1])
    return out


# -- metrics -----------------------------------------------------------------


def pr_counts_enumerated(preds, gts):
    """(tp, fp, fn) at every threshold 0..255 by checking each pixel at each threshold."""
    counts = np.zeros((256, 3), dtype=np.int64)
    for pred, gt in zip(preds, gts):
        p = np.asarray(pred, dtype=np.float64)
        lo, hi = p.min(), p.max()
        if hi > lo:
            p = (p - lo) / (hi - lo)
        else:
            p = np.clip(p, 0, 1)
        levels = np.rint(p * 255)
        for t in range(256):
            for v, g in zip(levels.ravel(), np.asarray(gt).ravel()):
                pos = v >= t
                if pos and g:
                    counts[t, 0] += 1
                elif pos:
                    counts[t, 1] += 1
                elif g:
                    counts[t, 2] += 1
    return counts


def s_measure_reference(pred, gt, alpha=0.5):
    """Structure measure written from the published definition with plain loops."""
    pred = [[float(v) for v in row] for row in np.asarray(pred, dtype=np.float64)]
    gt = [[bool(v) for v in row] for row in np.asarray(gt)]
    h, w = len(gt), len(gt[0])
    n = h * w
    eps = np.finfo(np.float64).eps
    fg_total = sum(sum(row) for row in gt)
    mean_pred = sum(sum(row) for row in pred) / n
    if fg_total == 0:
        return 1.0 - mean_pred
    if fg_total == n:
        return mean_pred

    def obj(values):
        if not values:
            return 0.0
        mu = sum(values) / len(values)
        if len(values) > 1:
            sd = math.sqrt(sum((v - mu) ** 2 for v in values) / (len(values) - 1))
        else:
            sd = 0.0
        return 2.0 * mu / (mu * mu + 1.0 + sd + eps)

    fg_vals = [pred[i][j] for i in range(h) for j in range(w) if gt[i][j]]
    bg_vals = [1.0 - pred[i][j] for i in range(h) for j in range(w) if not gt[i][j]]
    u = fg_total / n
    s_obj = u * obj(fg_vals) + (1 - u) * obj(bg_vals)

    # centroid, 1-based, rounded half up as MATLAB's round does for positives
    sy = sum(i + 1 for i in range(h) for j in range(w) if gt[i][j])
    sx = sum(j + 1 for i in range(h) for j in range(w) if gt[i][j])
    cy = int(math.floor(sy / fg_total + 0.5))
    cx = int(math.floor(sx / fg_total + 0.5))

    def ssim(rows, cols):
        xs = [pred[i][j] for i in rows for j in cols]
        ys = [1.0 if gt[i][j] else 0.0 for i in rows for j in cols]
        m = len(xs)
        mx, my = sum(xs) / m, sum(ys) / m
        if m > 1:
            vx = sum((a - mx) ** 2 for a in xs) / (m - 1)
            vy = sum((b - my) ** 2 for b in ys) / (m - 1)
            cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / (m - 1)
        else:
            vx = vy = cov = 0.0
        a = 4 * mx * my * cov
        b = (mx * mx + my * my) * (vx + vy)
        if a != 0:
            return a / (b + eps)
        if b == 0:
            return 1.0
        return 0.0

    quads = [
        (range(0, cy), range(0, cx)),
        (range(0, cy), range(cx, w)),
        (range(cy, h), range(0, cx)),
        (range(cy, h), range(cx, w)),
    ]
    s_reg = 0.0
    for rows, cols in quads:
        area = len(rows) * len(cols)
        if area:
            s_reg += area / n * ssim(rows, cols)
    return max(alpha * s_obj + (1 - alpha) * s_reg, 0.0)
