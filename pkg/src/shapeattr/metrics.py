"""Rank and classification statistics: AUROC/EER, Spearman, phi, response curves."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidArgument, UndefinedMetric

EXACT_PAIR_LIMIT = 250_000


def _scores(pos, neg):
    pos = np.asarray(pos, dtype=np.float64).reshape(-1)
    neg = np.asarray(neg, dtype=np.float64).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetric("AUROC needs at least one positive and one negative score")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise InvalidArgument("scores must be finite")
    return pos, neg


def auroc(positives, negatives):
    """P(positive > negative) + P(tie) / 2 (the Mann-Whitney statistic)."""
    pos, neg = _scores(positives, negatives)
    n1, n0 = pos.size, neg.size
    if n1 * n0 <= EXACT_PAIR_LIMIT:
        diff = pos[:, None] - neg[None, :]
        wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
        return float(wins / (n1 * n0))
    r = rankdata(np.concatenate([pos, neg]), method="average")
    u = r[:n1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def auroc_ranked(positives, negatives):
    """Rank-sum form of :func:`auroc`, used for large inputs."""
    pos, neg = _scores(positives, negatives)
    n1, n0 = pos.size, neg.size
    r = rankdata(np.concatenate([pos, neg]), method="average")
    return float((r[:n1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def roc_curve(positives, negatives):
    """ROC points over every distinct threshold (score >= t is called positive) and the EER.

    The EER is read off the ROC convex hull: the crossing of FPR = 1 - TPR is
    linearly interpolated between adjacent hull vertices.
    """
    pos, neg = _scores(positives, negatives)
    thr = np.unique(np.concatenate([pos, neg]))[::-1]
    sp = np.sort(pos)
    sn = np.sort(neg)
    tpr = (pos.size - np.searchsorted(sp, thr, side="left")) / pos.size
    fpr = (neg.size - np.searchsorted(sn, thr, side="left")) / neg.size
    fpr = np.concatenate([[0.0], fpr])
    tpr = np.concatenate([[0.0], tpr])
    thr = np.concatenate([[np.inf], thr])
    curve = RocCurve(fpr, tpr, thr)
    return curve, _eer_from_hull(fpr, tpr)


def _upper_hull(x, y):
    pts = sorted(set(zip(x.tolist(), y.tolist())))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.array(hull)


def _eer_from_hull(fpr, tpr):
    hull = _upper_hull(fpr, tpr)
    fx, ty = hull[:, 0], hull[:, 1]
    g = fx - (1.0 - ty)  # FPR - FNR, increasing along the hull
    for i in range(len(g) - 1):
        if g[i] <= 0 <= g[i + 1]:
            if g[i + 1] == g[i]:
                return float(fx[i])
            t = -g[i] / (g[i + 1] - g[i])
            return float(fx[i] + t * (fx[i + 1] - fx[i]))
    return float(fx[0]) if g[0] > 0 else float(fx[-1])


def eer(positives, negatives):
    return roc_curve(positives, negatives)[1]


def average_ranks(x):
    return rankdata(np.asarray(x, dtype=np.float64), method="average")


def spearman(x, y):
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise UndefinedMetric(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise UndefinedMetric("spearman needs at least 3 points")
    rx = average_ranks(x) - (x.size + 1) / 2.0
    ry = average_ranks(y) - (y.size + 1) / 2.0
    sxx = np.dot(rx, rx)
    syy = np.dot(ry, ry)
    if sxx == 0 or syy == 0:
        raise UndefinedMetric("spearman is undefined for constant input")
    return float(np.clip(np.dot(rx, ry) / np.sqrt(sxx * syy), -1.0, 1.0))


def spearman_or_nan(x, y):
    try:
        return spearman(x, y)
    except UndefinedMetric:
        return float("nan")


@dataclass
class ResponseCurve:
    background_id: int
    params: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.responses = np.asarray(self.responses, dtype=np.float64)
        order = np.argsort(self.params, kind="stable")
        self.params = self.params[order]
        self.responses = self.responses[order]
        if self.params.size and (np.diff(self.params) <= 0).any():
            raise InvalidArgument("curve parameters must be distinct")


def centered_deviation(curves):
    """Per-parameter population std after removing each curve's own mean.

    Returns ``(std, mean_curve)``; the mean is over the raw (uncentred) curves.
    """
    if not curves:
        raise InvalidArgument("need at least one curve")
    grid = curves[0].params
    for c in curves[1:]:
        if c.params.shape != grid.shape or not np.array_equal(c.params, grid):
            raise InvalidArgument("all curves must share one parameter grid")
    R = np.stack([c.responses for c in curves])
    centred = R - R.mean(axis=1, keepdims=True)
    return centred.std(axis=0), R.mean(axis=0)


def response_range(responses):
    """max - min of a (background-averaged) response curve."""
    r = responses.responses if isinstance(responses, ResponseCurve) else np.asarray(responses, dtype=np.float64)
    if r.size == 0:
        raise InvalidArgument("empty curve")
    return float(r.max() - r.min())


def phi_correlation(labels, unlabeled=-1):
    """Pairwise phi coefficients over rows where both attributes are labeled.

    Undefined entries (fewer than 2 co-labeled rows, or a constant column
    within them) are NaN.
    """
    Y = np.asarray(labels)
    n_attr = Y.shape[1]
    out = np.full((n_attr, n_attr), np.nan)
    for i in range(n_attr):
        for j in range(i, n_attr):
            m = (Y[:, i] != unlabeled) & (Y[:, j] != unlabeled)
            if m.sum() < 2:
                continue
            a = Y[m, i] == 1
            b = Y[m, j] == 1
            n11 = np.sum(a & b)
            n10 = np.sum(a & ~b)
            n01 = np.sum(~a & b)
            n00 = np.sum(~a & ~b)
            den = float(n11 + n10) * float(n01 + n00) * float(n11 + n01) * float(n10 + n00)
            if den == 0:
                continue
            out[i, j] = out[j, i] = (float(n11) * n00 - float(n10) * n01) / np.sqrt(den)
    return out


def write_csv(path, header, rows):
    """Comma-separated table with a header row; floats written with repr precision."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
