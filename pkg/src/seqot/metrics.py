"""Alignment and segmentation quality metrics.

Segmentation metrics relabel predicted clusters through a minimum-cost
matching against ground-truth classes before scoring, either once over the
whole dataset or independently per video.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import kendalltau as _scipy_kendalltau

from .errors import ConfigError, DataError, DimensionError


@dataclass
class MetricReport:
    """All alignment/segmentation metrics for one evaluation run."""

    acc_at: dict[float, float]
    progress_r2: float
    kendall_tau: float
    ap_at: dict[int, float]
    mof: float
    f1: float
    miou: float

    def to_json_dict(self) -> dict:
        return {
            "acc_at": {f"{k:g}": v for k, v in self.acc_at.items()},
            "progress_r2": self.progress_r2,
            "kendall_tau": self.kendall_tau,
            "ap_at": {str(k): v for k, v in self.ap_at.items()},
            "mof": self.mof,
            "f1": self.f1,
            "miou": self.miou,
        }


def kendall_tau(pairs) -> float:
    """Kendall rank correlation (tau-b) of the matched index sequence.

    `pairs` is a sequence of (i, j) matches; the correlation is computed
    between the i- and j-sequences.  Degenerate inputs with zero variance
    on either side return 0.0.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise DataError("kendall_tau needs at least 2 matched pairs")
    order = sorted(range(len(pairs)), key=lambda t: (pairs[t][0], pairs[t][1]))
    xs = np.array([pairs[t][0] for t in order], dtype=float)
    ys = np.array([pairs[t][1] for t in order], dtype=float)
    tau = _scipy_kendalltau(xs, ys, variant="b").statistic
    return float(tau) if np.isfinite(tau) else 0.0


def phase_classification(
    train_embeddings: np.ndarray,
    train_labels: np.ndarray,
    test_embeddings: np.ndarray,
    test_labels: np.ndarray,
    fraction: float,
    seed: int = 0,
) -> float:
    """Nearest-class-centroid accuracy with a label-fraction budget.

    Fits class centroids on the first ceil(fraction * n_train) training
    embeddings after a fixed seeded shuffle, then scores accuracy on the
    held-out embeddings.  Classes that lose all their examples to the
    subsampling are skipped with a warning.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    train_embeddings = np.asarray(train_embeddings, dtype=float)
    train_labels = np.asarray(train_labels)
    n = train_embeddings.shape[0]
    keep = int(np.ceil(fraction * n))
    perm = np.random.default_rng(seed).permutation(n)[:keep]
    emb = train_embeddings[perm]
    labs = train_labels[perm]

    all_classes = np.unique(train_labels)
    centroids, centroid_classes = [], []
    for c in all_classes:
        members = emb[labs == c]
        if members.shape[0] == 0:
            warnings.warn(f"class {c} has no examples at fraction {fraction}; skipped")
            continue
        centroids.append(members.mean(axis=0))
        centroid_classes.append(c)
    centroids = np.array(centroids)
    centroid_classes = np.array(centroid_classes)

    d2 = ((np.asarray(test_embeddings, dtype=float)[:, None, :] - centroids[None]) ** 2).sum(
        axis=2
    )
    pred = centroid_classes[np.argmin(d2, axis=1)]
    return float(np.mean(pred == np.asarray(test_labels)))


def phase_progress(
    train_embeddings: np.ndarray,
    train_targets: np.ndarray,
    test_videos: list[tuple[np.ndarray, np.ndarray]],
) -> float:
    """Least-squares regression from embeddings to per-frame progress.

    Returns the coefficient of determination averaged over held-out videos.
    A rank-deficient design falls back to ridge with lambda = 1e-6 (with a
    warning); a held-out video with constant targets scores 0.
    """
    emb = np.asarray(train_embeddings, dtype=float)
    y = np.asarray(train_targets, dtype=float)
    if np.any(y < -1e-9) or np.any(y > 1 + 1e-9):
        raise DataError("progress targets must lie in [0, 1]")
    design = np.hstack([emb, np.ones((emb.shape[0], 1))])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        warnings.warn("rank-deficient design; using ridge fallback (lambda=1e-6)")
        gram = design.T @ design + 1e-6 * np.eye(design.shape[1])
        w = np.linalg.solve(gram, design.T @ y)
    else:
        w = np.linalg.lstsq(design, y, rcond=None)[0]

    scores = []
    for emb_v, y_v in test_videos:
        emb_v = np.asarray(emb_v, dtype=float)
        y_v = np.asarray(y_v, dtype=float)
        pred = np.hstack([emb_v, np.ones((emb_v.shape[0], 1))]) @ w
        ss_tot = float(((y_v - y_v.mean()) ** 2).sum())
        if ss_tot == 0.0:
            scores.append(0.0)
            continue
        ss_res = float(((y_v - pred) ** 2).sum())
        scores.append(1.0 - ss_res / ss_tot)
    if not scores:
        raise DataError("phase_progress needs at least one held-out video")
    return float(np.mean(scores))


def frame_retrieval_ap(
    query_embeddings: np.ndarray,
    query_labels: np.ndarray,
    gallery_embeddings: np.ndarray,
    gallery_labels: np.ndarray,
    k: int,
) -> float:
    """Mean fraction of same-label frames among the k cosine-nearest
    gallery frames, averaged over queries."""
    gallery_embeddings = np.asarray(gallery_embeddings, dtype=float)
    if gallery_embeddings.shape[0] < k:
        raise ConfigError(f"gallery size {gallery_embeddings.shape[0]} < k={k}")
    q = np.asarray(query_embeddings, dtype=float)
    qn = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-30)
    gn = gallery_embeddings / np.maximum(
        np.linalg.norm(gallery_embeddings, axis=1, keepdims=True), 1e-30
    )
    dist = 1.0 - qn @ gn.T
    top = np.argsort(dist, axis=1, kind="stable")[:, :k]
    hits = np.asarray(gallery_labels)[top] == np.asarray(query_labels)[:, None]
    return float(hits.mean())


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square cost matrix.

    Returns perm with perm[row] = column.  Among all minimum-cost
    matchings the lexicographically smallest assignment vector is chosen,
    by fixing rows in order to the smallest feasible column.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"hungarian_match needs a square matrix, got {cost.shape}")
    k = cost.shape[0]

    def optimum(sub: np.ndarray) -> float:
        if sub.size == 0:
            return 0.0
        rows, cols = linear_sum_assignment(sub)
        return float(sub[rows, cols].sum())

    total = optimum(cost)
    tol = 1e-9 * max(1.0, abs(total))
    perm = np.empty(k, dtype=int)
    free_cols = list(range(k))
    remaining = total
    for i in range(k):
        sub_rows = np.arange(i + 1, k)
        for pos, j in enumerate(free_cols):
            rest_cols = free_cols[:pos] + free_cols[pos + 1 :]
            rest = optimum(cost[np.ix_(sub_rows, rest_cols)])
            if cost[i, j] + rest <= remaining + tol:
                perm[i] = j
                remaining -= cost[i, j]
                free_cols.pop(pos)
                break
        else:
            raise RuntimeError("no feasible column found; inconsistent optimum")
    return perm


def pad_square(cost: np.ndarray, pad_value: float | None = None) -> np.ndarray:
    """Pad a rectangular cost matrix to square with a large constant."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == m:
        return cost
    k = max(n, m)
    if pad_value is None:
        pad_value = float(cost.max()) + 1.0 if cost.size else 1.0
    out = np.full((k, k), pad_value)
    out[:n, :m] = cost
    return out


class MatchingScope(enum.Enum):
    FULL_DATASET = "full-dataset"
    PER_VIDEO = "per-video"


def _check_labels(seqs: list[np.ndarray], name: str) -> int:
    top = 0
    for v, arr in enumerate(seqs):
        arr = np.asarray(arr)
        if arr.size and arr.min() < 0:
            raise DataError(f"{name}[{v}] has labels below 0")
        if arr.size:
            top = max(top, int(arr.max()) + 1)
    return top


def _confusion(pred: np.ndarray, gt: np.ndarray, n_pred: int, n_gt: int) -> np.ndarray:
    conf = np.zeros((n_pred, n_gt))
    np.add.at(conf, (pred, gt), 1.0)
    return conf


def _match_clusters(pred_seqs, gt_seqs, n_pred, n_gt) -> dict[int, int]:
    conf = np.zeros((n_pred, n_gt))
    for pred, gt in zip(pred_seqs, gt_seqs):
        conf += _confusion(pred, gt, n_pred, n_gt)
    perm = hungarian_match(pad_square(-conf, pad_value=0.0))
    return {i: int(perm[i]) for i in range(n_pred)}


def _segments(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """(label, start, end-exclusive) runs of constant label."""
    out = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            out.append((int(labels[start]), start, i))
            start = i
    return out


def _segment_f1(pred_seqs, gt_seqs, n_gt, iou_thresh: float = 0.5) -> float:
    """Mean per-class segment F1; a predicted segment scores when it overlaps
    a same-class ground-truth segment at IoU >= 0.5, matched one-to-one."""
    tp = np.zeros(n_gt)
    n_pred_segs = np.zeros(n_gt)
    n_gt_segs = np.zeros(n_gt)
    for pred, gt in zip(pred_seqs, gt_seqs):
        pred_segs = [s for s in _segments(pred) if s[0] < n_gt]
        gt_segs = _segments(gt)
        for c, _, _ in pred_segs:
            n_pred_segs[c] += 1
        for c, _, _ in gt_segs:
            n_gt_segs[c] += 1
        used = set()
        for c, ps, pe in pred_segs:
            best_iou, best_idx = 0.0, None
            for idx, (gc, gs, ge) in enumerate(gt_segs):
                if gc != c or idx in used:
                    continue
                inter = max(0, min(pe, ge) - max(ps, gs))
                union = (pe - ps) + (ge - gs) - inter
                iou = inter / union if union else 0.0
                if iou > best_iou:
                    best_iou, best_idx = iou, idx
            if best_idx is not None and best_iou >= iou_thresh:
                tp[c] += 1
                used.add(best_idx)
    scores = []
    for c in range(n_gt):
        if n_gt_segs[c] == 0:
            continue
        precision = tp[c] / n_pred_segs[c] if n_pred_segs[c] else 0.0
        recall = tp[c] / n_gt_segs[c]
        scores.append(
            2 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
    return float(np.mean(scores)) if scores else 0.0


def _miou(pred_seqs, gt_seqs, n_gt) -> float:
    inter = np.zeros(n_gt)
    union = np.zeros(n_gt)
    for pred, gt in zip(pred_seqs, gt_seqs):
        for c in range(n_gt):
            p = pred == c
            g = gt == c
            inter[c] += np.sum(p & g)
            union[c] += np.sum(p | g)
    present = union > 0
    if not present.any():
        return 0.0
    return float(np.mean(inter[present] / union[present]))


def segmentation_metrics(
    pred_labels: list[np.ndarray],
    gt_labels: list[np.ndarray],
    scope: MatchingScope = MatchingScope.FULL_DATASET,
) -> tuple[float, float, float]:
    """(MoF, F1, mIoU) after cluster-to-class matching at the given scope.

    MoF pools frames across the dataset; F1 and mIoU average over
    ground-truth classes (and over videos in the per-video scope).
    """
    if len(pred_labels) != len(gt_labels):
        raise DimensionError("pred and gt video counts differ")
    pred_labels = [np.asarray(p, dtype=int) for p in pred_labels]
    gt_labels = [np.asarray(g, dtype=int) for g in gt_labels]
    for p, g in zip(pred_labels, gt_labels):
        if p.shape != g.shape:
            raise DimensionError("per-video label lengths differ")
    n_pred = _check_labels(pred_labels, "pred_labels")
    n_gt = _check_labels(gt_labels, "gt_labels")

    if scope is MatchingScope.FULL_DATASET:
        mapping = _match_clusters(pred_labels, gt_labels, n_pred, n_gt)
        mapped = [np.array([mapping[x] for x in p]) for p in pred_labels]
        correct = sum(int(np.sum(m == g)) for m, g in zip(mapped, gt_labels))
        total = sum(len(g) for g in gt_labels)
        mof = correct / total
        f1 = _segment_f1(mapped, gt_labels, n_gt)
        miou = _miou(mapped, gt_labels, n_gt)
        return mof, f1, miou

    correct = 0
    total = 0
    f1s, mious = [], []
    for pred, gt in zip(pred_labels, gt_labels):
        mapping = _match_clusters([pred], [gt], n_pred, n_gt)
        mapped = np.array([mapping[x] for x in pred])
        correct += int(np.sum(mapped == gt))
        total += len(gt)
        f1s.append(_segment_f1([mapped], [gt], n_gt))
        mious.append(_miou([mapped], [gt], n_gt))
    return correct / total, float(np.mean(f1s)), float(np.mean(mious))
