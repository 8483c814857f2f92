"""End-to-end evaluation of a trained encoder on a synthetic dataset.

Videos are split into fit/held-out halves with a fixed seeded shuffle.
Classification and progress metrics follow the frozen-feature protocol
(fit a light model on the fit split, score on the held-out split) and are
computed over action frames only: background is not a phase, it is handled
by the segmentation task, where it counts as a regular class.  The
rank-correlation and retrieval metrics come from nearest-neighbor matches
between held-out videos.  Segmentation decodes per-video frame-to-action
transport against the model's centroids (or centroids fitted on the fit
split when the checkpoint has none).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderModel, encode
from .errors import DataError
from .metrics import (
    MatchingScope,
    MetricReport,
    frame_retrieval_ap,
    kendall_tau,
    phase_classification,
    phase_progress,
    segmentation_metrics,
)
from .otcore import SolverConfig
from .segment import ActionCentroids, SegConfig, decode_segmentation, init_centroids_kmeans, seg_pseudo_labels
from .synth import BACKGROUND, SynthDataset


@dataclass(frozen=True)
class EvalConfig:
    acc_fractions: tuple[float, ...] = (0.1, 0.5, 1.0)
    ap_ks: tuple[int, ...] = (5, 10, 15)
    matching: MatchingScope = MatchingScope.FULL_DATASET
    split_seed: int = 0
    seg_cfg: SegConfig = field(default_factory=lambda: SegConfig(solver=SolverConfig()))


def _remap_background(labels: np.ndarray, n_actions: int) -> np.ndarray:
    """Background label -1 becomes its own trailing class index."""
    out = labels.copy()
    out[out == BACKGROUND] = n_actions
    return out


def nn_matches(emb_a: np.ndarray, emb_b: np.ndarray) -> np.ndarray:
    """Index of the cosine-nearest frame of B for every frame of A."""
    an = emb_a / np.maximum(np.linalg.norm(emb_a, axis=1, keepdims=True), 1e-30)
    bn = emb_b / np.maximum(np.linalg.norm(emb_b, axis=1, keepdims=True), 1e-30)
    return np.argmax(an @ bn.T, axis=1)


def alignment_tau(
    embeddings: list[np.ndarray],
    labels: list[np.ndarray],
    video_ids: list[int],
) -> float:
    """Mean Kendall tau of nearest-neighbor matches over ordered video
    pairs; ground-truth background frames are excluded from the queries."""
    taus = []
    for a in video_ids:
        for b in video_ids:
            if a == b:
                continue
            keep = labels[a] != BACKGROUND
            if keep.sum() < 2:
                continue
            idx = np.where(keep)[0]
            js = nn_matches(embeddings[a][idx], embeddings[b])
            taus.append(kendall_tau(list(zip(idx.tolist(), js.tolist()))))
    if not taus:
        raise DataError("no evaluable video pairs for kendall tau")
    return float(np.mean(taus))


def evaluate(
    dataset: SynthDataset, model: EncoderModel, cfg: EvalConfig | None = None
) -> MetricReport:
    cfg = cfg or EvalConfig()
    if dataset.n_videos < 2:
        raise DataError("evaluation needs at least 2 videos")
    embeddings = [encode(model, f) for f in dataset.features]
    n_actions = dataset.params.n_actions
    n_classes = dataset.n_label_classes()
    labels = [_remap_background(l, n_actions) for l in dataset.labels]

    rng = np.random.default_rng(cfg.split_seed)
    order = rng.permutation(dataset.n_videos)
    n_fit = max(1, dataset.n_videos // 2)
    fit_ids = sorted(int(v) for v in order[:n_fit])
    held_ids = sorted(int(v) for v in order[n_fit:])
    if not held_ids:
        raise DataError("evaluation needs at least 1 held-out video")

    def action_frames(ids):
        emb, labs, prog = [], [], []
        for v in ids:
            keep = dataset.labels[v] != BACKGROUND
            emb.append(embeddings[v][keep])
            labs.append(labels[v][keep])
            prog.append(dataset.progress[v][keep])
        return np.concatenate(emb), np.concatenate(labs), prog

    fit_emb, fit_labels, fit_prog = action_frames(fit_ids)
    held_emb, held_labels, _ = action_frames(held_ids)

    acc_at = {
        f: phase_classification(
            fit_emb, fit_labels, held_emb, held_labels, f, seed=cfg.split_seed
        )
        for f in cfg.acc_fractions
    }

    progress_r2 = phase_progress(
        fit_emb,
        np.concatenate(fit_prog),
        [
            (embeddings[v][dataset.labels[v] != BACKGROUND],
             dataset.progress[v][dataset.labels[v] != BACKGROUND])
            for v in held_ids
        ],
    )

    tau_ids = held_ids if len(held_ids) >= 2 else sorted(fit_ids + held_ids)
    tau = alignment_tau(embeddings, dataset.labels, tau_ids)

    ap_at = {}
    for k in cfg.ap_ks:
        scores = []
        for v in tau_ids:
            others = [w for w in tau_ids if w != v]
            gal_emb = np.concatenate([embeddings[w] for w in others])
            gal_labels = np.concatenate([labels[w] for w in others])
            if gal_emb.shape[0] < k:
                continue
            scores.append(
                frame_retrieval_ap(embeddings[v], labels[v], gal_emb, gal_labels, k)
            )
        ap_at[k] = float(np.mean(scores)) if scores else 0.0

    if model.centroids is not None:
        centroids = ActionCentroids(vectors=model.centroids)
    else:
        centroids = init_centroids_kmeans(
            [embeddings[v] for v in fit_ids], n_classes, seed=cfg.split_seed
        )
    pred_labels = []
    for v in held_ids:
        t_xa, _ = seg_pseudo_labels(embeddings[v], centroids, cfg.seg_cfg)
        pred_labels.append(decode_segmentation(t_xa))
    mof, f1, miou = segmentation_metrics(
        pred_labels, [labels[v] for v in held_ids], cfg.matching
    )

    return MetricReport(
        acc_at=acc_at,
        progress_r2=progress_r2,
        kendall_tau=tau,
        ap_at=ap_at,
        mof=mof,
        f1=f1,
        miou=miou,
    )
