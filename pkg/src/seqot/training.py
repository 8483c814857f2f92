"""Self-supervised training loop: sample video pairs, uniformly subsample
frames, compute transport pseudo-labels from the current embeddings
(constants, never differentiated through), and update the encoder (and the
action centroids in the segmentation modes) with Adam.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .align import AlignProblem, align_pair, alignment_loss, alignment_loss_grad, normalized_similarities
from .encoder import AdamState, EncoderModel, backward, encode, init_encoder, optimizer_step
from .errors import DataError, NumericalError
from .otcore import SolverConfig
from .priors import PriorConfig
from .segment import (
    ActionCentroids,
    JointWeights,
    SegConfig,
    init_centroids_kmeans,
    seg_pseudo_labels,
)
from .synth import SynthDataset


class TrainMode(enum.Enum):
    ALIGN_ONLY = "align"
    SEG_ONLY = "seg"
    JOINT = "joint"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_pairs: int = 1
    epochs: int = 30
    frames_per_clip: int = 40
    seed: int = 0
    mode: TrainMode = TrainMode.ALIGN_ONLY
    weights: JointWeights = field(default_factory=JointWeights)
    hidden: int = 128
    embed_dim: int = 32
    nonlinearity: str = "tanh"
    cache_interval: int = 1

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise DataError("learning_rate and weight_decay must be >= 0")
        if self.batch_pairs < 1 or self.frames_per_clip < 1:
            raise DataError("batch_pairs and frames_per_clip must be >= 1")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.cache_interval < 1:
            raise DataError("cache_interval must be >= 1")


def subsample_indices(n: int, k: int) -> np.ndarray:
    """Evenly spaced frame indices; all frames when the clip is short."""
    if n <= k:
        return np.arange(n)
    return (np.arange(k) * n) // k


def _effective_weights(cfg: TrainConfig) -> tuple[float, float]:
    if cfg.mode is TrainMode.ALIGN_ONLY:
        return 1.0, 0.0
    if cfg.mode is TrainMode.SEG_ONLY:
        return 0.0, 1.0
    return cfg.weights.w_align, cfg.weights.w_seg


def train(
    dataset: SynthDataset,
    cfg: TrainConfig,
    prior_cfg: PriorConfig | None = None,
    solver_cfg: SolverConfig | None = None,
    tau: float = 0.1,
    lambda_act: float = 0.05,
    use_virtual: bool = True,
) -> tuple[EncoderModel, list[dict]]:
    """Run the configured number of epochs and return (model, step log).

    The log has one row per optimizer step with keys step, epoch, loss_xy,
    loss_xa, loss_ya, loss_total.  Identical config and seed reproduce the
    log exactly.
    """
    prior_cfg = prior_cfg or PriorConfig()
    solver_cfg = solver_cfg or SolverConfig()
    if dataset.n_videos < 2:
        raise DataError("training needs at least 2 videos to form pairs")
    d_in = dataset.features[0].shape[1]

    model = init_encoder(
        d_in, cfg.hidden, cfg.embed_dim, cfg.nonlinearity, seed=cfg.seed
    )
    w_align, w_seg = _effective_weights(cfg)
    if w_seg > 0:
        k = dataset.n_label_classes()
        clips = [
            encode(model, f[subsample_indices(f.shape[0], cfg.frames_per_clip)])
            for f in dataset.features
        ]
        model.centroids = init_centroids_kmeans(clips, k, seed=cfg.seed + 1).vectors
    seg_cfg = SegConfig(solver=solver_cfg, radius=prior_cfg.radius, lambda_act=lambda_act)

    params = model.params()
    state = AdamState()
    rng = np.random.default_rng(cfg.seed + 2)
    log: list[dict] = []
    label_cache: dict[tuple, tuple[int, np.ndarray]] = {}

    steps_per_epoch = max(1, dataset.n_videos // (2 * cfg.batch_pairs))
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            grads = {name: np.zeros_like(p) for name, p in params.items()}
            sums = {"loss_xy": 0.0, "loss_xa": 0.0, "loss_ya": 0.0}
            for _ in range(cfg.batch_pairs):
                a, b = rng.choice(dataset.n_videos, size=2, replace=False)
                raw_a = dataset.features[a][
                    subsample_indices(dataset.features[a].shape[0], cfg.frames_per_clip)
                ]
                raw_b = dataset.features[b][
                    subsample_indices(dataset.features[b].shape[0], cfg.frames_per_clip)
                ]
                emb_a = encode(model, raw_a)
                emb_b = encode(model, raw_b)
                d_emb_a = np.zeros_like(emb_a)
                d_emb_b = np.zeros_like(emb_b)

                if w_align > 0:
                    prob = AlignProblem(
                        x=emb_a, y=emb_b, prior_cfg=prior_cfg,
                        solver_cfg=solver_cfg, tau=tau, use_virtual=use_virtual,
                    )
                    res = align_pair(prob)
                    t_star = (
                        res.pseudo_labels[: emb_a.shape[0], : emb_b.shape[0]]
                        if use_virtual
                        else res.pseudo_labels
                    )
                    gx, gy = alignment_loss_grad(
                        res.similarities, t_star, emb_a, emb_b, tau,
                        res.row_mask, res.col_mask,
                    )
                    d_emb_a += w_align * gx
                    d_emb_b += w_align * gy
                    sums["loss_xy"] += res.loss

                if w_seg > 0:
                    cent = model.centroids
                    for vid, emb, d_emb, key in (
                        (int(a), emb_a, d_emb_a, "loss_xa"),
                        (int(b), emb_b, d_emb_b, "loss_ya"),
                    ):
                        cached = label_cache.get(vid)
                        if cached is not None and step - cached[0] < cfg.cache_interval:
                            t_xa = cached[1]
                        else:
                            t_xa, _ = seg_pseudo_labels(
                                emb, ActionCentroids(vectors=cent), seg_cfg
                            )
                            label_cache[vid] = (step, t_xa)
                        p_xa = normalized_similarities(emb, cent.T, tau)
                        loss_v = alignment_loss(p_xa, t_xa)
                        ge, gc = alignment_loss_grad(p_xa, t_xa, emb, cent.T, tau)
                        d_emb += w_seg * ge
                        grads["centroids"] += w_seg * gc.T
                        sums[key] += loss_v

                for raw, d_emb in ((raw_a, d_emb_a), (raw_b, d_emb_b)):
                    for name, g in backward(model, raw, d_emb).items():
                        grads[name] += g

            for g in grads.values():
                g /= cfg.batch_pairs
            for k_, v in sums.items():
                sums[k_] = v / cfg.batch_pairs
            try:
                optimizer_step(params, grads, state, cfg.learning_rate, cfg.weight_decay)
            except NumericalError as exc:
                raise NumericalError(f"{exc} (training step {step})") from exc
            for name, p in params.items():
                if not np.all(np.isfinite(p)):
                    raise NumericalError(
                        f"non-finite parameter {name!r} after training step {step}"
                    )
            log.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "loss_xy": sums["loss_xy"],
                    "loss_xa": sums["loss_xa"],
                    "loss_ya": sums["loss_ya"],
                    "loss_total": w_align * sums["loss_xy"]
                    + w_seg * (sums["loss_xa"] + sums["loss_ya"]),
                }
            )
            step += 1
    return model, log
