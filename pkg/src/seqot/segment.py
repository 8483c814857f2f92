"""Frame-to-action transport with learnable action centroids, plus the
joint multi-task loss combining alignment and segmentation terms.

The frame-to-action problem reuses the fused solver with partial-unbalanced
marginals: each frame must ship its full 1/N mass, while the per-action
marginal is only softly attracted to uniform through a damped scaling step
(KL penalty weight `lambda_act`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .align import alignment_loss
from .errors import ConfigError, DataError, DimensionError
from .otcore import (
    INNER_TOL,
    CostBundle,
    ScalingResult,
    SolveReport,
    SolverConfig,
    _safe_log,
    _scaling_loop,
    solve_fgw,
    uniform_histogram,
)
from .priors import source_prior, target_prior, visual_cost


@dataclass(frozen=True)
class ActionCentroids:
    """One embedding column per action, shape (embed_dim, n_actions)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2:
            raise ConfigError(f"need at least 2 action centroids, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("centroids contain non-finite entries")
        if np.any(np.linalg.norm(v, axis=0) == 0):
            raise DataError("centroids contain a zero-norm column")
        object.__setattr__(self, "vectors", v)

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class JointWeights:
    w_align: float = 1.0
    w_seg: float = 1.0

    def __post_init__(self):
        if self.w_align < 0 or self.w_seg < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.w_align == 0 and self.w_seg == 0:
            raise ConfigError("at least one loss weight must be positive")


@dataclass(frozen=True)
class SegConfig:
    """Frame-to-action solver knobs; `lambda_act` is the KL penalty weight
    on the action marginal (non-paper default, exposed for tuning)."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    radius: float = 0.02
    lambda_act: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise ConfigError(f"radius must be in (0, 1], got {self.radius}")
        if self.lambda_act < 0:
            raise ConfigError(f"lambda_act must be >= 0, got {self.lambda_act}")


def init_centroids_kmeans(
    features: list[np.ndarray] | np.ndarray, k: int, seed: int = 0, max_iters: int = 100
) -> ActionCentroids:
    """K centroids from Lloyd's iterations with farthest-point seeding.

    The first seed point is drawn with the given RNG seed; the remaining
    seeds greedily maximize distance to the chosen set, so the whole
    procedure is deterministic given the seed.
    """
    if isinstance(features, np.ndarray):
        pts = features.astype(float)
    else:
        pts = np.concatenate([np.asarray(f, dtype=float) for f in features], axis=0)
    n = pts.shape[0]
    if k < 2:
        raise ConfigError(f"need k >= 2 centroids, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the {n} available frames")

    rng = np.random.default_rng(seed)
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        centers[i] = pts[np.argmax(d2)]
        d2 = np.minimum(d2, np.sum((pts - centers[i]) ** 2, axis=1))

    for _ in range(max_iters):
        d2all = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2all, axis=1)
        new_centers = centers.copy()
        for i in range(k):
            members = pts[assign == i]
            if members.shape[0]:
                new_centers[i] = members.mean(axis=0)
        if np.allclose(new_centers, centers, rtol=0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    return ActionCentroids(vectors=centers.T)


def action_prior(k: int, radius: float):
    """Structural prior over action indices: the target-side band rule with
    the sequence length replaced by the action count."""
    return target_prior(k, radius)


def seg_pseudo_labels(
    x: np.ndarray, centroids: ActionCentroids, cfg: SegConfig
) -> tuple[np.ndarray, SolveReport]:
    """Solve the partial-unbalanced frame-to-action transport.

    Frame marginals (rows, mass 1/N each) are enforced exactly; the action
    marginal is relaxed through a scaling step damped by
    lambda_act / (lambda_act + epsilon).  The coupling is a constant
    training target, never differentiated through.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"expected (n, d) features, got shape {x.shape}")
    if x.shape[1] != centroids.dim:
        raise DimensionError(
            f"feature dim {x.shape[1]} != centroid dim {centroids.dim}"
        )
    n, k = x.shape[0], centroids.k
    c = visual_cost(x, centroids.vectors.T)
    cx = source_prior(n, cfg.radius)
    ca = action_prior(k, cfg.radius)
    bundle = CostBundle(c, cx, ca)
    p = uniform_histogram(n)
    q = uniform_histogram(k)

    log_p = _safe_log(p)
    log_q = _safe_log(q)
    solver = cfg.solver
    exp_q = cfg.lambda_act / (cfg.lambda_act + solver.epsilon)

    def project(log_kernel: np.ndarray) -> ScalingResult:
        return _scaling_loop(
            log_kernel, log_p, log_q, 1.0, exp_q, solver.inner_sinkhorn_iters, INNER_TOL
        )

    return solve_fgw(bundle, p, q, solver, project=project)


def seg_loss(
    p_xa: np.ndarray, t_xa_star: np.ndarray, normalize_targets: bool = False
) -> float:
    """Cross-entropy between action similarities and transport targets;
    shares the alignment-loss implementation."""
    return alignment_loss(p_xa, t_xa_star, normalize_targets=normalize_targets)


def joint_loss(l_xy: float, l_xa: float, l_ya: float, w: JointWeights) -> float:
    """w_align * alignment + w_seg * (both segmentation terms)."""
    for name, v in (("l_xy", l_xy), ("l_xa", l_xa), ("l_ya", l_ya)):
        if not np.isfinite(v):
            raise DataError(f"{name} is not finite")
    return w.w_align * l_xy + w.w_seg * (l_xa + l_ya)


def decode_segmentation(t_xa: np.ndarray, zeta: float = 0.0) -> np.ndarray:
    """Per-frame action labels by row argmax, ties to the smallest index.

    `zeta` is accepted for interface symmetry with the alignment decode;
    background frames are expected to be captured by a dedicated action
    cluster rather than a threshold rule.
    """
    t = np.asarray(t_xa, dtype=float)
    if np.any(t < 0):
        raise DataError("coupling has negative entries")
    return np.argmax(t, axis=1)
