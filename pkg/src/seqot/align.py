"""Frame-to-frame alignment: transport-based pseudo-labels, softmax
similarities, the cross-entropy training loss, and its exact gradient with
respect to the frame embeddings.

Pseudo-labels are treated as constants everywhere ("stop-gradient"): they
are recomputed from the current embeddings when needed and never
differentiated through.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .otcore import CostBundle, SolveReport, SolverConfig, solve_fgw, uniform_histogram
from .priors import (
    Correspondences,
    PriorConfig,
    assign_with_virtual,
    augment_virtual,
    structural_priors,
    temporal_prior,
    visual_cost,
)

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class AlignProblem:
    """One alignment instance: two embedded sequences plus solver knobs."""

    x: np.ndarray
    y: np.ndarray
    prior_cfg: PriorConfig = field(default_factory=PriorConfig)
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    tau: float = 0.1
    use_virtual: bool = True

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")


@dataclass
class AlignResult:
    pseudo_labels: np.ndarray
    similarities: np.ndarray
    loss: float
    correspondences: Correspondences
    report: SolveReport
    row_mask: np.ndarray
    col_mask: np.ndarray


def augmented_kot_cost(x: np.ndarray, y: np.ndarray, rho: float) -> np.ndarray:
    """Visual cost plus rho times the relative-position prior."""
    if rho < 0:
        raise ConfigError(f"rho must be >= 0, got {rho}")
    c = visual_cost(x, y)
    if rho > 0:
        c = c + rho * temporal_prior(c.shape[0], c.shape[1])
    return c


def compute_pseudo_labels(prob: AlignProblem) -> tuple[np.ndarray, SolveReport]:
    """Solve the balanced fused transport problem on (virtual-augmented)
    costs; the returned coupling is a constant target, not differentiated."""
    n, m = prob.x.shape[0], prob.y.shape[0]
    c = augmented_kot_cost(prob.x, prob.y, prob.prior_cfg.rho)
    cx, cy = structural_priors(n, m, prob.prior_cfg.radius)
    p, q = uniform_histogram(n), uniform_histogram(m)
    if prob.use_virtual:
        aug = augment_virtual(c, cx, cy, p, q)
        bundle = CostBundle(aug.kot_cost, aug.struct_x, aug.struct_y)
        return solve_fgw(bundle, aug.p, aug.q, prob.solver_cfg)
    bundle = CostBundle(c, cx, cy)
    return solve_fgw(bundle, p, q, prob.solver_cfg)


def normalized_similarities(x: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    """Row-stochastic P with P_i = softmax(X Y^T / tau)_i."""
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"embedding dims differ: {x.shape[1]} vs {y.shape[1]}")
    logits = (x @ y.T) / tau
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def _masked_targets(
    t_star: np.ndarray,
    row_mask: np.ndarray | None,
    col_mask: np.ndarray | None,
    normalize_targets: bool,
) -> np.ndarray:
    t = np.asarray(t_star, dtype=float)
    if row_mask is not None:
        t = t * np.asarray(row_mask, dtype=float)[:, None]
    if col_mask is not None:
        t = t * np.asarray(col_mask, dtype=float)[None, :]
    if normalize_targets:
        sums = t.sum(axis=1, keepdims=True)
        t = np.divide(t, sums, out=np.zeros_like(t), where=sums > 0)
    return t


def alignment_loss(
    p: np.ndarray,
    t_star: np.ndarray,
    row_mask: np.ndarray | None = None,
    col_mask: np.ndarray | None = None,
    normalize_targets: bool = False,
) -> float:
    """Cross-entropy -sum T*_ij log P_ij over the real-frame block.

    Masks drop frames matched to the virtual index.  T* is used raw by
    default; `normalize_targets` rescales each target row to sum 1.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != np.shape(t_star):
        raise DimensionError(f"P shape {p.shape} != T* shape {np.shape(t_star)}")
    t = _masked_targets(t_star, row_mask, col_mask, normalize_targets)
    return float(-np.sum(t * np.log(np.maximum(p, LOG_FLOOR))))


def alignment_loss_grad(
    p: np.ndarray,
    t_star: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    tau: float,
    row_mask: np.ndarray | None = None,
    col_mask: np.ndarray | None = None,
    normalize_targets: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the alignment loss in the embeddings, T* constant.

    With logits Z = X Y^T / tau and row target mass r_i = sum_j T*_ij, the
    logit gradient is dL/dZ = r * P - T*; the chain rule gives the
    embedding gradients.
    """
    t = _masked_targets(t_star, row_mask, col_mask, normalize_targets)
    dz = t.sum(axis=1, keepdims=True) * p - t
    return (dz @ y) / tau, (dz.T @ x) / tau


def align_pair(prob: AlignProblem) -> AlignResult:
    """Full alignment pass: pseudo-labels, correspondences, loss."""
    t_aug, report = compute_pseudo_labels(prob)
    n, m = prob.x.shape[0], prob.y.shape[0]
    p = normalized_similarities(prob.x, prob.y, prob.tau)
    if prob.use_virtual:
        corr = assign_with_virtual(t_aug, prob.prior_cfg.zeta)
        t_real = t_aug[:n, :m]
        row_mask = corr.x_to_y >= 0
        col_mask = corr.y_to_x >= 0
    else:
        corr = Correspondences(
            x_to_y=np.argmax(t_aug, axis=1), y_to_x=np.argmax(t_aug, axis=0)
        )
        t_real = t_aug
        row_mask = np.ones(n, dtype=bool)
        col_mask = np.ones(m, dtype=bool)
    loss = alignment_loss(p, t_real, row_mask, col_mask)
    return AlignResult(
        pseudo_labels=t_aug,
        similarities=p,
        loss=loss,
        correspondences=corr,
        report=report,
        row_mask=row_mask,
        col_mask=col_mask,
    )
