"""Entropic KOT/GW/FGW objectives and solvers.

The fused objective is (1-alpha) * <C, T> + alpha * <Cx @ T @ Cy, T>, the
quadratic term being the factorized form of the structure-comparison sum
for the product cost L(a, b) = a*b.  Minimization runs entropic mirror
descent: linearize at T, then KL-project the multiplicative update onto the
marginal constraints.  All scaling arithmetic is in the log domain so small
epsilon does not underflow.

With the default step size 1.0 each outer iteration reduces exactly to a
Sinkhorn solve of the linearized cost, so at alpha = 0 the solver is plain
entropic KOT and converges after one projection.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, DataError, DimensionError, NumericalError
from .priors import struct_left_apply, struct_right_apply, struct_toarray

# Potential-change / marginal-error tolerance for the inner scaling loop.
INNER_TOL = 1e-9


def uniform_histogram(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def check_histogram(w: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DataError("histogram has negative entries")
    if abs(w.sum() - 1.0) > tol:
        raise DataError(f"histogram mass {w.sum()} differs from 1 beyond {tol}")
    return w


class MarginalMode(enum.Enum):
    BALANCED = "balanced"
    FULL_UNBALANCED = "full-unbalanced"


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.3
    epsilon: float = 0.07
    step_size: float = 1.0
    outer_iters: int = 25
    inner_sinkhorn_iters: int = 50
    tol: float = 1e-6
    marginal_mode: MarginalMode = MarginalMode.BALANCED
    lambda_p: float = 0.05
    lambda_q: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.step_size <= 0.0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")
        if self.outer_iters < 1:
            raise ConfigError(f"outer_iters must be >= 1, got {self.outer_iters}")
        if self.inner_sinkhorn_iters < 1:
            raise ConfigError("inner_sinkhorn_iters must be >= 1")
        if self.tol <= 0.0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if self.lambda_p < 0.0 or self.lambda_q < 0.0:
            raise ConfigError("lambda_p and lambda_q must be >= 0")


@dataclass(frozen=True)
class CostBundle:
    """Assignment cost plus the two intra-sequence structural priors.

    `struct_x` and `struct_y` may be dense symmetric arrays or band-profile
    operators from :mod:`seqot.priors`.
    """

    kot_cost: np.ndarray
    struct_x: object
    struct_y: object

    def __post_init__(self):
        c = np.asarray(self.kot_cost, dtype=float)
        if not np.all(np.isfinite(c)):
            raise DataError("kot_cost contains non-finite entries")
        object.__setattr__(self, "kot_cost", c)
        for name, s, dim in (("struct_x", self.struct_x, c.shape[0]),
                             ("struct_y", self.struct_y, c.shape[1])):
            if s.shape != (dim, dim):
                raise DimensionError(f"{name} shape {s.shape} does not match cost ({dim})")
            if isinstance(s, np.ndarray):
                if not np.all(np.isfinite(s)) or np.any(s < 0):
                    raise DataError(f"{name} must be finite and nonnegative")
                if not np.allclose(s, s.T):
                    raise DataError(f"{name} must be symmetric")

    @property
    def shape(self) -> tuple[int, int]:
        return self.kot_cost.shape


class ScalingResult(NamedTuple):
    plan: np.ndarray
    converged: bool
    iterations: int


@dataclass
class SolveReport:
    """Per-iteration entropic objective trace and convergence outcome."""

    objectives: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    final_marginal_error: float = float("nan")


def kot_objective(c: np.ndarray, t: np.ndarray) -> float:
    """Linear transport cost <C, T>."""
    c = np.asarray(c, dtype=float)
    t = np.asarray(t, dtype=float)
    if c.shape != t.shape:
        raise DimensionError(f"cost shape {c.shape} != coupling shape {t.shape}")
    return float(np.sum(c * t))


def gw_objective(cx, cy, t: np.ndarray) -> float:
    """Structure-comparison cost <Cx @ T @ Cy, T> for the product cost ab."""
    t = np.asarray(t, dtype=float)
    n, m = t.shape
    if cx.shape != (n, n) or cy.shape != (m, m):
        raise DimensionError(
            f"prior shapes {cx.shape}, {cy.shape} do not match coupling {t.shape}"
        )
    inner = struct_left_apply(cx, struct_right_apply(t, cy))
    return float(np.sum(inner * t))


def fgw_objective(bundle: CostBundle, t: np.ndarray, alpha: float) -> float:
    """Convex combination (1-alpha)*KOT + alpha*GW."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    return (1.0 - alpha) * kot_objective(bundle.kot_cost, t) + alpha * gw_objective(
        bundle.struct_x, bundle.struct_y, t
    )


def entropy(t: np.ndarray) -> float:
    """H(T) = -sum T_ij log T_ij, with 0*log(0) taken as 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataError("entropy requires nonnegative entries")
    pos = t[t > 0]
    return float(-np.sum(pos * np.log(pos)))


def gw_gradient(bundle: CostBundle, t: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient of the fused objective: (1-alpha)*C + 2*alpha*Cx @ T @ Cy.

    Valid because both structural priors are symmetric.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != bundle.shape:
        raise DimensionError(f"coupling shape {t.shape} != bundle shape {bundle.shape}")
    grad = (1.0 - alpha) * bundle.kot_cost
    if alpha != 0.0:
        grad = grad + 2.0 * alpha * struct_left_apply(
            bundle.struct_x, struct_right_apply(t, bundle.struct_y)
        )
    return grad


def _scaling_loop(
    log_k: np.ndarray,
    log_p: np.ndarray,
    log_q: np.ndarray,
    exp_p: float,
    exp_q: float,
    iters: int,
    tol: float,
) -> ScalingResult:
    """Damped diagonal scaling in the log domain.

    exp_p = exp_q = 1 is the balanced KL projection (Sinkhorn); exponents
    lambda/(lambda+eps) give the unbalanced relaxation.  When exactly one
    side is undamped (one-sided marginal constraint), that side's update
    runs last so its marginal is exact in the returned plan.  Convergence
    is measured on the L1 marginal error in the balanced case and on the
    potential change otherwise.
    """
    f = np.zeros(log_k.shape[0])
    g = np.zeros(log_k.shape[1])
    balanced = exp_p == 1.0 and exp_q == 1.0
    rows_last = exp_p == 1.0 and exp_q != 1.0
    p = np.exp(log_p)
    converged = False
    it = 0
    for it in range(1, iters + 1):
        if rows_last:
            g_new = exp_q * (log_q - logsumexp(log_k + f[:, None], axis=0))
            f_new = exp_p * (log_p - logsumexp(log_k + g_new[None, :], axis=1))
        else:
            f_new = exp_p * (log_p - logsumexp(log_k + g[None, :], axis=1))
            g_new = exp_q * (log_q - logsumexp(log_k + f_new[:, None], axis=0))
        if balanced:
            # Columns are exact after the g-update; only rows can be off.
            row_log = logsumexp(log_k + f_new[:, None] + g_new[None, :], axis=1)
            err = float(np.abs(np.exp(row_log) - p).sum())
        else:
            err = float(max(np.max(np.abs(f_new - f)), np.max(np.abs(g_new - g))))
        f, g = f_new, g_new
        if err < tol:
            converged = True
            break
    plan = np.exp(log_k + f[:, None] + g[None, :])
    return ScalingResult(plan=plan, converged=converged, iterations=it)


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def sinkhorn_project(
    k: np.ndarray, p: np.ndarray, q: np.ndarray, iters: int = 1000, tol: float = INNER_TOL
) -> ScalingResult:
    """KL-project a positive kernel onto the couplings with marginals p, q.

    Returns diag(u) K diag(v) with row/column sums matching p and q within
    `tol` in L1, or the best iterate if `iters` is exhausted (flagged via
    ``converged``).
    """
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DataError("sinkhorn_project requires a strictly positive kernel")
    p = check_histogram(p)
    q = check_histogram(q)
    if k.shape != (p.size, q.size):
        raise DimensionError(f"kernel shape {k.shape} != marginals ({p.size}, {q.size})")
    return _scaling_loop(np.log(k), _safe_log(p), _safe_log(q), 1.0, 1.0, iters, tol)


def unbalanced_scale(
    k: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    lambda_p: float,
    lambda_q: float,
    epsilon: float,
    iters: int = 1000,
    tol: float = INNER_TOL,
) -> ScalingResult:
    """Unbalanced scaling: each update is damped by lambda/(lambda+epsilon).

    lambda -> infinity recovers the balanced projection; lambda = 0 leaves
    the kernel unscaled (marginals unconstrained).
    """
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DataError("unbalanced_scale requires a strictly positive kernel")
    if lambda_p < 0 or lambda_q < 0:
        raise ConfigError("lambda_p and lambda_q must be >= 0")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if k.shape != (p.size, q.size):
        raise DimensionError(f"kernel shape {k.shape} != marginals ({p.size}, {q.size})")
    exp_p = lambda_p / (lambda_p + epsilon)
    exp_q = lambda_q / (lambda_q + epsilon)
    return _scaling_loop(np.log(k), _safe_log(p), _safe_log(q), exp_p, exp_q, iters, tol)


ProjectFn = Callable[[np.ndarray], ScalingResult]
"""Maps the log-kernel of the multiplicative update to a projected coupling."""


def _make_projector(p: np.ndarray, q: np.ndarray, cfg: SolverConfig) -> ProjectFn:
    log_p = _safe_log(np.asarray(p, dtype=float))
    log_q = _safe_log(np.asarray(q, dtype=float))
    if cfg.marginal_mode is MarginalMode.BALANCED:
        exp_p = exp_q = 1.0
    else:
        exp_p = cfg.lambda_p / (cfg.lambda_p + cfg.epsilon)
        exp_q = cfg.lambda_q / (cfg.lambda_q + cfg.epsilon)

    def project(log_k: np.ndarray) -> ScalingResult:
        return _scaling_loop(
            log_k, log_p, log_q, exp_p, exp_q, cfg.inner_sinkhorn_iters, INNER_TOL
        )

    return project


def solve_fgw(
    bundle: CostBundle,
    p: np.ndarray,
    q: np.ndarray,
    cfg: SolverConfig,
    project: ProjectFn | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Minimize the entropic fused objective by projected mirror descent.

    Starting from the independence coupling p q^T, each outer iteration
    forms the multiplicative update

        log T_pre = (1 - s) * log T + (-s / epsilon) * grad(T)

    with constant step s, then projects back onto the marginal constraints
    (balanced Sinkhorn or damped unbalanced scaling; `project` overrides the
    projection, which lets callers enforce one-sided marginals).  Stops when
    the L1 change of the coupling drops below `cfg.tol`.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n, m = bundle.shape
    if p.size != n or q.size != m:
        raise DimensionError(f"marginals ({p.size}, {q.size}) != bundle shape {bundle.shape}")
    if project is None:
        project = _make_projector(p, q, cfg)

    s = cfg.step_size
    eps = cfg.epsilon
    t = np.outer(p, q)
    log_t = _safe_log(t)
    report = SolveReport()

    for k in range(1, cfg.outer_iters + 1):
        grad = gw_gradient(bundle, t, cfg.alpha)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient at outer iteration {k}")
        if s == 1.0:
            log_pre = -grad / eps
        else:
            log_pre = (1.0 - s) * log_t - (s / eps) * grad
        t_new, _, _ = project(log_pre)
        if not np.all(np.isfinite(t_new)):
            raise NumericalError(f"non-finite coupling at outer iteration {k}")
        change = float(np.abs(t_new - t).sum())
        t = t_new
        log_t = _safe_log(t)
        report.objectives.append(fgw_objective(bundle, t, cfg.alpha) - eps * entropy(t))
        report.iterations = k
        if change < cfg.tol:
            report.converged = True
            break

    report.final_marginal_error = float(
        np.abs(t.sum(axis=1) - p).sum() + np.abs(t.sum(axis=0) - q).sum()
    )
    return t, report


def dense_bundle(c: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> CostBundle:
    """Bundle with explicitly dense priors (small instances and tests)."""
    return CostBundle(
        kot_cost=np.asarray(c, dtype=float),
        struct_x=struct_toarray(cx),
        struct_y=struct_toarray(cy),
    )
