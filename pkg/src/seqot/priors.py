"""Cost-matrix construction: visual cost, structural priors, temporal prior,
and virtual-frame augmentation.

Structural priors are symmetric matrices whose entries depend only on the
index distance delta = |i - k|, bucketed into {diagonal, 1 <= delta <= width,
delta > width}.  They are kept in a compact band-profile representation so
that products against an n x m coupling cost O(nm) instead of O(n^2 m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError


@dataclass(frozen=True)
class BandProfileMatrix:
    """Symmetric n x n matrix with value `diag` at delta=0, `near` for
    1 <= delta <= width, and `far` for delta > width."""

    n: int
    width: int
    diag: float
    near: float
    far: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def _window_rows(self, x: np.ndarray) -> np.ndarray:
        # (W @ x) where W_ik = 1 iff |i-k| <= width, via prefix sums.
        n = self.n
        w = self.width
        s = np.cumsum(x, axis=0)
        hi = np.minimum(np.arange(n) + w, n - 1)
        lo = np.arange(n) - w - 1
        out = s[hi]
        mask = lo >= 0
        out[mask] -= s[lo[mask]]
        return out

    def left_apply(self, x: np.ndarray) -> np.ndarray:
        """Return self @ x for x of shape (n, m)."""
        if x.shape[0] != self.n:
            raise DimensionError(f"left_apply: expected {self.n} rows, got {x.shape[0]}")
        win = self._window_rows(x)
        out = self.diag * x + self.near * (win - x)
        if self.far != 0.0:
            out += self.far * (x.sum(axis=0, keepdims=True) - win)
        return out

    def right_apply(self, x: np.ndarray) -> np.ndarray:
        """Return x @ self for x of shape (m, n); uses symmetry."""
        return self.left_apply(x.T).T

    def toarray(self) -> np.ndarray:
        delta = np.abs(np.subtract.outer(np.arange(self.n), np.arange(self.n)))
        out = np.full((self.n, self.n), self.far, dtype=float)
        out[delta <= self.width] = self.near
        np.fill_diagonal(out, self.diag)
        return out


@dataclass(frozen=True)
class VirtualPaddedMatrix:
    """Block matrix [[A, 0], [0, 0]]: a structural prior extended with one
    virtual index that participates in no temporal structure."""

    base: BandProfileMatrix

    @property
    def shape(self) -> tuple[int, int]:
        n = self.base.n + 1
        return (n, n)

    def left_apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.base.n + 1:
            raise DimensionError(
                f"left_apply: expected {self.base.n + 1} rows, got {x.shape[0]}"
            )
        out = np.zeros_like(x)
        out[:-1] = self.base.left_apply(x[:-1])
        return out

    def right_apply(self, x: np.ndarray) -> np.ndarray:
        return self.left_apply(x.T).T

    def toarray(self) -> np.ndarray:
        n = self.base.n
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = self.base.toarray()
        return out


def struct_left_apply(a, x: np.ndarray) -> np.ndarray:
    """a @ x for a structural prior given as an operator or dense array."""
    if hasattr(a, "left_apply"):
        return a.left_apply(x)
    return a @ x


def struct_right_apply(x: np.ndarray, a) -> np.ndarray:
    """x @ a for a structural prior given as an operator or dense array."""
    if hasattr(a, "right_apply"):
        return a.right_apply(x)
    return x @ a


def struct_toarray(a) -> np.ndarray:
    return a.toarray() if hasattr(a, "toarray") else np.asarray(a, dtype=float)


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters: band radius, temporal-prior weight, and the
    virtual-frame assignment threshold."""

    radius: float = 0.02
    rho: float = 0.35
    zeta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise ConfigError(f"radius must be in (0, 1], got {self.radius}")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must be in [0, 1], got {self.zeta}")


def visual_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cosine-difference cost C_ij = 1 - cos(x_i, y_j), entries in [0, 2]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise DimensionError(f"incompatible feature shapes {x.shape} and {y.shape}")
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    for name, norms in (("x", xn), ("y", yn)):
        bad = np.where(norms == 0.0)[0]
        if bad.size:
            raise DataError(f"zero-norm frame vector in sequence {name} at index {bad[0]}")
    c = 1.0 - (x @ y.T) / np.outer(xn, yn)
    return np.clip(c, 0.0, 2.0)


def band_width(n: int, r: float) -> int:
    """Largest delta inside the radius band: floor(n*r), capped at n-1."""
    return min(int(np.floor(n * r + 1e-9)), n - 1)


def source_prior(n: int, r: float) -> BandProfileMatrix:
    """1/r inside the band 1 <= delta <= n*r, zero elsewhere (zero diagonal)."""
    if n < 1:
        raise ConfigError(f"sequence length must be >= 1, got {n}")
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"radius must be in (0, 1], got {r}")
    return BandProfileMatrix(n, band_width(n, r), diag=0.0, near=1.0 / r, far=0.0)


def target_prior(m: int, r: float) -> BandProfileMatrix:
    """0 inside the band 1 <= delta <= m*r, 1 elsewhere; the diagonal
    (delta = 0) falls in the "elsewhere" branch and is 1."""
    if m < 1:
        raise ConfigError(f"sequence length must be >= 1, got {m}")
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"radius must be in (0, 1], got {r}")
    return BandProfileMatrix(m, band_width(m, r), diag=1.0, near=0.0, far=1.0)


def structural_priors(n: int, m: int, r: float) -> tuple[BandProfileMatrix, BandProfileMatrix]:
    """Intra-sequence priors for the source and target sequences."""
    return source_prior(n, r), target_prior(m, r)


def temporal_prior(n: int, m: int) -> np.ndarray:
    """Relative-position cost R_ij = |i/n - j/m| with one-based i, j."""
    if n < 1 or m < 1:
        raise ConfigError(f"sequence lengths must be >= 1, got {n}, {m}")
    ti = (np.arange(1, n + 1) / n)[:, None]
    tj = (np.arange(1, m + 1) / m)[None, :]
    return np.abs(ti - tj)


@dataclass(frozen=True)
class AugmentedCosts:
    """Cost matrices and marginals after appending one virtual frame per side."""

    kot_cost: np.ndarray
    struct_x: VirtualPaddedMatrix
    struct_y: VirtualPaddedMatrix
    p: np.ndarray
    q: np.ndarray
    virtual_cost: float = field(default=0.0)


def augment_virtual(
    kot_cost: np.ndarray,
    struct_x: BandProfileMatrix,
    struct_y: BandProfileMatrix,
    p: np.ndarray,
    q: np.ndarray,
    virtual_cost: float | None = None,
) -> AugmentedCosts:
    """Append a virtual row and column to the transport problem.

    The virtual row/column of the assignment cost is a flat constant
    (defaults to the mean of `kot_cost`, making the virtual option
    competitive exactly for outlier frames).  Structural priors receive
    zero rows/columns for the virtual index, and marginals are extended
    with their mean entry and renormalized, so uniform stays uniform.
    """
    c = np.asarray(kot_cost, dtype=float)
    n, m = c.shape
    if not np.all(np.isfinite(c)):
        raise DataError("kot_cost contains non-finite entries")
    if virtual_cost is None:
        virtual_cost = float(c.mean())
    c_aug = np.full((n + 1, m + 1), virtual_cost)
    c_aug[:n, :m] = c

    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p_aug = np.append(p, p.mean())
    q_aug = np.append(q, q.mean())
    p_aug /= p_aug.sum()
    q_aug /= q_aug.sum()

    return AugmentedCosts(
        kot_cost=c_aug,
        struct_x=VirtualPaddedMatrix(struct_x),
        struct_y=VirtualPaddedMatrix(struct_y),
        p=p_aug,
        q=q_aug,
        virtual_cost=virtual_cost,
    )


def strip_virtual(c_aug: np.ndarray) -> np.ndarray:
    """Drop the virtual row and column, recovering the real-frame cost."""
    return np.asarray(c_aug)[:-1, :-1].copy()


VIRTUAL = -1


@dataclass(frozen=True)
class Correspondences:
    """Hard assignments decoded from a virtual-augmented coupling.

    `x_to_y[i]` is the matched column for row frame i, or VIRTUAL (-1).
    `y_to_x[j]` is the matched row for column frame j, or VIRTUAL (-1).
    """

    x_to_y: np.ndarray
    y_to_x: np.ndarray


def assign_with_virtual(t: np.ndarray, zeta: float) -> Correspondences:
    """Decode frame correspondences from an (n+1) x (m+1) coupling.

    A real frame whose best row-normalized assignment probability over the
    real frames of the other sequence falls below `zeta` is matched to the
    virtual frame; otherwise to the argmax entry (ties to smallest index).
    With zeta = 0 no frame is ever assigned to the virtual index.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataError("coupling has negative entries")
    n, m = t.shape[0] - 1, t.shape[1] - 1

    def decode(block: np.ndarray, real: int) -> np.ndarray:
        sums = block.sum(axis=1)
        probs = np.divide(
            block[:, :real],
            sums[:, None],
            out=np.zeros((block.shape[0], real)),
            where=sums[:, None] > 0,
        )
        best = np.argmax(block[:, :real], axis=1)
        out = np.where(probs.max(axis=1) < zeta, VIRTUAL, best)
        return out.astype(int)

    return Correspondences(x_to_y=decode(t[:n], m), y_to_x=decode(t.T[:m], n))
