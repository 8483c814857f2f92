"""Two-layer encoder with hand-written gradients, an Adam optimizer with
decoupled weight decay, and a versioned plain-text checkpoint format.

Checkpoint layout (text, one tensor block per parameter):

    SEQOT-CKPT v1
    nonlinearity <name>
    tensor <name> <rows> <cols>
    <row of %.17g values>
    ...
    end

Vectors are stored as 1 x n tensors.  Floats use repr-exact formatting so a
save/load round trip is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericalError

CHECKPOINT_MAGIC = "SEQOT-CKPT v1"

# name -> (f, df) with df expressed in the pre-activation.
NONLINEARITIES = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (
        lambda z: 1.0 / (1.0 + np.exp(-z)),
        lambda z: (s := 1.0 / (1.0 + np.exp(-z))) * (1.0 - s),
    ),
    "softplus": (lambda z: np.logaddexp(0.0, z), lambda z: 1.0 / (1.0 + np.exp(-z))),
}


@dataclass
class EncoderModel:
    """f(x) = act(x @ w1 + b1) @ w2 + b2, with optional action centroids
    carried alongside for joint training."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    nonlinearity: str = "tanh"
    centroids: np.ndarray | None = None

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(
                f"unknown nonlinearity {self.nonlinearity!r}; "
                f"choose from {sorted(NONLINEARITIES)}"
            )

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.centroids is not None:
            out["centroids"] = self.centroids
        return out

    def copy(self) -> "EncoderModel":
        return EncoderModel(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            nonlinearity=self.nonlinearity,
            centroids=None if self.centroids is None else self.centroids.copy(),
        )


def init_encoder(
    d_in: int, hidden: int = 128, d_out: int = 32, nonlinearity: str = "tanh",
    seed: int = 0,
) -> EncoderModel:
    rng = np.random.default_rng(seed)
    return EncoderModel(
        w1=rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, d_out)),
        b2=np.zeros(d_out),
        nonlinearity=nonlinearity,
    )


def encode(model: EncoderModel, raw: np.ndarray) -> np.ndarray:
    """Per-frame forward pass of shape (n, d_in) -> (n, d_out)."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != model.d_in:
        raise DimensionError(
            f"expected (n, {model.d_in}) input, got shape {raw.shape}"
        )
    act, _ = NONLINEARITIES[model.nonlinearity]
    return act(raw @ model.w1 + model.b1) @ model.w2 + model.b2


def backward(
    model: EncoderModel, raw: np.ndarray, grad_embeddings: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact parameter gradients given the loss gradient in the embeddings."""
    raw = np.asarray(raw, dtype=float)
    grad_embeddings = np.asarray(grad_embeddings, dtype=float)
    if grad_embeddings.shape != (raw.shape[0], model.d_out):
        raise DimensionError(
            f"grad shape {grad_embeddings.shape} != ({raw.shape[0]}, {model.d_out})"
        )
    act, dact = NONLINEARITIES[model.nonlinearity]
    pre = raw @ model.w1 + model.b1
    h = act(pre)
    d_pre = (grad_embeddings @ model.w2.T) * dact(pre)
    return {
        "w1": raw.T @ d_pre,
        "b1": d_pre.sum(axis=0),
        "w2": h.T @ grad_embeddings,
        "b2": grad_embeddings.sum(axis=0),
    }


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with decoupled weight decay, in place.

    Parameters without a gradient entry are left untouched (weight decay
    included), so frozen blocks stay frozen.
    """
    state.step += 1
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r} at step {state.step}")
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** state.step)
        v_hat = v / (1.0 - beta2 ** state.step)
        p = params[name]
        p -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay > 0.0:
            p -= learning_rate * weight_decay * p


def _write_tensor(fh, name: str, a: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(a, dtype=float))
    fh.write(f"tensor {name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def save_checkpoint(path: str | Path, model: EncoderModel) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"nonlinearity {model.nonlinearity}\n")
        _write_tensor(fh, "w1", model.w1)
        _write_tensor(fh, "b1", model.b1)
        _write_tensor(fh, "w2", model.w2)
        _write_tensor(fh, "b2", model.b2)
        if model.centroids is not None:
            _write_tensor(fh, "centroids", model.centroids)
        fh.write("end\n")


def load_checkpoint(path: str | Path) -> EncoderModel:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    idx = 1
    nonlinearity = "tanh"
    tensors: dict[str, np.ndarray] = {}
    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if not line or line == "end":
            continue
        head = line.split()
        if head[0] == "nonlinearity":
            nonlinearity = head[1]
        elif head[0] == "tensor":
            if len(head) != 4:
                raise DataError(f"{path}: malformed tensor header {line!r}")
            name, rows, cols = head[1], int(head[2]), int(head[3])
            block = lines[idx : idx + rows]
            idx += rows
            try:
                mat = np.array([[float(x) for x in r.split()] for r in block])
            except ValueError as exc:
                raise DataError(f"{path}: bad tensor data for {name!r}: {exc}") from exc
            if mat.shape != (rows, cols):
                raise DataError(
                    f"{path}: tensor {name!r} has shape {mat.shape}, header says {(rows, cols)}"
                )
            tensors[name] = mat
        else:
            raise DataError(f"{path}: unexpected line {line!r}")
    for required in ("w1", "b1", "w2", "b2"):
        if required not in tensors:
            raise DataError(f"{path}: missing tensor {required!r}")
    model = EncoderModel(
        w1=tensors["w1"],
        b1=tensors["b1"][0],
        w2=tensors["w2"],
        b2=tensors["b2"][0],
        nonlinearity=nonlinearity,
        centroids=tensors.get("centroids"),
    )
    if model.w1.shape[1] != model.b1.shape[0] or model.w2.shape[0] != model.w1.shape[1]:
        raise DataError(f"{path}: inconsistent layer shapes")
    if model.w2.shape[1] != model.b2.shape[0]:
        raise DataError(f"{path}: inconsistent output shapes")
    return model
