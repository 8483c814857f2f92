"""Flat `key = value` run configuration with dotted namespaces.

Every key has a default; unknown keys are rejected by name.  `#` starts a
comment.  The environment variable SEQOT_CONFIG supplies a default config
path when no --config flag is given.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import ConfigError
from .otcore import MarginalMode, SolverConfig
from .priors import PriorConfig
from .segment import JointWeights
from .synth import GenParams
from .training import TrainConfig, TrainMode

ENV_CONFIG = "SEQOT_CONFIG"

DEFAULTS: dict[str, object] = {
    "seed": 0,
    # dataset generation
    "synth.n_videos": 8,
    "synth.n_actions": 4,
    "synth.dim": 16,
    "synth.seq_len": 60,
    "synth.noise": 0.1,
    "synth.warp": 0.0,
    "synth.background_rate": 0.0,
    "synth.permute": False,
    "synth.repeat": False,
    "synth.render": "ramp",
    "synth.arc": 1.5,
    "synth.states_per_action": 0,
    "synth.length_jitter": 0.2,
    # cost priors
    "prior.radius": 0.02,
    "prior.rho": 0.35,
    "prior.zeta": 0.5,
    # transport solver
    "solver.alpha": 0.3,
    "solver.epsilon": 0.07,
    "solver.step_size": 1.0,
    "solver.outer_iters": 25,
    "solver.inner_iters": 50,
    "solver.tol": 1e-6,
    "solver.marginal_mode": "balanced",
    "solver.lambda_p": 0.05,
    "solver.lambda_q": 0.05,
    # alignment head
    "align.tau": 0.1,
    "align.use_virtual": True,
    # segmentation head
    "seg.lambda_act": 0.05,
    # training
    "train.learning_rate": 1e-4,
    "train.weight_decay": 1e-5,
    "train.batch_pairs": 1,
    "train.epochs": 30,
    "train.frames_per_clip": 40,
    "train.mode": "align",
    "train.hidden": 128,
    "train.embed_dim": 32,
    "train.nonlinearity": "tanh",
    "train.cache_interval": 1,
    # joint loss weights
    "weights.align": 1.0,
    "weights.seg": 1.0,
}


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for config key {key!r}: {exc}") from exc


class RunConfig:
    """Resolved configuration: defaults, then file, then overrides."""

    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                if k not in DEFAULTS:
                    raise ConfigError(f"unknown config key {k!r}")
                self.values[k] = v

    def set_raw(self, key: str, raw: str) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, raw)

    def __getitem__(self, key: str):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def gen_params(self) -> GenParams:
        return GenParams(
            n_videos=self["synth.n_videos"],
            n_actions=self["synth.n_actions"],
            dim=self["synth.dim"],
            seq_len=self["synth.seq_len"],
            noise=self["synth.noise"],
            warp=self["synth.warp"],
            background_rate=self["synth.background_rate"],
            permute=self["synth.permute"],
            repeat=self["synth.repeat"],
            render=self["synth.render"],
            arc=self["synth.arc"],
            states_per_action=self["synth.states_per_action"],
            length_jitter=self["synth.length_jitter"],
            seed=self["seed"],
        )

    def prior_cfg(self) -> PriorConfig:
        return PriorConfig(
            radius=self["prior.radius"], rho=self["prior.rho"], zeta=self["prior.zeta"]
        )

    def solver_cfg(self) -> SolverConfig:
        mode_raw = str(self["solver.marginal_mode"]).lower()
        try:
            mode = MarginalMode(mode_raw)
        except ValueError as exc:
            raise ConfigError(
                f"solver.marginal_mode must be one of "
                f"{[m.value for m in MarginalMode]}, got {mode_raw!r}"
            ) from exc
        return SolverConfig(
            alpha=self["solver.alpha"],
            epsilon=self["solver.epsilon"],
            step_size=self["solver.step_size"],
            outer_iters=self["solver.outer_iters"],
            inner_sinkhorn_iters=self["solver.inner_iters"],
            tol=self["solver.tol"],
            marginal_mode=mode,
            lambda_p=self["solver.lambda_p"],
            lambda_q=self["solver.lambda_q"],
        )

    def weights(self) -> JointWeights:
        return JointWeights(w_align=self["weights.align"], w_seg=self["weights.seg"])

    def train_cfg(self) -> TrainConfig:
        mode_raw = str(self["train.mode"]).lower()
        try:
            mode = TrainMode(mode_raw)
        except ValueError as exc:
            raise ConfigError(
                f"train.mode must be one of {[m.value for m in TrainMode]}, "
                f"got {mode_raw!r}"
            ) from exc
        return TrainConfig(
            learning_rate=self["train.learning_rate"],
            weight_decay=self["train.weight_decay"],
            batch_pairs=self["train.batch_pairs"],
            epochs=self["train.epochs"],
            frames_per_clip=self["train.frames_per_clip"],
            seed=self["seed"],
            mode=mode,
            weights=self.weights(),
            hidden=self["train.hidden"],
            embed_dim=self["train.embed_dim"],
            nonlinearity=self["train.nonlinearity"],
            cache_interval=self["train.cache_interval"],
        )


def parse_config_file(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        cfg.set_raw(key.strip(), raw)
    return cfg


def resolve_config(path: str | None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the config file (explicit or $SEQOT_CONFIG), then
    `key=value` overrides."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    cfg = parse_config_file(path) if path else RunConfig()
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        cfg.set_raw(key.strip(), raw)
    return cfg
