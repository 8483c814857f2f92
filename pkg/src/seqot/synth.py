"""Synthetic sequence generation with ground truth, and the on-disk
dataset format.

Each video is a latent action program: an ordered list of action segments
(optionally permuted, with an optional repeated segment and inserted
background frames), sampled on a smoothly warped time grid.  A frame at
within-segment progress u renders as a point on a unit arc

    cos(u * arc) * anchor_a + sin(u * arc) * drift_a

so frames of one action stay mutually distinguishable while remaining far
from other actions; "flat" rendering collapses the arc onto the anchor
itself.  Background frames live in a subspace orthogonal to all action
anchors.  Ground truth records per-frame labels, per-frame program
progress, and for every video pair the frame correspondence map.

Disk layout (all CSV, documented in the README):

    <root>/gen_params.txt        key = value lines
    <root>/prototypes.csv        one action anchor per line
    <root>/pairs.csv             video_a,video_b,file
    <root>/align_0000_0001.csv   i,j with j = -1 for background frames
    <root>/video_0000/features.csv   header f0..f{D-1}
    <root>/video_0000/labels.csv     header label,progress (-1 = background)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

BACKGROUND = -1


@dataclass(frozen=True)
class GenParams:
    n_videos: int = 8
    n_actions: int = 4
    dim: int = 16
    seq_len: int = 60
    noise: float = 0.1
    warp: float = 0.0
    background_rate: float = 0.0
    permute: bool = False
    repeat: bool = False
    render: str = "ramp"
    arc: float = 1.5
    states_per_action: int = 0
    length_jitter: float = 0.2
    distract: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_videos < 1:
            raise ConfigError("n_videos must be >= 1")
        if self.n_actions < 2:
            raise ConfigError("n_actions must be >= 2")
        if self.seq_len < self.n_actions + (1 if self.repeat else 0):
            raise ConfigError("seq_len too small for the requested program")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if not 0.0 <= self.warp < 1.0:
            raise ConfigError("warp must be in [0, 1)")
        if not 0.0 <= self.background_rate < 1.0:
            raise ConfigError("background_rate must be in [0, 1)")
        if self.render not in ("ramp", "flat"):
            raise ConfigError(f"render must be 'ramp' or 'flat', got {self.render!r}")
        if self.length_jitter < 0:
            raise ConfigError("length_jitter must be >= 0")
        if self.states_per_action < 0:
            raise ConfigError("states_per_action must be >= 0")
        if self.distract < 0:
            raise ConfigError("distract must be >= 0")
        needed = self.n_actions * (2 if self.render == "ramp" else 1)
        if self.distract > 0:
            needed += 2
        if self.background_rate > 0:
            needed += 1
        if self.dim < needed:
            raise ConfigError(
                f"dim={self.dim} too small: render={self.render!r} with "
                f"{self.n_actions} actions needs at least {needed} dimensions"
            )


@dataclass
class SynthDataset:
    """Generated sequences plus every piece of ground truth."""

    features: list[np.ndarray]
    labels: list[np.ndarray]
    progress: list[np.ndarray]
    alignments: dict[tuple[int, int], np.ndarray]
    prototypes: np.ndarray
    params: GenParams

    @property
    def n_videos(self) -> int:
        return len(self.features)

    def pair_keys(self) -> list[tuple[int, int]]:
        return sorted(self.alignments)

    def n_label_classes(self) -> int:
        """Distinct label count including the background class if present."""
        has_bg = any(np.any(l == BACKGROUND) for l in self.labels)
        return self.params.n_actions + (1 if has_bg else 0)


def _program_order(rng: np.random.Generator, params: GenParams) -> list[int]:
    """Action id per segment; repeated segments are never adjacent.

    `permute` swaps one random adjacent segment pair per video, a local
    order variation rather than a full shuffle.
    """
    actions = list(range(params.n_actions))
    if params.permute and params.n_actions >= 2:
        s = int(rng.integers(params.n_actions - 1))
        actions[s], actions[s + 1] = actions[s + 1], actions[s]
    if not params.repeat:
        return actions
    donor = int(actions[rng.integers(params.n_actions)])
    slots = [
        s
        for s in range(len(actions) + 1)
        if (s == 0 or actions[s - 1] != donor) and (s == len(actions) or actions[s] != donor)
    ]
    actions.insert(int(rng.choice(slots)), donor)
    return actions


def _warped_times(rng: np.random.Generator, n: int, warp: float) -> np.ndarray:
    s = (np.arange(n) + 0.5) / n
    if warp == 0.0:
        return s
    phase = rng.uniform(0.0, 2.0 * np.pi)
    u = s + warp * np.sin(2.0 * np.pi * s + phase) / (2.0 * np.pi)
    u0 = 0.0 + warp * np.sin(phase) / (2.0 * np.pi)
    u1 = 1.0 + warp * np.sin(2.0 * np.pi + phase) / (2.0 * np.pi)
    return (u - u0) / (u1 - u0)


def generate(params: GenParams) -> SynthDataset:
    """Render the dataset described by `params`, deterministically."""
    rng = np.random.default_rng(params.seed)
    k = params.n_actions

    basis = np.linalg.qr(rng.standard_normal((params.dim, params.dim)))[0]
    anchors = basis[:, :k].T
    n_used = 2 * k if params.render == "ramp" else k
    drifts = basis[:, k : 2 * k].T if params.render == "ramp" else None
    # Distractor: a smooth curve in two dims shared by all videos but with a
    # random phase per video, so it misleads naive frame matching while
    # remaining linearly separable from the action signal.
    if params.distract > 0:
        distract_basis = basis[:, n_used : n_used + 2].T
        n_used += 2
    else:
        distract_basis = None
    # One shared background anchor, orthogonal to every action direction:
    # background frames resemble each other (same "empty scene") across all
    # videos but match no action.
    if params.background_rate > 0:
        bg_anchor = basis[:, n_used]
        bg_sigma = max(0.1, params.noise)
        n_used += 1
    else:
        bg_anchor = None

    features: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    progress: list[np.ndarray] = []
    keys: list[list[tuple[int, int, float] | None]] = []

    for _ in range(params.n_videos):
        order = _program_order(rng, params)
        n_segs = len(order)
        occ = {}
        occurrence = []
        for a in order:
            occurrence.append(occ.get(a, 0))
            occ[a] = occ.get(a, 0) + 1

        if params.length_jitter > 0:
            weights = rng.dirichlet(np.full(n_segs, 1.0 / params.length_jitter))
            weights = np.maximum(weights, 1.0 / (4.0 * params.seq_len))
            weights /= weights.sum()
            n = params.seq_len + int(
                rng.integers(-params.seq_len // 5, params.seq_len // 5 + 1)
            )
        else:
            weights = np.full(n_segs, 1.0 / n_segs)
            n = params.seq_len
        bounds = np.concatenate([[0.0], np.cumsum(weights)])
        bounds[-1] = 1.0

        times = _warped_times(rng, n, params.warp)
        seg_idx = np.clip(np.searchsorted(bounds, times, side="right") - 1, 0, n_segs - 1)

        frames = np.empty((n, params.dim))
        frame_labels = np.empty(n, dtype=int)
        frame_keys: list[tuple[int, int, float] | None] = []
        for i in range(n):
            s = int(seg_idx[i])
            a = order[s]
            u = (times[i] - bounds[s]) / (bounds[s + 1] - bounds[s])
            if params.render == "ramp":
                # Discrete script moments per action: frames render the
                # midpoint of their state, so corresponding frames across
                # videos share the exact base vector.
                q = params.states_per_action
                u_r = (min(int(u * q), q - 1) + 0.5) / q if q > 0 else u
                vec = (
                    np.cos(u_r * params.arc) * anchors[a]
                    + np.sin(u_r * params.arc) * drifts[a]
                )
            else:
                vec = anchors[a]
            frames[i] = vec
            frame_labels[i] = a
            frame_keys.append((a, occurrence[s], float(u)))
        if distract_basis is not None:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            angle = 4.0 * np.pi * times + phase
            frames = frames + params.distract * (
                np.cos(angle)[:, None] * distract_basis[0]
                + np.sin(angle)[:, None] * distract_basis[1]
            )
        if params.noise > 0:
            frames = frames + params.noise * rng.standard_normal(frames.shape)
        frame_progress = times.copy()

        if params.background_rate > 0:
            n_bg = int(round(params.background_rate * n))
            if n_bg:
                total = n + n_bg
                bg_slots = np.sort(rng.choice(total, size=n_bg, replace=False))
                full = np.empty((total, params.dim))
                full_labels = np.empty(total, dtype=int)
                full_progress = np.empty(total)
                full_keys: list[tuple[int, int, float] | None] = [None] * total
                is_bg = np.zeros(total, dtype=bool)
                is_bg[bg_slots] = True
                real_pos = np.where(~is_bg)[0]
                full[real_pos] = frames
                full_labels[real_pos] = frame_labels
                full_progress[real_pos] = frame_progress
                for pos, key in zip(real_pos, frame_keys):
                    full_keys[pos] = key
                for pos in bg_slots:
                    full[pos] = bg_anchor + bg_sigma * rng.standard_normal(params.dim)
                    full_labels[pos] = BACKGROUND
                full_progress[is_bg] = np.interp(
                    bg_slots, real_pos, frame_progress
                )
                frames, frame_labels, frame_progress, frame_keys = (
                    full,
                    full_labels,
                    full_progress,
                    full_keys,
                )

        features.append(frames)
        labels.append(frame_labels)
        progress.append(frame_progress)
        keys.append(frame_keys)

    alignments = {}
    for a_idx in range(params.n_videos):
        for b_idx in range(a_idx + 1, params.n_videos):
            alignments[(a_idx, b_idx)] = _match_keys(keys[a_idx], keys[b_idx])

    return SynthDataset(
        features=features,
        labels=labels,
        progress=progress,
        alignments=alignments,
        prototypes=anchors,
        params=params,
    )


def _match_keys(
    keys_a: list[tuple[int, int, float] | None],
    keys_b: list[tuple[int, int, float] | None],
) -> np.ndarray:
    """Ground-truth map: frame i of A to the frame of B with the same
    (action, occurrence) and the closest within-segment progress."""
    by_seg: dict[tuple[int, int], list[tuple[float, int]]] = {}
    for j, key in enumerate(keys_b):
        if key is not None:
            by_seg.setdefault((key[0], key[1]), []).append((key[2], j))
    for entries in by_seg.values():
        entries.sort()
    out = np.full(len(keys_a), BACKGROUND, dtype=int)
    for i, key in enumerate(keys_a):
        if key is None:
            continue
        entries = by_seg.get((key[0], key[1]))
        if not entries:
            continue
        us = np.array([e[0] for e in entries])
        out[i] = entries[int(np.argmin(np.abs(us - key[2])))][1]
    return out


def _format_row(row: np.ndarray) -> str:
    return ",".join(f"{x:.17g}" for x in row)


def save_dataset(dataset: SynthDataset, root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    with (root / "gen_params.txt").open("w") as fh:
        for f in dataclasses.fields(dataset.params):
            fh.write(f"{f.name} = {getattr(dataset.params, f.name)}\n")

    with (root / "prototypes.csv").open("w") as fh:
        fh.write(",".join(f"f{d}" for d in range(dataset.prototypes.shape[1])) + "\n")
        for row in dataset.prototypes:
            fh.write(_format_row(row) + "\n")

    for v in range(dataset.n_videos):
        vdir = root / f"video_{v:04d}"
        vdir.mkdir(exist_ok=True)
        feats = dataset.features[v]
        with (vdir / "features.csv").open("w") as fh:
            fh.write(",".join(f"f{d}" for d in range(feats.shape[1])) + "\n")
            for row in feats:
                fh.write(_format_row(row) + "\n")
        with (vdir / "labels.csv").open("w") as fh:
            fh.write("label,progress\n")
            for lab, prog in zip(dataset.labels[v], dataset.progress[v]):
                fh.write(f"{lab},{prog:.17g}\n")

    with (root / "pairs.csv").open("w") as fh:
        fh.write("video_a,video_b,file\n")
        for (a, b) in dataset.pair_keys():
            name = f"align_{a:04d}_{b:04d}.csv"
            fh.write(f"{a},{b},{name}\n")
            with (root / name).open("w") as afh:
                afh.write("i,j\n")
                for i, j in enumerate(dataset.alignments[(a, b)]):
                    afh.write(f"{i},{j}\n")


def load_features_csv(path: str | Path) -> np.ndarray:
    """Feature matrix from a headered CSV; parse errors name the line."""
    path = Path(path)
    rows = []
    with path.open() as fh:
        header = fh.readline()
        if not header.strip():
            raise DataError(f"{path}: empty file")
        width = len(header.strip().split(","))
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows)


def _parse_param(name: str, raw: str):
    for f in dataclasses.fields(GenParams):
        if f.name == name:
            if f.type in ("int", int):
                return int(raw)
            if f.type in ("float", float):
                return float(raw)
            if f.type in ("bool", bool):
                return raw.strip().lower() in ("1", "true", "yes")
            return raw.strip()
    raise DataError(f"unknown gen_params key {name!r}")


def load_dataset(root: str | Path) -> SynthDataset:
    root = Path(root)
    params_file = root / "gen_params.txt"
    if not params_file.exists():
        raise DataError(f"{root}: gen_params.txt not found")
    kv = {}
    for line in params_file.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, _, raw = line.partition("=")
        kv[name.strip()] = _parse_param(name.strip(), raw.strip())
    params = GenParams(**kv)

    features, labels, progress = [], [], []
    for v in range(params.n_videos):
        vdir = root / f"video_{v:04d}"
        features.append(load_features_csv(vdir / "features.csv"))
        labs, progs = [], []
        with (vdir / "labels.csv").open() as fh:
            fh.readline()
            for line in fh:
                if not line.strip():
                    continue
                lab, _, prog = line.strip().partition(",")
                labs.append(int(lab))
                progs.append(float(prog))
        labels.append(np.array(labs, dtype=int))
        progress.append(np.array(progs))

    alignments = {}
    pairs_file = root / "pairs.csv"
    if pairs_file.exists():
        with pairs_file.open() as fh:
            fh.readline()
            for line in fh:
                if not line.strip():
                    continue
                a, b, name = line.strip().split(",")
                rows = []
                with (root / name).open() as afh:
                    afh.readline()
                    for arow in afh:
                        if arow.strip():
                            rows.append(int(arow.strip().split(",")[1]))
                alignments[(int(a), int(b))] = np.array(rows, dtype=int)

    proto_file = root / "prototypes.csv"
    prototypes = (
        load_features_csv(proto_file)
        if proto_file.exists()
        else np.zeros((params.n_actions, params.dim))
    )
    return SynthDataset(
        features=features,
        labels=labels,
        progress=progress,
        alignments=alignments,
        prototypes=prototypes,
        params=params,
    )
