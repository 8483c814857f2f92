"""Command-line entry point: `seqot synth|solve|train|eval`.

Every command is deterministic given config and seed, prints one JSON
summary to stdout, and writes machine-readable CSV/JSON files.  Exit codes:
0 success, 1 usage or configuration error, 2 runtime or numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .align import augmented_kot_cost
from .encoder import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericalError
from .evaluate import EvalConfig, evaluate, nn_matches, kendall_tau
from .metrics import MatchingScope
from .otcore import CostBundle, fgw_objective, solve_fgw, uniform_histogram
from .priors import VIRTUAL, assign_with_virtual, augment_virtual, structural_priors
from .runconfig import RunConfig, resolve_config
from .segment import SegConfig
from .synth import BACKGROUND, generate, load_dataset, load_features_csv, save_dataset
from .training import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.set_raw("seed", str(args.seed))
    dataset = generate(cfg.gen_params())
    out = Path(args.out)
    save_dataset(dataset, out)
    _emit(
        {
            "command": "synth",
            "path": str(out),
            "videos": dataset.n_videos,
            "frames": int(sum(f.shape[0] for f in dataset.features)),
            "actions": dataset.params.n_actions,
            "classes": dataset.n_label_classes(),
            "pairs": len(dataset.alignments),
            "seed": dataset.params.seed,
        }
    )
    return 0


def _write_matrix_csv(path: Path, mat: np.ndarray, prefix: str) -> None:
    with path.open("w") as fh:
        fh.write(",".join(f"{prefix}{j}" for j in range(mat.shape[1])) + "\n")
        for row in mat:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def cmd_solve(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    for flag, key in (
        ("alpha", "solver.alpha"),
        ("epsilon", "solver.epsilon"),
        ("rho", "prior.rho"),
        ("radius", "prior.radius"),
        ("zeta", "prior.zeta"),
    ):
        value = getattr(args, flag)
        if value is not None:
            cfg.set_raw(key, str(value))

    x = load_features_csv(args.features_x)
    y = load_features_csv(args.features_y)
    prior_cfg = cfg.prior_cfg()
    solver_cfg = cfg.solver_cfg()
    n, m = x.shape[0], y.shape[0]
    cost = augmented_kot_cost(x, y, prior_cfg.rho)
    cx, cy = structural_priors(n, m, prior_cfg.radius)
    aug = augment_virtual(cost, cx, cy, uniform_histogram(n), uniform_histogram(m))
    bundle = CostBundle(aug.kot_cost, aug.struct_x, aug.struct_y)
    coupling, report = solve_fgw(bundle, aug.p, aug.q, solver_cfg)
    corr = assign_with_virtual(coupling, prior_cfg.zeta)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(out / "coupling.csv", coupling, "t")
    with (out / "correspondences.csv").open("w") as fh:
        fh.write("i,j\n")
        for i, j in enumerate(corr.x_to_y):
            fh.write(f"{i},{'VIRTUAL' if j == VIRTUAL else int(j)}\n")
    payload = {
        "command": "solve",
        "iterations": report.iterations,
        "converged": report.converged,
        "final_objective": report.objectives[-1] if report.objectives else None,
        "marginal_error": report.final_marginal_error,
        "shape": [n + 1, m + 1],
        "virtual_assignments_x": int(np.sum(corr.x_to_y == VIRTUAL)),
        "virtual_assignments_y": int(np.sum(corr.y_to_x == VIRTUAL)),
    }
    (out / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _emit(payload)
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    dataset = load_dataset(args.dataset)
    train_cfg = cfg.train_cfg()
    model, log = train(
        dataset,
        train_cfg,
        prior_cfg=cfg.prior_cfg(),
        solver_cfg=cfg.solver_cfg(),
        tau=cfg["align.tau"],
        lambda_act=cfg["seg.lambda_act"],
        use_virtual=cfg["align.use_virtual"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.txt"
    save_checkpoint(ckpt, model)
    with (out / "train_log.csv").open("w") as fh:
        fh.write("step,epoch,loss_xy,loss_xa,loss_ya,loss_total\n")
        for row in log:
            fh.write(
                f"{row['step']},{row['epoch']},{row['loss_xy']:.17g},"
                f"{row['loss_xa']:.17g},{row['loss_ya']:.17g},{row['loss_total']:.17g}\n"
            )
    _emit(
        {
            "command": "train",
            "checkpoint": str(ckpt),
            "log": str(out / "train_log.csv"),
            "steps": len(log),
            "mode": train_cfg.mode.value,
            "final_loss": log[-1]["loss_total"] if log else None,
        }
    )
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args.config, args.overrides)
    dataset = load_dataset(args.dataset)
    model = load_checkpoint(args.checkpoint)
    scope = MatchingScope(args.matching)
    eval_cfg = EvalConfig(
        matching=scope,
        split_seed=cfg["seed"],
        seg_cfg=SegConfig(
            solver=cfg.solver_cfg(),
            radius=cfg["prior.radius"],
            lambda_act=cfg["seg.lambda_act"],
        ),
    )
    report = evaluate(dataset, model, eval_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": "eval", "matching": scope.value, **report.to_json_dict()}
    (out / "metrics.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if args.plot_data:
        _write_plot_data(out, dataset, model, eval_cfg)
    _emit(payload)
    return 0


def _write_plot_data(out: Path, dataset, model, eval_cfg: EvalConfig) -> None:
    from .encoder import encode
    from .evaluate import _remap_background
    from .segment import ActionCentroids, decode_segmentation, init_centroids_kmeans, seg_pseudo_labels

    embeddings = [encode(model, f) for f in dataset.features]
    n_classes = dataset.n_label_classes()
    if model.centroids is not None:
        centroids = ActionCentroids(vectors=model.centroids)
    else:
        centroids = init_centroids_kmeans(embeddings, n_classes, seed=eval_cfg.split_seed)
    with (out / "plot_segmentation.csv").open("w") as fh:
        fh.write("video,frame,pred,gt\n")
        for v in range(dataset.n_videos):
            t_xa, _ = seg_pseudo_labels(embeddings[v], centroids, eval_cfg.seg_cfg)
            pred = decode_segmentation(t_xa)
            gt = _remap_background(dataset.labels[v], dataset.params.n_actions)
            for i, (p_, g_) in enumerate(zip(pred, gt)):
                fh.write(f"{v},{i},{int(p_)},{int(g_)}\n")
    with (out / "plot_tau_pairs.csv").open("w") as fh:
        fh.write("video_a,video_b,tau\n")
        for a in range(dataset.n_videos):
            for b in range(dataset.n_videos):
                if a == b:
                    continue
                keep = np.where(dataset.labels[a] != BACKGROUND)[0]
                if keep.size < 2:
                    continue
                js = nn_matches(embeddings[a][keep], embeddings[b])
                tau = kendall_tau(list(zip(keep.tolist(), js.tolist())))
                fh.write(f"{a},{b},{tau:.17g}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="seqot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--seed", type=int, default=None, help="override the seed")
    _add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_solve = sub.add_parser("solve", help="align two feature sequences")
    p_solve.add_argument("features_x", help="CSV of the source sequence")
    p_solve.add_argument("features_y", help="CSV of the target sequence")
    p_solve.add_argument("--out", required=True, help="output directory")
    p_solve.add_argument("--alpha", type=float, default=None)
    p_solve.add_argument("--epsilon", type=float, default=None)
    p_solve.add_argument("--rho", type=float, default=None)
    p_solve.add_argument("--radius", type=float, default=None)
    p_solve.add_argument("--zeta", type=float, default=None)
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_train = sub.add_parser("train", help="train the encoder on a dataset")
    p_train.add_argument("--dataset", required=True, help="dataset directory")
    p_train.add_argument("--out", required=True, help="output directory")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument(
        "--matching",
        choices=[m.value for m in MatchingScope],
        default=MatchingScope.FULL_DATASET.value,
    )
    p_eval.add_argument(
        "--plot-data", action="store_true", help="also write plotting CSVs"
    )
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"seqot: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"seqot: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"seqot: i/o failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
