"""Command-line entry point: ``lsconf <command> ...``.

Exit codes: 0 success, 2 argument or input-file parse error, 3 configuration
error, 4 training divergence, 5 insufficient center capacity, 6 center drift
in a continual run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fastassign
from .centerfile import load_centers, save_centers
from .data import gen_blobs, load_csv, load_features_csv, save_csv, unique_label_expand
from .errors import CapacityError, ConfigurationError, DivergenceError, LSCError, ShapeError
from .report import report_params
from .rootsys import (
    CenterMatrix,
    Family,
    Projection,
    build_configuration,
    capacity,
    choose_centers,
    gen_rotation_2d,
    min_n_dim,
)
from .trainer import (
    Loss,
    TrainConfig,
    TrainState,
    continual_extend,
    distill,
    eval_accuracy,
    forward,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("lsconf")

EXIT_OK = 0
EXIT_PARSE = 2

_FAMILIES = {"an": Family.AN, "anp": Family.ANP, "anr": Family.ANR}
_PROJECTIONS = {"none": Projection.NONE, "drop": Projection.DROP_LAST, "isometric": Projection.ISOMETRIC}


def _int_list(text: str) -> list[int]:
    return [int(float(t)) for t in text.split(",") if t.strip()]


def _lr_drop(text: str) -> tuple[int, float]:
    epoch, _, rate = text.partition(":")
    try:
        return int(epoch), float(rate)
    except ValueError:
        raise argparse.ArgumentTypeError("expected EPOCH:RATE, e.g. 200:1e-5")


def _fmt(x: float) -> str:
    return f"{x:.10f}"


# --- gen -------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.family == "rotation2d":
        if args.n_classes is None:
            raise ConfigurationError("rotation2d needs --n-classes")
        C = gen_rotation_2d(args.n_classes, args.circle_radius, args.base_radius)
        save_centers(args.out, C)
        print(f"wrote {C.n_classes} vectors of dim {C.n_dim} to {args.out}")
        return EXIT_OK

    family = _FAMILIES[args.family]
    if args.min_for is not None:
        n_classes = args.min_for
        n = min_n_dim(n_classes, args.interpolation)
        if family is Family.ANP:
            while capacity(n, args.interpolation) // 2 < n_classes:
                n += 1
    elif args.n is not None:
        n = args.n
        n_classes = args.n_classes
    else:
        raise ConfigurationError("give --n or --min-for")

    cfg = build_configuration(
        family, n, projection=_PROJECTIONS[args.projection],
        seed=args.seed if family is Family.ANR else None,
        interpolation=args.interpolation,
    )
    if n_classes is None:
        n_classes = len(cfg)
    if n_classes > len(cfg):
        raise CapacityError(n_classes, len(cfg), min_n_dim(n_classes, args.interpolation))
    C = choose_centers(cfg, n_classes)
    save_centers(args.out, C)
    print(f"wrote {C.n_classes} vectors of dim {C.n_dim} (rank {n}) to {args.out}")
    return EXIT_OK


# --- blobs -----------------------------------------------------------------

def cmd_blobs(args) -> int:
    ds = gen_blobs(args.k, args.d, args.per_class, args.spread, args.seed)
    if args.unique_labels:
        ds = unique_label_expand(ds)
    save_csv(ds, args.out, header=args.header)
    print(f"wrote {len(ds)} rows, {ds.n_classes} classes, dim {ds.dim} to {args.out}")
    return EXIT_OK


# --- train -----------------------------------------------------------------

def _train_config(args, n_classes: int) -> TrainConfig:
    perm = None
    if getattr(args, "permute_labels", False):
        perm = np.random.default_rng([args.seed, 1]).permutation(n_classes)
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        loss=Loss(args.loss),
        seed=args.seed,
        label_permutation=perm,
        lr_drop=args.lr_drop,
    )


def _write_metrics(path, history) -> None:
    if not path:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_accuracy"])
        for h in history:
            w.writerow([h["epoch"], repr(float(h["loss"])), _fmt(h["train_accuracy"])])


def _write_embeddings(path, params, ds) -> None:
    if not path:
        return
    if params.n_dim > 3:
        log.warning("embedding dump skipped: n_dim %d > 3", params.n_dim)
        return
    Z = forward(params, ds.features).astype(np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"z{i}" for i in range(params.n_dim)])
        for label, z in zip(ds.labels, Z):
            w.writerow([int(label)] + [repr(float(v)) for v in z])


def _initial_state(args, ds, C: CenterMatrix) -> TrainState:
    if getattr(args, "resume", None):
        state, _ = load_checkpoint(args.resume)
        if state.params.n_dim != C.n_dim:
            raise ShapeError(f"checkpoint output dim {state.params.n_dim} != center dim {C.n_dim}")
        if state.params.layer_dims[0] != ds.dim:
            raise ShapeError(f"checkpoint input dim {state.params.layer_dims[0]} != feature dim {ds.dim}")
        return state
    out_dim = args.embed_dim if args.embed_dim is not None else C.n_dim
    if out_dim != C.n_dim:
        raise ShapeError(f"encoder output dim {out_dim} != center dim {C.n_dim}")
    dims = (ds.dim, *args.hidden, out_dim)
    return TrainState.fresh(init_encoder(dims, args.seed), args.seed)


def _run_training(args, state, run):
    """Run ``run(state)``; on divergence keep the last finite state and report it."""
    try:
        return run(state), EXIT_OK
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.state, exc.exit_code


def _extra(args, cfg: TrainConfig) -> dict:
    return {"metric": cfg.metric, "centers": str(args.centers)}


def cmd_train(args) -> int:
    ds = load_csv(args.data, header=args.header)
    C = load_centers(args.centers)
    if ds.labels.max() >= C.n_classes:
        raise ConfigurationError(f"dataset has label {ds.labels.max()} but only {C.n_classes} centers")
    state = _initial_state(args, ds, C)
    cfg = _train_config(args, C.n_classes)
    final, code = _run_training(args, state, lambda s: train(s, ds, C, cfg))
    final.config = cfg
    _write_metrics(args.metrics_out, final.history)
    _write_embeddings(args.embeddings_out, final.params, ds)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, final, _extra(args, cfg))
    if final.history:
        h = final.history[-1]
        print(f"epoch {h['epoch']} loss {h['loss']:.6g} train_accuracy {_fmt(h['train_accuracy'])}")
    return code


# --- eval / assign -----------------------------------------------------------

def _metric_for(state, extra, override):
    if override:
        return override
    return extra.get("metric") or (state.config.metric if state.config else "cos")


def cmd_eval(args) -> int:
    state, extra = load_checkpoint(args.checkpoint)
    C = load_centers(args.centers)
    ds = load_csv(args.data, header=args.header)
    perm = state.config.label_permutation if state.config is not None else None
    acc = eval_accuracy(state.params, ds, C, _metric_for(state, extra, args.metric), perm)
    print(f"accuracy={_fmt(acc)}")
    return EXIT_OK


def cmd_assign(args) -> int:
    C = load_centers(args.centers)
    X = load_features_csv(args.input, header=args.header)
    if X.shape[0] == 0:
        return EXIT_OK
    if args.labeled:
        X = X[:, 1:]
    if args.checkpoint:
        state, _ = load_checkpoint(args.checkpoint)
        if X.shape[1] != state.params.layer_dims[0]:
            raise ShapeError(f"input width {X.shape[1]} != encoder input dim {state.params.layer_dims[0]}")
        if state.params.n_dim != C.n_dim:
            raise ShapeError(f"encoder output dim {state.params.n_dim} != center dim {C.n_dim}")
        Z = forward(state.params, X).astype(np.float64)
    else:
        Z = X
    if Z.shape[1] != C.n_dim:
        raise ShapeError(f"embedding dim {Z.shape[1]} != center dim {C.n_dim}")
    if args.oracle:
        index = fastassign.AssignmentIndex(fastassign.Mode.BRUTE_FORCE, C)
    else:
        index = fastassign.build_index(C.config, C)
    out = sys.stdout
    if args.topk:
        for z in Z:
            out.write(" ".join(str(c) for c in fastassign.assign_topk(index, z, args.topk)) + "\n")
    else:
        for label in fastassign.assign_batch(index, Z):
            out.write(f"{label}\n")
    return EXIT_OK


# --- continual / distill -----------------------------------------------------

def cmd_continual(args) -> int:
    state, extra = load_checkpoint(args.checkpoint)
    old_C = load_centers(args.old_centers)
    new_C = load_centers(args.centers)
    if not new_C.starts_with(old_C):
        from .errors import CenterDriftError

        raise CenterDriftError("extended centers do not start with the previous center rows")
    old = load_csv(args.old_data, header=args.header)
    new = load_csv(args.new_data, header=args.header) if args.new_data else None
    cfg = _train_config(args, new_C.n_classes)
    if state.config is not None and not args.loss_given:
        cfg = replace(cfg, loss=state.config.loss)
    metric = cfg.metric
    old_classes = np.arange(old_C.n_classes)
    before = eval_accuracy(state.params, old, old_C, metric)

    final, code = _run_training(
        args, state,
        lambda s: continual_extend(s, new, new_C, cfg, old_dataset=old, previous_centers=old_C),
    )
    old_after = eval_accuracy(final.params, old.relabeled(new_C.n_classes), new_C, metric)
    lines = [
        f"old_classes={len(old_classes)} new_classes={new_C.n_classes - old_C.n_classes}",
        f"old_accuracy_before={_fmt(before)}",
        f"old_accuracy_after={_fmt(old_after)}",
    ]
    if new is not None and len(new):
        lines.append(f"new_accuracy_after={_fmt(eval_accuracy(final.params, new.relabeled(new_C.n_classes), new_C, metric))}")
    print("\n".join(lines))
    if args.report_out:
        Path(args.report_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_metrics(args.metrics_out, final.history)
    if args.checkpoint_out:
        final.config = cfg
        save_checkpoint(args.checkpoint_out, final, {"metric": metric, "centers": str(args.centers)})
    return code


def cmd_distill(args) -> int:
    teacher, _ = load_checkpoint(args.teacher)
    ds = load_csv(args.data, header=args.header)
    dims = (ds.dim, *args.hidden, teacher.params.n_dim)
    cfg = _train_config(args, ds.n_classes)
    cfg = replace(cfg, loss=Loss.COS)
    final, code = _run_training(args, None, lambda _: distill(teacher.params, dims, ds, cfg))
    if args.centers_out and final.centers is not None:
        save_centers(args.centers_out, final.centers)
    if args.teacher_centers:
        tC = load_centers(args.teacher_centers)
        print(f"teacher_accuracy={_fmt(eval_accuracy(teacher.params, ds, tC, 'cos'))}")
    _write_metrics(args.metrics_out, final.history)
    if args.checkpoint:
        final.config = cfg
        save_checkpoint(args.checkpoint, final, {"metric": "cos", "centers": str(args.centers_out or "")})
    if final.history:
        print(f"student_accuracy={_fmt(final.history[-1]['train_accuracy'])}")
    return code


# --- report-params -------------------------------------------------------------

def cmd_report_params(args) -> int:
    rep = report_params(args.n_dim, int(args.backbone_params), args.n_classes)
    print(rep.to_text())
    if args.csv:
        rep.write_csv(args.csv)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _add_train_opts(p, loss_default="cos"):
    p.add_argument("--loss", choices=[l.value for l in Loss], default=None)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--lr-drop", type=_lr_drop, default=None, metavar="EPOCH:RATE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permute-labels", action="store_true")
    p.add_argument("--header", action="store_true", help="dataset CSVs have a header row")
    p.set_defaults(loss_default=loss_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsconf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a center file")
    p.add_argument("--family", choices=["an", "anp", "anr", "rotation2d"], required=True)
    size = p.add_mutually_exclusive_group()
    size.add_argument("--n", type=int, help="root-system rank")
    size.add_argument("--min-for", type=int, metavar="N_CLASSES", help="smallest rank hosting N_CLASSES")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--projection", choices=list(_PROJECTIONS), default="drop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interpolation", type=int, choices=[0, 1], default=0)
    p.add_argument("--circle-radius", type=float, default=5.0)
    p.add_argument("--base-radius", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("blobs", help="generate a synthetic dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unique-labels", action="store_true")
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_blobs)

    p = sub.add_parser("train", help="train an encoder against a center file")
    p.add_argument("--data", required=True)
    p.add_argument("--centers", required=True)
    p.add_argument("--hidden", type=_int_list, default=[64, 64])
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--resume")
    p.add_argument("--checkpoint")
    p.add_argument("--metrics-out")
    p.add_argument("--embeddings-out")
    _add_train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--centers", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metric", choices=["cos", "dist"])
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("assign", help="nearest-center labels, one per input row")
    p.add_argument("--centers", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint", help="encode the input first; without it rows are embeddings")
    p.add_argument("--oracle", action="store_true", help="brute-force search")
    p.add_argument("--topk", type=int)
    p.add_argument("--labeled", action="store_true", help="drop a leading label column")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("continual", help="extend the classes of a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--old-centers", required=True)
    p.add_argument("--centers", required=True, help="extended centers")
    p.add_argument("--old-data", required=True)
    p.add_argument("--new-data")
    p.add_argument("--checkpoint-out")
    p.add_argument("--metrics-out")
    p.add_argument("--report-out")
    _add_train_opts(p)
    p.set_defaults(func=cmd_continual)

    p = sub.add_parser("distill", help="train a student on a teacher's class-mean embeddings")
    p.add_argument("--teacher", required=True)
    p.add_argument("--teacher-centers")
    p.add_argument("--data", required=True)
    p.add_argument("--hidden", type=_int_list, default=[64, 64])
    p.add_argument("--centers-out")
    p.add_argument("--checkpoint")
    p.add_argument("--metrics-out")
    _add_train_opts(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("report-params", help="parameter counts: center matching vs classification head")
    p.add_argument("--n-dim", type=int, required=True)
    p.add_argument("--backbone-params", type=float, required=True)
    p.add_argument("--n-classes", type=_int_list, required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if hasattr(args, "loss_default"):
        args.loss_given = args.loss is not None
        if args.loss is None:
            args.loss = args.loss_default
    try:
        return args.func(args)
    except LSCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
