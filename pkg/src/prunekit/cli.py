"""Command-line pipeline: analyze, importance, prune, finetune, eval, infer,
sweep, preset-export.

stdout carries only data; errors print a one-line category plus a JSON
detail line on stderr and exit nonzero.  All outputs are reproducible for
a fixed --seed.  PRUNEKIT_THREADS caps BLAS parallelism (0 = reference
single-threaded mode); it is applied before numpy is imported, which is
why this module defers all heavy imports into the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _configure_threads() -> None:
    val = os.environ.get("PRUNEKIT_THREADS")
    if val is None:
        return
    try:
        n = max(1, int(val))          # 0 -> reference single-threaded mode
    except ValueError:
        n = 1
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ[var] = str(n)


_configure_threads()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_model(path: str):
    from . import graph
    spec = graph.load(path)
    violations = graph.validate(spec)
    if violations:
        from .errors import ShapeMismatch
        raise ShapeMismatch("invalid architecture file", violations=violations)
    return spec


def _select_layers(spec, layers_arg: str | None) -> list[str]:
    """Conv layers to prune: explicit labels/names, else the last six convs."""
    from .errors import UnknownLayer
    convs = [l.name for l in spec.conv_layers()]
    if layers_arg:
        out = []
        for tok in layers_arg.split(","):
            tok = tok.strip()
            name = spec.conv_index.get(tok, tok)
            if name not in convs:
                raise UnknownLayer(f"no conv layer {tok!r}")
            out.append(name)
        return out
    return convs[-6:]


def _load_calibration(index_path: str, count: int, bins: int):
    from .storage import load_dataset
    ds = load_dataset(index_path, bins=bins)
    take = min(count, len(ds)) if count else len(ds)
    import numpy as np
    clips = np.stack([ds.load_clip(i) for i in range(take)])[:, None, :, :]
    return clips


def _importance_report(spec, ckpt, args):
    from . import importance
    calibration = None
    criterion = getattr(args, "criterion", None)
    if getattr(args, "calibration", None):
        calibration = _load_calibration(args.calibration, args.calibration_count,
                                        spec.input_shape[1])
        criterion = criterion or "activation_energy"
    criterion = criterion or "weight_norm"
    return importance.score_model(spec, ckpt.tensors, criterion=criterion,
                                  calibration=calibration)


# ---------------------------------------------------------------------------
# Commands

def cmd_preset_export(args) -> int:
    from . import graph
    _emit(graph.to_json(graph.build_cnn14_preset()), args.out)
    return 0


def cmd_analyze(args) -> int:
    from . import complexity
    spec = _load_model(args.model)
    report = complexity.analyze(spec)
    _emit(report.to_csv() if args.format == "csv" else report.to_json(), args.out)
    return 0


def cmd_importance(args) -> int:
    from .storage import load_checkpoint
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    report = _importance_report(spec, ckpt, args)
    _emit(report.to_json(), args.out)
    return 0


def cmd_prune(args) -> int:
    from . import pruning
    from .errors import RatioOutOfRange
    from .graph import save as save_spec
    from .storage import load_checkpoint, save_checkpoint
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    if args.plan:
        with open(args.plan, encoding="utf-8") as fh:
            plan = pruning.PrunePlan.from_json(fh.read())
    else:
        targets: dict[str, float] = {}
        if args.target:
            for tok in args.target:
                layer, _, ratio = tok.partition("=")
                name = spec.conv_index.get(layer, layer)
                targets[name] = float(ratio)
        elif args.ratio is not None:
            for name in _select_layers(spec, args.layers):
                targets[name] = args.ratio
        else:
            raise RatioOutOfRange("prune needs --plan, --ratio or --target")
        if args.importance:
            from .importance import ImportanceReport
            with open(args.importance, encoding="utf-8") as fh:
                report = ImportanceReport.from_json(fh.read())
        else:
            report = _importance_report(spec, ckpt, args)
        plan = pruning.make_plan(report, targets)
    new_spec, new_ckpt = pruning.apply_plan(spec, ckpt, plan)
    save_spec(new_spec, f"{args.out}.model.json")
    save_checkpoint(new_ckpt, args.out)
    with open(f"{args.out}.plan.json", "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())
    sys.stdout.write(pruning.prune_report(spec, new_spec))
    return 0


def _train_config(args):
    from .training import MaskConfig, TrainConfig
    base: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = json.load(fh)
    if "masking" in base and isinstance(base["masking"], dict):
        base["masking"] = MaskConfig(**base["masking"])
    for flag, key in (("iterations", "iterations"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("optimizer", "optimizer"),
                      ("mixup_alpha", "mixup_alpha"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    return TrainConfig(**base)


def cmd_finetune(args) -> int:
    from .graph import save as save_spec
    from .storage import load_checkpoint, load_dataset, save_checkpoint
    from .training import finetune
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    dataset = load_dataset(args.dataset, bins=spec.input_shape[1])
    config = _train_config(args)
    trained, log = finetune(spec, ckpt, dataset, config)
    save_checkpoint(trained, args.out)
    save_spec(spec, f"{args.out}.model.json")
    _emit(log.to_csv(), args.log)
    return 0


def cmd_eval(args) -> int:
    from .metrics import mean_average_precision
    from .engine import Runtime
    from .storage import load_checkpoint, load_dataset
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    x, y = load_dataset(args.dataset, bins=spec.input_shape[1]).load_all()
    probs = Runtime(spec, ckpt.tensors).forward(x, mode="eval")
    result = mean_average_precision(probs, y)
    _emit(result.to_csv() if args.format == "csv" else result.to_json(), args.out)
    return 0


def cmd_infer(args) -> int:
    import numpy as np
    from .engine import Runtime
    from .storage import load_checkpoint
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    bins = spec.input_shape[1]
    raw = np.fromfile(args.clip, dtype="<f4")
    if raw.size % bins:
        from .errors import ShapeMismatch
        raise ShapeMismatch(f"clip has {raw.size} values, not divisible by {bins} bins")
    clip = raw.reshape(1, 1, -1, bins)
    probs = Runtime(spec, ckpt.tensors).forward(clip, mode="eval")[0]
    order = np.argsort(-probs, kind="stable")[:args.topk]
    lines = ["class,probability"] + [f"{int(i)},{float(probs[i])!r}" for i in order]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_sweep(args) -> int:
    from . import complexity, pruning
    from .errors import RatioOutOfRange
    from .graph import save as save_spec
    from .storage import load_checkpoint, load_dataset, save_checkpoint
    spec = _load_model(args.model)
    ckpt = load_checkpoint(args.weights, spec)
    ratios = [float(tok) for tok in args.ratios.split(",") if tok.strip()] if args.ratios else []
    for p in ratios:
        if not (0.0 <= p < 1.0):
            raise RatioOutOfRange(f"ratio {p} not in [0, 1)")
    layers = _select_layers(spec, args.layers)
    base_report = complexity.analyze(spec)
    rows = ["ratio,params,macs,params_reduction_pct,macs_reduction_pct,map"]
    report = _importance_report(spec, ckpt, args) if ratios else None
    os.makedirs(args.out, exist_ok=True) if args.out else None
    for p in ratios:
        plan = pruning.make_plan(report, {name: p for name in layers})
        pspec, pckpt = pruning.apply_plan(spec, ckpt, plan)
        cmp = complexity.compare(base_report, complexity.analyze(pspec))
        map_cell = ""
        if args.out:
            prefix = os.path.join(args.out, f"ratio_{p:g}")
            save_spec(pspec, f"{prefix}.model.json")
            save_checkpoint(pckpt, prefix)
        if args.finetune_dataset:
            from .training import finetune
            dataset = load_dataset(args.finetune_dataset, bins=spec.input_shape[1])
            config = _train_config(args)
            trained, log = finetune(pspec, pckpt, dataset, config)
            map_cell = repr(float(log.points[-1][2])) if log.points else ""
            if args.out:
                save_checkpoint(trained, os.path.join(args.out, f"ratio_{p:g}.finetuned"))
        new = cmp.totals
        rows.append(f"{p:g},{new.params_after},{new.macs_after},"
                    f"{cmp.params_reduction_pct:.1f},{cmp.macs_reduction_pct:.1f},{map_cell}")
    _emit("\n".join(rows) + "\n", getattr(args, "summary", None))
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prunekit",
                                description="Structured filter pruning toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int)
        return sp

    sp = add("preset-export", cmd_preset_export, help="write the CNN14 architecture file")
    sp.add_argument("--out")

    sp = add("analyze", cmd_analyze, help="parameter and MAC accounting")
    sp.add_argument("--model", required=True)
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")

    sp = add("importance", cmd_importance, help="score and rank conv filters")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--criterion", choices=("weight_norm", "activation_energy"))
    sp.add_argument("--calibration", help="dataset index.tsv for activation energy")
    sp.add_argument("--calibration-count", type=int, default=32)
    sp.add_argument("--out")

    sp = add("prune", cmd_prune, help="structurally prune filters")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--plan", help="explicit plan JSON")
    sp.add_argument("--ratio", type=float, help="uniform ratio for --layers")
    sp.add_argument("--target", action="append", help="LAYER=RATIO (repeatable)")
    sp.add_argument("--layers", help="comma-separated conv labels/names "
                                     "(default: last six convs)")
    sp.add_argument("--importance", help="precomputed importance report JSON")
    sp.add_argument("--criterion", choices=("weight_norm", "activation_energy"))
    sp.add_argument("--calibration")
    sp.add_argument("--calibration-count", type=int, default=32)
    sp.add_argument("--out", required=True, help="output prefix")

    sp = add("finetune", cmd_finetune, help="fine-tune a (pruned) model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--config", help="TrainConfig JSON file")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--optimizer", choices=("adam", "sgd"))
    sp.add_argument("--mixup-alpha", dest="mixup_alpha", type=float)
    sp.add_argument("--out", required=True, help="output checkpoint prefix")
    sp.add_argument("--log", help="train log CSV path (default stdout)")

    sp = add("eval", cmd_eval, help="mAP on a dataset")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")

    sp = add("infer", cmd_infer, help="top-k class probabilities for one clip")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--clip", required=True)
    sp.add_argument("--topk", type=int, default=10)
    sp.add_argument("--out")

    sp = add("sweep", cmd_sweep, help="prune at several ratios and tabulate")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--ratios", default="", help="comma-separated ratios in [0,1)")
    sp.add_argument("--layers")
    sp.add_argument("--criterion", choices=("weight_norm", "activation_energy"))
    sp.add_argument("--calibration")
    sp.add_argument("--calibration-count", type=int, default=32)
    sp.add_argument("--finetune-dataset", dest="finetune_dataset")
    sp.add_argument("--config")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--optimizer", choices=("adam", "sgd"))
    sp.add_argument("--mixup-alpha", dest="mixup_alpha", type=float)
    sp.add_argument("--out", help="directory for per-ratio artifacts")
    sp.add_argument("--summary", help="summary CSV path (default stdout)")
    return p


def main(argv=None) -> int:
    from .errors import PrunekitError
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PrunekitError as e:
        print(e.category, file=sys.stderr)
        print(json.dumps({"category": e.category, "message": str(e),
                          **{k: v for k, v in e.detail.items()}}), file=sys.stderr)
        return 1
    except OSError as e:
        print("IOError", file=sys.stderr)
        print(json.dumps({"category": "IOError", "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
