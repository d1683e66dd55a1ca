"""Command-line front end: weights -> gen -> train -> eval, plus baselines and perturb.

Exit codes: 0 ok, 1 usage, 2 infeasible configuration, 3 I/O or malformed
file, 4 numeric divergence. Files written by a failing command are removed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, codes, nn, optimize, perturb, weights
from .errors import (
    CodebookParseError,
    DegenerateWeightsError,
    DivergenceError,
    InfeasibleConfigError,
    InstanceTooLargeError,
)

EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_DIVERGED = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    value = os.environ.get("MUTE_SEED")
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"MUTE_SEED must be an integer, got {value!r}") from None


class Outputs:
    """Collects written paths so a failing command can remove them."""

    def __init__(self):
        self.paths: list[Path] = []

    def write(self, path, data):
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(tmp, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
        self.paths.append(path)
        return path

    def rollback(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _parse_shape(text):
    if text is None:
        return None
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"shape must look like HxW, got {text!r}") from None
    return h, w


# -- gen -------------------------------------------------------------------


def _optimize(cfg, exact):
    return optimize.exact_search(cfg) if exact else optimize.local_search(cfg)


def cmd_gen(args, out: Outputs) -> int:
    n = args.classes
    b = args.bits if args.bits is not None else n
    w = codes.load_weights(args.weights) if args.weights else optimize.UNIFORM
    if args.min_distance == optimize.AUTO:
        floor = optimize.AUTO
    else:
        try:
            floor = int(args.min_distance)
        except ValueError:
            raise UsageError(f"--min-distance must be an integer or 'auto', got {args.min_distance!r}") from None

    def make_cfg(weights_):
        return optimize.OptimizerConfig(
            n_classes=n, n_bits=b, k_hot=args.k, weights=weights_, seed=args.seed,
            restarts=args.restarts, max_iters_per_restart=args.max_iters,
            time_budget=args.time_budget, min_distance_floor=floor,
        )

    search_weights = optimize.UNIFORM if args.shuffle_only else w
    result = _optimize(make_cfg(search_weights), args.exact)

    cb = result.codebook
    if args.shuffle_only and not isinstance(w, str):
        t0 = time.perf_counter()
        cb = optimize.weighted_shuffle(cb, w, seed=args.seed)
        result = optimize.OptimizerResult(
            codebook=cb,
            objective=codes.weighted_objective(cb, w),
            min_distance=result.min_distance,
            iterations=result.iterations,
            wall_time=result.wall_time + time.perf_counter() - t0,
            restarts_used=result.restarts_used,
            truncated=result.truncated,
        )

    result_path = args.result or str(Path(args.out).with_suffix("")) + ".result.json"
    out.write(args.out, codes.serialize_codebook(cb))
    out.write(result_path, result.to_json())
    if args.lp:
        out.write(args.lp, optimize.format_lp(make_cfg(w)))
    print(f"objective={result.objective:.6g} min_distance={result.min_distance} "
          f"restarts={result.restarts_used} time={result.wall_time:.2f}s -> {args.out}")
    return 0


# -- baseline --------------------------------------------------------------


def cmd_baseline(args, out: Outputs) -> int:
    if args.onehot:
        cb = baselines.one_hot(args.classes)
    elif args.hadamard is not None:
        cb = baselines.hadamard(args.classes, args.hadamard)
    else:
        b = args.bits if args.bits is not None else args.classes
        cb = baselines.random_k_hot(args.classes, b, args.random, args.seed)
    out.write(args.out, codes.serialize_codebook(cb))
    md = codes.min_pairwise_distance(cb) if cb.n_classes > 1 else None
    print(f"{cb.provenance.value}: {cb.n_classes} codes x {cb.n_bits} bits, min_distance={md} -> {args.out}")
    return 0


# -- train -----------------------------------------------------------------


def cmd_train(args, out: Outputs) -> int:
    cb = codes.load_codebook(args.codebook)
    data = nn.load_dataset(args.data, cb.n_classes)
    try:
        hidden = [int(h) for h in args.hidden.split(",") if h.strip()]
    except ValueError:
        raise UsageError(f"--hidden must be a comma list of ints, got {args.hidden!r}") from None
    cfg = nn.TrainConfig(
        learning_rate=args.lr, momentum=args.momentum, weight_decay=args.wd,
        batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
    )
    model = nn.init_mlp([data.dim, *hidden, cb.n_bits], seed=args.seed)
    model, trace = nn.train(model, data, cb, cfg)
    acc = nn.evaluate(model, data, cb).accuracy
    lines = ["epoch,mean_loss"] + [f"{e},{loss!r}" for e, loss in enumerate(trace, start=1)]
    lines.append(f"# final_train_accuracy={acc!r}")
    trace_path = args.trace or str(Path(args.out).with_suffix("")) + ".trace.csv"
    out.write(args.out, nn.model_to_json(model))
    out.write(trace_path, "\n".join(lines) + "\n")
    final = f"{trace[-1]:.6f}" if trace else "n/a"
    print(f"trained {cfg.epochs} epochs, final loss {final}, train accuracy {acc:.4f} -> {args.out}")
    return 0


# -- eval ------------------------------------------------------------------


@dataclass
class RunReport:
    codebook_path: str
    provenance: str
    objective: float
    weights: str
    min_distance: int | None
    model_path: str
    dataset_path: str
    decode: str
    rows: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)

    def to_dict(self, timings: bool = False) -> dict:
        doc = {
            "codebook": self.codebook_path,
            "provenance": self.provenance,
            "objective": self.objective,
            "weights": self.weights,
            "min_distance": self.min_distance,
            "model": self.model_path,
            "dataset": self.dataset_path,
            "decode": self.decode,
            "results": self.rows,
        }
        if timings:
            doc["wall_times_s"] = self.wall_times
        return doc

    def table(self) -> str:
        width = max(len("test set"), *(len(r["testset"]) for r in self.rows))
        head = f"{'test set':<{width}}  accuracy  time_s"
        lines = [
            f"codebook {self.codebook_path} ({self.provenance}), objective {self.objective:.6g} "
            f"[{self.weights}], min distance {self.min_distance}",
            head,
            "-" * len(head),
        ]
        for r in self.rows:
            t = self.wall_times.get(r["testset"], 0.0)
            lines.append(f"{r['testset']:<{width}}  {100 * r['accuracy']:7.2f}%  {t:6.2f}")
        return "\n".join(lines) + "\n"


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in text).strip("_")


def cmd_eval(args, out: Outputs) -> int:
    model = nn.load_model(args.model)
    cb = codes.load_codebook(args.codebook)
    data = nn.load_dataset(args.data, cb.n_classes)
    shape = _parse_shape(args.shape)
    specs = [perturb.parse_spec(s, shape) for s in args.perturb]
    if args.weights:
        w, w_label = codes.load_weights(args.weights), args.weights
    else:
        w, w_label = np.ones((cb.n_classes, cb.n_classes)) - np.eye(cb.n_classes), "uniform"
    report = RunReport(
        codebook_path=args.codebook,
        provenance=cb.provenance.value,
        objective=codes.weighted_objective(cb, w),
        weights=w_label,
        min_distance=codes.min_pairwise_distance(cb) if cb.n_classes > 1 else None,
        model_path=args.model,
        dataset_path=args.data,
        decode=args.decode,
    )
    conf_dir = Path(args.confusion_dir) if args.confusion_dir else Path(args.out).parent
    stem = Path(args.out).stem
    testsets = [("original", data)]
    for spec in specs:
        t0 = time.perf_counter()
        testsets.append((spec.label, perturb.apply(spec, data, model, cb)))
        report.wall_times[spec.label] = time.perf_counter() - t0
    for idx, (label, ds) in enumerate(testsets):
        t0 = time.perf_counter()
        res = nn.evaluate(model, ds, cb, mode=args.decode)
        report.wall_times[label] = report.wall_times.get(label, 0.0) + time.perf_counter() - t0
        cpath = conf_dir / f"{stem}.confusion_{idx}_{_slug(label)}.csv"
        out.write(cpath, codes.format_matrix_csv(res.confusion.counts, integer=True))
        report.rows.append({"testset": label, "accuracy": res.accuracy, "confusion_csv": str(cpath)})
    out.write(args.out, json.dumps(report.to_dict(args.timings), indent=2) + "\n")
    table = report.table()
    if args.table:
        out.write(args.table, table)
    sys.stdout.write(table)
    return 0


# -- weights ---------------------------------------------------------------


def cmd_weights(args, out: Outputs) -> int:
    if args.uniform:
        if args.classes is None:
            raise UsageError("--uniform needs --classes")
        w = weights.uniform_weights(args.classes)
    elif args.confusion:
        w = weights.confusion_to_weights(weights.load_confusion(args.confusion), args.floor)
    elif args.model and args.data:
        model = nn.load_model(args.model)
        data = nn.load_dataset(args.data, args.classes)
        cm = weights.estimate_confusion(model, data)
        if args.confusion_out:
            out.write(args.confusion_out, codes.format_matrix_csv(cm.counts, integer=True))
        w = weights.confusion_to_weights(cm, args.floor)
    else:
        raise UsageError("give --uniform, --confusion, or --model with --data")
    out.write(args.out, codes.format_matrix_csv(w.w))
    print(f"{w.n}x{w.n} weights -> {args.out}")
    return 0


# -- perturb ---------------------------------------------------------------


def cmd_perturb(args, out: Outputs) -> int:
    spec = perturb.parse_spec(args.spec, _parse_shape(args.shape))
    model = nn.load_model(args.model) if args.model else None
    cb = codes.load_codebook(args.codebook) if args.codebook else None
    data = nn.load_dataset(args.data, cb.n_classes if cb else None)
    out.write(args.out, nn.format_dataset_csv(perturb.apply(spec, data, model, cb)))
    print(f"{spec.label}: {data.n_samples} samples -> {args.out}")
    return 0


# -- wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mute", description="Design and evaluate similarity-aware multi-hot target codes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="optimize a K-hot codebook")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--bits", type=int, help="code length (default: number of classes)")
    g.add_argument("--k", type=int, required=True, help="hot bits per codeword")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--weights", help="weight matrix CSV")
    src.add_argument("--uniform", action="store_true", help="uniform weights (default)")
    g.add_argument("--seed", type=int)
    g.add_argument("--restarts", type=int, default=32)
    g.add_argument("--max-iters", type=int, default=10_000)
    g.add_argument("--time-budget", type=float)
    g.add_argument("--min-distance", default="auto",
                   help="hard floor on pairwise distance; 'auto' (default) uses 4 when attainable, 0 disables")
    g.add_argument("--exact", action="store_true", help="exhaustive search (small instances)")
    g.add_argument("--shuffle-only", action="store_true",
                   help="optimize without weights, then reassign codes using the weights")
    g.add_argument("--lp", help="also write the LP-format integer program here")
    g.add_argument("--out", required=True)
    g.add_argument("--result", help="result JSON path (default: <out>.result.json)")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("baseline", help="one-hot, Hadamard or random codebooks")
    kind = b.add_mutually_exclusive_group(required=True)
    kind.add_argument("--onehot", action="store_true")
    kind.add_argument("--hadamard", type=int, metavar="M", help="Sylvester order exponent (H-(2^M - 1))")
    kind.add_argument("--random", type=int, metavar="K", help="random K-hot")
    b.add_argument("--classes", type=int, required=True)
    b.add_argument("--bits", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    t = sub.add_parser("train", help="train the MLP harness against a codebook")
    t.add_argument("--data", required=True)
    t.add_argument("--codebook", required=True)
    t.add_argument("--hidden", default="64", help="comma-separated hidden widths")
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--wd", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--trace", help="loss trace CSV (default: <out>.trace.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy on the original and perturbed test sets")
    e.add_argument("--model", required=True)
    e.add_argument("--codebook", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--perturb", action="append", default=[], help="e.g. negative, blur:sigma=1, sp:p=0.02,seed=7, fgsm:eps=0.1")
    e.add_argument("--shape", help="image shape HxW for blur (default: square)")
    e.add_argument("--decode", choices=("bce", "hamming"), default="bce")
    e.add_argument("--weights", help="weights for the reported objective (default uniform)")
    e.add_argument("--out", required=True, help="report JSON")
    e.add_argument("--table", help="also write the text table here")
    e.add_argument("--confusion-dir")
    e.add_argument("--timings", action="store_true", help="include wall times in the JSON report")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("weights", help="class-similarity weights")
    w.add_argument("--uniform", action="store_true")
    w.add_argument("--classes", type=int)
    w.add_argument("--confusion", help="confusion CSV")
    w.add_argument("--model")
    w.add_argument("--data")
    w.add_argument("--confusion-out", help="write the estimated confusion CSV here")
    w.add_argument("--floor", type=float, default=weights.DEFAULT_FLOOR)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_weights)

    pt = sub.add_parser("perturb", help="write a corrupted copy of a dataset")
    pt.add_argument("--data", required=True)
    pt.add_argument("--spec", required=True)
    pt.add_argument("--shape")
    pt.add_argument("--model")
    pt.add_argument("--codebook")
    pt.add_argument("--out", required=True)
    pt.set_defaults(func=cmd_perturb)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage error or --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    out = Outputs()
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = default_seed()
        return args.func(args, out)
    except UsageError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (InfeasibleConfigError, InstanceTooLargeError, DegenerateWeightsError) as exc:
        code, msg = EXIT_INFEASIBLE, str(exc)
    except (OSError, CodebookParseError) as exc:
        code, msg = EXIT_IO, str(exc)
    except DivergenceError as exc:
        code, msg = EXIT_DIVERGED, str(exc)
    except ValueError as exc:
        code, msg = EXIT_USAGE, str(exc)
    out.rollback()
    print(f"mute {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
