"""Command-line entry point: ``fgreward <subcommand> ...``.

Subcommands: gen, pair, train, score, eval, compare, ablate. Every
subcommand that writes an artifact also writes ``<artifact>.manifest.json``
with the command line, a hash of the parsed options, the seed, SHA-256
digests of inputs and outputs, the package version and wall-clock time.

Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import bundled_references, generate_tiered, read_records, write_records
from .errors import FGRewardError
from .evaluation import (
    EvalReport,
    evaluate_metric,
    fit_thresholds,
    format_criteria,
    format_csv,
    format_table,
    predict_binary,
    subscore_accuracy,
)
from .experiment import (
    CorpusConfig,
    ablate,
    baseline_scores,
    format_ablation,
    learned_scores,
    planted_split,
)
from .features import FeatureSpec
from .loss import LossConfig
from .model import init_model, load_model, save_model, score_report
from .pairing import make_pairs, normalize_all, read_pairs, write_pairs
from .scoring import ScoringSystem, load_system, to_quality
from .train import TrainConfig, TrainingDiverged, checkpoint, resume, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out, args, inputs, outputs, started: float) -> Path:
    opts = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
            if k != "func"}
    manifest = {
        "command": sys.argv[:1] + list(args.argv),
        "config_hash": hashlib.sha256(json.dumps(opts, sort_keys=True, default=str)
                                      .encode()).hexdigest()[:16],
        "seed": opts.get("seed"),
        "inputs": {str(p): _digest(p) for p in inputs if p},
        "outputs": {str(p): _digest(p) for p in outputs if p},
        "tool_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _read_refs(path) -> list:
    """One reference per line, optionally ``id<TAB>text``."""
    items = []
    for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        if "\t" in line:
            rid, text = line.split("\t", 1)
            items.append((rid, text))
        else:
            items.append((f"ref{k:04d}", line.strip()))
    return items


def _system_for(name_or_path, records=None) -> ScoringSystem:
    if name_or_path:
        return load_system(name_or_path)
    names = {r.system for r in records or []}
    if len(names) != 1:
        raise UsageError("--system is required (records name no single system)")
    return load_system(names.pop())


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_gen(args) -> int:
    system = load_system(args.system)
    if args.refs:
        refs = _read_refs(args.refs)
    else:
        refs = [(f"ref{k:04d}", t) for k, t in enumerate(bundled_references())]
    records = generate_tiered(refs, system, seed=args.seed,
                              paraphrase_rate=args.paraphrase_rate)
    write_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_pair(args) -> int:
    records = read_records(args.inp)
    system = _system_for(args.system, records)
    pairs = make_pairs(records, system)
    if not args.no_normalize:
        pairs = normalize_all(pairs, system)
    write_pairs(pairs, args.out)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _train_config(args) -> TrainConfig:
    loss = LossConfig(lam=args.lam, c=args.c, use_ind=not args.no_ind, use_tot=not args.no_tot,
                      reduction=args.reduction)
    return TrainConfig(epochs=args.epochs, batch_size=args.batch, step_size=args.step_size,
                       optimizer=args.optimizer, seed=args.seed, loss=loss,
                       allow_raw_margins=args.allow_raw_margins)


def cmd_train(args) -> int:
    system = load_system(args.system)
    pairs = read_pairs(args.pairs, system)
    config = _train_config(args)
    state = None
    if args.resume:
        state = resume(args.resume, config)
        model = state.model
    else:
        spec = FeatureSpec.full(args.dim) if args.full_features else FeatureSpec(dim=args.dim)
        model = init_model(spec, system.n, system.name, args.arch, args.hidden, seed=args.seed)
    try:
        result = train(pairs, model, config, state=state)
    except TrainingDiverged as exc:
        if exc.state is not None and args.checkpoint:
            checkpoint(exc.state, args.checkpoint)
        raise
    save_model(result.model, args.out)
    args.log = log_path = args.log or f"{args.out}.log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for entry in result.log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    for entry in result.log:
        print(json.dumps(entry, sort_keys=True), file=sys.stderr)
    if args.checkpoint:
        checkpoint(result.state, args.checkpoint)
    print(f"saved model to {args.out}")
    return 0


def cmd_score(args) -> int:
    model = load_model(args.model)
    ref = Path(args.ref).read_text(encoding="utf-8").strip()
    cand = Path(args.cand).read_text(encoding="utf-8").strip()
    rewards, total = score_report(model, ref, cand)
    try:
        ids = load_system(args.system or model.system_name).ids
    except FGRewardError:
        ids = [f"r{j}" for j in range(model.n_outputs)]
    if args.format == "csv":
        print(",".join(ids + ["total"]))
        print(",".join(repr(float(v)) for v in rewards.values) + f",{total!r}")
    else:
        for cid, v in zip(ids, rewards.values):
            print(f"{cid:<24}{v:>12.4f}")
        print(f"{'total':<24}{total:>12.4f}")
    return 0


def _read_human(path, system: ScoringSystem, records) -> tuple[np.ndarray, np.ndarray | None]:
    """Human totals (quality orientation) and optional sub-scores aligned with ``records``.

    The labels file is CSV with a header: ``id,total`` followed optionally by
    one column per criterion id, all in the system's native orientation.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = {row["id"]: row for row in csv.DictReader(fh)}
    missing = [r.id for r in records if r.id not in rows]
    if missing:
        raise UsageError(f"labels file lacks ids {missing[:5]}")
    totals = np.array([float(rows[r.id]["total"]) for r in records])
    subs = None
    first = rows[records[0].id]
    if all(c in first for c in system.ids):
        subs = np.array([[float(rows[r.id][c]) for c in system.ids] for r in records])
    return to_quality(system, totals), subs


def _per_criterion(system, R, subs, records):
    if subs is None:
        return None
    if system.formula == "hundred_minus_weighted_sum":
        # fit thresholds on one half of the references, score the other half
        refs = sorted({r.reference_id for r in records})
        fit_ids = set(refs[::2])
        fit = np.array([r.reference_id in fit_ids for r in records])
        if fit.all() or not fit.any():
            fit = np.arange(len(records)) % 2 == 0
        th = fit_thresholds(R[fit], subs[fit])
        acc = subscore_accuracy(predict_binary(R[~fit], th), subs[~fit], system)
        return {c.id: {"accuracy": float(a), "n": int((~fit).sum())}
                for c, a in zip(system.criteria, acc)}
    return {c.id: (R[:, j], -subs[:, j]) for j, c in enumerate(system.criteria)}


def _write_report(path, reports: list[EvalReport]) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        text = format_csv(reports)
        crit = [r for r in reports if r.per_criterion]
        if crit:
            rows = crit[0].per_criterion
            keys = list(rows[0])
            text += "\n" + ",".join(keys) + "\n"
            text += "\n".join(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                                       for k in keys) for row in rows) + "\n"
    else:
        text = "```\n" + format_table(reports) + "```\n"
        for r in reports:
            if r.per_criterion:
                text += f"\nPer-criterion ({r.metric_name}):\n\n```\n{format_criteria(r)}```\n"
    path.write_text(text, encoding="utf-8")


def _eval_inputs(args):
    records = read_records(args.test)
    system = _system_for(getattr(args, "system", None), records)
    if args.human:
        human, subs = _read_human(args.human, system, records)
    else:
        human = np.array([r.quality for r in records])
        subs = np.array([r.subs for r in records])
    return records, system, human, subs


def cmd_eval(args) -> int:
    records, system, human, subs = _eval_inputs(args)
    model = load_model(args.model, system.name)
    R = learned_scores(model, records)
    report = evaluate_metric(R.sum(axis=1), human, "learned",
                             _per_criterion(system, R, subs, records))
    _write_report(args.report, [report])
    print(format_table([report]), end="")
    if report.per_criterion:
        print(format_criteria(report), end="")
    return 0


def cmd_compare(args) -> int:
    records, system, human, subs = _eval_inputs(args)
    reports = []
    if args.model:
        model = load_model(args.model, system.name)
        reports.append(evaluate_metric(learned_scores(model, records).sum(axis=1), human,
                                       "learned"))
    for name in ("bleu4", "rouge_l"):
        reports.append(evaluate_metric(baseline_scores(name, records), human, name))
    _write_report(args.report, reports)
    print(format_csv(reports) if args.format == "csv" else format_table(reports), end="")
    return 0


def cmd_ablate(args) -> int:
    corpus = CorpusConfig(n_refs=args.n_refs, heldout=args.heldout, seed=args.seed)
    split = planted_split(args.system, corpus)
    config = _train_config(args)
    rows = ablate(split, args.what, FeatureSpec(dim=args.dim), config, args.arch, args.hidden)
    if args.format == "csv":
        text = "grid,setting,kendall_tau,spearman_rho\n" + "".join(
            f"{r['grid']},{r['setting']},{r['kendall_tau']!r},{r['spearman_rho']!r}\n"
            for r in rows)
    else:
        text = format_ablation(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_train_options(p, epochs=4):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch", type=int, default=6)
    p.add_argument("--step-size", type=float, default=TrainConfig.step_size)
    p.add_argument("--optimizer", choices=("momentum", "adaptive"), default="momentum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--c", type=float, default=1e-2)
    p.add_argument("--reduction", choices=("sum", "mean"), default="sum")
    p.add_argument("--no-ind", action="store_true", help="drop the per-criterion term")
    p.add_argument("--no-tot", action="store_true", help="drop the total-margin term")
    p.add_argument("--allow-raw-margins", action="store_true")
    p.add_argument("--arch", choices=("linear", "mlp"), default="linear")
    p.add_argument("--hidden", type=int, default=0)
    p.add_argument("--dim", type=int, default=4096)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fgreward", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a tiered planted corpus")
    p.add_argument("--system", default="radcliq6", help="preset name or YAML file")
    p.add_argument("--refs", help="reference file (one per line, optional id<TAB>text)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paraphrase-rate", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen, inputs=("refs",), outputs=("out",))

    p = sub.add_parser("pair", help="build accepted/rejected pairs")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--system")
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_pair, inputs=("inp",), outputs=("out",))

    p = sub.add_parser("train", help="train the multi-reward head")
    p.add_argument("--pairs", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="write the final training state here")
    p.add_argument("--resume", help="continue from a checkpoint")
    p.add_argument("--log", help="training log path (default <out>.log.jsonl)")
    p.add_argument("--full-features", action="store_true",
                   help="use all four feature blocks with L2 normalization")
    _add_train_options(p)
    p.set_defaults(func=cmd_train, inputs=("pairs", "resume"),
                   outputs=("out", "log", "checkpoint"))

    p = sub.add_parser("score", help="score one candidate against one reference")
    p.add_argument("--model", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--cand", required=True)
    p.add_argument("--system")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_score, inputs=(), outputs=())

    p = sub.add_parser("eval", help="correlate the learned metric with human scores")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--human", help="CSV labels: id,total[,criterion ids...]")
    p.add_argument("--system")
    p.add_argument("--report", required=True, help="out.md or out.csv")
    p.set_defaults(func=cmd_eval, inputs=("model", "test", "human"), outputs=("report",))

    p = sub.add_parser("compare", help="table of every metric on one corpus")
    p.add_argument("--model")
    p.add_argument("--test", required=True)
    p.add_argument("--human")
    p.add_argument("--system")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_compare, inputs=("model", "test", "human"), outputs=("report",))

    p = sub.add_parser("ablate", help="loss-term grid and lambda sweep")
    p.add_argument("--what", choices=("loss", "lambda", "both"), default="both")
    p.add_argument("--system", default="radcliq6")
    p.add_argument("--n-refs", type=int, default=200)
    p.add_argument("--heldout", type=int, default=50)
    p.add_argument("--out")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    _add_train_options(p)
    p.set_defaults(func=cmd_ablate, inputs=(), outputs=("out",))
    return parser


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    started = time.time()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        args.argv = argv
        status = args.func(args)
        outputs = [getattr(args, k) for k in args.outputs if getattr(args, k, None)]
        if outputs:
            inputs = [getattr(args, k) for k in args.inputs if getattr(args, k, None)]
            write_manifest(outputs[0], args, inputs, outputs, started)
        return status
    except UsageError as exc:
        print(f"fgreward: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fgreward: I/O error: {exc}", file=sys.stderr)
        return 2
    except (FGRewardError, LookupError) as exc:
        print(f"fgreward: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
