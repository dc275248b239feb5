"""Command-line entry points for dataset generation, runs, sweeps, and reports."""

from __future__ import annotations

import argparse
import sys

from .data import SyntheticSpec, generate_synthetic, save_dataset
from .errors import BenchError, ConfigError
from .harness import (
    SWEEPABLE,
    compare,
    format_table,
    parse_config,
    report,
    run_experiment,
    sweep_ablation,
    sweep_parameter,
)
from .metrics import format_percent
from .strategies import DISTILL_MODES, EVAL_MODES, STRATEGIES


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--dataset", help="dataset file (binary or CSV); default: synthetic benchmark")
    p.add_argument("--protocol", help="class split, e.g. B4-2 (4 initial classes, 2 steps)")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--seed", type=int, help="single run seed")
    p.add_argument("--seeds", help="comma-separated run seeds, e.g. 1,2,3,4,5")
    p.add_argument("--alpha", type=float, help="classification loss weight")
    p.add_argument("--beta", type=float, help="distillation loss weight")
    p.add_argument("--tau", type=float, help="distillation temperature")
    p.add_argument("--eval-mode", choices=EVAL_MODES)
    p.add_argument("--distill-mode", choices=DISTILL_MODES)
    p.add_argument("--no-rotation", action="store_const", const=True, default=None,
                   help="disable rotation augmentation (rad only)")
    p.add_argument("--epochs-initial", type=int)
    p.add_argument("--epochs-incremental", type=int)
    p.add_argument("--lr-initial", type=float)
    p.add_argument("--lr-incremental", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden-dims", help="extractor widths, comma-separated, e.g. 64,32")
    p.add_argument("--out", help="output directory for run records and artifacts")
    p.add_argument("--workers", type=int, help="parallel seed runs")


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}
    if args.dataset is not None:
        o["dataset"] = {"path": args.dataset}
    if args.protocol is not None:
        o["protocol"] = args.protocol
    if args.strategy is not None:
        o["strategy"] = args.strategy
    if args.seed is not None and args.seeds is not None:
        raise ConfigError("--seed and --seeds are mutually exclusive")
    if args.seed is not None:
        o["seeds"] = [args.seed]
    elif args.seeds is not None:
        o["seeds"] = _parse_int_list(args.seeds, "--seeds")
    if args.hidden_dims is not None:
        o["hidden_dims"] = _parse_int_list(args.hidden_dims, "--hidden-dims")
    if args.out is not None:
        o["out_dir"] = args.out
    if args.workers is not None:
        o["workers"] = args.workers
    for flag, key in [
        ("alpha", "train.alpha"),
        ("beta", "train.beta"),
        ("tau", "train.tau"),
        ("eval_mode", "train.eval_mode"),
        ("distill_mode", "train.distill_mode"),
        ("epochs_initial", "train.epochs_initial"),
        ("epochs_incremental", "train.epochs_incremental"),
        ("lr_initial", "train.lr_initial"),
        ("lr_incremental", "train.lr_incremental"),
        ("batch_size", "train.batch_size"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            o[key] = value
    if args.no_rotation:
        o["train.rotation"] = False
    return o


def _cmd_gen_data(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        side=args.side,
        samples_per_class=args.samples_per_class,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        holdout_frac=args.holdout_frac,
    )
    ds = generate_synthetic(spec)
    save_dataset(ds, args.out, fmt=args.format)
    print(
        f"wrote {args.out}: {ds.n_samples} samples, {ds.n_classes} classes, "
        f"{ds.side}x{ds.side} grids, fingerprint {ds.fingerprint()[:16]}"
    )
    return 0


def _print_run_results(records, failures) -> None:
    for r in records:
        f_final = r.metrics.final_forgetting()
        i_final = r.metrics.final_intransigence()
        parts = [f"avg_acc={format_percent(r.metrics.avg_acc)}"]
        if f_final is not None:
            parts.append(f"forgetting={format_percent(f_final)}")
        if i_final is not None:
            parts.append(f"intransigence={format_percent(i_final)}")
        print(f"{r.basename()}: " + " ".join(parts) + f" ({r.wall_clock_sec:.1f}s)")
    for f in failures:
        print(f"seed {f['seed']} FAILED: {f['error']}", file=sys.stderr)


def _cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config, _overrides(args))
    records, failures = run_experiment(config)
    _print_run_results(records, failures)
    print(f"records in {config.out_dir}")
    return 4 if failures else 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = parse_config(args.config, _overrides(args))
    from .plots import save_ablation, save_sensitivity

    if args.ablation:
        if args.param or args.values:
            raise ConfigError("--ablation and --param/--values are mutually exclusive")
        records, rows = sweep_ablation(config)
        save_ablation(rows, f"{config.out_dir}/ablation.png")
        headers = ["components", "rotation", "distillation", "avg_acc↑", "seeds"]
        print(format_table(headers, [
            [r["components"], str(r["rotation"]), str(r["distillation"]),
             format_percent(r["avg_acc_mean"]), str(r["n_seeds"])]
            for r in rows
        ]))
    else:
        if not args.param or not args.values:
            raise ConfigError("sweep needs --param and --values (or --ablation)")
        values = _parse_float_list(args.values, "--values")
        records, rows = sweep_parameter(config, args.param, values)
        save_sensitivity(rows, args.param, f"{config.out_dir}/sensitivity_{args.param}.png")
        print(format_table(["param", "value", "avg_acc↑", "seeds"], [
            [r["param"], f"{r['value']:g}", format_percent(r["avg_acc_mean"]), str(r["n_seeds"])]
            for r in rows
        ]))
    failed = sum(r["n_failed"] for r in rows)
    if failed:
        print(f"{failed} runs failed; see *.failed.json under {config.out_dir}", file=sys.stderr)
        return 4
    print(f"sweep artifacts in {config.out_dir}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    result = report(args.run_dir, out_dir=args.out)
    print(result["table"])
    out = args.out or args.run_dir
    print(f"curves, summary, and figure in {out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    result = compare(args.run_dirs, out_dir=args.out)
    print(result["table"])
    if args.out:
        print(f"comparison files in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radcil",
        description="Exemplar-free class-incremental learning benchmark: "
        "rotation-augmented distillation, frozen-extractor NME, and finetune baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    g.add_argument("--out", required=True, help="output path")
    g.add_argument("--format", choices=("binary", "csv"), default="binary")
    g.add_argument("--classes", type=int, default=8)
    g.add_argument("--side", type=int, default=8)
    g.add_argument("--samples-per-class", type=int, default=100)
    g.add_argument("--noise-sigma", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--holdout-frac", type=float, default=0.2)
    g.set_defaults(func=_cmd_gen_data)

    r = sub.add_parser("run", help="run one strategy over a protocol and seeds")
    _add_run_flags(r)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="grid over a loss weight, or the component ablation")
    _add_run_flags(s)
    s.add_argument("--param", choices=SWEEPABLE)
    s.add_argument("--values", help="comma-separated grid, e.g. 0.5,1,2")
    s.add_argument("--ablation", action="store_true", help="run the 4-point component grid")
    s.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="aggregate run records into curves, tables, and a figure")
    p.add_argument("run_dir")
    p.add_argument("--out", help="write outputs here instead of into run_dir")
    p.set_defaults(func=_cmd_report)

    c = sub.add_parser("compare", help="side-by-side strategy table from run directories")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--out", help="also write comparison.json/.txt here")
    c.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
