"""Experiment orchestration: configs, run records, sweeps, reports, comparisons."""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset, split_tasks
from .errors import BenchError, ComparisonError, ConfigError, ProtocolError
from .evaluate import AccuracyMatrix, evaluate_step
from .metrics import MetricsReport, build_report, format_percent, step_accuracy
from .model import save_checkpoint
from .strategies import STRATEGIES, EpochLog, TrainConfig, make_strategy, train_reference

DEFAULT_HIDDEN_DIMS = [64, 48, 32]

_PROTOCOL_RE = re.compile(r"^B(\d+)-(\d+)$")


def parse_protocol(text: str) -> tuple[int, int]:
    m = _PROTOCOL_RE.match(text.strip())
    if not m:
        raise ProtocolError(f"protocol must look like B<init>-<steps>, got {text!r}")
    return int(m.group(1)), int(m.group(2))


@dataclass
class ExperimentConfig:
    """Everything one benchmark run needs; seeds fan out into separate runs."""

    dataset: dict = field(default_factory=dict)
    init_classes: int = 4
    steps: int = 2
    strategy: str = "rad"
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [1])
    hidden_dims: list[int] = field(default_factory=lambda: list(DEFAULT_HIDDEN_DIMS))
    out_dir: str = "runs"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.init_classes < 1 or self.steps < 1:
            raise ProtocolError(f"bad protocol B{self.init_classes}-{self.steps}")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be positive, got {self.hidden_dims}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not self.dataset:
            self.dataset = {"synthetic": {}}
        if ("path" in self.dataset) == ("synthetic" in self.dataset):
            raise ConfigError("dataset must specify exactly one of 'path' or 'synthetic'")

    @property
    def protocol(self) -> str:
        return f"B{self.init_classes}-{self.steps}"

    def echo(self) -> dict:
        """Config as recorded in run records: identical across the seed fan-out
        (per-run seed lives in the record itself, output paths are provenance
        of the filesystem, not the experiment)."""
        return {
            "dataset": self.dataset,
            "protocol": self.protocol,
            "strategy": self.strategy,
            "hidden_dims": list(self.hidden_dims),
            "train": self.train.to_dict(),
            "seeds": list(self.seeds),
        }

    def to_dict(self) -> dict:
        d = self.echo()
        d["out_dir"] = self.out_dir
        d["workers"] = self.workers
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        init_classes, steps = parse_protocol(d.pop("protocol", "B4-2"))
        train = d.pop("train", {})
        if not isinstance(train, TrainConfig):
            train = TrainConfig.from_dict(train)
        known = {
            "dataset": d.pop("dataset", {}),
            "strategy": d.pop("strategy", "rad"),
            "seeds": [int(s) for s in d.pop("seeds", [1])],
            "hidden_dims": [int(h) for h in d.pop("hidden_dims", DEFAULT_HIDDEN_DIMS)],
            "out_dir": d.pop("out_dir", "runs"),
            "workers": int(d.pop("workers", 1)),
        }
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        return cls(init_classes=init_classes, steps=steps, train=train, **known)


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Config file first, then explicit overrides; flags win over the file."""
    merged: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            merged = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from None
        if not isinstance(merged, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("train."):
            merged.setdefault("train", {})
            if isinstance(merged["train"], TrainConfig):
                merged["train"] = merged["train"].to_dict()
            merged["train"][key.split(".", 1)[1]] = value
        else:
            merged[key] = value
    return ExperimentConfig.from_dict(merged)


def build_dataset(spec: dict, run_seed: int) -> Dataset:
    """Resolve the config's dataset block. Synthetic data inherits the run
    seed unless the block pins its own, so each seed is an independent draw."""
    if "path" in spec:
        if not Path(spec["path"]).exists():
            raise ConfigError(f"dataset file not found: {spec['path']}")
        return load_dataset(spec["path"])
    params = dict(spec["synthetic"])
    params.setdefault("seed", run_seed)
    allowed = {"n_classes", "side", "samples_per_class", "noise_sigma", "seed", "holdout_frac"}
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown synthetic dataset keys: {sorted(unknown)}")
    return generate_synthetic(SyntheticSpec(**params))


# --- run records ---------------------------------------------------------------


@dataclass
class RunRecord:
    """Self-contained result of one (strategy, protocol, seed) run."""

    strategy: str
    protocol: str
    seed: int
    config: dict
    epoch_logs: list[EpochLog]
    gradient_steps: list[int]
    heldout_sizes: list[int]
    matrix_rows: list[list[float]]
    metrics: MetricsReport
    dataset_fingerprint: str
    extractor_checksum: str
    model_checksum: str
    checkpoint_sha256: str | None
    wall_clock_sec: float

    def matrix(self) -> AccuracyMatrix:
        mat = AccuracyMatrix(len(self.matrix_rows), heldout_sizes=self.heldout_sizes)
        for m, row in enumerate(self.matrix_rows):
            for n, acc in enumerate(row):
                mat.record(m, n, acc)
        return mat

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "protocol": self.protocol,
            "seed": self.seed,
            "config": self.config,
            "epoch_logs": [log.to_dict() for log in self.epoch_logs],
            "gradient_steps": list(self.gradient_steps),
            "heldout_sizes": list(self.heldout_sizes),
            "matrix_rows": self.matrix_rows,
            "metrics": self.metrics.to_dict(),
            "dataset_fingerprint": self.dataset_fingerprint,
            "extractor_checksum": self.extractor_checksum,
            "model_checksum": self.model_checksum,
            "checkpoint_sha256": self.checkpoint_sha256,
            "wall_clock_sec": self.wall_clock_sec,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            strategy=d["strategy"],
            protocol=d["protocol"],
            seed=int(d["seed"]),
            config=d["config"],
            epoch_logs=[EpochLog.from_dict(x) for x in d["epoch_logs"]],
            gradient_steps=[int(g) for g in d["gradient_steps"]],
            heldout_sizes=[int(h) for h in d["heldout_sizes"]],
            matrix_rows=[[float(a) for a in row] for row in d["matrix_rows"]],
            metrics=MetricsReport.from_dict(d["metrics"]),
            dataset_fingerprint=d["dataset_fingerprint"],
            extractor_checksum=d["extractor_checksum"],
            model_checksum=d["model_checksum"],
            checkpoint_sha256=d.get("checkpoint_sha256"),
            wall_clock_sec=float(d["wall_clock_sec"]),
        )

    def record_hash(self) -> str:
        """Content hash; wall clock is excluded so reruns hash identically."""
        d = self.to_dict()
        d.pop("wall_clock_sec")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def basename(self) -> str:
        return f"{self.strategy}_{self.protocol}_s{self.seed}"

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        payload = self.to_dict()
        payload["record_hash"] = self.record_hash()
        path = directory / f"{self.basename()}.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True))
        self.matrix().save_csv(directory / f"{self.basename()}_matrix.csv")
        return path

    @classmethod
    def load(cls, path) -> "RunRecord":
        d = json.loads(Path(path).read_text())
        stored = d.pop("record_hash", None)
        rec = cls.from_dict(d)
        if stored is not None and stored != rec.record_hash():
            raise ComparisonError(f"{path}: stored record hash does not match contents")
        return rec


def load_run_records(directory) -> list[RunRecord]:
    """All run records under a directory tree, sorted by (strategy, seed)."""
    directory = Path(directory)
    if not directory.exists():
        raise ConfigError(f"run directory not found: {directory}")
    records = []
    for path in sorted(directory.rglob("*.json")):
        try:
            d = json.loads(path.read_text())
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if isinstance(d, dict) and "record_hash" in d and "matrix_rows" in d:
            records.append(RunRecord.load(path))
    return sorted(records, key=lambda r: (r.strategy, r.seed))


# --- reference-model cache -----------------------------------------------------

_REF_CACHE: dict[str, float] = {}


def _reference_key(dataset_fp: str, protocol: str, k: int, seed: int, train: TrainConfig, hidden_dims) -> str:
    recipe = {
        "dataset": dataset_fp,
        "protocol": protocol,
        "k": k,
        "seed": seed,
        "hidden_dims": list(hidden_dims),
        "epochs": train.epochs_initial,
        "lr": train.lr_initial,
        "batch": train.batch_size,
        "momentum": train.momentum,
        "weight_decay": train.weight_decay,
    }
    return hashlib.sha256(json.dumps(recipe, sort_keys=True).encode()).hexdigest()


def reference_accuracies(
    dataset: Dataset,
    init_classes: int,
    steps: int,
    seed: int,
    train: TrainConfig,
    hidden_dims: list[int],
    cache_dir=None,
) -> dict[int, float]:
    """a_k_minus for k = 1..T, cached by recipe so strategies share the work.

    k = 0 is skipped: the reference there is the initial task itself, so the
    plasticity gap is reported as absent.
    """
    stream = split_tasks(dataset, init_classes, steps, seed)
    layer_dims = [dataset.dim] + list(hidden_dims)
    out: dict[int, float] = {}
    for k in range(1, stream.n_tasks):
        key = _reference_key(dataset.fingerprint(), stream.protocol, k, seed, train, hidden_dims)
        if key in _REF_CACHE:
            out[k] = _REF_CACHE[key]
            continue
        disk = Path(cache_dir) / f"ref_{key[:24]}.json" if cache_dir is not None else None
        if disk is not None and disk.exists():
            out[k] = _REF_CACHE[key] = float(json.loads(disk.read_text())["a_k_minus"])
            continue
        _, a_k = train_reference(stream.tasks, k, replace(train, seed=seed), layer_dims)
        _REF_CACHE[key] = out[k] = a_k
        if disk is not None:
            disk.parent.mkdir(parents=True, exist_ok=True)
            tmp = disk.with_suffix(".tmp")
            tmp.write_text(json.dumps({"key": key, "a_k_minus": a_k}))
            os.replace(tmp, disk)
    return out


# --- experiment driver -----------------------------------------------------------


def run_one_seed(config: ExperimentConfig, seed: int) -> RunRecord:
    """Full pipeline for one seed: data, sequential training, evaluation,
    references, metrics, persisted artifacts."""
    t0 = time.perf_counter()
    out_dir = Path(config.out_dir)
    dataset = build_dataset(config.dataset, seed)
    stream = split_tasks(dataset, config.init_classes, config.steps, seed)
    layer_dims = [dataset.dim] + list(config.hidden_dims)
    strategy = make_strategy(config.strategy, stream, replace(config.train, seed=seed), layer_dims)
    matrix = AccuracyMatrix(stream.n_tasks, heldout_sizes=stream.heldout_sizes())
    for t in range(stream.n_tasks):
        strategy.learn_task(t)
        evaluate_step(strategy.classify, stream.tasks, t, matrix)

    refs = reference_accuracies(
        dataset, config.init_classes, config.steps, seed,
        replace(config.train, seed=seed), config.hidden_dims,
        cache_dir=out_dir / "refcache",
    )
    metrics = build_report(matrix, refs)

    out_dir.mkdir(parents=True, exist_ok=True)
    basename = f"{config.strategy}_{stream.protocol}_s{seed}"
    ckpt_path = out_dir / f"{basename}.ckpt"
    save_checkpoint(strategy.model, strategy.store, ckpt_path)
    ckpt_sha = hashlib.sha256(ckpt_path.read_bytes()).hexdigest()

    record = RunRecord(
        strategy=config.strategy,
        protocol=stream.protocol,
        seed=seed,
        config=config.echo(),
        epoch_logs=strategy.logs,
        gradient_steps=strategy.gradient_steps,
        heldout_sizes=stream.heldout_sizes(),
        matrix_rows=[matrix.row(m) for m in range(stream.n_tasks)],
        metrics=metrics,
        dataset_fingerprint=dataset.fingerprint(),
        extractor_checksum=strategy.model.extractor.checksum(),
        model_checksum=strategy.model.checksum(),
        checkpoint_sha256=ckpt_sha,
        wall_clock_sec=time.perf_counter() - t0,
    )
    record.save(out_dir)
    return record


def _run_seed_job(config_dict: dict, seed: int):
    config = ExperimentConfig.from_dict(config_dict)
    record = run_one_seed(config, seed)
    return record.to_dict()


def run_experiment(config: ExperimentConfig) -> tuple[list[RunRecord], list[dict]]:
    """One run per seed; a failing seed is recorded and does not stop the rest."""
    records: list[RunRecord] = []
    failures: list[dict] = []

    def note_failure(seed: int, err: Exception) -> None:
        entry = {"seed": seed, "error": f"{type(err).__name__}: {err}"}
        failures.append(entry)
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / f"{config.strategy}_{config.protocol}_s{seed}.failed.json"
        path.write_text(json.dumps(entry, indent=1))

    if config.workers > 1 and len(config.seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                pool.submit(_run_seed_job, config.to_dict(), seed): seed for seed in config.seeds
            }
            done = {}
            for fut, seed in futures.items():
                try:
                    done[seed] = RunRecord.from_dict(fut.result())
                except Exception as err:
                    note_failure(seed, err)
            records = [done[s] for s in config.seeds if s in done]
    else:
        for seed in config.seeds:
            try:
                records.append(run_one_seed(config, seed))
            except Exception as err:
                note_failure(seed, err)
    return records, failures


# --- sweeps ----------------------------------------------------------------------

SWEEPABLE = ("alpha", "beta", "tau")

ABLATION_GRID = (
    ("none", False, 0.0),
    ("rotation", True, 0.0),
    ("distillation", False, 1.0),
    ("rotation+distillation", True, 1.0),
)


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.array(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def sweep_parameter(config: ExperimentConfig, param: str, values: list[float]):
    """One experiment per grid value; returns (records, sensitivity rows)."""
    if param not in SWEEPABLE:
        raise ConfigError(f"can only sweep {SWEEPABLE}, got {param!r}")
    if not values:
        raise ConfigError("sweep grid is empty")
    all_records: list[RunRecord] = []
    rows: list[dict] = []
    for value in values:
        sub = replace(
            config,
            train=replace(config.train, **{param: value}),
            out_dir=str(Path(config.out_dir) / f"{param}_{value:g}"),
        )
        records, failures = run_experiment(sub)
        all_records.extend(records)
        mean, std = _mean_std([r.metrics.avg_acc for r in records]) if records else (float("nan"), 0.0)
        rows.append(
            {
                "param": param,
                "value": value,
                "avg_acc_mean": mean,
                "avg_acc_std": std,
                "n_seeds": len(records),
                "n_failed": len(failures),
            }
        )
    _write_csv(
        Path(config.out_dir) / f"sensitivity_{param}.csv",
        ["param", "value", "avg_acc_mean", "avg_acc_std", "n_seeds", "n_failed"],
        rows,
    )
    return all_records, rows


def sweep_ablation(config: ExperimentConfig):
    """The four component on/off combinations, always through the rad recipe."""
    all_records: list[RunRecord] = []
    rows: list[dict] = []
    for label, rotation, beta in ABLATION_GRID:
        sub = replace(
            config,
            strategy="rad",
            train=replace(config.train, alpha=1.0, beta=beta, rotation=rotation),
            out_dir=str(Path(config.out_dir) / f"ablation_{label.replace('+', '_')}"),
        )
        records, failures = run_experiment(sub)
        all_records.extend(records)
        mean, std = _mean_std([r.metrics.avg_acc for r in records]) if records else (float("nan"), 0.0)
        rows.append(
            {
                "components": label,
                "rotation": int(rotation),
                "distillation": int(beta > 0),
                "avg_acc_mean": mean,
                "avg_acc_std": std,
                "n_seeds": len(records),
                "n_failed": len(failures),
            }
        )
    _write_csv(
        Path(config.out_dir) / "ablation.csv",
        ["components", "rotation", "distillation", "avg_acc_mean", "avg_acc_std", "n_seeds", "n_failed"],
        rows,
    )
    return all_records, rows


def _write_csv(path, headers: list[str], rows: list[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=headers)
        writer.writeheader()
        writer.writerows(rows)


# --- report and compare ------------------------------------------------------------


def _single_protocol(records: list[RunRecord]) -> str:
    protocols = sorted({r.protocol for r in records})
    if len(protocols) != 1:
        raise ComparisonError(f"records mix protocols {protocols}; report them separately")
    return protocols[0]


def _group_by_strategy(records: list[RunRecord]) -> dict[str, list[RunRecord]]:
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.strategy, []).append(r)
    return groups


def curve_points(record: RunRecord) -> list[float]:
    mat = record.matrix()
    return [step_accuracy(mat, m) for m in range(mat.n_tasks)]


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def report(run_dir, out_dir=None, make_plots: bool = True) -> dict:
    """Aggregate a directory of run records into curves, a summary table, and
    a figure. Returns the summary structure; files land in out_dir."""
    records = load_run_records(run_dir)
    if not records:
        raise ConfigError(f"no run records found under {run_dir}")
    protocol = _single_protocol(records)
    out = Path(out_dir) if out_dir is not None else Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)

    groups = _group_by_strategy(records)
    curves: dict[str, dict] = {}
    summary_rows: list[dict] = []
    for strategy, recs in sorted(groups.items()):
        per_seed = np.array([curve_points(r) for r in recs], dtype=np.float64)
        mean = per_seed.mean(axis=0)
        std = per_seed.std(axis=0, ddof=1) if len(recs) > 1 else np.zeros(per_seed.shape[1])
        curves[strategy] = {"steps": list(range(per_seed.shape[1])), "mean": mean.tolist(), "std": std.tolist()}
        _write_csv(
            out / f"curve_{strategy}.csv",
            ["step", "mean_acc", "std_acc", "n_seeds"],
            [
                {"step": s, "mean_acc": repr(m), "std_acc": repr(sd), "n_seeds": len(recs)}
                for s, m, sd in zip(curves[strategy]["steps"], mean.tolist(), std.tolist())
            ],
        )
        avg_mean, avg_std = _mean_std([r.metrics.avg_acc for r in recs])
        f_vals = [v for v in (r.metrics.final_forgetting() for r in recs) if v is not None]
        i_vals = [v for v in (r.metrics.final_intransigence() for r in recs) if v is not None]
        row = {
            "strategy": strategy,
            "n_seeds": len(recs),
            "avg_acc_mean": avg_mean,
            "avg_acc_std": avg_std,
            "forgetting_mean": _mean_std(f_vals)[0] if f_vals else None,
            "forgetting_std": _mean_std(f_vals)[1] if f_vals else None,
            "intransigence_mean": _mean_std(i_vals)[0] if i_vals else None,
            "intransigence_std": _mean_std(i_vals)[1] if i_vals else None,
        }
        summary_rows.append(row)

    _write_csv(
        out / "summary.csv",
        [
            "strategy", "n_seeds", "avg_acc_mean", "avg_acc_std",
            "forgetting_mean", "forgetting_std", "intransigence_mean", "intransigence_std",
        ],
        summary_rows,
    )

    def cell(v, std=None):
        if v is None:
            return "-"
        text = format_percent(v)
        if std is not None:
            text += f"±{format_percent(std)}"
        return text

    table = format_table(
        ["strategy", "seeds", "avg_acc↑", "forgetting↓", "intransigence↓"],
        [
            [
                r["strategy"],
                str(r["n_seeds"]),
                cell(r["avg_acc_mean"], r["avg_acc_std"]),
                cell(r["forgetting_mean"], r["forgetting_std"]),
                cell(r["intransigence_mean"], r["intransigence_std"]),
            ]
            for r in summary_rows
        ],
    )
    (out / "summary.txt").write_text(table + "\n")

    if make_plots:
        from .plots import save_accuracy_curves

        save_accuracy_curves(curves, protocol, out / "curves.png")
    return {"protocol": protocol, "curves": curves, "summary": summary_rows, "table": table}


def compare(run_dirs: list, out_dir=None) -> dict:
    """Side-by-side strategy table over the same protocol and datasets.

    Within each seed, every strategy must have seen the identical dataset
    (fingerprints must agree); protocols must match everywhere.
    """
    if not run_dirs:
        raise ConfigError("compare needs at least one run directory")
    records: list[RunRecord] = []
    for d in run_dirs:
        records.extend(load_run_records(d))
    if not records:
        raise ConfigError(f"no run records found under {[str(d) for d in run_dirs]}")
    _single_protocol(records)
    by_seed: dict[int, str] = {}
    for r in records:
        fp = by_seed.setdefault(r.seed, r.dataset_fingerprint)
        if fp != r.dataset_fingerprint:
            raise ComparisonError(
                f"seed {r.seed} was run on different datasets (fingerprint mismatch); "
                "compare needs identical data per seed"
            )

    groups = _group_by_strategy(records)
    rows = []
    for strategy, recs in sorted(groups.items()):
        f_vals = [v for v in (r.metrics.final_forgetting() for r in recs) if v is not None]
        i_vals = [v for v in (r.metrics.final_intransigence() for r in recs) if v is not None]
        rows.append(
            {
                "strategy": strategy,
                "n_seeds": len(recs),
                "avg_acc": _mean_std([r.metrics.avg_acc for r in recs])[0],
                "forgetting": _mean_std(f_vals)[0] if f_vals else None,
                "intransigence": _mean_std(i_vals)[0] if i_vals else None,
            }
        )

    def rank(column: str, descending: bool) -> dict[str, int]:
        scored = [(r["strategy"], r[column]) for r in rows if r[column] is not None]
        scored.sort(key=lambda kv: kv[1], reverse=descending)
        return {name: pos for pos, (name, _) in enumerate(scored)}

    ranks = {
        "avg_acc": rank("avg_acc", descending=True),
        "forgetting": rank("forgetting", descending=False),
        "intransigence": rank("intransigence", descending=False),
    }
    annotate = len(rows) > 1
    marks = {0: "*", 1: "†"}
    table_rows = []
    for r in rows:
        cells = [r["strategy"], str(r["n_seeds"])]
        for col in ("avg_acc", "forgetting", "intransigence"):
            if r[col] is None:
                cells.append("-")
                continue
            text = format_percent(r[col])
            pos = ranks[col].get(r["strategy"])
            if annotate and pos in marks:
                text += marks[pos]
            cells.append(text)
            r[f"{col}_rank"] = pos
        table_rows.append(cells)
    table = format_table(
        ["strategy", "seeds", "avg_acc↑", "forgetting↓", "intransigence↓"], table_rows
    )
    result = {"rows": rows, "table": table, "ranks": ranks}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(json.dumps({"rows": rows}, indent=1, sort_keys=True))
        (out / "comparison.txt").write_text(table + "\n")
    return result
