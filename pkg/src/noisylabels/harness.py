"""Experiment orchestration: config-driven multi-seed runs, aggregation,
comparison tables and plot-ready CSV emission.

One JSON config file describes dataset, noise, method and hyperparameters;
run_experiment executes `runs` seeded repetitions (noise is regenerated per
run where it is seeded) and reports mean and population standard deviation
of clean-test accuracy. Reports are byte-reproducible in reproducible mode.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cleaning import CleanConfig, clean_dataset, retrain_on_cleaned, tune_threshold
from .data import Dataset, SplitSpec, generate_synthetic_corpus, load_dataset, \
    split_dataset
from .ensembles import COMPACT_GRID, EnsembleSpec, LARGE_MODEL_GRID, predict_ensemble, \
    sample_grid_configs, train_boosting, train_heterogeneous, train_homogeneous
from .errors import MethodError, ValidationError
from .model import Featurizer, TrainConfig, evaluate
from .noise import LabelRule, NoiseSpec, RuleLabeler, inject_annotation_noise, \
    inject_rule_noise, inject_uniform_noise, noise_level, noise_matrix
from .presets import PRESET_NAMES, Preset, get_preset
from .training import CetaConfig, CoteachSchedule, train_ceta, train_coteaching, \
    train_vanilla
from .util import run_indexed

METHODS = ("vanilla", "coteaching", "ceta", "hme", "hte", "boosting", "nc")

DEFAULT_COTEACH = CoteachSchedule(tau=0.35, ramp_steps=120)
DEFAULT_CETA = CetaConfig()


@dataclass(frozen=True)
class EnsembleSettings:
    members: int = 5
    subset_fraction: float = 0.8
    grid: str = "compact"  # or "large_model"

    def __post_init__(self):
        if self.members < 1 or not 0.0 < self.subset_fraction <= 1.0:
            raise ValidationError("bad ensemble settings")
        if self.grid not in ("compact", "large_model"):
            raise ValidationError("grid must be 'compact' or 'large_model'")

    def grid_lists(self):
        return COMPACT_GRID if self.grid == "compact" else LARGE_MODEL_GRID


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one table cell of an evaluation."""

    method: str
    dataset: dict
    noise: dict | None = None
    split: dict | None = None
    featurizer: Featurizer | None = None
    train: TrainConfig | None = None
    coteaching: CoteachSchedule = DEFAULT_COTEACH
    ceta: CetaConfig = DEFAULT_CETA
    ensemble: EnsembleSettings = EnsembleSettings()
    cleaning: CleanConfig = CleanConfig()
    runs: int = 5
    base_seed: int = 0
    noise_validation: bool = True
    reproducible: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if not isinstance(self.dataset, dict) or not (
                {"preset", "synthetic", "path"} & self.dataset.keys()):
            raise ValidationError(
                "dataset must name a preset, a synthetic spec, or a path")

    # -- config file round-trip ------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ValidationError("config root must be a JSON object")
        known = {"method", "dataset", "noise", "split", "featurizer", "train",
                 "coteaching", "ceta", "ensemble", "cleaning", "runs",
                 "base_seed", "noise_validation", "reproducible", "output"}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "method" not in raw or "dataset" not in raw:
            raise ValidationError("config needs 'method' and 'dataset'")

        def build(section, factory):
            value = raw.get(section)
            if value is None:
                return None
            if not isinstance(value, dict):
                raise ValidationError(f"'{section}' must be an object")
            try:
                return factory(**value)
            except TypeError as exc:
                raise ValidationError(f"bad '{section}' section: {exc}") from None

        feat = build("featurizer", lambda **kw: Featurizer(
            hash_dim=kw.get("hash_dim", 4096),
            ngram_orders=tuple(kw.get("ngram_orders", (1, 2))),
            hash_seed=kw.get("hash_seed", 0)))
        return cls(
            method=raw["method"],
            dataset=raw["dataset"],
            noise=raw.get("noise"),
            split=raw.get("split"),
            featurizer=feat,
            train=build("train", TrainConfig),
            coteaching=build("coteaching", CoteachSchedule) or DEFAULT_COTEACH,
            ceta=build("ceta", CetaConfig) or DEFAULT_CETA,
            ensemble=build("ensemble", EnsembleSettings) or EnsembleSettings(),
            cleaning=build("cleaning", lambda **kw: CleanConfig(
                folds=kw.get("folds", 5),
                threshold=kw.get("threshold"),
                tuning_grid=tuple(kw["tuning_grid"]) if kw.get("tuning_grid")
                else None,
                tuning_quantiles=tuple(kw.get(
                    "tuning_quantiles", CleanConfig().tuning_quantiles)),
                seed=kw.get("seed", 0))) or CleanConfig(),
            runs=raw.get("runs", 5),
            base_seed=raw.get("base_seed", 0),
            noise_validation=raw.get("noise_validation", True),
            reproducible=raw.get("reproducible", True),
        )

    def to_dict(self) -> dict:
        def plain(obj):
            if obj is None or isinstance(obj, (str, int, float, bool)):
                return obj
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            return {k: plain(v) for k, v in obj.__dict__.items()}

        return {
            "method": self.method,
            "dataset": plain(self.dataset),
            "noise": plain(self.noise),
            "split": plain(self.split),
            "featurizer": plain(self.featurizer),
            "train": plain(self.train),
            "coteaching": plain(self.coteaching),
            "ceta": plain(self.ceta),
            "ensemble": plain(self.ensemble),
            "cleaning": plain(self.cleaning),
            "runs": self.runs,
            "base_seed": self.base_seed,
            "noise_validation": self.noise_validation,
            "reproducible": self.reproducible,
        }


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such config file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Dataset / noise materialization
# ---------------------------------------------------------------------------


@dataclass
class _Materialized:
    train: Dataset
    val: Dataset
    test: Dataset
    preset: Preset | None
    featurizer: Featurizer
    train_cfg: TrainConfig


def _build_labeler(noise: dict, dataset: Dataset) -> RuleLabeler:
    rules_raw = noise.get("rules")
    if not rules_raw:
        raise ValidationError("feature_dependent noise needs a 'rules' list "
                              "(or use a preset with a built-in labeler)")
    rules = []
    for r in rules_raw:
        label = r.get("label")
        idx = dataset.label_set.index_of(label) if isinstance(label, str) else label
        rules.append(LabelRule(frozenset(r.get("keywords", ())), idx))
    return RuleLabeler(tuple(rules), fallback=noise.get("fallback", "abstain"),
                       seed=noise.get("seed", 0))


def _materialize(cfg: ExperimentConfig) -> _Materialized:
    """Clean splits plus the featurizer/train defaults for this source."""
    preset = None
    if "preset" in cfg.dataset:
        name = cfg.dataset["preset"]
        if name not in PRESET_NAMES:
            raise ValidationError(f"unknown preset {name!r}")
        preset = get_preset(name, cfg.dataset.get("corpus_seed"))
        train, val, test = preset.clean_splits()
        featurizer = cfg.featurizer or preset.featurizer
        train_cfg = cfg.train or preset.train_config
    else:
        if "synthetic" in cfg.dataset:
            spec = dict(cfg.dataset["synthetic"])
            corpus = generate_synthetic_corpus(
                n_classes=spec.pop("classes"),
                n_instances=spec.pop("instances"),
                vocab_per_class=spec.pop("vocab_per_class", 40),
                overlap=spec.pop("overlap", 0.0),
                seed=spec.pop("seed", 0),
                **{k: tuple(v) if isinstance(v, list) else v
                   for k, v in spec.items()},
            )
        else:
            corpus = load_dataset(cfg.dataset["path"],
                                  cfg.dataset.get("format", "jsonl"))
        split = cfg.split or {}
        corpus_split = SplitSpec(split.get("train", 0.7),
                                 split.get("validation", 0.1),
                                 split.get("test", 0.2),
                                 seed=split.get("seed", 0))
        train, val, test = split_dataset(corpus, corpus_split)
        featurizer = cfg.featurizer or Featurizer(hash_dim=4096)
        train_cfg = cfg.train or TrainConfig()
    if test.has_gold() and (test.observed() != test.gold()).any():
        raise ValidationError("test split carries label noise; headline "
                              "evaluation requires a clean test split")
    return _Materialized(train, val, test, preset, featurizer, train_cfg)


def _apply_noise(mat: _Materialized, cfg: ExperimentConfig, run_seed: int
                 ) -> tuple[Dataset, Dataset]:
    """Noisy (train, validation) for one run; seeded noise is regenerated
    from the run seed so repetitions aggregate over noising randomness."""
    noise = cfg.noise
    if noise is None:
        noise = ({"kind": "feature_dependent"} if mat.preset is not None
                 and mat.preset.labeler is not None else {"kind": "none"})
    kind = noise.get("kind")
    train, val = mat.train, mat.val
    if kind in (None, "none"):
        return train, val
    if kind == "uniform_random":
        level = noise.get("level", 0.0)
        train = inject_uniform_noise(train, level, run_seed)
        if cfg.noise_validation:
            val = inject_uniform_noise(val, level, run_seed + 1)
        return train, val
    if kind == "pseudo_real_world":
        level = noise.get("level", 0.0)
        train = inject_annotation_noise(train, level, run_seed)
        if cfg.noise_validation:
            val = inject_annotation_noise(val, level, run_seed + 1)
        return train, val
    if kind == "feature_dependent":
        if noise.get("rules"):
            labeler = _build_labeler(noise, train)
        elif mat.preset is not None and mat.preset.labeler is not None:
            labeler = mat.preset.labeler
        else:
            raise ValidationError("feature_dependent noise needs rules or a "
                                  "preset with a labeler")
        train = inject_rule_noise(train, labeler)
        if cfg.noise_validation:
            val = inject_rule_noise(val, labeler)
        return train, val
    raise ValidationError(f"unknown noise kind {kind!r}")


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    """Per-run clean-test accuracies with aggregate statistics."""

    method: str
    per_run: list[dict]
    accuracy_mean: float
    accuracy_std: float
    config: dict
    wall_clock_seconds: float | None
    partial: bool

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "per_run": self.per_run,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "config": self.config,
            "wall_clock_seconds": self.wall_clock_seconds,
            "partial": self.partial,
            "runs": len(self.per_run),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def _run_method(cfg: ExperimentConfig, mat: _Materialized, train: Dataset,
                val: Dataset, run_seed: int) -> dict:
    """Train one method for one run and evaluate on the clean test split."""
    tcfg = replace(mat.train_cfg, seed=run_seed)
    feat = mat.featurizer
    record: dict = {}
    if cfg.method == "vanilla":
        params, _ = train_vanilla(train, val, tcfg, feat)
        accuracy = evaluate(params, mat.test, feat, head=0).accuracy
    elif cfg.method == "coteaching":
        net1, _, _ = train_coteaching(train, val, tcfg, cfg.coteaching, feat)
        accuracy = evaluate(net1, mat.test, feat, head=0).accuracy
    elif cfg.method == "ceta":
        params, _ = train_ceta(train, val, tcfg, cfg.ceta, feat)
        accuracy = evaluate(params, mat.test, feat, head="averaged").accuracy
    elif cfg.method in ("hme", "hte", "boosting"):
        if cfg.method == "hme":
            grid = sample_grid_configs(cfg.ensemble.grid_lists(),
                                       cfg.ensemble.members, run_seed, tcfg)
            spec = EnsembleSpec(kind="homogeneous", member_count=len(grid),
                                hyperparameter_grid=tuple(grid), seed=run_seed)
            members = train_homogeneous(train, val, spec, feat)
        elif cfg.method == "hte":
            spec = EnsembleSpec(kind="heterogeneous", member_count=3,
                                member_methods=("vanilla", "coteaching", "ceta"),
                                base_config=tcfg, coteach=cfg.coteaching,
                                ceta=cfg.ceta, seed=run_seed)
            members = train_heterogeneous(train, val, spec, feat)
        else:
            spec = EnsembleSpec(kind="boosting", member_count=cfg.ensemble.members,
                                subset_fraction=cfg.ensemble.subset_fraction,
                                base_config=tcfg, seed=run_seed)
            members = train_boosting(train, val, spec, feat)
        accuracy, _ = predict_ensemble(members, mat.test, feat)
        record["n_members"] = len(members)
    elif cfg.method == "nc":
        ccfg = replace(cfg.cleaning, seed=run_seed)
        if ccfg.threshold is None:
            threshold, _ = tune_threshold(train, val, ccfg, tcfg, feat)
            ccfg = replace(ccfg, threshold=threshold)
        cleaned, report = clean_dataset(train, ccfg, tcfg, feat, val)
        _, accuracy = retrain_on_cleaned(cleaned, val, tcfg, feat, mat.test)
        record.update({
            "threshold_used": report.threshold_used,
            "cleaned_size": len(cleaned),
            "noise_before": report.noise_before,
            "noise_after": report.noise_after,
        })
    else:  # pragma: no cover - guarded by config validation
        raise ValidationError(f"unhandled method {cfg.method}")
    record["accuracy"] = accuracy
    record["seed"] = run_seed
    if train.has_gold():
        record["train_noise_level"] = noise_level(train)
    return record


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute cfg.runs seeded repetitions and aggregate accuracy.

    Run r uses seed base_seed + r for training and for regenerating seeded
    noise. A failing run is recorded (the report is marked partial) without
    aborting the remaining runs.
    """
    started = time.perf_counter()
    mat = _materialize(cfg)

    def one_run(r: int) -> dict:
        run_seed = cfg.base_seed + r
        try:
            train, val = _apply_noise(mat, cfg, run_seed)
            return _run_method(cfg, mat, train, val, run_seed)
        except Exception as exc:  # noqa: BLE001 - reported per run
            if isinstance(exc, (ValidationError, KeyboardInterrupt)):
                raise
            return {"seed": run_seed, "error": f"{type(exc).__name__}: {exc}"}

    per_run = run_indexed(one_run, range(cfg.runs))
    accuracies = [r["accuracy"] for r in per_run if "accuracy" in r]
    if not accuracies:
        first_error = next(r["error"] for r in per_run if "error" in r)
        raise MethodError(f"every run failed; first error: {first_error}")
    return ExperimentReport(
        method=cfg.method,
        per_run=per_run,
        accuracy_mean=float(np.mean(accuracies)),
        accuracy_std=float(np.std(accuracies)),
        config=cfg.to_dict(),
        wall_clock_seconds=None if cfg.reproducible
        else time.perf_counter() - started,
        partial=len(accuracies) < cfg.runs,
    )


# ---------------------------------------------------------------------------
# Method comparison tables
# ---------------------------------------------------------------------------


def _noise_label(cfg: ExperimentConfig) -> str:
    noise = cfg.noise
    if noise is None:
        return "preset" if "preset" in cfg.dataset else "none"
    kind = noise.get("kind", "none")
    if kind in ("uniform_random", "pseudo_real_world"):
        return f"{kind} {100 * noise.get('level', 0.0):g}%"
    return kind


@dataclass
class ComparisonTable:
    """Methods as rows, noise settings as columns, 'mean ± std' cells."""

    rows: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", *self.columns])
        for row in self.rows:
            writer.writerow([row] + [self.cells.get((row, col), "")
                                     for col in self.columns])
        return buf.getvalue()

    def to_text(self) -> str:
        table = [["method", *self.columns]]
        for row in self.rows:
            table.append([row] + [self.cells.get((row, col), "-")
                                  for col in self.columns])
        widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
                 for r in table]
        return "\n".join(lines) + "\n"


def _format_cell(report: ExperimentReport) -> str:
    return f"{100 * report.accuracy_mean:.2f} ± {100 * report.accuracy_std:.2f}"


def compare_methods(cfgs: list[ExperimentConfig],
                    include_clean_baseline: bool = True
                    ) -> tuple[ComparisonTable, list[ExperimentReport]]:
    """Run each config and arrange results as methods x noise settings.

    All configs must share the dataset section. A clean-data vanilla row is
    added as the ceiling unless disabled.
    """
    if not cfgs:
        raise ValidationError("compare_methods needs at least one config")
    first = cfgs[0]
    for cfg in cfgs[1:]:
        if cfg.dataset != first.dataset or cfg.split != first.split:
            raise ValidationError("all compared configs must share the dataset")

    rows: list[str] = []
    columns: list[str] = []
    cells: dict[tuple[str, str], str] = {}
    reports = []
    if include_clean_baseline:
        clean_cfg = replace(first, method="vanilla", noise={"kind": "none"})
        clean_report = run_experiment(clean_cfg)
        reports.append(clean_report)
        rows.append("vanilla (clean data)")
    for cfg in cfgs:
        report = run_experiment(cfg)
        reports.append(report)
        row, col = cfg.method, _noise_label(cfg)
        if row not in rows:
            rows.append(row)
        if col not in columns:
            columns.append(col)
        cells[(row, col)] = _format_cell(report)
    if include_clean_baseline:
        for col in columns:
            cells[("vanilla (clean data)", col)] = _format_cell(reports[0])
    return ComparisonTable(rows, columns, cells), reports


# ---------------------------------------------------------------------------
# Plot data (CSV series; rendering is left to external tools)
# ---------------------------------------------------------------------------


def threshold_sweep_csv(diagnostics) -> str:
    """Threshold-tuning curve as CSV: threshold, cleaned_size, val_accuracy."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "cleaned_size", "val_accuracy"])
    for diag in diagnostics:
        writer.writerow([repr(float(diag.threshold)), diag.cleaned_size,
                         "" if diag.val_accuracy is None
                         else repr(float(diag.val_accuracy))])
    return buf.getvalue()


def noise_matrices_csv(before: Dataset, after: Dataset) -> str:
    """Gold-vs-observed count matrices before and after cleaning, stacked."""
    parts = []
    for tag, d in (("before", before), ("after", after)):
        parts.append(f"# {tag}\n{noise_matrix(d).to_csv()}")
    return "\n".join(parts)
