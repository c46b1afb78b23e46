"""Command-line interface.

Subcommands: gen, noise, train, clean, ensemble, compare, plotdata.
Exit codes: 0 success, 1 validation error, 2 method failure.
A JSON experiment config (see README) can drive train/clean/ensemble/compare;
NOISYLABELS_WORKERS caps concurrent runs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .cleaning import clean_dataset, tune_threshold
from .data import generate_synthetic_corpus, load_dataset, save_dataset
from .ensembles import save_ensemble
from .errors import MethodError, NoisyLabelsError, ValidationError
from .harness import ExperimentConfig, _apply_noise, _build_labeler, _materialize, \
    compare_methods, load_config, noise_matrices_csv, run_experiment, \
    threshold_sweep_csv
from .noise import NoiseSpec, RuleLabeler, inject_annotation_noise, \
    inject_rule_noise, inject_uniform_noise, noise_level, noise_matrix
from .presets import PRESET_NAMES, get_preset


def _cmd_gen(args) -> int:
    if args.preset:
        preset = get_preset(args.preset, args.corpus_seed)
        train, val, test = preset.clean_splits()
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, split in (("train", train), ("validation", val), ("test", test)):
            save_dataset(split, out_dir / f"{name}.{args.format}", args.format)
        print(f"wrote {len(train)}/{len(val)}/{len(test)} instances to {out_dir}")
        return 0
    corpus = generate_synthetic_corpus(
        args.classes, args.instances, args.vocab_per_class, args.overlap,
        seed=args.seed, tokens_per_text=(args.min_tokens, args.max_tokens),
        global_token_fraction=args.global_token_fraction,
        annotators_per_instance=args.annotators)
    out = Path(args.out or f"corpus.{args.format}")
    save_dataset(corpus, out, args.format)
    print(f"wrote {len(corpus)} instances, {args.classes} classes to {out}")
    return 0


def _cmd_noise(args) -> int:
    dataset = load_dataset(args.infile, args.format)
    if args.kind == "uniform_random":
        noised = inject_uniform_noise(dataset, args.level, args.seed)
    elif args.kind == "pseudo_real_world":
        noised = inject_annotation_noise(dataset, args.level, args.seed)
    else:
        if not args.rules:
            raise ValidationError("feature_dependent noise needs --rules FILE")
        spec = json.loads(Path(args.rules).read_text(encoding="utf-8"))
        labeler = _build_labeler({"rules": spec, "fallback": args.fallback,
                                  "seed": args.seed}, dataset)
        noised = inject_rule_noise(dataset, labeler)
    save_dataset(noised, args.out, args.format)
    level = noise_level(noised) if noised.has_gold() else None
    if level is not None:
        print(f"measured noise level: {level:.4f}")
    if args.matrix_out:
        noise_matrix(noised).save(args.matrix_out)
    print(f"wrote noised dataset to {args.out}")
    return 0


def _report_summary(report) -> str:
    return (f"{report.method}: accuracy {100 * report.accuracy_mean:.2f} "
            f"± {100 * report.accuracy_std:.2f} over {len(report.per_run)} runs"
            + (" (partial)" if report.partial else ""))


def _load_cli_config(args) -> tuple[ExperimentConfig, dict]:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(raw)
    if getattr(args, "method", None):
        cfg = replace(cfg, method=args.method)
    if getattr(args, "runs", None):
        cfg = replace(cfg, runs=args.runs)
    return cfg, raw


def _cmd_train(args) -> int:
    cfg, raw = _load_cli_config(args)
    report = run_experiment(cfg)
    out = args.out or raw.get("output")
    if out:
        report.save(out)
        print(f"report written to {out}")
    print(_report_summary(report))
    return 0


def _cmd_clean(args) -> int:
    cfg, raw = _load_cli_config(args)
    mat = _materialize(cfg)
    train, val = _apply_noise(mat, cfg, cfg.base_seed)
    ccfg = replace(cfg.cleaning, seed=cfg.base_seed)
    tcfg = replace(mat.train_cfg, seed=cfg.base_seed)
    out_dir = Path(args.out_dir or raw.get("output") or "cleaning_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    if ccfg.threshold is None:
        threshold, diagnostics = tune_threshold(train, val, ccfg, tcfg,
                                                mat.featurizer)
        ccfg = replace(ccfg, threshold=threshold)
        (out_dir / "threshold_sweep.csv").write_text(
            threshold_sweep_csv(diagnostics), encoding="utf-8")
        print(f"tuned threshold: {threshold}")
    cleaned, report = clean_dataset(train, ccfg, tcfg, mat.featurizer, val)
    save_dataset(cleaned, out_dir / "cleaned.jsonl", "jsonl")
    report.save(out_dir / "cleaning_report.json")
    if train.has_gold():
        (out_dir / "noise_matrices.csv").write_text(
            noise_matrices_csv(train, cleaned), encoding="utf-8")
        print(f"noise level {report.noise_before:.4f} -> {report.noise_after:.4f}")
    print(f"kept {len(cleaned)}/{len(train)} instances; outputs in {out_dir}")
    return 0


def _cmd_ensemble(args) -> int:
    cfg, raw = _load_cli_config(args)
    if cfg.method not in ("hme", "hte", "boosting"):
        raise ValidationError("ensemble subcommand needs method hme, hte or "
                              f"boosting (got {cfg.method!r})")
    report = run_experiment(cfg)
    out = args.out or raw.get("output")
    if out:
        report.save(out)
        print(f"report written to {out}")
    print(_report_summary(report))
    return 0


def _cmd_compare(args) -> int:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if "experiments" not in raw or not isinstance(raw["experiments"], list):
        raise ValidationError("compare config needs an 'experiments' list")
    shared = {k: v for k, v in raw.items() if k not in ("experiments", "output")}
    cfgs = [ExperimentConfig.from_dict({**shared, **exp})
            for exp in raw["experiments"]]
    table, _ = compare_methods(cfgs, include_clean_baseline=not args.no_clean_row)
    out = args.out or raw.get("output")
    if out:
        Path(out).write_text(table.to_csv(), encoding="utf-8")
        print(f"CSV written to {out}")
    print(table.to_text(), end="")
    return 0


def _cmd_plotdata(args) -> int:
    out_dir = Path(args.out_dir or "plot_data")
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.config:
        cfg, _ = _load_cli_config(args)
        mat = _materialize(cfg)
        train, val = _apply_noise(mat, cfg, cfg.base_seed)
        ccfg = replace(cfg.cleaning, seed=cfg.base_seed)
        tcfg = replace(mat.train_cfg, seed=cfg.base_seed)
        threshold, diagnostics = tune_threshold(train, val, ccfg, tcfg,
                                                mat.featurizer)
        (out_dir / "threshold_sweep.csv").write_text(
            threshold_sweep_csv(diagnostics), encoding="utf-8")
        wrote.append("threshold_sweep.csv")
        if train.has_gold():
            cleaned, _ = clean_dataset(train, replace(ccfg, threshold=threshold),
                                       tcfg, mat.featurizer, val)
            (out_dir / "noise_matrices.csv").write_text(
                noise_matrices_csv(train, cleaned), encoding="utf-8")
            wrote.append("noise_matrices.csv")
    if args.report:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
        lines = ["run,seed,accuracy"]
        for i, run in enumerate(payload.get("per_run", [])):
            if "accuracy" in run:
                lines.append(f"{i},{run['seed']},{run['accuracy']!r}")
        (out_dir / "accuracy_runs.csv").write_text("\n".join(lines) + "\n",
                                                   encoding="utf-8")
        wrote.append("accuracy_runs.csv")
    if not wrote:
        raise ValidationError("plotdata needs --config and/or --report")
    print(f"wrote {', '.join(wrote)} to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisylabels",
        description="Label-noise injection, noise-robust training, ensembles "
                    "and loss-threshold noise cleaning for text classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic corpus")
    gen.add_argument("--preset", choices=PRESET_NAMES)
    gen.add_argument("--corpus-seed", type=int, default=None)
    gen.add_argument("--out-dir", help="split output directory (preset mode)")
    gen.add_argument("--classes", type=int, default=5)
    gen.add_argument("--instances", type=int, default=2000)
    gen.add_argument("--vocab-per-class", type=int, default=40)
    gen.add_argument("--overlap", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--min-tokens", type=int, default=8)
    gen.add_argument("--max-tokens", type=int, default=14)
    gen.add_argument("--global-token-fraction", type=float, default=0.0)
    gen.add_argument("--annotators", type=int, default=0)
    gen.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    gen.add_argument("--out")
    gen.set_defaults(fn=_cmd_gen)

    noise = sub.add_parser("noise", help="apply a noise process to a corpus")
    noise.add_argument("--in", dest="infile", required=True)
    noise.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    noise.add_argument("--kind", required=True,
                       choices=("uniform_random", "feature_dependent",
                                "pseudo_real_world"))
    noise.add_argument("--level", type=float, default=0.0)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--rules", help="JSON file of {keywords, label} rules")
    noise.add_argument("--fallback", choices=("abstain", "random"),
                       default="abstain")
    noise.add_argument("--out", required=True)
    noise.add_argument("--matrix-out")
    noise.set_defaults(fn=_cmd_noise)

    for name, fn, helptext in (
            ("train", _cmd_train, "run one method as a seeded experiment"),
            ("ensemble", _cmd_ensemble, "run an ensemble experiment")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--method")
        p.add_argument("--runs", type=int)
        p.add_argument("--out")
        p.set_defaults(fn=fn)

    clean = sub.add_parser("clean", help="tune, clean and export a training set")
    clean.add_argument("--config", required=True)
    clean.add_argument("--out-dir")
    clean.set_defaults(fn=_cmd_clean)

    comp = sub.add_parser("compare", help="method-by-noise comparison table")
    comp.add_argument("--config", required=True)
    comp.add_argument("--out")
    comp.add_argument("--no-clean-row", action="store_true")
    comp.set_defaults(fn=_cmd_compare)

    plot = sub.add_parser("plotdata", help="emit plot-ready CSV series")
    plot.add_argument("--config")
    plot.add_argument("--report")
    plot.add_argument("--out-dir")
    plot.set_defaults(fn=_cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoisyLabelsError as exc:
        print(f"method failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
