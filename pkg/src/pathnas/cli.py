"""Command-line entry point.

Subcommands: ``pretrain`` (space -> soft-encoder checkpoint), ``search``
(the full budget-capped run), ``eval-predictor`` (label-budget sweep of
rank correlation), ``gen-synthetic`` (emit a tabular benchmark file from
the synthetic landscape), and ``export`` (re-emit a run archive). Exit
codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path as FsPath

import numpy as np

from .driver import SearchConfig, run_search, write_run_artifacts
from .errors import ConfigError, ParameterError, PathNASError
from .evo import EvoConfig
from .losses import FinetuneConfig, PretrainConfig, pretrain
from .oracle import SyntheticLandscape, export_tabular, load_tabular, synthetic_sample
from .paths import build_path_table
from .predictor import Predictor, default_config_for
from .presets import PRESETS, enumerate_nb201_cells, get_preset
from .report import SweepSpec, emit_report, run_sweep
from .space import SearchSpace, arch_hash, load_space, random_architecture

USAGE_ERROR = 2
RUNTIME_ERROR = 1

ABLATION_FLAGS = {
    "no-pretrain": {"no_pretrain": True},
    "mse": {"mse_finetune": True},
    "no-cross": {"no_crossover": True},
    "blank": {"no_pretrain": True, "mse_finetune": True, "no_crossover": True},
}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = FsPath(path)
    if not p.exists():
        raise ConfigError([f"config file not found: {p}"])
    try:
        with open(p, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {p} is not valid JSON: {exc}"]) from exc


def _build_space(conf: dict, arg_space: str | None):
    spec = conf.get("space", {})
    if arg_space is not None:
        spec = {"preset": arg_space}
    if "preset" in spec:
        return get_preset(spec["preset"])
    if "file" in spec:
        return load_space(spec["file"])
    if spec:
        return SearchSpace.from_json_dict(spec)
    return get_preset("nb201-like")


def _dataclass_from(conf: dict, cls, section: str, problems: list[str], **extra):
    merged = dict(conf.get(section, {}))
    merged.update(extra)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(merged) - known
    if unknown:
        problems.append(f"{section}: unknown keys {sorted(unknown)}")
        for k in unknown:
            merged.pop(k)
    try:
        return cls(**merged)
    except ParameterError as exc:
        problems.append(f"{section}: {exc}")
        return None


def _search_config(conf: dict, args) -> SearchConfig:
    problems: list[str] = []
    evo = _dataclass_from(conf, EvoConfig, "evo", problems)
    ft = _dataclass_from(conf, FinetuneConfig, "finetune", problems)
    search_section = dict(conf.get("search", {}))
    ablation = dict(conf.get("ablation", {}))
    for name in ("no_pretrain", "mse_finetune", "no_crossover"):
        if name in ablation:
            search_section[name] = bool(ablation[name])
    if getattr(args, "ablation", None):
        for token in args.ablation.split(","):
            token = token.strip()
            if token not in ABLATION_FLAGS:
                problems.append(
                    f"unknown ablation {token!r}; choose from {sorted(ABLATION_FLAGS)}"
                )
                continue
            search_section.update(ABLATION_FLAGS[token])
    if getattr(args, "budget", None) is not None:
        search_section["fes_max"] = args.budget
    seed = conf.get("seed", 0)
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    kwargs = dict(search_section)
    kwargs["seed"] = seed
    if evo is not None:
        kwargs["evo"] = evo
    if ft is not None:
        kwargs["finetune"] = ft
    if "pretrain_checkpoint" in conf:
        kwargs.setdefault("pretrain_checkpoint", conf["pretrain_checkpoint"])
    if "predictor" in conf:
        kwargs.setdefault("predictor_overrides", conf["predictor"])
    known = {f.name for f in dataclasses.fields(SearchConfig)}
    unknown = set(kwargs) - known
    if unknown:
        problems.append(f"search: unknown keys {sorted(unknown)}")
        for k in unknown:
            kwargs.pop(k)
    cfg = SearchConfig(**kwargs)
    problems.extend(cfg.validate())
    if problems:
        raise ConfigError(problems)
    return cfg


def _build_oracle(conf: dict, space):
    spec = conf.get("oracle", {"kind": "synthetic"})
    if spec.get("kind", "synthetic") == "synthetic":
        return SyntheticLandscape(op_set=space.op_set, seed=int(spec.get("seed", 0)))
    return load_tabular(spec["path"])


def _open_run_log(out_dir: FsPath):
    out_dir.mkdir(parents=True, exist_ok=True)
    fh = open(out_dir / "run_log.jsonl", "w", encoding="utf-8")

    def log_fn(record: dict):
        fh.write(json.dumps(record, sort_keys=True) + "\n")

    return fh, log_fn


def cmd_pretrain(args) -> int:
    conf = _load_config_file(args.config)
    space = _build_space(conf, args.space)
    table = build_path_table(space)
    problems: list[str] = []
    pt = _dataclass_from(conf, PretrainConfig, "pretrain", problems,
                         **({"seed": args.seed} if args.seed is not None else {}))
    if problems or pt is None:
        raise ConfigError(problems or ["invalid pretrain section"])
    model = Predictor(
        default_config_for(space, table, seed=pt.seed, **conf.get("predictor", {})),
        space,
        table,
    )
    out = FsPath(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_dir = out.parent
    fh, log_fn = _open_run_log(log_dir)
    try:
        pretrain(model, space, table, pt, log_fn=log_fn)
    finally:
        fh.close()
    model.save(out)
    print(f"pretrained checkpoint written to {out}")
    return 0


def cmd_search(args) -> int:
    conf = _load_config_file(args.config)
    space = _build_space(conf, args.space)
    table = build_path_table(space)
    cfg = _search_config(conf, args)
    oracle = _build_oracle(conf, space)
    out_dir = FsPath(args.out)
    fh, log_fn = _open_run_log(out_dir)
    try:
        result = run_search(space, table, oracle, cfg, log_fn=log_fn)
    finally:
        fh.close()
    write_run_artifacts(result, cfg, out_dir)
    print(
        f"best val_acc {result.best.val_acc:.6f} after {result.ledger.fes} evaluations; "
        f"artifacts in {out_dir}"
    )
    return 0


def cmd_eval_predictor(args) -> int:
    conf = _load_config_file(args.config)
    space = _build_space(conf, args.space)
    table = build_path_table(space)
    budgets = (
        [int(b) for b in args.budgets.split(",")] if args.budgets else [args.labels]
    )
    if any(b is None for b in budgets):
        raise ConfigError(["provide --labels or --budgets"])
    test_size = "all" if args.test_size == "all" else int(args.test_size)
    spec = SweepSpec(
        label_budgets=tuple(sorted(budgets)),
        validation_budget=args.validation,
        repeats=args.repeats,
        test_size=test_size,
    )
    landscape = SyntheticLandscape(op_set=space.op_set, seed=conf.get("oracle", {}).get("seed", 0))
    rng = np.random.default_rng(args.seed or 0)
    pool = _synthetic_pool(space, landscape, args.pool_size, rng)
    problems: list[str] = []
    ft = _dataclass_from(conf, FinetuneConfig, "finetune", problems)
    if problems:
        raise ConfigError(problems)
    results = run_sweep(
        space,
        table,
        pool,
        spec,
        finetune_cfg=ft,
        pretrain_checkpoint=args.pretrain_checkpoint,
        predictor_overrides=conf.get("predictor", {}),
        seed=args.seed or 0,
    )
    out_dir = FsPath(args.out)
    paths = emit_report(results, out_dir)
    for row in results.rows:
        print(
            f"budget {row.budget:>6}  mean tau {row.mean_tau:+.4f} "
            f"(std {row.std_tau:.4f}, {row.repeats} runs)"
        )
    print(f"report written to {paths['csv']} and {paths['summary']}")
    return 0


def _synthetic_pool(space, landscape, pool_size, rng):
    samples = []
    seen = set()
    attempts = 0
    while len(samples) < pool_size and attempts < 200 * pool_size:
        attempts += 1
        arch = random_architecture(space, rng)
        h = arch_hash(arch)
        if h in seen:
            continue
        seen.add(h)
        samples.append(synthetic_sample(landscape, arch))
    if len(samples) < pool_size:
        raise ParameterError(
            f"could only build a pool of {len(samples)} distinct architectures"
        )
    return samples


def cmd_gen_synthetic(args) -> int:
    conf = _load_config_file(args.config)
    space = _build_space(conf, args.space)
    landscape = SyntheticLandscape(op_set=space.op_set, seed=args.seed or 0)
    if args.enumerate_grid:
        samples = [synthetic_sample(landscape, a) for a in enumerate_nb201_cells(space)]
    else:
        rng = np.random.default_rng(args.seed or 0)
        samples = _synthetic_pool(space, landscape, args.count, rng)
    out = FsPath(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_tabular(samples, out)
    print(f"{len(samples)} records written to {out}")
    return 0


def cmd_export(args) -> int:
    src = FsPath(args.run_dir) / "archive.jsonl"
    if not src.exists():
        raise ConfigError([f"no archive at {src}"])
    oracle = load_tabular(src)
    out = FsPath(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_tabular(list(oracle.samples.values()), out)
    print(f"{len(oracle)} records exported to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathnas",
        description="Budget-capped evolutionary architecture search with a "
        "contrastively trained ranking predictor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--space", choices=sorted(PRESETS), help="space preset override")
        if with_out:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("pretrain", help="pretrain the soft encoder on a space")
    common(p)

    p = sub.add_parser("search", help="run the full budget-capped search")
    common(p)
    p.add_argument("--budget", type=int, help="fes_max override")
    p.add_argument(
        "--ablation",
        help="comma list of: " + ", ".join(sorted(ABLATION_FLAGS)),
    )

    p = sub.add_parser("eval-predictor", help="label-budget sweep of rank correlation")
    common(p)
    p.add_argument("--labels", type=int, help="single train label budget")
    p.add_argument("--budgets", help="comma list of train label budgets")
    p.add_argument("--validation", type=int, default=200)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--test-size", default="all")
    p.add_argument("--pool-size", type=int, default=2000)
    p.add_argument("--pretrain-checkpoint")

    p = sub.add_parser("gen-synthetic", help="emit a tabular file from the synthetic landscape")
    common(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument(
        "--enumerate-grid",
        action="store_true",
        help="enumerate the fixed-topology cell grid instead of sampling",
    )

    p = sub.add_parser("export", help="re-export a run archive as a tabular file")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    return parser


COMMANDS = {
    "pretrain": cmd_pretrain,
    "search": cmd_search,
    "eval-predictor": cmd_eval_predictor,
    "gen-synthetic": cmd_gen_synthetic,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except PathNASError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
