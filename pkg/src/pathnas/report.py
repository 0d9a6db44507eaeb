"""Label-budget sweeps of predictor quality and report emission.

A sweep cell fine-tunes a fresh predictor on a seeded, hash-disjoint
train/validation/test split of a labeled pool, and scores it by rank
correlation on the test split. Cells repeat over derived seeds; the
table reports mean and standard deviation per budget.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .driver import kendall_tau
from .errors import ParameterError
from .losses import FinetuneConfig, finetune
from .oracle import LabeledSample
from .paths import PathTable
from .predictor import Predictor, default_config_for
from .space import SearchSpace

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SweepSpec:
    label_budgets: tuple[int, ...]
    validation_budget: int = 200
    repeats: int = 10
    test_size: object = "all"  # "all" or a positive int

    def __post_init__(self):
        object.__setattr__(self, "label_budgets", tuple(self.label_budgets))
        problems = []
        if not self.label_budgets:
            problems.append("label_budgets must be nonempty")
        if any(b < 1 for b in self.label_budgets):
            problems.append("label budgets must be positive")
        if list(self.label_budgets) != sorted(self.label_budgets):
            problems.append("label budgets must be ascending")
        if self.validation_budget < 1:
            problems.append("validation_budget must be positive")
        if self.repeats < 1:
            problems.append("repeats must be >= 1")
        if self.test_size != "all" and (not isinstance(self.test_size, int) or self.test_size < 2):
            problems.append("test_size must be 'all' or an integer >= 2")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass
class SweepRow:
    budget: int
    test_size: object
    mean_tau: float
    std_tau: float
    mean_val_tau: float
    std_val_tau: float
    taus: list[float]
    repeats: int


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]
    seeds: list[int]


def _require_pool(pool_size: int, budget: int, spec: SweepSpec):
    test_need = spec.test_size if spec.test_size != "all" else 2
    need = budget + spec.validation_budget + test_need
    if pool_size < need:
        raise ParameterError(
            f"pool of {pool_size} labeled samples cannot cover train {budget} "
            f"+ validation {spec.validation_budget} + test {test_need}"
        )


def run_sweep(
    space: SearchSpace,
    table: PathTable,
    pool: list[LabeledSample],
    spec: SweepSpec,
    finetune_cfg: FinetuneConfig | None = None,
    pretrain_checkpoint=None,
    predictor_overrides: dict | None = None,
    seed: int = 0,
    objective: str = "pairwise",
) -> SweepResult:
    """Mean rank correlation per label budget over seeded repeats.

    ``pool`` entries must be hash-distinct; each cell draws disjoint
    train/validation/test subsets from a seeded permutation of the pool.
    """
    finetune_cfg = finetune_cfg or FinetuneConfig()
    overrides = predictor_overrides or {}
    master = np.random.SeedSequence(seed)
    cell_seeds = master.spawn(len(spec.label_budgets) * spec.repeats)
    rows: list[SweepRow] = []
    used_seeds: list[int] = []
    for bi, budget in enumerate(spec.label_budgets):
        _require_pool(len(pool), budget, spec)
        taus, val_taus = [], []
        for rep in range(spec.repeats):
            child = cell_seeds[bi * spec.repeats + rep]
            rng = np.random.default_rng(child)
            rep_seed = int(rng.integers(2**31))
            used_seeds.append(rep_seed)
            order = rng.permutation(len(pool))
            train = [pool[i] for i in order[:budget]]
            val = [pool[i] for i in order[budget : budget + spec.validation_budget]]
            rest = order[budget + spec.validation_budget :]
            if spec.test_size != "all":
                rest = rest[: spec.test_size]
            test = [pool[i] for i in rest]

            if pretrain_checkpoint is not None:
                model = Predictor.load(pretrain_checkpoint, space, table)
            else:
                model = Predictor(
                    default_config_for(space, table, seed=rep_seed, **overrides),
                    space,
                    table,
                )
            ft = dataclasses.replace(finetune_cfg, seed=rep_seed)
            finetune(model, train, ft, objective=objective)
            taus.append(
                kendall_tau(model.scores([s.arch for s in test]), [s.val_acc for s in test])
            )
            val_taus.append(
                kendall_tau(model.scores([s.arch for s in val]), [s.val_acc for s in val])
            )
        rows.append(
            SweepRow(
                budget=budget,
                test_size=spec.test_size,
                mean_tau=float(np.mean(taus)),
                std_tau=float(np.std(taus)),
                mean_val_tau=float(np.mean(val_taus)),
                std_val_tau=float(np.std(val_taus)),
                taus=[float(t) for t in taus],
                repeats=spec.repeats,
            )
        )
    return SweepResult(spec=spec, rows=rows, seeds=used_seeds)


def emit_report(results: SweepResult, out_dir) -> dict:
    """Write the sweep CSV and the schema-versioned JSON summary."""
    if not results.rows:
        raise ParameterError("refusing to emit an empty report")
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["budget", "test_size", "mean_tau", "std_tau", "mean_val_tau", "std_val_tau", "repeats"]
        )
        for r in results.rows:
            writer.writerow(
                [r.budget, r.test_size, repr(r.mean_tau), repr(r.std_tau),
                 repr(r.mean_val_tau), repr(r.std_val_tau), r.repeats]
            )
    summary_path = out / "summary.json"
    summary = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "sweep_spec": {
            "label_budgets": list(results.spec.label_budgets),
            "validation_budget": results.spec.validation_budget,
            "repeats": results.spec.repeats,
            "test_size": results.spec.test_size,
        },
        "rows": [dataclasses.asdict(r) for r in results.rows],
        "seeds": results.seeds,
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "summary": summary_path}


def load_summary_schema() -> dict:
    """The bundled JSON schema that emitted summaries must satisfy."""
    with resources.files("pathnas.schemas").joinpath("summary.schema.json").open() as fh:
        return json.load(fh)


def parse_sweep_csv(path) -> list[dict]:
    """Read a sweep CSV back into typed row dicts (round-trip helper)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "budget": int(rec["budget"]),
                    "test_size": rec["test_size"] if rec["test_size"] == "all" else int(rec["test_size"]),
                    "mean_tau": float(rec["mean_tau"]),
                    "std_tau": float(rec["std_tau"]),
                    "mean_val_tau": float(rec["mean_val_tau"]),
                    "std_val_tau": float(rec["std_val_tau"]),
                    "repeats": int(rec["repeats"]),
                }
            )
    return rows
