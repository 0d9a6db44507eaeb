"""End-to-end search: initialization, surrogate generations, infill, budget.

One outer round = ``t_gap - 1`` surrogate-only generations (offspring,
predictor-ranked family selection), then an infill batch of real
evaluations, predictor re-fine-tuning, and a true-accuracy refresh of the
labeled population. The loop ends when the evaluation budget is consumed;
the result is the archive argmax. Everything is driven by one master seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy import stats

from .errors import ConfigError, InsufficientPoolError, ParameterError
from .evo import EvoConfig, generate_offspring
from .losses import FinetuneConfig, finetune
from .oracle import BudgetLedger, LabeledSample, export_tabular, query
from .paths import PathTable
from .predictor import Predictor, default_config_for
from .selection import environment_selection, infill_sampling
from .space import Architecture, SearchSpace, arch_hash, random_architecture

#: attempts to find one more distinct architecture during initialization
INIT_DISTINCT_CAP = 100_000


@dataclass(frozen=True)
class SearchConfig:
    """Everything a search run needs besides the space, table and oracle."""

    n_population: int = 20
    t_gap: int = 5
    n_infill: int = 10
    fes_max: int = 100
    family_radius: int = 6
    evo: EvoConfig = field(default_factory=EvoConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    predictor_overrides: dict = field(default_factory=dict)
    pretrain_checkpoint: str | None = None
    no_pretrain: bool = False
    mse_finetune: bool = False
    no_crossover: bool = False
    seed: int = 0

    @property
    def offspring_ratio(self) -> int:
        return self.evo.offspring_ratio

    def validate(self) -> list[str]:
        """Collect every violated invariant (empty list = valid)."""
        problems = []
        for name in ("n_population", "n_infill", "fes_max", "family_radius"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if self.t_gap < 1:
            problems.append("t_gap must be >= 1")
        if self.n_population < 2:
            problems.append("n_population must be >= 2 (crossover needs two parents)")
        return problems

    def require_valid(self):
        problems = self.validate()
        if problems:
            raise ConfigError(problems)


@dataclass
class SearchResult:
    best: LabeledSample
    history: list[tuple[int, float]]
    ledger: BudgetLedger
    seed: int
    wall_time_s: float


def top_select(labeled: list[LabeledSample], n: int) -> list[LabeledSample]:
    """Keep the n best by true accuracy; ties go to the earlier evaluation.

    Input order is evaluation order and is preserved in the output so that
    the tie rule stays stable across rounds.
    """
    ranked = sorted(range(len(labeled)), key=lambda i: (-labeled[i].val_acc, i))
    chosen = sorted(ranked[:n])
    return [labeled[i] for i in chosen]


def _initial_samples(
    space: SearchSpace,
    oracle,
    ledger: BudgetLedger,
    n: int,
    rng: np.random.Generator,
) -> list[LabeledSample]:
    """n distinct-by-hash random architectures, each really evaluated."""
    samples: list[LabeledSample] = []
    seen = set()
    attempts = 0
    while len(samples) < n:
        if attempts > INIT_DISTINCT_CAP:
            raise InsufficientPoolError(
                f"could not sample {n} distinct architectures "
                f"({len(samples)} found in {attempts} attempts)"
            )
        attempts += 1
        arch = random_architecture(space, rng)
        h = arch_hash(arch)
        if h in seen:
            continue
        seen.add(h)
        samples.append(query(ledger, oracle, arch))
    return samples


def _build_model(
    space: SearchSpace, table: PathTable, cfg: SearchConfig
) -> Predictor:
    if cfg.pretrain_checkpoint is not None and not cfg.no_pretrain:
        return Predictor.load(cfg.pretrain_checkpoint, space, table)
    overrides = dict(cfg.predictor_overrides)
    return Predictor(default_config_for(space, table, seed=cfg.seed, **overrides), space, table)


def run_search(
    space: SearchSpace,
    table: PathTable,
    oracle,
    cfg: SearchConfig,
    log_fn=None,
) -> SearchResult:
    """Full budget-capped evolutionary search guided by the predictor."""
    cfg.require_valid()
    t_start = time.perf_counter()
    seq = np.random.SeedSequence(cfg.seed)
    rng_init, rng_evo, rng_infill, ft_seed_src = [
        np.random.default_rng(s) for s in seq.spawn(4)
    ]

    model = _build_model(space, table, cfg)
    objective = "mse" if cfg.mse_finetune else "pairwise"
    evo_cfg = cfg.evo
    if cfg.no_crossover:
        evo_cfg = dataclasses.replace(evo_cfg, crossover_prob=0.0)

    ledger = BudgetLedger(fes_max=cfg.fes_max)
    labeled = _initial_samples(space, oracle, ledger, cfg.n_population, rng_init)

    def _finetune():
        ft = dataclasses.replace(
            cfg.finetune, seed=int(ft_seed_src.integers(2**31))
        )
        finetune(model, ledger.samples_in_order(), ft, log_fn=log_fn, objective=objective)

    _finetune()
    history = [(ledger.fes, ledger.best().val_acc)]

    while ledger.fes < cfg.fes_max:
        population = [s.arch for s in labeled]
        last_offspring: list[Architecture] = []
        t = 1
        while t < cfg.t_gap:
            offspring = generate_offspring(
                population,
                space,
                evo_cfg,
                rng_evo,
                forbidden_hashes=set(ledger.archive),
                log_fn=log_fn,
            )
            last_offspring = offspring
            population = environment_selection(
                population, offspring, model, cfg.n_population, cfg.family_radius
            )
            t += 1
        pool = [a for a in population if not ledger.contains(a)]
        want = min(cfg.n_infill, ledger.remaining)
        if len(pool) < want and last_offspring:
            # survivor selection can keep only already-evaluated parents;
            # top the pool up with the best-scoring fresh offspring
            taken = {arch_hash(a) for a in pool} | set(ledger.archive)
            spare = [a for a in last_offspring if arch_hash(a) not in taken]
            spare_scores = model.scores(spare) if spare else []
            ranked = sorted(
                range(len(spare)), key=lambda i: (-spare_scores[i], arch_hash(spare[i]))
            )
            for i in ranked:
                if len(pool) >= want:
                    break
                h = arch_hash(spare[i])
                if h not in taken:
                    pool.append(spare[i])
                    taken.add(h)
        n_req = min(want, len(pool))
        if n_req == 0:
            raise InsufficientPoolError(
                "no unevaluated candidates left in the final population"
            )
        infill = infill_sampling(
            pool, model, n_req, rng_infill, evaluated_hashes=set(ledger.archive)
        )
        new_samples = [query(ledger, oracle, a) for a in infill]
        if log_fn is not None:
            log_fn(
                {
                    "event": "infill",
                    "fes": ledger.fes,
                    "hashes": [arch_hash(a).hex[:16] for a in infill],
                }
            )
        _finetune()
        labeled = top_select(labeled + new_samples, cfg.n_population)
        history.append((ledger.fes, ledger.best().val_acc))

    return SearchResult(
        best=ledger.best(),
        history=history,
        ledger=ledger,
        seed=cfg.seed,
        wall_time_s=time.perf_counter() - t_start,
    )


def random_search(
    space: SearchSpace, oracle, budget: int, seed: int
) -> SearchResult:
    """Baseline: spend the whole budget on distinct random samples."""
    t_start = time.perf_counter()
    ledger = BudgetLedger(fes_max=budget)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    history = []
    attempts = 0
    while ledger.fes < budget:
        if attempts > INIT_DISTINCT_CAP:
            raise InsufficientPoolError("random search cannot find new architectures")
        attempts += 1
        arch = random_architecture(space, rng)
        if ledger.contains(arch):
            continue
        query(ledger, oracle, arch)
        history.append((ledger.fes, ledger.best().val_acc))
    return SearchResult(
        best=ledger.best(),
        history=history,
        ledger=ledger,
        seed=seed,
        wall_time_s=time.perf_counter() - t_start,
    )


def kendall_tau(pred_ranks, true_ranks) -> float:
    """Tie-corrected (tau-b) rank correlation between two orderings."""
    pred = np.asarray(pred_ranks, dtype=np.float64)
    true = np.asarray(true_ranks, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size < 2:
        raise ParameterError("need two equal-length rankings of size >= 2")
    tau = stats.kendalltau(pred, true, variant="b").statistic
    if math.isnan(tau):  # one side entirely tied: no ordering signal
        return 0.0
    return float(tau)


# -- run artifacts -----------------------------------------------------------------


def config_snapshot(cfg: SearchConfig) -> dict:
    snap = dataclasses.asdict(cfg)
    snap["evo"] = dataclasses.asdict(cfg.evo)
    snap["finetune"] = dataclasses.asdict(cfg.finetune)
    return snap


def write_run_artifacts(result: SearchResult, cfg: SearchConfig, out_dir) -> dict:
    """Persist the deterministic result artifacts, returning their paths.

    The JSON-lines run log (which carries wall-clock timings) is written
    separately by the caller; everything written here is a pure function
    of (config, seed).
    """
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out / "config.json",
        "archive": out / "archive.jsonl",
        "best": out / "best.json",
        "metrics": out / "metrics.csv",
    }
    with open(paths["config"], "w", encoding="utf-8") as fh:
        json.dump(config_snapshot(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    export_tabular(result.ledger.samples_in_order(), paths["archive"])
    best = result.best
    with open(paths["best"], "w", encoding="utf-8") as fh:
        json.dump(
            {
                "arch": best.arch.to_json_dict(),
                "val_acc": best.val_acc,
                "test_acc": best.test_acc,
                "fes": result.ledger.fes,
                "seed": result.seed,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    with open(paths["metrics"], "w", encoding="utf-8", newline="") as fh:
        fh.write("fes,best_val_acc\n")
        for fes, acc in result.history:
            fh.write(f"{fes},{acc!r}\n")
    return paths
