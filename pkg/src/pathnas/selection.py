"""Predictor-guided survivor selection and the infill criterion.

Environment selection groups offspring into per-parent families by
Manhattan proximity of hard encodings (greedy, parents in population
order) and keeps each family's predictor-best member. Infill sampling
treats (predicted score, predictive uncertainty) as a maximize-maximize
bi-objective, fills non-dominated fronts in order, and breaks the cut
front by objective-space crowding ("pareto crowding", distinct from the
cluster crowding distance used in pretraining).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import no_grad
from .errors import InsufficientPoolError, ParameterError
from .paths import PathTable, encode_architecture, pairwise_manhattan
from .predictor import Predictor
from .space import Architecture, SearchSpace, arch_hash

#: default stochastic passes and perturbation scale for uncertainty estimates
UNCERTAINTY_PASSES = 8
UNCERTAINTY_SIGMA = 0.05


@dataclass(frozen=True)
class InfillCandidate:
    arch: Architecture
    predicted_score: float
    uncertainty: float

    def __post_init__(self):
        if not 0.0 <= self.predicted_score <= 1.0:
            raise ParameterError("predicted score must be in [0, 1]")
        if not np.isfinite(self.uncertainty) or self.uncertainty < 0:
            raise ParameterError("uncertainty must be finite and non-negative")


def build_families(
    parents: list[Architecture],
    offspring: list[Architecture],
    space: SearchSpace,
    table: PathTable,
    family_radius: int,
) -> list[list[int]]:
    """Greedy nearest-unclaimed assignment of offspring to parents.

    Returns per-parent offspring index lists (each of size at most
    ``family_radius``); parents iterate in population order and distance
    ties break toward the lower offspring architecture hash.
    """
    if not offspring:
        return [[] for _ in parents]
    p_enc = np.stack([encode_architecture(a, space, table) for a in parents])
    o_enc = np.stack([encode_architecture(a, space, table) for a in offspring])
    dists = pairwise_manhattan(p_enc, o_enc)
    o_hashes = [arch_hash(a) for a in offspring]
    unclaimed = set(range(len(offspring)))
    families: list[list[int]] = []
    for pi in range(len(parents)):
        ranked = sorted(unclaimed, key=lambda oi: (dists[pi, oi], o_hashes[oi]))
        claim = ranked[:family_radius]
        for oi in claim:
            unclaimed.discard(oi)
        families.append(claim)
    return families


def environment_selection(
    parents: list[Architecture],
    offspring: list[Architecture],
    model: Predictor,
    n: int,
    family_radius: int,
) -> list[Architecture]:
    """Survivor selection: the predictor-best member of each family.

    The parent competes inside its own family. Winners are deduplicated by
    hash; any remaining slots are filled by global predictor rank over the
    not-yet-taken candidates. Returns exactly ``n`` unique architectures.
    """
    if len(parents) != n:
        raise ParameterError(f"expected {n} parents, got {len(parents)}")
    families = build_families(parents, offspring, model.space, model.table, family_radius)
    candidates = list(parents) + list(offspring)
    scores = model.scores(candidates)
    p_scores, o_scores = scores[: len(parents)], scores[len(parents) :]

    survivors: list[Architecture] = []
    taken = set()
    for pi, family in enumerate(families):
        members = [(p_scores[pi], parents[pi])] + [
            (o_scores[oi], offspring[oi]) for oi in family
        ]
        best_score = max(s for s, _ in members)
        winner = next(a for s, a in members if s == best_score)
        h = arch_hash(winner)
        if h not in taken:
            survivors.append(winner)
            taken.add(h)
    if len(survivors) < n:
        order = sorted(
            range(len(candidates)), key=lambda i: (-scores[i], arch_hash(candidates[i]))
        )
        for i in order:
            h = arch_hash(candidates[i])
            if h not in taken:
                survivors.append(candidates[i])
                taken.add(h)
            if len(survivors) == n:
                break
    if len(survivors) < n:
        raise InsufficientPoolError(
            f"only {len(survivors)} unique candidates available for {n} slots"
        )
    return survivors[:n]


def predict_uncertainty(
    model: Predictor,
    arch: Architecture,
    passes: int,
    rng: np.random.Generator,
    sigma: float = UNCERTAINTY_SIGMA,
) -> float:
    """Score spread under multiplicative Gaussian noise on the score weights."""
    return float(
        predict_uncertainties(model, [arch], passes, rng, sigma=sigma)[0]
    )


def predict_uncertainties(
    model: Predictor,
    archs: list[Architecture],
    passes: int,
    rng: np.random.Generator,
    sigma: float = UNCERTAINTY_SIGMA,
) -> np.ndarray:
    """Sample standard deviation of scores over perturbed score-layer passes.

    The perturbation multiplies the score weight matrix by (1 + sigma * eps)
    per pass; sigma = 0 therefore yields exactly zero uncertainty.
    """
    if passes < 2:
        raise ParameterError("need at least 2 passes for a standard deviation")
    w = model.params["head.score.w"]
    original = w.data.copy()
    outs = np.empty((passes, len(archs)))
    try:
        with no_grad():
            for p in range(passes):
                noise = rng.standard_normal(original.shape)
                w.data = original * (1.0 + sigma * noise)
                outs[p] = model.scores(archs)
    finally:
        w.data = original
    return outs.std(axis=0, ddof=1)


def fast_non_dominated_sort(objectives: np.ndarray) -> list[list[int]]:
    """Front indices for a maximize-everything objective matrix [n, m]."""
    n = objectives.shape[0]
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=np.int64)
    for p in range(n):
        ge = (objectives[p] >= objectives).all(axis=1)
        gt = (objectives[p] > objectives).any(axis=1)
        dominates_p = ge & gt
        for q in np.flatnonzero(dominates_p):
            dominated_by[p].append(int(q))
        domination_count[p] = int(
            (((objectives >= objectives[p]).all(axis=1)) & ((objectives > objectives[p]).any(axis=1))).sum()
        )
    fronts: list[list[int]] = []
    current = [int(i) for i in np.flatnonzero(domination_count == 0)]
    while current:
        fronts.append(current)
        nxt: list[int] = []
        for p in current:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    nxt.append(q)
        current = sorted(set(nxt))
    return fronts


def pareto_crowding(objectives: np.ndarray) -> np.ndarray:
    """Objective-space crowding distance within one front (boundary = inf)."""
    n, m = objectives.shape
    crowd = np.zeros(n)
    for j in range(m):
        order = np.argsort(objectives[:, j], kind="stable")
        lo, hi = objectives[order[0], j], objectives[order[-1], j]
        crowd[order[0]] = crowd[order[-1]] = np.inf
        span = hi - lo
        if span <= 0 or n < 3:
            continue
        for pos in range(1, n - 1):
            i = order[pos]
            crowd[i] += (objectives[order[pos + 1], j] - objectives[order[pos - 1], j]) / span
    return crowd


def infill_sampling(
    pool: list[Architecture],
    model: Predictor,
    n_infill: int,
    rng: np.random.Generator,
    evaluated_hashes: set | None = None,
    passes: int = UNCERTAINTY_PASSES,
    sigma: float = UNCERTAINTY_SIGMA,
) -> list[Architecture]:
    """Pick the architectures worth a real evaluation: exploit plus explore.

    Candidates already evaluated are excluded up front. Fronts are filled
    in order; the cut front is ranked by descending pareto crowding (hash
    as the final deterministic tie-break).
    """
    seen = evaluated_hashes or set()
    fresh = [a for a in pool if arch_hash(a) not in seen]
    if len(fresh) < n_infill:
        raise InsufficientPoolError(
            f"pool holds {len(fresh)} unevaluated candidates, need {n_infill}"
        )
    scores = model.scores(fresh)
    uncertainty = predict_uncertainties(model, fresh, passes, rng, sigma=sigma)
    objectives = np.stack([scores, uncertainty], axis=1)
    hashes = [arch_hash(a) for a in fresh]

    chosen: list[int] = []
    for front in fast_non_dominated_sort(objectives):
        if len(chosen) + len(front) <= n_infill:
            chosen.extend(front)
            continue
        crowd = pareto_crowding(objectives[front])
        ranked = sorted(
            range(len(front)), key=lambda i: (-crowd[i], hashes[front[i]])
        )
        chosen.extend(front[i] for i in ranked[: n_infill - len(chosen)])
        break
    return [fresh[i] for i in chosen]


def infill_candidates(
    pool: list[Architecture],
    model: Predictor,
    rng: np.random.Generator,
    passes: int = UNCERTAINTY_PASSES,
    sigma: float = UNCERTAINTY_SIGMA,
) -> list[InfillCandidate]:
    """Scored candidate view of a pool (used for logging and inspection)."""
    scores = model.scores(pool)
    unc = predict_uncertainties(model, pool, passes, rng, sigma=sigma)
    return [
        InfillCandidate(arch=a, predicted_score=float(s), uncertainty=float(u))
        for a, s, u in zip(pool, scores, unc)
    ]
