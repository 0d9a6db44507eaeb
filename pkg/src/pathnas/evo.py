"""Offspring generation: path crossover with node retention, two mutations.

Crossover swaps random subsets of information-flow paths between two
parents and rebuilds each child DAG by merging the resulting path set on
shared prefixes (a trie rooted at the input node). Node retention then
pulls some child node operations back toward the pre-crossover parent.
Connection mutation retargets one edge and prunes any downstream flow that
loses its input feed; operation mutation relabels a single interior node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CrossoverFailureError,
    MutationFailureError,
    OffspringShortfallError,
    ParameterError,
    PathCapacityError,
)
from .paths import Path, align_path, enumerate_paths
from .space import (
    INPUT,
    OUTPUT,
    Architecture,
    SearchSpace,
    arch_hash,
    reachable_from_input,
    validate,
)

#: attempts per crossover call before giving up
CROSSOVER_RETRY_CAP = 10


@dataclass(frozen=True)
class EvoConfig:
    crossover_prob: float = 0.9   # P_c
    mutation_prob: float = 0.1    # P_m
    node_keep_prob: float = 0.5   # P_keep
    offspring_ratio: int = 6      # r, offspring per reference solution
    max_rounds: int = 500  # mutation-only configs emit few children per round
    retention_policy: str = "pkeep_times_freq"  # or "pkeep_only"
    seed: int = 0

    def __post_init__(self):
        problems = []
        for name in ("crossover_prob", "mutation_prob", "node_keep_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        if self.offspring_ratio < 1:
            problems.append("offspring_ratio must be >= 1")
        if self.max_rounds < 1:
            problems.append("max_rounds must be >= 1")
        if self.retention_policy not in ("pkeep_times_freq", "pkeep_only"):
            problems.append(f"unknown retention_policy {self.retention_policy!r}")
        if problems:
            raise ParameterError("; ".join(problems))


def _copy(arch: Architecture) -> Architecture:
    return Architecture(node_ops=arch.node_ops, adjacency=arch.adjacency.copy())


def rebuild_from_paths(path_set, space: SearchSpace) -> Architecture | None:
    """Merge a set of op sequences into a DAG via a shared-prefix trie.

    Returns None when the merge needs more nodes than the space allows.
    Duplicate sequences collapse (a trie realizes each sequence once).
    """
    seqs = sorted({tuple(p.ops) if isinstance(p, Path) else tuple(p) for p in path_set})
    if not seqs:
        return None
    # trie nodes: (parent, op) -> node id; ids assigned in insertion order
    children: dict[tuple[int, str], int] = {}
    node_ops: list[str] = [INPUT]
    terminal: set[int] = set()
    for seq in seqs:
        cur = 0
        for op in seq:
            nxt = children.get((cur, op))
            if nxt is None:
                nxt = len(node_ops)
                node_ops.append(op)
                children[(cur, op)] = nxt
            cur = nxt
        terminal.add(cur)
    n = len(node_ops) + 1
    if n > space.max_nodes:
        return None
    out = n - 1
    adj = np.zeros((n, n), dtype=bool)
    for (parent, _), child in children.items():
        adj[parent, child] = True
    for t in terminal:
        adj[t, out] = True
    arch = Architecture(node_ops=tuple(node_ops) + (OUTPUT,), adjacency=adj)
    if not validate(space, arch):
        return None
    return arch


def _op_frequencies(a: Architecture, b: Architecture) -> dict[str, float]:
    ops = [op for arch in (a, b) for op in arch.node_ops[1:-1]]
    if not ops:
        return {}
    return {op: ops.count(op) / len(ops) for op in set(ops)}


def _apply_retention(
    child: Architecture,
    parent: Architecture,
    freqs: dict[str, float],
    cfg: EvoConfig,
    rng: np.random.Generator,
) -> Architecture:
    """Pull child interior ops back to the parent's op at the same position."""
    ops = list(child.node_ops)
    shared = min(child.n_nodes, parent.n_nodes) - 2
    for i in range(1, 1 + max(shared, 0)):
        p_op = parent.node_ops[i]
        keep = cfg.node_keep_prob
        if cfg.retention_policy == "pkeep_times_freq":
            keep *= freqs.get(p_op, 0.0)
        if rng.random() < keep:
            ops[i] = p_op
    return Architecture(node_ops=tuple(ops), adjacency=child.adjacency)


def _encodable(arch: Architecture, space: SearchSpace) -> bool:
    try:
        paths = enumerate_paths(arch, hard_limit=space.seq_cap)
    except Exception:
        return False
    return all(align_path(p.ops, space) is not None for p in paths)


def crossover(
    a: Architecture,
    b: Architecture,
    space: SearchSpace,
    cfg: EvoConfig,
    rng: np.random.Generator,
) -> tuple[Architecture, Architecture]:
    """Path-swap crossover with node retention; children of (a, b).

    With probability 1 - P_c (or when both swap subsets come up empty) the
    parents are returned unchanged. Invalid rebuilds are retried; after
    ``CROSSOVER_RETRY_CAP`` failures a :class:`CrossoverFailureError` is
    raised and the caller falls back to mutation only.
    """
    if rng.random() >= cfg.crossover_prob:
        return _copy(a), _copy(b)
    paths_a = enumerate_paths(a, hard_limit=2 * space.seq_cap)
    paths_b = enumerate_paths(b, hard_limit=2 * space.seq_cap)
    freqs = _op_frequencies(a, b)
    for _ in range(CROSSOVER_RETRY_CAP):
        take_a = rng.random(len(paths_a)) < 0.5
        take_b = rng.random(len(paths_b)) < 0.5
        swap_a = [p for p, t in zip(paths_a, take_a) if t]
        swap_b = [p for p, t in zip(paths_b, take_b) if t]
        if not swap_a and not swap_b:
            return _copy(a), _copy(b)
        set_1 = [p for p, t in zip(paths_a, take_a) if not t] + swap_b
        set_2 = [p for p, t in zip(paths_b, take_b) if not t] + swap_a
        child_1 = rebuild_from_paths(set_1, space) if set_1 else None
        child_2 = rebuild_from_paths(set_2, space) if set_2 else None
        if child_1 is None or child_2 is None:
            continue
        child_1 = _apply_retention(child_1, a, freqs, cfg, rng)
        child_2 = _apply_retention(child_2, b, freqs, cfg, rng)
        if all(
            validate(space, c) and _encodable(c, space) for c in (child_1, child_2)
        ):
            return child_1, child_2
    raise CrossoverFailureError(
        f"no valid child pair within {CROSSOVER_RETRY_CAP} attempts"
    )


def connection_mutation(
    arch: Architecture, space: SearchSpace, rng: np.random.Generator
) -> Architecture:
    """Retarget one edge; downstream nodes that lose input flow are pruned.

    Pruning removes every outgoing edge of a node no longer reachable from
    the input (computed once on the retargeted graph, which is exactly the
    transitive cascade). Candidate retargets that fail validation or
    encodability are rejected; if none works, raises
    :class:`MutationFailureError`.
    """
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(arch.adjacency))]
    if not edges:
        raise MutationFailureError("architecture has no edges to mutate")
    n = arch.n_nodes
    edge_order = rng.permutation(len(edges))
    for e_idx in edge_order:
        i, j = edges[int(e_idx)]
        candidates = [
            t for t in range(i + 1, n) if t != j and not arch.adjacency[i, t]
        ]
        for t_idx in rng.permutation(len(candidates)):
            target = candidates[int(t_idx)]
            adj = arch.adjacency.copy()
            adj[i, j] = False
            adj[i, target] = True
            trial = Architecture(node_ops=arch.node_ops, adjacency=adj)
            reach = reachable_from_input(trial)
            for u in np.flatnonzero(~reach):
                adj[u, :] = False
            trial = Architecture(node_ops=arch.node_ops, adjacency=adj)
            if validate(space, trial) and _encodable(trial, space):
                return trial
    raise MutationFailureError("no valid connection retarget exists")


def operation_mutation(
    arch: Architecture, space: SearchSpace, rng: np.random.Generator
) -> Architecture:
    """Replace one random interior node's operation with a different one."""
    if len(space.op_set) < 2:
        raise ParameterError("operation mutation needs at least 2 operations")
    interior = arch.n_nodes - 2
    if interior < 1:
        raise MutationFailureError("no interior node to mutate")
    pos = 1 + int(rng.integers(interior))
    current = arch.node_ops[pos]
    choices = [op for op in space.op_set if op != current]
    new_op = choices[int(rng.integers(len(choices)))]
    ops = list(arch.node_ops)
    ops[pos] = new_op
    return Architecture(node_ops=tuple(ops), adjacency=arch.adjacency)


def _mutate(
    arch: Architecture, space: SearchSpace, rng: np.random.Generator
) -> Architecture:
    """Apply one mutation, choosing the operator 50/50 with fallback."""
    first_connection = rng.random() < 0.5
    order = ("connection", "operation") if first_connection else ("operation", "connection")
    for kind in order:
        try:
            if kind == "connection":
                return connection_mutation(arch, space, rng)
            return operation_mutation(arch, space, rng)
        except (MutationFailureError, ParameterError):
            continue
    return _copy(arch)


def generate_offspring(
    population: list[Architecture],
    space: SearchSpace,
    cfg: EvoConfig,
    rng: np.random.Generator,
    forbidden_hashes: set | None = None,
    log_fn=None,
) -> list[Architecture]:
    """Rounds of pair-crossover-mutate until ratio * |population| offspring exist.

    Offspring whose hash is already in ``forbidden_hashes`` (the evaluated
    archive) are dropped; within-generation duplicates are allowed. Raises
    :class:`OffspringShortfallError` if the round cap is hit first.
    """
    if len(population) < 2:
        raise ParameterError("population must have at least 2 members")
    forbidden = forbidden_hashes or set()
    needed = cfg.offspring_ratio * len(population)
    offspring: list[Architecture] = []
    for round_no in range(cfg.max_rounds):
        for _ in range(len(population)):
            ia, ib = rng.integers(len(population)), rng.integers(len(population))
            pa, pb = population[int(ia)], population[int(ib)]
            try:
                children = list(crossover(pa, pb, space, cfg, rng))
                operator = "crossover"
            except CrossoverFailureError:
                children = [_copy(pa), _copy(pb)]
                operator = "copy"
            for child in children:
                applied = operator
                if rng.random() < cfg.mutation_prob:
                    child = _mutate(child, space, rng)
                    applied += "+mutation"
                if not validate(space, child) or not _encodable(child, space):
                    continue
                h = arch_hash(child)
                if h in forbidden:
                    continue
                offspring.append(child)
                if log_fn is not None:
                    log_fn(
                        {
                            "event": "offspring",
                            "round": round_no,
                            "parents": [arch_hash(pa).hex[:16], arch_hash(pb).hex[:16]],
                            "operator": applied,
                            "hash": h.hex[:16],
                        }
                    )
        if len(offspring) >= needed:
            return offspring[:needed]
    raise OffspringShortfallError(offspring, needed)
