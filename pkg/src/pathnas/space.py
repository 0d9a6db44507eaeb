"""Cell-based search spaces and architecture DAGs.

A cell is a labeled DAG: node 0 is the input, the last node is the output,
and every interior node carries one operation from the space's operation
set. Nodes are kept in topological order, so the adjacency matrix is
strictly upper-triangular by construction. Isomorphic relabelings are
distinct objects at this layer; the path encoding canonicalizes them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SamplingExhaustedError, StructuralError

INPUT = "input"
OUTPUT = "output"

#: attempts before random_architecture gives up on a degenerate space
SAMPLING_RETRY_CAP = 10_000


def _strip_sentinels(names: list[str]) -> list[str]:
    return [n for n in names if n not in (INPUT, OUTPUT)]


@dataclass(frozen=True)
class SearchSpace:
    """Static description of one cell search space.

    ``path_template`` is the global ordered operation list that fixes the
    slot structure of every path encoding; input/output sentinels are
    stripped if present. ``onehot_order`` assigns each operation its one-hot
    coordinate (any permutation of ``op_set`` is valid).
    """

    op_set: tuple[str, ...]
    max_nodes: int
    max_edges: int
    path_template: tuple[str, ...]
    seq_cap: int  # L_seq: maximum number of paths per architecture
    onehot_order: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "op_set", tuple(self.op_set))
        object.__setattr__(
            self, "path_template", tuple(_strip_sentinels(list(self.path_template)))
        )
        order = tuple(self.onehot_order) if self.onehot_order else tuple(self.op_set)
        object.__setattr__(self, "onehot_order", order)
        problems = []
        if len(set(self.op_set)) != len(self.op_set):
            problems.append("op_set entries must be unique")
        if not set(self.path_template) >= set(self.op_set):
            missing = set(self.op_set) - set(self.path_template)
            problems.append(f"path_template must cover every op at least once, missing {sorted(missing)}")
        if not set(self.path_template) <= set(self.op_set):
            extra = set(self.path_template) - set(self.op_set)
            problems.append(f"path_template contains unknown ops {sorted(extra)}")
        if self.seq_cap < 1:
            problems.append("seq_cap must be >= 1")
        if self.max_nodes < 2:
            problems.append("max_nodes must be >= 2 (input and output)")
        if self.max_edges < 1:
            problems.append("max_edges must be >= 1")
        if sorted(order) != sorted(self.op_set):
            problems.append("onehot_order must be a permutation of op_set")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def onehot_width(self) -> int:
        return len(self.op_set)

    @property
    def template_slots(self) -> int:
        return len(self.path_template)

    def onehot_index(self, op: str) -> int:
        return self.onehot_order.index(op)

    def to_json_dict(self) -> dict:
        return {
            "op_set": list(self.op_set),
            "max_nodes": self.max_nodes,
            "max_edges": self.max_edges,
            "path_template": list(self.path_template),
            "L_seq": self.seq_cap,
            "onehot_order": list(self.onehot_order),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SearchSpace":
        return cls(
            op_set=tuple(d["op_set"]),
            max_nodes=int(d["max_nodes"]),
            max_edges=int(d["max_edges"]),
            path_template=tuple(d["path_template"]),
            seq_cap=int(d["L_seq"]),
            onehot_order=tuple(d.get("onehot_order") or d["op_set"]),
        )


def load_space(path) -> SearchSpace:
    """Load a search-space definition from its JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return SearchSpace.from_json_dict(json.load(fh))


def save_space(space: SearchSpace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class Architecture:
    """One cell: per-node operations plus a strictly upper-triangular adjacency.

    ``node_ops[0]`` must be the input sentinel and ``node_ops[-1]`` the output
    sentinel. Immutable after construction; adjacency is stored as a read-only
    boolean array.
    """

    node_ops: tuple[str, ...]
    adjacency: np.ndarray = field(repr=False)

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)  # private copy, frozen below
        adj.setflags(write=False)
        object.__setattr__(self, "node_ops", tuple(self.node_ops))
        object.__setattr__(self, "adjacency", adj)
        n = len(self.node_ops)
        if adj.shape != (n, n):
            raise StructuralError(
                f"adjacency shape {adj.shape} does not match {n} node ops"
            )
        if n < 2 or self.node_ops[0] != INPUT or self.node_ops[-1] != OUTPUT:
            raise StructuralError("node 0 must be 'input' and the last node 'output'")

    @property
    def n_nodes(self) -> int:
        return len(self.node_ops)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def successors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def to_json_dict(self) -> dict:
        flat = "".join("1" if b else "0" for b in self.adjacency.ravel())
        return {"ops": list(self.node_ops), "adjacency": flat}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Architecture":
        ops = list(d["ops"])
        n = len(ops)
        flat = d["adjacency"]
        if len(flat) != n * n or set(flat) - {"0", "1"}:
            raise StructuralError("adjacency string must be n*n characters of 0/1")
        adj = np.array([c == "1" for c in flat], dtype=bool).reshape(n, n)
        return cls(node_ops=tuple(ops), adjacency=adj)


def reachable_from_input(arch: Architecture) -> np.ndarray:
    """Boolean mask of nodes reachable from the input node."""
    n = arch.n_nodes
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(arch.adjacency[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def validate(space: SearchSpace, arch: Architecture) -> bool:
    """Check all architecture invariants under ``space``.

    Returns False for a well-formed architecture that violates a space
    constraint. Raises :class:`StructuralError` when the data itself is
    inconsistent (that is not a validation verdict).
    """
    n = arch.n_nodes
    if n > space.max_nodes:
        raise StructuralError(
            f"architecture has {n} nodes but space.max_nodes is {space.max_nodes}"
        )
    if np.any(np.tril(arch.adjacency)):
        return False
    if arch.n_edges > space.max_edges:
        return False
    for op in arch.node_ops[1:-1]:
        if op not in space.op_set:
            return False
    if not reachable_from_input(arch)[n - 1]:
        return False
    return True


def _canonical_path_multiset(arch: Architecture) -> list[tuple[str, ...]]:
    """All input-to-output op sequences, sorted by (length, op names).

    Deliberately table-free: for same-length paths, sorting by operation
    name sequence is order-isomorphic to sorting by path id for any fixed
    one-hot assignment, and the multiset itself is what the hash must
    canonicalize.
    """
    n = arch.n_nodes
    out: list[tuple[str, ...]] = []
    stack: list[tuple[int, tuple[str, ...]]] = [(0, ())]
    while stack:
        u, ops = stack.pop()
        if u == n - 1:
            out.append(ops)
            continue
        for v in np.flatnonzero(arch.adjacency[u]):
            v = int(v)
            nxt = ops if v == n - 1 else ops + (arch.node_ops[v],)
            stack.append((v, nxt))
    out.sort(key=lambda p: (len(p), p))
    return out


@dataclass(frozen=True)
class ArchHash:
    """Fixed-width digest canonicalizing path-equivalent architectures."""

    digest: bytes

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __lt__(self, other: "ArchHash") -> bool:
        return self.digest < other.digest


def arch_hash(arch: Architecture) -> ArchHash:
    """Digest of the canonically sorted path multiset.

    Two architectures whose DAGs realize the same multiset of information
    flow paths collapse to one digest, which is exactly the equivalence the
    hard encoding induces.
    """
    paths = _canonical_path_multiset(arch)
    h = hashlib.sha256()
    for p in paths:
        h.update("\x1f".join(p).encode("utf-8"))
        h.update(b"\x1e")
    return ArchHash(h.digest())


def structural_digest(arch: Architecture) -> str:
    """Raw digest over (node_ops, adjacency); used only in error messages."""
    h = hashlib.sha256()
    h.update("\x1f".join(arch.node_ops).encode("utf-8"))
    h.update(arch.adjacency.tobytes())
    return h.hexdigest()[:16]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_architecture(
    space: SearchSpace,
    rng_seed,
    *,
    path_limit: int | None = None,
) -> Architecture:
    """Sample a uniformly seeded valid architecture by rejection.

    The sampler also rejects architectures that cannot be hard-encoded
    (more than ``seq_cap`` paths, or a path that does not align onto the
    template), so every returned architecture is usable downstream.
    Deterministic for a fixed integer seed.
    """
    from .paths import align_path, enumerate_paths  # local import to avoid a cycle

    rng = _as_rng(rng_seed)
    limit = space.seq_cap if path_limit is None else path_limit
    for _ in range(SAMPLING_RETRY_CAP):
        n = int(rng.integers(2, space.max_nodes + 1))
        ops = (INPUT,) + tuple(rng.choice(space.op_set, size=max(n - 2, 0))) + (OUTPUT,)
        adj = np.zeros((n, n), dtype=bool)
        pairs = [(i, j) for i in range(n - 1) for j in range(i + 1, n)]
        m = int(rng.integers(1, min(space.max_edges, len(pairs)) + 1))
        idx = rng.choice(len(pairs), size=m, replace=False)
        for k in idx:
            i, j = pairs[int(k)]
            adj[i, j] = True
        arch = Architecture(node_ops=ops, adjacency=adj)
        if not validate(space, arch):
            continue
        try:
            paths = enumerate_paths(arch, hard_limit=limit)
        except Exception:
            continue
        if any(align_path(p.ops, space) is None for p in paths):
            continue
        return arch
    raise SamplingExhaustedError(
        f"no valid architecture found in {SAMPLING_RETRY_CAP} attempts"
    )
