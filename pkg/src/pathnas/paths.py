"""Information-flow paths, the global path-id table, and the binary hard encoding.

Every input-to-output route through a cell is a path; its operation
sequence is aligned onto the space's template (greedy earliest-slot
subsequence matching), one one-hot block per template slot. An
architecture's hard encoding is the concatenation of its canonically
sorted path encodings, zero-padded to ``seq_cap`` path blocks. Manhattan
distance on these binary vectors is the similarity metric used everywhere
downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ParameterError,
    PathAlignmentError,
    PathCapacityError,
    PathLookupError,
    PathOverflowError,
    TableOverflowError,
)
from .space import Architecture, SearchSpace, structural_digest

#: path-id reserved for the padding token; larger than any real id
PAD_ID = 1_000_000_000

#: global guard on table enumeration size
TABLE_GUARD = 1_000_000


@dataclass(frozen=True)
class Path:
    """Operation sequence along one input-to-output route (sentinels excluded).

    A direct input-to-output edge yields the empty sequence.
    """

    ops: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self) -> int:
        return len(self.ops)


def enumerate_paths(arch: Architecture, hard_limit: int | None = None) -> list[Path]:
    """Exhaustive, duplicate-preserving DFS enumeration of all routes.

    Distinct node routes with identical op sequences are both kept. Raises
    :class:`PathOverflowError` (naming the architecture) once the count
    exceeds ``hard_limit``.
    """
    n = arch.n_nodes
    out: list[Path] = []
    stack: list[tuple[int, tuple[str, ...]]] = [(0, ())]
    while stack:
        u, ops = stack.pop()
        if u == n - 1:
            out.append(Path(ops))
            if hard_limit is not None and len(out) > hard_limit:
                raise PathOverflowError(
                    f"more than {hard_limit} paths in architecture "
                    f"{structural_digest(arch)}"
                )
            continue
        # reversed so the leftmost successor is explored first
        for v in reversed(np.flatnonzero(arch.adjacency[u])):
            v = int(v)
            nxt = ops if v == n - 1 else ops + (arch.node_ops[v],)
            stack.append((v, nxt))
    return out


def align_path(ops: tuple[str, ...], space: SearchSpace) -> list[int] | None:
    """Greedy earliest-slot alignment of an op sequence onto the template.

    Returns the consumed template slot index for each op, or None when the
    sequence is not a subsequence of the template.
    """
    slots: list[int] = []
    cursor = 0
    template = space.path_template
    for op in ops:
        while cursor < len(template) and template[cursor] != op:
            cursor += 1
        if cursor >= len(template):
            return None
        slots.append(cursor)
        cursor += 1
    return slots


def encode_path(path: Path, space: SearchSpace) -> np.ndarray:
    """Binary vector with one one-hot block per template slot.

    Slots consumed by the path carry the op's one-hot code; every other
    slot is a zero block. The empty path encodes to the all-zero vector.
    """
    for op in path.ops:
        if op not in space.op_set:
            raise PathAlignmentError(f"unknown op {op!r}")
    slots = align_path(path.ops, space)
    if slots is None:
        raise PathAlignmentError(
            f"path {list(path.ops)} does not align onto template "
            f"{list(space.path_template)}"
        )
    w = space.onehot_width
    bits = np.zeros(space.template_slots * w, dtype=np.uint8)
    for op, slot in zip(path.ops, slots):
        bits[slot * w + space.onehot_index(op)] = 1
    return bits


@dataclass(frozen=True)
class PathTable:
    """Bijection between a space's paths and dense integer path-ids.

    ``build_path_table`` is the canonical constructor and guarantees dense
    ids in the deterministic (length, one-hot lexicographic) order; direct
    construction trusts the caller's mapping (used for fixtures).
    """

    ids: dict[tuple[str, ...], int] = field(repr=False)
    pad_id: int = PAD_ID

    def __post_init__(self):
        if self.ids and self.pad_id <= max(self.ids.values()):
            raise ParameterError("pad_id must exceed every real path id")
        if len(set(self.ids.values())) != len(self.ids):
            raise ParameterError("path ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, path: Path) -> bool:
        return tuple(path.ops) in self.ids

    def id_of(self, path: Path) -> int:
        try:
            return self.ids[tuple(path.ops)]
        except KeyError:
            raise PathLookupError(f"path {list(path.ops)} not in table") from None

    def path_of(self, path_id: int) -> Path:
        for ops, pid in self.ids.items():
            if pid == path_id:
                return Path(ops)
        raise PathLookupError(f"no path with id {path_id}")


def build_path_table(space: SearchSpace) -> PathTable:
    """Enumerate every realizable op sequence and index it densely.

    A sequence is realizable when it aligns onto the template and is short
    enough to visit distinct interior nodes (at most ``max_nodes - 2``
    ops). Order: ascending length, then lexicographic by one-hot
    coordinate index. Rebuilding for the same space reproduces identical
    ids.
    """
    template = space.path_template
    max_len = space.max_nodes - 2
    order = sorted(space.op_set, key=space.onehot_index)
    found: list[tuple[str, ...]] = []

    def extend(prefix: tuple[str, ...], cursor: int):
        if len(found) > TABLE_GUARD:
            raise TableOverflowError(len(found), TABLE_GUARD)
        found.append(prefix)
        if len(prefix) == max_len:
            return
        for op in order:
            nxt = cursor
            while nxt < len(template) and template[nxt] != op:
                nxt += 1
            if nxt < len(template):
                extend(prefix + (op,), nxt + 1)

    extend((), 0)
    found.sort(key=lambda p: (len(p), tuple(space.onehot_index(o) for o in p)))
    return PathTable(ids={p: i for i, p in enumerate(found)})


def sort_paths(paths: list[Path], table: PathTable) -> list[Path]:
    """Stable sort by op count ascending, then by ascending path-id."""
    keyed = [(len(p), table.id_of(p)) for p in paths]
    return [p for _, p in sorted(zip(keyed, paths), key=lambda kp: kp[0])]


def encode_architecture(
    arch: Architecture, space: SearchSpace, table: PathTable
) -> np.ndarray:
    """Hard encoding: sorted path encodings concatenated, zero-padded to seq_cap.

    Architectures with more than ``seq_cap`` paths are rejected (capacity
    error) rather than truncated, since truncation would silently change
    the similarity metric.
    """
    paths = enumerate_paths(arch, hard_limit=2 * space.seq_cap)
    if len(paths) > space.seq_cap:
        raise PathCapacityError(
            f"{len(paths)} paths exceed seq_cap {space.seq_cap} "
            f"for architecture {structural_digest(arch)}"
        )
    ordered = sort_paths(paths, table)
    block = space.template_slots * space.onehot_width
    bits = np.zeros(space.seq_cap * block, dtype=np.uint8)
    for i, p in enumerate(ordered):
        bits[i * block : (i + 1) * block] = encode_path(p, space)
    return bits


def path_id_sequence(
    arch: Architecture, space: SearchSpace, table: PathTable
) -> np.ndarray:
    """Sorted path ids padded with the PAD id to length seq_cap (token input)."""
    paths = enumerate_paths(arch, hard_limit=2 * space.seq_cap)
    if len(paths) > space.seq_cap:
        raise PathCapacityError(
            f"{len(paths)} paths exceed seq_cap {space.seq_cap}"
        )
    ids = [table.id_of(p) for p in sort_paths(paths, table)]
    ids += [table.pad_id] * (space.seq_cap - len(ids))
    return np.asarray(ids, dtype=np.int64)


def manhattan_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Sum of coordinate-wise absolute differences of two equal-length vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.abs(a.astype(np.int64) - b.astype(np.int64)).sum())


def pairwise_manhattan(rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    """Distance matrix between two stacks of encodings, shape (len(a), len(b)).

    Binary inputs take the |a| + |b| - 2ab identity (one GEMM); anything
    else falls back to the broadcasting definition.
    """
    a = np.asarray(rows_a, dtype=np.int64)
    b = np.asarray(rows_b, dtype=np.int64)
    if ((a == 0) | (a == 1)).all() and ((b == 0) | (b == 1)).all():
        af = a.astype(np.float64)
        bf = b.astype(np.float64)
        d = af.sum(axis=1)[:, None] + bf.sum(axis=1)[None, :] - 2.0 * (af @ bf.T)
        return np.rint(d).astype(np.int64)
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)


def save_path_table(table: PathTable, space: SearchSpace, path) -> None:
    """Persist as JSON lines: header record, then one {path_id, ops} per line."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"pad_id": table.pad_id, "template": list(space.path_template)}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for ops, pid in sorted(table.ids.items(), key=lambda kv: kv[1]):
            fh.write(json.dumps({"path_id": pid, "ops": list(ops)}, sort_keys=True) + "\n")


def load_path_table(path) -> PathTable:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        ids: dict[tuple[str, ...], int] = {}
        for line in fh:
            rec = json.loads(line)
            ids[tuple(rec["ops"])] = int(rec["path_id"])
    table = PathTable(ids=ids, pad_id=int(header["pad_id"]))
    if sorted(ids.values()) != list(range(len(ids))):
        raise ParameterError("loaded table ids are not dense from 0")
    return table
