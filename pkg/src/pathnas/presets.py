"""Bundled search spaces and cell constructors used by tests, demos and the CLI.

Three presets ship with the package:

* ``toy``      -- a 3-op space whose template is the literal 4-slot sequence
                  used in the worked encoding examples.
* ``nb101-like`` -- a 7-node, 9-edge, 3-op space shaped like the NAS-Bench-101
                  cell constraints.
* ``nb201-like`` -- a 5-op space whose fixed-topology sub-grid (the line-graph
                  form of a 4-node cell, one labeled node per original edge)
                  enumerates exactly 5**6 = 15,625 architectures.
"""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from .space import INPUT, OUTPUT, Architecture, SearchSpace

CONV3 = "conv3x3"
CONV1 = "conv1x1"
MAXPOOL = "maxpool3x3"

NB201_OPS = ("zeroize", "skip_connect", "conv1x1", "conv3x3", "avgpool3x3")


def _repeat_template(op_set: tuple[str, ...], reps: int) -> tuple[str, ...]:
    """Template of `reps` blocks of the op set: aligns every sequence of <= reps ops."""
    return op_set * reps


def toy_space(seq_cap: int = 4) -> SearchSpace:
    """3-op space with the literal [conv3x3, conv3x3, conv1x1, maxpool3x3] template.

    One-hot order puts maxpool at coordinate 0, conv1x1 at 1, conv3x3 at 2,
    so rendered bit strings read conv3x3 = 001, conv1x1 = 010, maxpool = 100.
    """
    return SearchSpace(
        op_set=(CONV3, CONV1, MAXPOOL),
        max_nodes=7,
        max_edges=9,
        path_template=(CONV3, CONV3, CONV1, MAXPOOL),
        seq_cap=seq_cap,
        onehot_order=(MAXPOOL, CONV1, CONV3),
    )


def nb101_like_space() -> SearchSpace:
    """7-node / 9-edge / 3-op space; paths of up to 5 ops align on the template."""
    ops = (CONV3, CONV1, MAXPOOL)
    return SearchSpace(
        op_set=ops,
        max_nodes=7,
        max_edges=9,
        path_template=_repeat_template(ops, 5),
        seq_cap=8,
    )


def nb201_like_space() -> SearchSpace:
    """5-op space containing the line-graph grid of a 4-node cell.

    ``max_nodes``/``max_edges`` admit the 8-node, 10-edge line-graph subgrid;
    the 3-block template aligns its up-to-3-op paths.
    """
    return SearchSpace(
        op_set=NB201_OPS,
        max_nodes=8,
        max_edges=12,
        path_template=_repeat_template(NB201_OPS, 3),
        seq_cap=5,
    )


# Line graph of the complete 4-node cell DAG: one interior node per original
# edge (01, 02, 03, 12, 13, 23), in that fixed topological order.
_LINE_GRAPH_EDGES = (
    (0, 1), (0, 2), (0, 3),  # input feeds edges leaving original node 0
    (1, 4), (1, 5),          # 01 feeds 12 and 13
    (2, 6),                  # 02 feeds 23
    (4, 6),                  # 12 feeds 23
    (3, 7), (5, 7), (6, 7),  # 03, 13, 23 reach the output
)


def nb201_cell_arch(ops6) -> Architecture:
    """Architecture for one 4-node cell, given its six edge operations.

    ``ops6`` orders the original edges (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
    """
    ops6 = tuple(ops6)
    if len(ops6) != 6:
        raise ValueError("a 4-node cell has exactly 6 edge operations")
    adj = np.zeros((8, 8), dtype=bool)
    for i, j in _LINE_GRAPH_EDGES:
        adj[i, j] = True
    return Architecture(node_ops=(INPUT,) + ops6 + (OUTPUT,), adjacency=adj)


def enumerate_nb201_cells(space: SearchSpace) -> Iterator[Architecture]:
    """All fixed-topology cells of the nb201-like grid (5**6 = 15,625)."""
    for combo in itertools.product(space.op_set, repeat=6):
        yield nb201_cell_arch(combo)


def toy_three_path_arch() -> Architecture:
    """Small cell with exactly three information-flow paths.

    Routes: [conv3x3, conv3x3, conv1x1], [conv3x3, maxpool3x3], [maxpool3x3].
    """
    adj = np.zeros((6, 6), dtype=bool)
    for i, j in ((0, 1), (1, 2), (2, 3), (3, 5), (0, 4), (4, 5), (1, 4)):
        adj[i, j] = True
    return Architecture(
        node_ops=(INPUT, CONV3, CONV3, CONV1, MAXPOOL, OUTPUT),
        adjacency=adj,
    )


PRESETS = {
    "toy": toy_space,
    "nb101-like": nb101_like_space,
    "nb201-like": nb201_like_space,
}


def get_preset(name: str) -> SearchSpace:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown space preset {name!r}; choose from {sorted(PRESETS)}") from None
