import numpy as np
import pytest

import pathnas as pn
from pathnas.errors import (
    ParameterError,
    PathAlignmentError,
    PathCapacityError,
    PathLookupError,
    PathOverflowError,
)
from pathnas.paths import PAD_ID, pairwise_manhattan
from pathnas.presets import CONV1, CONV3, MAXPOOL
from pathnas.space import INPUT, OUTPUT

from test_space import chain_arch


def bits(vec):
    return "".join(str(int(b)) for b in vec)


class TestEnumeratePaths:
    def test_three_path_example(self):
        assert len(pn.enumerate_paths(pn.toy_three_path_arch())) == 3

    def test_chain_single_route(self):
        assert len(pn.enumerate_paths(chain_arch([CONV3]))) == 1

    def test_diamond_two_routes(self):
        adj = np.zeros((4, 4), dtype=bool)
        adj[0, 1] = adj[0, 2] = adj[1, 3] = adj[2, 3] = True
        arch = pn.Architecture(node_ops=(INPUT, CONV3, CONV1, OUTPUT), adjacency=adj)
        assert len(pn.enumerate_paths(arch)) == 2

    def test_duplicate_routes_preserved(self):
        adj = np.zeros((4, 4), dtype=bool)
        adj[0, 1] = adj[0, 2] = adj[1, 3] = adj[2, 3] = True
        arch = pn.Architecture(node_ops=(INPUT, CONV3, CONV3, OUTPUT), adjacency=adj)
        paths = pn.enumerate_paths(arch)
        assert [list(p.ops) for p in paths] == [[CONV3], [CONV3]]

    def test_direct_edge_gives_empty_path(self):
        adj = np.zeros((2, 2), dtype=bool)
        adj[0, 1] = True
        arch = pn.Architecture(node_ops=(INPUT, OUTPUT), adjacency=adj)
        assert [p.ops for p in pn.enumerate_paths(arch)] == [()]

    def test_overflow_names_architecture(self):
        arch = pn.toy_three_path_arch()
        with pytest.raises(PathOverflowError, match="[0-9a-f]{16}"):
            pn.enumerate_paths(arch, hard_limit=2)


class TestBuildPathTable:
    def test_thirteen_entry_count(self):
        # 3 ops, paths capped at 2 ops: 1 empty + 3 singles + 9 pairs
        sp = pn.SearchSpace(("a", "b", "c"), 4, 6, ("a", "b", "c") * 2, 4)
        table = pn.build_path_table(sp)
        assert len(table) == 13

    def test_rebuild_is_identical(self, toy_space):
        t1 = pn.build_path_table(toy_space)
        t2 = pn.build_path_table(toy_space)
        assert t1.ids == t2.ids

    def test_ids_dense_from_zero(self, nb201_table):
        ids = sorted(nb201_table.ids.values())
        assert ids == list(range(len(nb201_table)))

    def test_sorted_by_length_then_onehot_lex(self, toy_space, toy_table):
        entries = sorted(toy_table.ids.items(), key=lambda kv: kv[1])
        keys = [
            (len(ops), tuple(toy_space.onehot_index(o) for o in ops))
            for ops, _ in entries
        ]
        assert keys == sorted(keys)

    def test_pad_id_exceeds_real_ids(self, toy_table):
        assert toy_table.pad_id > max(toy_table.ids.values())
        assert toy_table.pad_id == PAD_ID

    def test_persistence_round_trip(self, toy_space, toy_table, tmp_path):
        f = tmp_path / "table.jsonl"
        pn.save_path_table(toy_table, toy_space, f)
        again = pn.load_path_table(f)
        assert again.ids == toy_table.ids
        assert again.pad_id == toy_table.pad_id


class TestEncodePath:
    def test_three_op_worked_example(self, toy_space):
        enc = pn.encode_path(pn.Path((CONV3, CONV3, CONV1)), toy_space)
        assert bits(enc) == "001001010000"

    def test_single_maxpool_worked_example(self, toy_space):
        enc = pn.encode_path(pn.Path((MAXPOOL,)), toy_space)
        assert bits(enc) == "000000000100"

    def test_empty_path_all_zero(self, toy_space):
        assert not pn.encode_path(pn.Path(()), toy_space).any()

    def test_unknown_op_rejected(self, toy_space):
        with pytest.raises(PathAlignmentError):
            pn.encode_path(pn.Path(("mystery",)), toy_space)

    def test_unalignable_path_rejected(self, toy_space):
        # template (c3, c3, c1, mp) has no c3 after the c1 slot
        with pytest.raises(PathAlignmentError):
            pn.encode_path(pn.Path((CONV1, CONV3)), toy_space)

    def test_blocks_are_onehot_or_zero(self, toy_space, toy_table):
        w = toy_space.onehot_width
        for ops in toy_table.ids:
            blocks = pn.encode_path(pn.Path(ops), toy_space).reshape(-1, w)
            assert (blocks.sum(axis=1) <= 1).all()


class TestSortPaths:
    def test_worked_sort_order(self):
        # ids and op counts quoted from the encoding walkthrough
        p1 = pn.Path((CONV3, CONV3, CONV1))
        p13 = pn.Path((CONV3, CONV3, CONV1, MAXPOOL))
        p16 = pn.Path((MAXPOOL,))
        table = pn.PathTable(ids={p1.ops: 1, p13.ops: 13, p16.ops: 16})
        assert pn.sort_paths([p1, p13, p16], table) == [p16, p1, p13]

    def test_idempotent_on_sorted_input(self, toy_space, toy_table):
        paths = pn.sort_paths(pn.enumerate_paths(pn.toy_three_path_arch()), toy_table)
        assert pn.sort_paths(paths, toy_table) == paths

    def test_equal_length_breaks_by_id(self, toy_table):
        singles = [pn.Path((op,)) for op in (CONV3, CONV1, MAXPOOL)]
        out = pn.sort_paths(singles, toy_table)
        brute = sorted(singles, key=lambda p: (len(p), toy_table.id_of(p)))
        assert out == brute

    def test_unknown_path_raises(self, toy_table):
        with pytest.raises(PathLookupError):
            pn.sort_paths([pn.Path(("nope",))], toy_table)


class TestEncodeArchitecture:
    def test_three_path_concatenation_with_padding(self, toy_space, toy_table):
        arch = pn.toy_three_path_arch()
        enc = pn.encode_architecture(arch, toy_space, toy_table)
        block = toy_space.template_slots * toy_space.onehot_width
        assert enc.shape == (toy_space.seq_cap * block,)
        ordered = pn.sort_paths(pn.enumerate_paths(arch), toy_table)
        expected = np.concatenate(
            [pn.encode_path(p, toy_space) for p in ordered]
            + [np.zeros(block, dtype=np.uint8)] * (toy_space.seq_cap - 3)
        )
        assert np.array_equal(enc, expected)

    def test_isomorphic_relabelings_identical(self, toy_space, toy_table):
        adj = np.zeros((4, 4), dtype=bool)
        adj[0, 1] = adj[0, 2] = adj[1, 3] = adj[2, 3] = True
        a = pn.Architecture(node_ops=(INPUT, CONV3, MAXPOOL, OUTPUT), adjacency=adj)
        b = pn.Architecture(node_ops=(INPUT, MAXPOOL, CONV3, OUTPUT), adjacency=adj)
        enc_a = pn.encode_architecture(a, toy_space, toy_table)
        enc_b = pn.encode_architecture(b, toy_space, toy_table)
        assert np.array_equal(enc_a, enc_b)

    def test_direct_edge_encodes_all_zero(self, toy_space, toy_table):
        adj = np.zeros((2, 2), dtype=bool)
        adj[0, 1] = True
        arch = pn.Architecture(node_ops=(INPUT, OUTPUT), adjacency=adj)
        assert not pn.encode_architecture(arch, toy_space, toy_table).any()

    def test_capacity_error_beyond_seq_cap(self, toy_table):
        sp = pn.toy_space(seq_cap=2)
        table = pn.build_path_table(sp)
        with pytest.raises(PathCapacityError):
            pn.encode_architecture(pn.toy_three_path_arch(), sp, table)

    def test_pure_function(self, toy_space, toy_table):
        arch = pn.toy_three_path_arch()
        e1 = pn.encode_architecture(arch, toy_space, toy_table)
        e2 = pn.encode_architecture(arch, toy_space, toy_table)
        assert np.array_equal(e1, e2)

    def test_token_sequence_pads_with_pad_id(self, toy_space, toy_table):
        ids = pn.path_id_sequence(pn.toy_three_path_arch(), toy_space, toy_table)
        assert ids.shape == (toy_space.seq_cap,)
        assert ids[-1] == toy_table.pad_id
        ops_by_id = {v: k for k, v in toy_table.ids.items()}
        lens = [len(ops_by_id[i]) for i in ids[:3]]
        assert lens == sorted(lens)


class TestManhattan:
    def test_identity(self):
        x = np.array([0, 1, 1, 0])
        assert pn.manhattan_distance(x, x) == 0

    def test_forced_coordinate_sum(self):
        assert pn.manhattan_distance(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1])) == 2

    def test_length_mismatch_raises(self):
        with pytest.raises(ParameterError):
            pn.manhattan_distance(np.zeros(3), np.zeros(4))

    def test_metric_axioms_on_random_binary_triples(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x, y, z = (rng.integers(0, 2, size=24) for _ in range(3))
            dxy = pn.manhattan_distance(x, y)
            assert dxy >= 0
            assert dxy == pn.manhattan_distance(y, x)
            assert pn.manhattan_distance(x, x) == 0
            assert dxy <= pn.manhattan_distance(x, z) + pn.manhattan_distance(z, y)

    def test_onehot_permutation_invariance_spot_check(self, toy_space, toy_table):
        rng = np.random.default_rng(1)
        a = pn.random_architecture(toy_space, 10)
        b = pn.random_architecture(toy_space, 20)
        base = pn.manhattan_distance(
            pn.encode_architecture(a, toy_space, toy_table),
            pn.encode_architecture(b, toy_space, toy_table),
        )
        for _ in range(5):
            order = tuple(rng.permutation(toy_space.op_set))
            sp = pn.SearchSpace(
                toy_space.op_set, toy_space.max_nodes, toy_space.max_edges,
                toy_space.path_template, toy_space.seq_cap, onehot_order=order,
            )
            table = pn.build_path_table(sp)
            d = pn.manhattan_distance(
                pn.encode_architecture(a, sp, table),
                pn.encode_architecture(b, sp, table),
            )
            assert d == base

    def test_pairwise_matches_naive_binary(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 2, size=(7, 30))
        b = rng.integers(0, 2, size=(5, 30))
        naive = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
        assert np.array_equal(pairwise_manhattan(a, b), naive)

    def test_pairwise_matches_naive_integer(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 9, size=(6, 10))
        b = rng.integers(0, 9, size=(4, 10))
        naive = np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)
        assert np.array_equal(pairwise_manhattan(a, b), naive)
