import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curatelink.graph import (
    BipartiteGraph,
    EdgeSplit,
    GraphError,
    GraphFormatError,
    IdVocab,
    build_graph,
    degree_histogram,
    filter_degrees,
    held_out_count,
    parse_edge_lines,
    read_graph,
    sample_negative_group,
    split_edges,
    write_graph,
)

from conftest import random_graph

edge_lists = st.lists(
    st.tuples(st.integers(0, 7), st.integers(0, 9)), min_size=1, max_size=60
)


def _graph_from_pairs(pairs):
    return build_graph([(f"g{c}", f"i{i}") for c, i in pairs])[0]


class TestBuildGraph:
    def test_small(self):
        g, vocab = build_graph([("b1", "p1"), ("b1", "p2"), ("b2", "p1")])
        assert (g.n_groups, g.n_items, g.n_edges) == (2, 2, 3)
        assert vocab.groups == ["b1", "b2"]
        assert vocab.items == ["p1", "p2"]
        assert g.groups_of_item[0].tolist() == [0, 1]
        assert g.items_of_group[1].tolist() == [0]

    def test_duplicates_collapse(self):
        g, _ = build_graph([("b1", "p1"), ("b1", "p1")])
        assert g.n_edges == 1

    def test_empty(self):
        with pytest.raises(GraphError, match="no edges"):
            build_graph([])

    def test_first_seen_order(self):
        _, vocab = build_graph([("z", "9"), ("a", "1"), ("z", "1")])
        assert vocab.group_index("z") == 0 and vocab.group_index("a") == 1
        assert vocab.item_index("9") == 0 and vocab.item_index("1") == 1

    @given(edge_lists)
    def test_invariants(self, pairs):
        g = _graph_from_pairs(pairs)
        assert g.n_edges == len(set(pairs))
        assert sum(len(r) for r in g.groups_of_item) == g.n_edges
        assert sum(len(r) for r in g.items_of_group) == g.n_edges
        for i, row in enumerate(g.groups_of_item):
            assert np.all(np.diff(row) > 0)
            assert np.all(row < g.n_groups)
            for c in row:
                assert i in g.items_of_group[c]
        assert g.item_degrees().sum() == g.group_degrees().sum() == g.n_edges

    @given(edge_lists)
    def test_transpose_rebuild(self, pairs):
        g = _graph_from_pairs(pairs)
        groups, items = g.edges()
        h = BipartiteGraph.from_edges(g.n_groups, g.n_items, groups[::-1], items[::-1])
        assert h == g
        for a, b in zip(g.items_of_group, h.items_of_group):
            assert np.array_equal(a, b)

    def test_out_of_range(self):
        with pytest.raises(GraphError):
            BipartiteGraph.from_edges(2, 2, [2], [0])


class TestFilterDegrees:
    def test_removes_degree_one_item(self):
        # items: a (1 edge), b and c (2 edges each)
        g, vocab = build_graph([("g1", "a"), ("g1", "b"), ("g2", "b"), ("g1", "c"), ("g2", "c")])
        out, gmap, imap = filter_degrees(g)
        assert imap.tolist() == [-1, 0, 1]
        assert gmap.tolist() == [0, 1]
        assert out.n_items == 2 and out.n_edges == 4

    def test_cascade_within_single_pass(self):
        # group g3 only holds item a, which is removed -> g3 removed too
        g, vocab = build_graph([("g3", "a"), ("g1", "b"), ("g2", "b")])
        out, gmap, imap = filter_degrees(g)
        assert gmap.tolist() == [-1, 0, 1]
        assert imap.tolist() == [-1, 0]
        assert vocab.remap(gmap, imap).groups == ["g1", "g2"]
        assert (out.n_groups, out.n_items, out.n_edges) == (2, 1, 2)

    def test_identity_when_nothing_to_remove(self):
        g, _ = build_graph([("g1", "a"), ("g2", "a"), ("g1", "b"), ("g2", "b")])
        out, gmap, imap = filter_degrees(g)
        assert out == g
        assert gmap.tolist() == [0, 1] and imap.tolist() == [0, 1]

    def test_no_fixpoint_iteration(self):
        # with min_group_deg=2, removing group g2 would drop item b below 2,
        # but items are only filtered once, before groups
        g, _ = build_graph([("g1", "a"), ("g3", "a"), ("g1", "b"), ("g2", "b"), ("g1", "c"), ("g3", "c")])
        out, gmap, imap = filter_degrees(g, min_item_deg=2, min_group_deg=2)
        assert gmap.tolist() == [0, 1, -1]
        assert imap.tolist() == [0, 1, 2]
        assert out.item_degrees().tolist() == [2, 1, 2]

    def test_eliminated(self):
        g, _ = build_graph([("g1", "a"), ("g2", "b")])
        with pytest.raises(GraphError, match="eliminated"):
            filter_degrees(g)

    @given(edge_lists)
    def test_idempotent(self, pairs):
        g = _graph_from_pairs(pairs)
        try:
            once, _, _ = filter_degrees(g)
        except GraphError:
            return
        twice, gmap, imap = filter_degrees(once)
        assert twice == once
        assert np.all(gmap >= 0) and np.all(imap >= 0)


class TestSplitEdges:
    @pytest.mark.parametrize("deg,expected", [(2, 1), (5, 1), (9, 1), (10, 1), (19, 1), (20, 2), (23, 2), (100, 10)])
    def test_held_out_count(self, deg, expected):
        assert held_out_count(deg) == expected

    def test_degree_5_and_23(self):
        g = BipartiteGraph.from_edges(30, 2, list(range(5)) + list(range(23)), [0] * 5 + [1] * 23)
        s = split_edges(g, seed=3)
        assert len(s.test_positives[0]) == 1 and len(s.train.groups_of_item[0]) == 4
        assert len(s.test_positives[1]) == 2 and len(s.train.groups_of_item[1]) == 21

    def test_deterministic(self, rng):
        g = random_graph(rng, 20, 30, 0.3, min_item_deg=2)
        a, b = split_edges(g, seed=7), split_edges(g, seed=7)
        assert a.train == b.train
        assert all(np.array_equal(x, y) for x, y in zip(a.test_positives, b.test_positives))

    def test_rejects_degree_one(self):
        g = BipartiteGraph.from_edges(3, 1, [0], [0])
        with pytest.raises(GraphError):
            split_edges(g)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_protocol_property(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, int(rng.integers(3, 40)), int(rng.integers(1, 30)), rng.uniform(0.05, 0.9), min_item_deg=2)
        s = split_edges(g, seed=seed)
        for i, row in enumerate(g.groups_of_item):
            test, train = s.test_positives[i], s.train.groups_of_item[i]
            d = row.size
            assert test.size == (1 if d < 10 else d // 10)
            assert np.intersect1d(test, train).size == 0
            assert np.array_equal(np.union1d(test, train), row)
            assert train.size >= 1

    def test_graph_round_trip_through_split_files(self, rng, tmp_path):
        g = random_graph(rng, 12, 15, 0.4, min_item_deg=2)
        s = split_edges(g, seed=1)
        write_graph(s.train, tmp_path / "train.tsv")
        write_graph(s.test_graph(), tmp_path / "test.tsv")
        back = EdgeSplit.from_graphs(read_graph(tmp_path / "train.tsv"), read_graph(tmp_path / "test.tsv"))
        assert back.train == s.train
        assert all(np.array_equal(a, b) for a, b in zip(back.test_positives, s.test_positives))


class TestNegativeSampling:
    def test_support(self, rng):
        g = BipartiteGraph.from_edges(3, 1, [0], [0])
        for _ in range(200):
            assert sample_negative_group(g, 0, rng) in (1, 2)

    def test_no_negative(self, rng):
        g = BipartiteGraph.from_edges(3, 1, [0, 1, 2], [0, 0, 0])
        with pytest.raises(GraphError, match="no negative available"):
            sample_negative_group(g, 0, rng)

    def test_uniform_frequencies(self):
        g = BipartiteGraph.from_edges(3, 1, [0], [0])
        rng = np.random.default_rng(0)
        draws = np.array([sample_negative_group(g, 0, rng) for _ in range(100_000)])
        freq = np.bincount(draws, minlength=3) / draws.size
        assert freq[0] == 0
        assert 0.49 <= freq[1] <= 0.51 and 0.49 <= freq[2] <= 0.51

    @pytest.mark.parametrize("linked", [[0, 3], [0, 1, 2, 4, 5, 6, 8]])
    def test_uniform_chi_square(self, linked):
        # covers both the rejection path (sparse row) and the complement path (dense row)
        n_groups, n = 10, 60_000
        g = BipartiteGraph.from_edges(n_groups, 1, linked, [0] * len(linked))
        rng = np.random.default_rng(1)
        counts = np.bincount([sample_negative_group(g, 0, rng) for _ in range(n)], minlength=n_groups)
        free = np.setdiff1d(np.arange(n_groups), linked)
        assert counts[linked].sum() == 0
        expected = n / free.size
        chi2 = float(((counts[free] - expected) ** 2 / expected).sum())
        # 99.9% quantile of chi-square with <= 7 dof is 24.3
        assert chi2 < 24.3

    def test_never_linked_exhaustive(self):
        rng = np.random.default_rng(2)
        for n_groups in range(2, 11):
            for trial in range(20):
                g = random_graph(rng, n_groups, 4, rng.uniform(0, 0.95))
                for i in range(4):
                    linked = set(g.groups_of_item[i].tolist())
                    if len(linked) == n_groups:
                        continue
                    seen = {sample_negative_group(g, i, rng) for _ in range(60)}
                    assert not (seen & linked)
                    assert seen <= set(range(n_groups))


class TestDegreeHistogram:
    def test_by_hand(self):
        g, _ = build_graph([("b1", "p1"), ("b1", "p2"), ("b2", "p1")])
        items, groups = degree_histogram(g)
        assert items == {1: 1, 2: 1}
        assert groups == {1: 1, 2: 1}

    def test_single_edge(self):
        g, _ = build_graph([("b", "p")])
        assert degree_histogram(g) == ({1: 1}, {1: 1})

    @given(edge_lists)
    def test_conservation(self, pairs):
        g = _graph_from_pairs(pairs)
        items, groups = degree_histogram(g)
        assert sum(d * n for d, n in items.items()) == g.n_edges
        assert sum(d * n for d, n in groups.items()) == g.n_edges


class TestFormats:
    def test_parse_skips_comments(self):
        assert parse_edge_lines(["# header\n", "a\tb\n", "\n", "c\td\n"]) == [("a", "b"), ("c", "d")]

    def test_malformed_line_number(self):
        lines = ["#c\n", "a\tb\n", "a\tc\n", "bad line\n"]
        with pytest.raises(GraphFormatError, match="line 4") as e:
            parse_edge_lines(lines)
        assert e.value.lineno == 4

    def test_vocab_round_trip(self, tmp_path):
        v = IdVocab(["x", "y"], ["p", "q", "r"])
        v.save(tmp_path / "g.tsv", tmp_path / "i.tsv")
        w = IdVocab.load(tmp_path / "g.tsv", tmp_path / "i.tsv")
        assert w.groups == v.groups and w.items == v.items
        assert (tmp_path / "g.tsv").read_text() == "x\t0\ny\t1\n"

    def test_graph_keeps_isolated_nodes(self, tmp_path):
        g = BipartiteGraph.from_edges(5, 4, [1], [2])
        write_graph(g, tmp_path / "g.tsv")
        h = read_graph(tmp_path / "g.tsv")
        assert (h.n_groups, h.n_items) == (5, 4) and h == g
