"""Bipartite group/item graphs: construction, filtering, splitting, sampling.

Groups are the curated collections (boards), items are the content nodes
(pins/images).  Both orientations of the adjacency are kept as sorted
integer arrays so that membership tests are binary searches.
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for invalid graph input or operations that cannot proceed."""


class GraphFormatError(GraphError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


def _freeze(arrays: Iterable[np.ndarray]) -> tuple[np.ndarray, ...]:
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=np.int64)
        a.setflags(write=False)
        out.append(a)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Immutable bipartite adjacency between ``n_groups`` groups and ``n_items`` items.

    Use :meth:`from_edges` rather than the constructor; it sorts, removes
    duplicates and builds the transposed index.
    """

    n_groups: int
    n_items: int
    groups_of_item: tuple[np.ndarray, ...]
    items_of_group: tuple[np.ndarray, ...]
    n_edges: int

    @classmethod
    def from_edges(cls, n_groups: int, n_items: int, groups, items) -> "BipartiteGraph":
        groups = np.asarray(groups, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if groups.shape != items.shape:
            raise GraphError("group and item arrays differ in length")
        if groups.size:
            if groups.min() < 0 or groups.max() >= n_groups:
                raise GraphError("group id out of range")
            if items.min() < 0 or items.max() >= n_items:
                raise GraphError("item id out of range")
        # one flat key per edge dedups and sorts both orientations at once
        keys = np.unique(items * n_groups + groups)
        it, gr = np.divmod(keys, n_groups) if n_groups else (keys, keys)
        bounds = np.searchsorted(it, np.arange(n_items + 1))
        goi = [gr[bounds[i]:bounds[i + 1]] for i in range(n_items)]
        order = np.lexsort((it, gr))
        gr_t, it_t = gr[order], it[order]
        bounds = np.searchsorted(gr_t, np.arange(n_groups + 1))
        iog = [it_t[bounds[c]:bounds[c + 1]] for c in range(n_groups)]
        return cls(int(n_groups), int(n_items), _freeze(goi), _freeze(iog), int(keys.size))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(groups, items)`` arrays of all edges, sorted by item then group."""
        if self.n_edges == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy()
        groups = np.concatenate(self.groups_of_item)
        items = np.repeat(np.arange(self.n_items), self.item_degrees())
        return groups, items

    def item_degrees(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups_of_item], dtype=np.int64)

    def group_degrees(self) -> np.ndarray:
        return np.array([len(i) for i in self.items_of_group], dtype=np.int64)

    def has_edge(self, group: int, item: int) -> bool:
        row = self.groups_of_item[item]
        k = np.searchsorted(row, group)
        return bool(k < row.size and row[k] == group)

    def dense(self) -> np.ndarray:
        """Adjacency as a ``n_groups x n_items`` 0/1 array (small graphs only)."""
        a = np.zeros((self.n_groups, self.n_items), dtype=np.int8)
        g, i = self.edges()
        a[g, i] = 1
        return a

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        if (self.n_groups, self.n_items, self.n_edges) != (other.n_groups, other.n_items, other.n_edges):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.groups_of_item, other.groups_of_item))

    __hash__ = None


@dataclass
class IdVocab:
    """Insertion-ordered mapping between external string ids and dense indices."""

    groups: list[str] = field(default_factory=list)
    items: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._group_index = {g: k for k, g in enumerate(self.groups)}
        self._item_index = {i: k for k, i in enumerate(self.items)}
        if len(self._group_index) != len(self.groups) or len(self._item_index) != len(self.items):
            raise GraphError("duplicate external id in vocabulary")

    def add_group(self, ext: str) -> int:
        k = self._group_index.get(ext)
        if k is None:
            k = self._group_index[ext] = len(self.groups)
            self.groups.append(ext)
        return k

    def add_item(self, ext: str) -> int:
        k = self._item_index.get(ext)
        if k is None:
            k = self._item_index[ext] = len(self.items)
            self.items.append(ext)
        return k

    def group_index(self, ext: str) -> int:
        return self._group_index[ext]

    def item_index(self, ext: str) -> int:
        return self._item_index[ext]

    def remap(self, group_map: np.ndarray, item_map: np.ndarray) -> "IdVocab":
        """Keep only ids whose old index maps to a new one (``-1`` drops)."""
        groups = [None] * int((group_map >= 0).sum())
        for old, new in enumerate(group_map):
            if new >= 0:
                groups[new] = self.groups[old]
        items = [None] * int((item_map >= 0).sum())
        for old, new in enumerate(item_map):
            if new >= 0:
                items[new] = self.items[old]
        return IdVocab(groups, items)

    def save(self, group_path, item_path) -> None:
        for path, ids in ((group_path, self.groups), (item_path, self.items)):
            with open(path, "w", encoding="utf-8") as f:
                for k, ext in enumerate(ids):
                    f.write(f"{ext}\t{k}\n")

    @classmethod
    def load(cls, group_path, item_path) -> "IdVocab":
        def read(path):
            ids = []
            with open(path, encoding="utf-8") as f:
                for lineno, line in enumerate(f, 1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    parts = line.split("\t")
                    if len(parts) != 2 or not parts[1].isdigit():
                        raise GraphFormatError("expected external_id<TAB>dense_index", lineno)
                    if int(parts[1]) != len(ids):
                        raise GraphFormatError("dense indices must be contiguous from 0", lineno)
                    ids.append(parts[0])
            return ids

        return cls(read(group_path), read(item_path))


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train: BipartiteGraph
    test_positives: tuple[np.ndarray, ...]

    @property
    def n_test_edges(self) -> int:
        return sum(len(t) for t in self.test_positives)

    def test_graph(self) -> BipartiteGraph:
        items = np.repeat(np.arange(self.train.n_items), [len(t) for t in self.test_positives])
        groups = np.concatenate(self.test_positives) if self.test_positives else np.zeros(0, np.int64)
        return BipartiteGraph.from_edges(self.train.n_groups, self.train.n_items, groups, items)

    @classmethod
    def from_graphs(cls, train: BipartiteGraph, test: BipartiteGraph) -> "EdgeSplit":
        if (train.n_groups, train.n_items) != (test.n_groups, test.n_items):
            raise GraphError("train and test graphs have different node counts")
        return cls(train, test.groups_of_item)


def build_graph(edges: Sequence[tuple[str, str]]) -> tuple[BipartiteGraph, IdVocab]:
    """Build a graph from ``(group_id, item_id)`` pairs, assigning dense ids first-seen."""
    if len(edges) == 0:
        raise GraphError("no edges")
    vocab = IdVocab()
    groups = np.empty(len(edges), dtype=np.int64)
    items = np.empty(len(edges), dtype=np.int64)
    for k, (g, i) in enumerate(edges):
        groups[k] = vocab.add_group(g)
        items[k] = vocab.add_item(i)
    graph = BipartiteGraph.from_edges(len(vocab.groups), len(vocab.items), groups, items)
    return graph, vocab


def filter_degrees(g: BipartiteGraph, min_item_deg: int = 2, min_group_deg: int = 1):
    """Drop low-degree items, then groups left below ``min_group_deg``.

    This is one ordered pass, not a fixpoint: a group removal never
    triggers a second round of item removal.

    Returns
    -------
    graph : BipartiteGraph
        The filtered, densely re-indexed graph.
    group_map, item_map : ndarray
        Old index -> new index, ``-1`` for removed nodes.
    """
    keep_item = g.item_degrees() >= min_item_deg
    groups, items = g.edges()
    mask = keep_item[items]
    groups, items = groups[mask], items[mask]
    gdeg = np.bincount(groups, minlength=g.n_groups)
    keep_group = gdeg >= min_group_deg
    mask = keep_group[groups]
    groups, items = groups[mask], items[mask]

    item_map = np.where(keep_item, np.cumsum(keep_item) - 1, -1)
    group_map = np.where(keep_group, np.cumsum(keep_group) - 1, -1)
    n_items, n_groups = int(keep_item.sum()), int(keep_group.sum())
    if n_items == 0 or n_groups == 0 or groups.size == 0:
        raise GraphError("graph eliminated by filtering")
    out = BipartiteGraph.from_edges(n_groups, n_items, group_map[groups], item_map[items])
    return out, group_map, item_map


def held_out_count(degree: int, test_fraction: float = 0.1) -> int:
    """Number of an item's edges to hold out: 10% rounded down, at least one.

    Never returns more than ``degree - 1`` so an item keeps a training edge.
    """
    # tolerance guards exact multiples against binary rounding of the fraction
    n = max(1, math.floor(test_fraction * degree + 1e-9))
    return min(n, degree - 1)


def split_edges(g: BipartiteGraph, test_fraction: float = 0.1, seed: int = 0) -> EdgeSplit:
    rng = np.random.default_rng(seed)
    degrees = g.item_degrees()
    if degrees.size and degrees.min() < 2:
        bad = int(np.argmin(degrees))
        raise GraphError(f"item {bad} has degree {degrees[bad]} < 2; split would strand it")
    train_groups, train_items, test = [], [], []
    for i, row in enumerate(g.groups_of_item):
        n = held_out_count(row.size, test_fraction)
        held = np.zeros(row.size, dtype=bool)
        held[rng.choice(row.size, size=n, replace=False)] = True
        test.append(row[held])
        train_groups.append(row[~held])
        train_items.append(np.full(row.size - n, i, dtype=np.int64))
    train = BipartiteGraph.from_edges(
        g.n_groups, g.n_items, np.concatenate(train_groups), np.concatenate(train_items)
    )
    return EdgeSplit(train, _freeze(test))


def sample_negative_group(g: BipartiteGraph, item: int, rng: np.random.Generator) -> int:
    """Draw a group not linked to ``item``, uniformly over the non-linked groups."""
    linked = g.groups_of_item[item]
    n_free = g.n_groups - linked.size
    if n_free <= 0:
        raise GraphError("no negative available")
    if linked.size <= g.n_groups // 2:
        while True:
            c = int(rng.integers(g.n_groups))
            k = np.searchsorted(linked, c)
            if k == linked.size or linked[k] != c:
                return c
    free = np.setdiff1d(np.arange(g.n_groups), linked, assume_unique=True)
    return int(free[rng.integers(n_free)])


def degree_histogram(g: BipartiteGraph) -> tuple[dict[int, int], dict[int, int]]:
    """Degree -> node count, for items and for groups."""
    items = Counter(int(d) for d in g.item_degrees())
    groups = Counter(int(d) for d in g.group_degrees())
    return dict(sorted(items.items())), dict(sorted(groups.items()))


# ---------------------------------------------------------------------------
# Text formats

GRAPH_HEADER = "# curatelink-graph"


def parse_edge_lines(lines: Iterable[str]) -> list[tuple[str, str]]:
    """Parse ``group<TAB>item`` lines; ``#`` lines and blank lines are skipped."""
    edges = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise GraphFormatError("expected group_id<TAB>item_id", lineno)
        edges.append((parts[0], parts[1]))
    return edges


def read_edge_list(path) -> list[tuple[str, str]]:
    with open(path, encoding="utf-8") as f:
        return parse_edge_lines(f)


def write_graph(g: BipartiteGraph, path) -> None:
    """Write a dense-index graph; the header line records the node counts."""
    groups, items = g.edges()
    buf = io.StringIO()
    buf.write(f"{GRAPH_HEADER} n_groups={g.n_groups} n_items={g.n_items}\n")
    for c, i in zip(groups.tolist(), items.tolist()):
        buf.write(f"{c}\t{i}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_graph(path) -> BipartiteGraph:
    n_groups = n_items = None
    with open(path, encoding="utf-8") as f:
        lines = f.readlines()
    if lines and lines[0].startswith(GRAPH_HEADER):
        fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
        try:
            n_groups, n_items = int(fields["n_groups"]), int(fields["n_items"])
        except (KeyError, ValueError):
            raise GraphFormatError("bad graph header", 1) from None
    edges = parse_edge_lines(lines)
    try:
        groups = np.array([int(c) for c, _ in edges], dtype=np.int64)
        items = np.array([int(i) for _, i in edges], dtype=np.int64)
    except ValueError:
        raise GraphFormatError("graph files hold integer indices; use build for external ids") from None
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if groups.size else 0
        n_items = int(items.max()) + 1 if items.size else 0
    return BipartiteGraph.from_edges(n_groups, n_items, groups, items)
