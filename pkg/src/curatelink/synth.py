"""Planted-concept curated-media graphs with observed features.

Every group and item is assigned a hidden concept.  Items link only to
groups of their own concept, group popularity within a concept follows a
Zipf law, and features are noisy copies of per-concept prototype vectors.
A configurable share of groups get pure-noise observed features, so their
concept is visible only through the link structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluate import mean_auc_from_scores
from .features import save_features
from .graph import BipartiteGraph, EdgeSplit, write_graph


@dataclass(frozen=True)
class SynthConfig:
    n_concepts: int = 50
    n_groups: int = 500
    n_items: int = 5000
    d_x: int = 32
    d_y: int = 32
    group_feature_noise: float = 0.2
    item_feature_noise: float = 0.2
    # share of groups whose observed feature is replaced by pure noise
    feature_informativeness: float = 0.5
    zipf_exponent: float = 1.5
    groups_per_item: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 1:
            raise ValueError("n_concepts must be >= 1")
        if self.n_groups < self.n_concepts:
            raise ValueError("n_groups must be >= n_concepts")
        if self.groups_per_item < 2:
            raise ValueError("groups_per_item must be >= 2")
        if not 0.0 <= self.feature_informativeness <= 1.0:
            raise ValueError("feature_informativeness must be in [0, 1]")
        if self.zipf_exponent <= 1.0:
            raise ValueError("zipf_exponent must be > 1")
        if self.group_feature_noise < 0 or self.item_feature_noise < 0:
            raise ValueError("noise levels must be >= 0")


@dataclass(frozen=True, eq=False)
class SynthData:
    graph: BipartiteGraph
    X: np.ndarray
    Y: np.ndarray
    concept_of_group: np.ndarray
    concept_of_item: np.ndarray
    noise_groups: np.ndarray  # bool mask of groups with pure-noise features


def _unit_rows(rng, n, d):
    if d == 0:
        return np.zeros((n, 0))
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _zipf_weights(n, s, rng):
    """Zipf weights over ``n`` entries in a random rank order, normalized to sum 1."""
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    w = w[rng.permutation(n)]
    return w / w.sum()


def generate(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    proto_x = _unit_rows(rng, cfg.n_concepts, cfg.d_x)
    proto_y = _unit_rows(rng, cfg.n_concepts, cfg.d_y)

    # round-robin first so each concept gets groups_per_item groups when possible
    n_round = min(cfg.n_groups, cfg.n_concepts * cfg.groups_per_item)
    concept_of_group = np.empty(cfg.n_groups, dtype=np.int64)
    concept_of_group[:n_round] = np.arange(n_round) % cfg.n_concepts
    concept_of_group[n_round:] = rng.integers(cfg.n_concepts, size=cfg.n_groups - n_round)
    members = [np.flatnonzero(concept_of_group == k) for k in range(cfg.n_concepts)]
    short = [k for k, m in enumerate(members) if m.size < cfg.groups_per_item]
    if short:
        raise ValueError(
            f"concept {short[0]} has {members[short[0]].size} groups, fewer than groups_per_item={cfg.groups_per_item}"
        )

    Y = proto_y[concept_of_group] + cfg.group_feature_noise * rng.standard_normal((cfg.n_groups, cfg.d_y))
    n_noise = int(round(cfg.feature_informativeness * cfg.n_groups))
    noise_groups = np.zeros(cfg.n_groups, dtype=bool)
    noise_groups[rng.choice(cfg.n_groups, size=n_noise, replace=False)] = True
    if cfg.d_y:
        Y[noise_groups] = rng.standard_normal((n_noise, cfg.d_y)) / np.sqrt(cfg.d_y)

    concept_of_item = rng.choice(cfg.n_concepts, size=cfg.n_items, p=_zipf_weights(cfg.n_concepts, cfg.zipf_exponent, rng))
    X = proto_x[concept_of_item] + cfg.item_feature_noise * rng.standard_normal((cfg.n_items, cfg.d_x))

    popularity = [_zipf_weights(m.size, cfg.zipf_exponent, rng) for m in members]
    groups = np.empty((cfg.n_items, cfg.groups_per_item), dtype=np.int64)
    for i, k in enumerate(concept_of_item):
        groups[i] = rng.choice(members[k], size=cfg.groups_per_item, replace=False, p=popularity[k])
    items = np.repeat(np.arange(cfg.n_items), cfg.groups_per_item)
    graph = BipartiteGraph.from_edges(cfg.n_groups, cfg.n_items, groups.ravel(), items)
    return SynthData(graph, X, Y, concept_of_group, concept_of_item, noise_groups)


def planted_scores(data: SynthData) -> np.ndarray:
    """Clairvoyant score matrix: 1 where item and group share a concept, else 0."""
    return (data.concept_of_item[:, None] == data.concept_of_group[None, :]).astype(np.float64)


def oracle_auc(data: SynthData, split: EdgeSplit) -> float:
    """Mean AUC of the clairvoyant same-concept scorer on ``split``."""
    S = planted_scores(data)
    return mean_auc_from_scores(S, split).mean_auc


def top_decile_edge_share(g: BipartiteGraph) -> float:
    """Fraction of edges held by the 10% highest-degree groups."""
    deg = np.sort(g.group_degrees())[::-1]
    k = max(1, int(np.ceil(0.1 * deg.size)))
    return float(deg[:k].sum() / deg.sum())


def write_dataset(data: SynthData, out_dir, feature_format: str = "binary") -> dict[str, Path]:
    """Write edge list, dense graph, features and planted assignments to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": out / "edges.tsv",
        "graph": out / "graph.tsv",
        "item_features": out / "items.feat",
        "group_features": out / "groups.feat",
        "planted": out / "planted.tsv",
    }
    groups, items = data.graph.edges()
    with open(paths["edges"], "w", encoding="utf-8") as f:
        f.write("# group_id\titem_id\n")
        for c, i in zip(groups.tolist(), items.tolist()):
            f.write(f"g{c}\ti{i}\n")
    write_graph(data.graph, paths["graph"])
    save_features(data.X, paths["item_features"], feature_format)
    save_features(data.Y, paths["group_features"], feature_format)
    with open(paths["planted"], "w", encoding="utf-8") as f:
        for c, k in enumerate(data.concept_of_group.tolist()):
            f.write(f"group\t{c}\t{k}\n")
        for i, k in enumerate(data.concept_of_item.tolist()):
            f.write(f"item\t{i}\t{k}\n")
    return paths


def read_planted(path) -> tuple[np.ndarray, np.ndarray]:
    groups, items = {}, {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            kind, idx, concept = line.rstrip("\n").split("\t")
            (groups if kind == "group" else items)[int(idx)] = int(concept)
    return (np.array([groups[k] for k in range(len(groups))], dtype=np.int64),
            np.array([items[k] for k in range(len(items))], dtype=np.int64))
