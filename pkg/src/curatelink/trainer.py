"""Stochastic training of link models under a pairwise hinge rank loss.

For each item the loss sums ``hinge(score(i, c) - score(i, c'))`` over
linked groups ``c`` and non-linked groups ``c'``.  One SGD step samples a
single (linked, non-linked) pair for an item; an epoch visits every item
in shuffled order.

Regularization is applied lazily: a step shrinks only the blocks it
touches, scaled by how often each block is touched per epoch, so that one
epoch applies the full l2 gradient in expectation.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import BipartiteGraph, GraphError, sample_negative_group
from .model import (
    BASELINE,
    PROPOSED,
    ModelConfig,
    ModelError,
    ModelParams,
    hinge,
    init_params,
    ranking_scores,
    regularization,
    score_matrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    seed: int = 0
    pairs_per_item_per_epoch: int = 1
    parallel: bool = False
    threads: int = 4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.pairs_per_item_per_epoch < 1:
            raise ValueError("pairs_per_item_per_epoch must be >= 1")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    norms: list[dict[str, float]] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    skipped_items: list[int] = field(default_factory=list)

    def to_text(self) -> str:
        return "".join(
            f"{e}\t{loss!r}\t{sec:.6f}\n" for e, (loss, sec) in enumerate(zip(self.losses, self.seconds), 1)
        )


@dataclass
class TripleGradient:
    """Hinge-loss gradients for one (item, linked group, non-linked group) triple.

    ``weights`` maps weight-block names to dense gradients; latent rows and
    group biases are given per touched row.  The item bias gradient is
    always zero and therefore not stored.
    """

    loss: float
    active: bool
    weights: dict[str, np.ndarray]
    z_item: np.ndarray | None
    z_pos: np.ndarray
    z_neg: np.ndarray
    b_pos: float
    b_neg: float


def _features(X, Y, p: ModelParams):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    cfg = p.config
    if X.shape != (p.n_items, cfg.d_x):
        raise ModelError(f"item features: expected {(p.n_items, cfg.d_x)}, found {X.shape}")
    if Y.shape != (p.n_groups, cfg.d_y):
        raise ModelError(f"group features: expected {(p.n_groups, cfg.d_y)}, found {Y.shape}")
    return X, Y


def _triple(p: ModelParams, x, i, y_pos, c_pos, y_neg, c_neg) -> TripleGradient:
    cfg = p.config
    has_zi = cfg.k_item > 0 and i is not None
    if cfg.variant == PROPOSED:
        d = np.concatenate((y_pos - y_neg, p.Z_C[c_pos] - p.Z_C[c_neg]))
        u = x @ p.W_X
        if has_zi:
            u = u + p.Z_I[i] @ p.W_Z
        t = float(np.sum(u * d)) + p.b_C[c_pos] - p.b_C[c_neg]
        loss = float(hinge(t, cfg.margin))
        active = t < cfg.margin
        u_lat = u[cfg.d_y:]
        if not active:
            zero = np.zeros(cfg.k_group)
            return TripleGradient(
                loss, False,
                {"W_X": np.zeros_like(p.W_X), "W_Z": np.zeros_like(p.W_Z)},
                np.zeros(cfg.k_item) if has_zi else None, zero, zero.copy(), 0.0, 0.0,
            )
        return TripleGradient(
            loss, True,
            {"W_X": -np.outer(x, d), "W_Z": -np.outer(p.Z_I[i], d) if has_zi else np.zeros_like(p.W_Z)},
            -(p.W_Z @ d) if has_zi else None,
            -u_lat, u_lat.copy(), -1.0, 1.0,
        )
    dz = p.Z_C[c_pos] - p.Z_C[c_neg]
    dy = y_pos - y_neg
    zw = p.Z_I[i] @ p.W
    t = float(np.sum(zw * dz) + np.sum((x @ p.V) * dy)) + p.b_C[c_pos] - p.b_C[c_neg]
    loss = float(hinge(t, cfg.margin))
    if t >= cfg.margin:
        zero = np.zeros(cfg.k_group)
        return TripleGradient(
            loss, False, {"W": np.zeros_like(p.W), "V": np.zeros_like(p.V)},
            np.zeros(cfg.k_item), zero, zero.copy(), 0.0, 0.0,
        )
    return TripleGradient(
        loss, True, {"W": -np.outer(p.Z_I[i], dz), "V": -np.outer(x, dy)},
        -(p.W @ dz), -zw, zw.copy(), -1.0, 1.0,
    )


def triple_gradients(p: ModelParams, i, c_pos: int, c_neg: int, X, Y, graph: BipartiteGraph | None = None):
    """Exact gradients of the hinge loss of one (item, positive, negative) triple.

    If ``graph`` is given, the link preconditions are checked against it.
    """
    X, Y = _features(X, Y, p)
    if c_pos == c_neg:
        raise GraphError("positive and negative group must differ")
    if graph is not None:
        if not graph.has_edge(c_pos, i):
            raise GraphError(f"group {c_pos} is not linked to item {i}")
        if graph.has_edge(c_neg, i):
            raise GraphError(f"group {c_neg} is linked to item {i}")
    return _triple(p, X[i], i, Y[c_pos], c_pos, Y[c_neg], c_neg)


def grad_wrt_item_feature(p: ModelParams, i, x, c_pos: int, c_neg: int, Y) -> np.ndarray:
    """Gradient of one pair's hinge loss with respect to the item's input feature.

    This is what an upstream feature extractor would back-propagate when
    being fine-tuned against the rank loss.  ``i=None`` treats ``x`` as a
    new item (no item latent).
    """
    if p.config.variant != PROPOSED:
        raise ModelError("no feature path")
    Y = np.asarray(Y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if i is None and p.config.k_item > 0:
        raise ModelError("variant requires item latents")
    g = _triple(p, x, i, Y[c_pos], c_pos, Y[c_neg], c_neg)
    if not g.active:
        return np.zeros(p.config.d_x)
    d = np.concatenate((Y[c_pos] - Y[c_neg], p.Z_C[c_pos] - p.Z_C[c_neg]))
    return -(p.W_X @ d)


# ---------------------------------------------------------------------------
# SGD

def touch_rates(g: BipartiteGraph, pairs_per_item: int = 1):
    """Expected per-epoch touches of each item latent row and group latent row.

    Only items with at least one linked and one non-linked group are
    visited.  A group is touched as the positive with probability
    1/deg(i) and as the negative with probability 1/(n_groups - deg(i)).
    """
    deg = g.item_degrees()
    eligible = (deg > 0) & (deg < g.n_groups)
    item_rate = np.where(eligible, float(pairs_per_item), 0.0)
    inv_pos = np.where(eligible, 1.0 / np.maximum(deg, 1), 0.0)
    inv_neg = np.where(eligible, 1.0 / np.maximum(g.n_groups - deg, 1), 0.0)
    group_rate = np.full(g.n_groups, inv_neg.sum())
    for c, items in enumerate(g.items_of_group):
        group_rate[c] += inv_pos[items].sum() - inv_neg[items].sum()
    return item_rate, group_rate * pairs_per_item, int(eligible.sum()) * pairs_per_item


class _Stepper:
    """Applies SGD steps to ``p`` in place for one training graph."""

    def __init__(self, p: ModelParams, g: BipartiteGraph, X, Y, cfg: TrainConfig):
        self.p, self.g, self.X, self.Y = p, g, X, Y
        self.lr = cfg.learning_rate
        self.ppi = cfg.pairs_per_item_per_epoch
        mc = p.config
        item_rate, group_rate, steps = touch_rates(g, self.ppi)
        # per-touch shrink coefficients: d/dθ of λ‖θ‖² spread over expected touches
        self.w_shrink = 2.0 * mc.reg_weight / max(steps, 1)
        self.zi_shrink = 2.0 * mc.reg_latent / np.maximum(item_rate, 1e-300)
        self.zc_shrink = 2.0 * mc.reg_latent / np.maximum(group_rate, 1e-300)

    def run(self, items, rng) -> tuple[float, int, int]:
        p, g, lr = self.p, self.g, self.lr
        total, steps, skipped = 0.0, 0, 0
        has_zi = p.config.k_item > 0
        has_zc = p.config.k_group > 0
        wa, wb = p.weight_blocks()
        for i in items:
            linked = g.groups_of_item[i]
            if linked.size == 0 or linked.size >= g.n_groups:
                skipped += 1
                continue
            for _ in range(self.ppi):
                c_pos = int(linked[rng.integers(linked.size)])
                c_neg = sample_negative_group(g, i, rng)
                grad = _triple(p, self.X[i], i, self.Y[c_pos], c_pos, self.Y[c_neg], c_neg)
                total += grad.loss
                steps += 1
                if lr == 0.0:
                    continue
                if grad.active:
                    A, B = getattr(p, wa), getattr(p, wb)
                    A -= lr * (grad.weights[wa] + self.w_shrink * A)
                    B -= lr * (grad.weights[wb] + self.w_shrink * B)
                else:
                    for name in (wa, wb):
                        block = getattr(p, name)
                        block *= 1.0 - lr * self.w_shrink
                if has_zi:
                    zi = p.Z_I[i]
                    step = self.zi_shrink[i] * zi
                    if grad.active:
                        step = step + grad.z_item
                    zi -= lr * step
                if has_zc:
                    zp, zn = p.Z_C[c_pos], p.Z_C[c_neg]
                    sp = self.zc_shrink[c_pos] * zp + grad.z_pos
                    sn = self.zc_shrink[c_neg] * zn + grad.z_neg
                    zp -= lr * sp
                    zn -= lr * sn
                if grad.active:
                    p.b_C[c_pos] -= lr * grad.b_pos
                    p.b_C[c_neg] -= lr * grad.b_neg
        return total, steps, skipped


def sgd_epoch(p: ModelParams, g_train: BipartiteGraph, X, Y, cfg: TrainConfig, rng: np.random.Generator,
              stepper: _Stepper | None = None):
    """One pass over all items in shuffled order, updating ``p`` in place.

    Returns ``(p, mean sampled loss, number of skipped items)``.  Items with
    no linked group or no available negative are skipped.
    """
    X, Y = _features(X, Y, p)
    stepper = stepper or _Stepper(p, g_train, X, Y, cfg)
    order = rng.permutation(g_train.n_items)
    if cfg.parallel and cfg.threads > 1:
        # lock-free shared updates; results depend on thread scheduling
        chunks = np.array_split(order, cfg.threads)
        seeds = rng.integers(2**63, size=len(chunks))
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(lambda a: stepper.run(a[0], np.random.default_rng(a[1])), zip(chunks, seeds)))
        total = sum(r[0] for r in parts)
        steps = sum(r[1] for r in parts)
        skipped = sum(r[2] for r in parts)
    else:
        total, steps, skipped = stepper.run(order, rng)
    return p, (total / steps if steps else 0.0), skipped


def train(cfg: TrainConfig, model_cfg: ModelConfig, g_train: BipartiteGraph, X, Y, params: ModelParams | None = None):
    """Initialize (unless ``params`` is given) and run ``cfg.epochs`` SGD epochs."""
    init_seed, sgd_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    if params is None:
        params = init_params(model_cfg, g_train.n_items, g_train.n_groups, seed=init_seed)
    else:
        params = params.copy()
    X, Y = _features(X, Y, params)
    rng = np.random.default_rng(sgd_seed)
    stepper = _Stepper(params, g_train, X, Y, cfg)
    report = TrainReport()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        _, loss, skipped = sgd_epoch(params, g_train, X, Y, cfg, rng, stepper)
        report.seconds.append(time.perf_counter() - t0)
        report.losses.append(loss)
        report.norms.append(params.norms())
        report.skipped_items.append(skipped)
        logger.info("epoch %d loss %.5f (%.2fs)", epoch + 1, loss, report.seconds[-1])
    return params, report


# ---------------------------------------------------------------------------
# exact objective

def per_item_pair_losses(p: ModelParams, g: BipartiteGraph, X, Y) -> np.ndarray:
    """For each item, the mean hinge loss over all its (linked, non-linked) pairs.

    Items with no such pair get NaN.
    """
    X, Y = _features(X, Y, p)
    items = np.arange(p.n_items)
    S = score_matrix(p, X, Y, items=items if p.config.k_item else None)
    out = np.full(p.n_items, np.nan)
    for i, linked in enumerate(g.groups_of_item):
        if linked.size == 0 or linked.size == g.n_groups:
            continue
        mask = np.zeros(g.n_groups, dtype=bool)
        mask[linked] = True
        diff = S[i, mask][:, None] - S[i, ~mask][None, :]
        out[i] = hinge(diff, p.config.margin).mean()
    return out


def full_rank_loss(p: ModelParams, g: BipartiteGraph, X, Y, cfg: ModelConfig | None = None) -> float:
    """Exact double-sum rank loss plus regularization.  Cost O(sum_i pos_i * neg_i)."""
    cfg = cfg or p.config
    X, Y = _features(X, Y, p)
    total = 0.0
    for i, linked in enumerate(g.groups_of_item):
        if linked.size == 0 or linked.size == g.n_groups:
            continue
        s = ranking_scores(p, X[i], i if cfg.k_item else None, Y)
        mask = np.zeros(g.n_groups, dtype=bool)
        mask[linked] = True
        total += float(hinge(s[mask][:, None] - s[~mask][None, :], cfg.margin).sum())
    return total + regularization(p, cfg)


def sampled_pair_losses(p: ModelParams, g: BipartiteGraph, X, Y, n_samples: int, rng) -> np.ndarray:
    """Hinge losses of ``n_samples`` pairs drawn exactly as the SGD loop draws them.

    Items are visited in repeated shuffled passes; each visit draws one
    linked group uniformly and one non-linked group via negative sampling.
    """
    X, Y = _features(X, Y, p)
    S = score_matrix(p, X, Y, items=np.arange(p.n_items) if p.config.k_item else None)
    eligible = [i for i, row in enumerate(g.groups_of_item) if 0 < row.size < g.n_groups]
    if not eligible:
        raise GraphError("no item has both linked and non-linked groups")
    eligible = np.array(eligible)
    out = np.empty(n_samples)
    k = 0
    while k < n_samples:
        for i in rng.permutation(eligible):
            if k == n_samples:
                break
            linked = g.groups_of_item[i]
            c_pos = int(linked[rng.integers(linked.size)])
            c_neg = sample_negative_group(g, i, rng)
            out[k] = hinge(S[i, c_pos] - S[i, c_neg], p.config.margin)
            k += 1
    return out
