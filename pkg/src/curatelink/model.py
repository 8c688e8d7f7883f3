"""Link score models between items and groups.

Two families are supported:

``proposed``
    a(i, c) = (x_i W_X + z_Ii W_Z) . [y_c ; z_Cc] + b_Ii + b_Cc

    The group side is the concatenation of the observed group feature and
    a learned group latent.  With ``k_item = 0`` there is no item latent and
    new, unseen items can be scored from their features alone.

``baseline``
    a(i, c) = z_Ii W z_Cc + x_i V y_c + b_Ii + b_Cc

    Structure and features are modeled by separate bilinear terms.

Observed dims are ``d_x`` (items) and ``d_y`` (groups); latent dims are
``k_item`` and ``k_group``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

PROPOSED = "proposed"
BASELINE = "baseline"

# Named presets for the five model columns compared in link-prediction runs.
DEFAULT_LATENT_DIM = 64
VARIANT_ALIASES = {
    "baseline": (BASELINE, DEFAULT_LATENT_DIM, DEFAULT_LATENT_DIM),
    "no-latent": (PROPOSED, 0, 0),
    "latent-image": (PROPOSED, DEFAULT_LATENT_DIM, 0),
    "latent-group": (PROPOSED, 0, DEFAULT_LATENT_DIM),
    "latent-both": (PROPOSED, DEFAULT_LATENT_DIM, DEFAULT_LATENT_DIM),
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    variant: str = PROPOSED
    d_x: int = 0
    d_y: int = 0
    k_item: int = 0
    k_group: int = DEFAULT_LATENT_DIM
    margin: float = 1.0
    reg_weight: float = 1e-5
    reg_latent: float = 1e-5

    def __post_init__(self):
        if self.variant not in (PROPOSED, BASELINE):
            raise ModelError(f"unknown variant {self.variant!r}")
        for name in ("d_x", "d_y", "k_item", "k_group"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")
        if self.margin <= 0:
            raise ModelError("margin must be > 0")
        if self.reg_weight < 0 or self.reg_latent < 0:
            raise ModelError("regularization coefficients must be >= 0")
        if self.variant == BASELINE and (self.k_item < 1 or self.k_group < 1):
            raise ModelError("baseline variant requires k_item >= 1 and k_group >= 1")

    @classmethod
    def from_alias(cls, alias: str, d_x: int, d_y: int, **kw) -> "ModelConfig":
        try:
            variant, k_item, k_group = VARIANT_ALIASES[alias]
        except KeyError:
            raise ModelError(f"unknown variant alias {alias!r}") from None
        return cls(variant=variant, d_x=d_x, d_y=d_y, k_item=k_item, k_group=k_group, **kw)

    @property
    def group_dim(self) -> int:
        """Length of the group-side vector [y_c ; z_Cc] in the proposed model."""
        return self.d_y + self.k_group


@dataclass
class ModelParams:
    """All parameter blocks; blocks unused by the variant are zero-size arrays.

    For ``proposed``: ``W_X`` (d_x, d_y+k_group), ``W_Z`` (k_item, d_y+k_group).
    For ``baseline``: ``W`` (k_item, k_group), ``V`` (d_x, d_y).
    Always: ``Z_I`` (n_items, k_item), ``Z_C`` (n_groups, k_group),
    ``b_I`` (n_items,), ``b_C`` (n_groups,).
    """

    config: ModelConfig
    n_items: int
    n_groups: int
    W_X: np.ndarray = field(default=None)
    W_Z: np.ndarray = field(default=None)
    W: np.ndarray = field(default=None)
    V: np.ndarray = field(default=None)
    Z_I: np.ndarray = field(default=None)
    Z_C: np.ndarray = field(default=None)
    b_I: np.ndarray = field(default=None)
    b_C: np.ndarray = field(default=None)

    def __post_init__(self):
        for name, shape in self.shapes().items():
            a = getattr(self, name)
            a = np.zeros(shape) if a is None else np.asarray(a, dtype=np.float64)
            if a.shape != shape:
                raise ModelError(f"{name}: expected shape {shape}, got {a.shape}")
            setattr(self, name, a)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        if cfg.variant == PROPOSED:
            wx, wz = (cfg.d_x, cfg.group_dim), (cfg.k_item, cfg.group_dim)
            w, v = (0, 0), (0, 0)
        else:
            wx, wz = (0, 0), (0, 0)
            w, v = (cfg.k_item, cfg.k_group), (cfg.d_x, cfg.d_y)
        return {
            "W_X": wx,
            "W_Z": wz,
            "W": w,
            "V": v,
            "Z_I": (self.n_items, cfg.k_item),
            "Z_C": (self.n_groups, cfg.k_group),
            "b_I": (self.n_items,),
            "b_C": (self.n_groups,),
        }

    def weight_blocks(self) -> tuple[str, str]:
        """Names of the two weight blocks, in storage order."""
        return ("W_X", "W_Z") if self.config.variant == PROPOSED else ("W", "V")

    def block_order(self) -> tuple[str, ...]:
        return self.weight_blocks() + ("Z_I", "Z_C", "b_I", "b_C")

    def copy(self) -> "ModelParams":
        blocks = {name: getattr(self, name).copy() for name in self.shapes()}
        return ModelParams(self.config, self.n_items, self.n_groups, **blocks)

    def with_config(self, **changes) -> "ModelParams":
        out = self.copy()
        out.config = replace(self.config, **changes)
        return out

    def all_finite(self) -> bool:
        return all(np.isfinite(getattr(self, n)).all() for n in self.shapes())

    def norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(getattr(self, n))) for n in self.block_order()}

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.config == other.config
            and (self.n_items, self.n_groups) == (other.n_items, other.n_groups)
            and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self.shapes())
        )


def _uniform(rng, shape, fan_in):
    if 0 in shape:
        return np.zeros(shape)
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


def init_params(cfg: ModelConfig, n_items: int, n_groups: int, seed: int = 0) -> ModelParams:
    """Random initial parameters: U(-s, s) with s = 1/sqrt(fan-in), zero biases."""
    if cfg.variant == PROPOSED and (cfg.d_x + cfg.k_item == 0 or cfg.group_dim == 0):
        raise ModelError("model has no terms")
    if cfg.variant == BASELINE and cfg.d_x * cfg.d_y == 0 and cfg.k_item * cfg.k_group == 0:
        raise ModelError("model has no terms")
    rng = np.random.default_rng(seed)
    p = ModelParams(cfg, n_items, n_groups)
    if cfg.variant == PROPOSED:
        p.W_X = _uniform(rng, p.W_X.shape, cfg.d_x)
        p.W_Z = _uniform(rng, p.W_Z.shape, cfg.k_item)
    else:
        p.W = _uniform(rng, p.W.shape, cfg.k_item)
        p.V = _uniform(rng, p.V.shape, cfg.d_x)
    p.Z_I = _uniform(rng, p.Z_I.shape, cfg.k_item)
    p.Z_C = _uniform(rng, p.Z_C.shape, cfg.k_group)
    return p


# ---------------------------------------------------------------------------
# scoring

def _check_item(p: ModelParams, x, i):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.config.d_x,):
        raise ModelError(f"item feature: expected dim {p.config.d_x}, got {x.shape}")
    if i is None:
        if p.config.k_item > 0:
            raise ModelError("variant requires item latents")
    elif not 0 <= i < p.n_items:
        raise ModelError(f"item {i} out of range")
    return x


def item_vector(p: ModelParams, x, i=None) -> np.ndarray:
    """Item-side projection ``x W_X + z_I W_Z`` (proposed model only).

    ``i=None`` denotes a new item without a learned latent.
    """
    x = _check_item(p, x, i)
    u = x @ p.W_X
    if p.config.k_item and i is not None:
        u = u + p.Z_I[i] @ p.W_Z
    return u


def group_vector(p: ModelParams, y, c: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (p.config.d_y,):
        raise ModelError(f"group feature: expected dim {p.config.d_y}, got {y.shape}")
    return np.concatenate((y, p.Z_C[c]))


def group_matrix(p: ModelParams, Y) -> np.ndarray:
    """Rows ``[y_c ; z_Cc]`` for every group."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (p.n_groups, p.config.d_y):
        raise ModelError(f"group features: expected shape {(p.n_groups, p.config.d_y)}, got {Y.shape}")
    return np.hstack((Y, p.Z_C))


def _item_bias(p, i):
    return 0.0 if i is None else p.b_I[i]


def _pair_term(p: ModelParams, x, i, y, c) -> float:
    """Score without the item bias."""
    cfg = p.config
    if cfg.variant == PROPOSED:
        return float(np.sum(item_vector(p, x, i) * group_vector(p, y, c)))
    x = _check_item(p, x, i)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (cfg.d_y,):
        raise ModelError(f"group feature: expected dim {cfg.d_y}, got {y.shape}")
    return float(np.sum((p.Z_I[i] @ p.W) * p.Z_C[c]) + np.sum((x @ p.V) * y))


def score(p: ModelParams, x_i, i, y_c, c: int) -> float:
    """Link score for item ``i`` (``None`` for a new item) and group ``c``."""
    # same addition order as score_all_groups so both round identically
    return _pair_term(p, x_i, i, y_c, c) + p.b_C[c] + _item_bias(p, i)


def score_difference(p: ModelParams, x_i, i, y_pos, c_pos, y_neg, c_neg) -> float:
    """``score(i, c_pos) - score(i, c_neg)``; the item bias cancels by construction."""
    return _pair_term(p, x_i, i, y_pos, c_pos) + p.b_C[c_pos] - (_pair_term(p, x_i, i, y_neg, c_neg) + p.b_C[c_neg])


def _ranking_scores(p: ModelParams, x, i, Y) -> np.ndarray:
    cfg = p.config
    if cfg.variant == PROPOSED:
        u = item_vector(p, x, i)
        return np.sum(group_matrix(p, Y) * u, axis=1) + p.b_C
    x = _check_item(p, x, i)
    Y = np.asarray(Y, dtype=np.float64)
    return np.sum(p.Z_C * (p.Z_I[i] @ p.W), axis=1) + np.sum(Y * (x @ p.V), axis=1) + p.b_C


def score_all_groups(p: ModelParams, x, i, Y) -> np.ndarray:
    """Scores of one item against every group; ``i=None`` for a new item."""
    return _ranking_scores(p, x, i, Y) + _item_bias(p, i)


def ranking_scores(p: ModelParams, x, i, Y) -> np.ndarray:
    """Per-group scores without the item bias.

    The item bias shifts all of an item's scores equally and so never
    affects a ranking; leaving it out keeps rankings and AUC exactly
    independent of it.
    """
    return _ranking_scores(p, x, i, Y)


def score_matrix(p: ModelParams, X, Y, items=None) -> np.ndarray:
    """Ranking scores (no item bias) for many items at once via matrix products.

    ``items`` gives the item index of each row of ``X``; ``None`` scores the
    rows as new items.
    """
    X = np.asarray(X, dtype=np.float64)
    cfg = p.config
    if X.ndim != 2 or X.shape[1] != cfg.d_x:
        raise ModelError(f"item features: expected dim {cfg.d_x}, got shape {X.shape}")
    if items is None and cfg.k_item > 0:
        raise ModelError("variant requires item latents")
    if cfg.variant == PROPOSED:
        U = X @ p.W_X
        if cfg.k_item:
            U += p.Z_I[items] @ p.W_Z
        return U @ group_matrix(p, Y).T + p.b_C
    Y = np.asarray(Y, dtype=np.float64)
    return (p.Z_I[items] @ p.W) @ p.Z_C.T + (X @ p.V) @ Y.T + p.b_C


def hinge(t, margin: float = 1.0):
    """max(0, margin - t)."""
    return np.maximum(0.0, margin - t)


def regularization(p: ModelParams, cfg: ModelConfig | None = None) -> float:
    """Squared-Frobenius penalty on weights and latents; biases are excluded."""
    cfg = cfg or p.config
    a, b = p.weight_blocks()
    weights = np.sum(getattr(p, a) ** 2) + np.sum(getattr(p, b) ** 2)
    latents = np.sum(p.Z_I**2) + np.sum(p.Z_C**2)
    return float(cfg.reg_weight * weights + cfg.reg_latent * latents)
