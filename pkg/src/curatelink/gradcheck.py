"""Finite-difference verification of the rank-loss gradients.

The numerical side differentiates ``hinge(score(pos) - score(neg))``
computed through :func:`curatelink.model.score`, which shares no code with
the analytic gradients in :mod:`curatelink.trainer`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BASELINE, PROPOSED, ModelConfig, ModelParams, hinge, init_params, score
from .trainer import _triple, grad_wrt_item_feature

STEP = 1e-5
# central-difference rounding noise is ~eps*|f|/step ~ 1e-10; a zero gradient is judged against this scale
ABS_FLOOR = 1e-6


def central_difference(f, v: np.ndarray, step: float = STEP) -> np.ndarray:
    """Gradient of scalar ``f()`` w.r.t. array ``v`` (perturbed in place and restored)."""
    g = np.zeros(v.shape)
    flat, gflat = v.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + step
        fp = f()
        flat[k] = old - step
        fm = f()
        flat[k] = old
        gflat[k] = (fp - fm) / (2 * step)
    return g


def relative_error(analytic, numeric, floor: float = ABS_FLOOR) -> float:
    """Largest entrywise relative error; ``floor`` bounds the denominator away from zero."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {n.shape}")
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = diff / np.maximum(scale, floor)
    return float(rel.max()) if rel.size else 0.0


@dataclass
class GradcheckResult:
    errors: list[dict[str, float]] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max((max(e.values()) for e in self.errors if e), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def worst_block(self) -> str | None:
        best, name = -1.0, None
        for e in self.errors:
            for k, v in e.items():
                if v > best:
                    best, name = v, k
        return name


def _random_instance(rng, variant, d_x, d_y, k_item, k_group, n_items=4, n_groups=5):
    cfg = ModelConfig(variant=variant, d_x=d_x, d_y=d_y, k_item=k_item, k_group=k_group)
    p = init_params(cfg, n_items, n_groups, seed=int(rng.integers(2**31)))
    p.b_I = rng.normal(size=n_items)
    p.b_C = rng.normal(size=n_groups)
    X = rng.normal(size=(n_items, d_x))
    Y = rng.normal(size=(n_groups, d_y))
    i = int(rng.integers(n_items))
    c_pos, c_neg = (int(c) for c in rng.choice(n_groups, size=2, replace=False))
    return p, X, Y, i, c_pos, c_neg


def check_instance(p: ModelParams, X, Y, i, c_pos, c_neg, corrupt: bool = False) -> dict[str, float]:
    """Compare every analytic gradient block of one triple against central differences."""
    cfg = p.config

    def loss():
        t = score(p, X[i], i, Y[c_pos], c_pos) - score(p, X[i], i, Y[c_neg], c_neg)
        return float(hinge(t, cfg.margin))

    g = _triple(p, X[i], i, Y[c_pos], c_pos, Y[c_neg], c_neg)
    errors = {}
    for name, grad in g.weights.items():
        if corrupt:
            grad = grad * 1.01
        errors[name] = relative_error(grad, central_difference(loss, getattr(p, name)))
    if cfg.k_item:
        errors["Z_I"] = relative_error(g.z_item, central_difference(loss, p.Z_I[i]))
    if cfg.k_group:
        errors["Z_C[pos]"] = relative_error(g.z_pos, central_difference(loss, p.Z_C[c_pos]))
        errors["Z_C[neg]"] = relative_error(g.z_neg, central_difference(loss, p.Z_C[c_neg]))
    fd_b = central_difference(loss, p.b_C)
    errors["b_C"] = relative_error([g.b_pos, g.b_neg], fd_b[[c_pos, c_neg]])
    errors["b_I"] = relative_error(0.0, central_difference(loss, p.b_I)[i])
    if cfg.variant == PROPOSED:
        x = X[i].copy()

        def loss_x():
            t = score(p, x, i, Y[c_pos], c_pos) - score(p, x, i, Y[c_neg], c_neg)
            return float(hinge(t, cfg.margin))

        errors["x"] = relative_error(grad_wrt_item_feature(p, i, x, c_pos, c_neg, Y), central_difference(loss_x, x))
    return errors


def run_gradcheck(n_configs: int = 100, seed: int = 0, d_x: int = 3, d_y: int = 2, k_item: int = 2,
                  k_group: int = 2, corrupt: bool = False, tolerance: float = 1e-4) -> GradcheckResult:
    """Check gradients on ``n_configs`` random instances cycling through all model variants.

    The margin of each instance is set one unit above its current score
    difference so the hinge is active and differentiable at the test point.
    """
    rng = np.random.default_rng(seed)
    variants = [
        (PROPOSED, 0, 0),
        (PROPOSED, k_item, 0),
        (PROPOSED, 0, k_group),
        (PROPOSED, k_item, k_group),
        (BASELINE, max(k_item, 1), max(k_group, 1)),
    ]
    result = GradcheckResult(tolerance=tolerance)
    for n in range(n_configs):
        variant, ki, kc = variants[n % len(variants)]
        if variant == PROPOSED and (d_x + ki == 0 or d_y + kc == 0):
            continue
        p, X, Y, i, c_pos, c_neg = _random_instance(rng, variant, d_x, d_y, ki, kc)
        t = score(p, X[i], i, Y[c_pos], c_pos) - score(p, X[i], i, Y[c_neg], c_neg)
        p = p.with_config(margin=max(t, 0.0) + 1.0)
        result.errors.append(check_instance(p, X, Y, i, c_pos, c_neg, corrupt=corrupt))
    return result
