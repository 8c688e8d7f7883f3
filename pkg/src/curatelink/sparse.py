"""Sparse codes of item features over the learned group dictionary.

The dictionary has one atom per group, the group-side vector
``[y_c ; z_Cc]`` of a trained proposed-variant model.  An item feature
``x`` is mapped to the target ``t = W_X^T x`` in the same space and coded
by minimizing

    ||t - D a||^2 + lam * ||a||_1.

The default encoder is a single soft-threshold of the atom correlations
``D^T t`` (threshold ``lam / 2``), which is the exact minimizer when the
atoms are orthonormal.  Cyclic coordinate descent solves the general case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PROPOSED, ModelError, ModelParams


class ConvergenceError(RuntimeError):
    def __init__(self, message, code=None, iterations=0):
        super().__init__(message)
        self.code = code
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class SparseCode:
    indices: np.ndarray
    values: np.ndarray
    size: int

    @classmethod
    def from_dense(cls, v) -> "SparseCode":
        v = np.asarray(v, dtype=np.float64)
        idx = np.flatnonzero(v)
        return cls(idx, v[idx], v.size)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.indices] = self.values
        return out

    def __len__(self):
        return int(self.indices.size)

    def __eq__(self, other):
        if not isinstance(other, SparseCode):
            return NotImplemented
        return (
            self.size == other.size
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def top(self) -> int | None:
        """Group with the largest-magnitude coefficient, or None for an empty code."""
        if not len(self):
            return None
        return int(self.indices[np.argmax(np.abs(self.values))])


@dataclass(frozen=True, eq=False)
class SparseDictionary:
    atoms: np.ndarray  # (dim, n_groups), column c is the atom of group c
    atom_norms: np.ndarray
    normalized: bool

    @property
    def n_groups(self) -> int:
        return self.atoms.shape[1]

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @classmethod
    def from_atoms(cls, atoms, normalize: bool = True) -> "SparseDictionary":
        atoms = np.array(atoms, dtype=np.float64)
        norms = np.linalg.norm(atoms, axis=0)
        if not np.any(norms > 0):
            raise ValueError("all-zero dictionary")
        if normalize:
            atoms = np.divide(atoms, norms, out=np.zeros_like(atoms), where=norms > 0)
        return cls(atoms, norms, normalize)


def build_dictionary(p: ModelParams, Y, normalize: bool = True) -> SparseDictionary:
    if p.config.variant != PROPOSED:
        raise ModelError("sparse coding needs the proposed variant")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (p.n_groups, p.config.d_y):
        raise ModelError(f"group features: expected {(p.n_groups, p.config.d_y)}, found {Y.shape}")
    return SparseDictionary.from_atoms(np.hstack((Y, p.Z_C)).T, normalize)


def targets(p: ModelParams, X) -> np.ndarray:
    """Project item features into the dictionary space: rows ``x W_X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != p.config.d_x:
        raise ModelError(f"item feature: expected dim {p.config.d_x}, got {X.shape[-1]}")
    return X @ p.W_X


def soft_threshold(r, theta):
    return np.sign(r) * np.maximum(np.abs(r) - theta, 0.0)


def threshold_codes(D: SparseDictionary, T, lam: float) -> np.ndarray:
    """Dense threshold codes for a batch of targets (rows of ``T``)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    T = np.atleast_2d(T)
    if T.shape[1] != D.dim:
        raise ModelError(f"target dim {T.shape[1]} != dictionary dim {D.dim}")
    return soft_threshold(T @ D.atoms, lam / 2.0)


def encode_threshold(D: SparseDictionary, p: ModelParams, x, lam: float) -> SparseCode:
    if not D.normalized:
        raise ValueError("threshold encoding requires a normalized dictionary")
    return SparseCode.from_dense(threshold_codes(D, targets(p, x), lam)[0])


def encode_batch(D: SparseDictionary, p: ModelParams, X, lam: float) -> list[SparseCode]:
    if not D.normalized:
        raise ValueError("threshold encoding requires a normalized dictionary")
    A = threshold_codes(D, targets(p, np.atleast_2d(X)), lam)
    return [SparseCode.from_dense(row) for row in A]


def lasso_objective(D: SparseDictionary, t, alpha, lam: float) -> float:
    r = t - D.atoms @ alpha
    return float(r @ r + lam * np.abs(alpha).sum())


def lasso_cd(D: SparseDictionary, t, lam: float, tol: float = 1e-8, max_iters: int = 1000):
    """Cyclic coordinate descent on ``||t - D a||^2 + lam ||a||_1``.

    Works on the Gram matrix, so each coordinate update is exact.  Stops
    when a full sweep changes no coefficient by ``tol`` or more.

    Returns
    -------
    alpha : ndarray
        Dense coefficient vector.
    trace : list of float
        Objective value after each sweep (starting from alpha = 0).
    """
    t = np.asarray(t, dtype=np.float64)
    A = D.atoms
    # same product shape as threshold_codes so correlations round identically
    corr = (t[None, :] @ A)[0]
    G = A.T @ A
    diag = np.diag(G).copy()
    alpha = np.zeros(D.n_groups)
    theta = lam / 2.0
    trace = [lasso_objective(D, t, alpha, lam)]
    for sweep in range(1, max_iters + 1):
        change = 0.0
        for c in range(D.n_groups):
            if diag[c] == 0.0:
                continue
            # correlation of atom c with the residual that excludes atom c
            rho = corr[c] - (G[c] @ alpha - diag[c] * alpha[c])
            new = soft_threshold(rho, theta) / diag[c]
            change = max(change, abs(new - alpha[c]))
            alpha[c] = new
        trace.append(lasso_objective(D, t, alpha, lam))
        if change < tol:
            return alpha, trace
    raise ConvergenceError(f"coordinate descent did not converge in {max_iters} sweeps", alpha, max_iters)


def encode_lasso_cd(D: SparseDictionary, p: ModelParams, x, lam: float, tol: float = 1e-8,
                    max_iters: int = 1000) -> SparseCode:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    t = targets(p, np.asarray(x, dtype=np.float64))
    if t.shape != (D.dim,):
        raise ModelError(f"target dim {t.shape} != dictionary dim {D.dim}")
    alpha, _ = lasso_cd(D, t, lam, tol, max_iters)
    return SparseCode.from_dense(alpha)


def _fold_error(A_train, T_train, A_test, T_test, atoms) -> float:
    """Held-out reconstruction error after fitting one global gain on the training folds."""
    R_train = A_train @ atoms.T
    denom = float(np.sum(R_train * R_train))
    gain = float(np.sum(R_train * T_train)) / denom if denom > 0 else 0.0
    resid = T_test - gain * (A_test @ atoms.T)
    return float(np.mean(np.sum(resid * resid, axis=1)))


def cv_errors(D: SparseDictionary, p: ModelParams, X_sample, lambda_grid, folds: int = 10, seed: int = 0):
    """Mean held-out reconstruction error for each lambda in the grid.

    Threshold codes shrink coefficient magnitudes by ``lam / 2``; a single
    reconstruction gain is fit on the training folds to undo that shrinkage
    before scoring the held-out fold, so the grid point is judged on the
    support it selects rather than on the bias it introduces.
    """
    X_sample = np.atleast_2d(np.asarray(X_sample, dtype=np.float64))
    grid = np.asarray(lambda_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    n = X_sample.shape[0]
    if n < folds:
        raise ValueError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    T = targets(p, X_sample)
    fold_of = np.random.default_rng(seed).permutation(n) % folds
    errors = np.zeros(grid.size)
    for k, lam in enumerate(grid):
        A = threshold_codes(D, T, lam)
        errs = []
        for f in range(folds):
            test = fold_of == f
            errs.append(_fold_error(A[~test], T[~test], A[test], T[test], D.atoms))
        errors[k] = np.mean(errs)
    return errors


def select_threshold_cv(D: SparseDictionary, p: ModelParams, X_sample, lambda_grid, folds: int = 10,
                        seed: int = 0) -> float:
    """Pick the lambda with the lowest cross-validated error; ties go to the larger lambda."""
    grid = np.asarray(lambda_grid, dtype=np.float64)
    errors = cv_errors(D, p, X_sample, grid, folds, seed)
    best = errors.min()
    return float(grid[errors == best].max())


def default_lambda_grid(D: SparseDictionary, p: ModelParams, X_sample, n: int = 25) -> np.ndarray:
    """Grid from zero up to twice the largest atom correlation seen in the sample."""
    T = targets(p, np.atleast_2d(X_sample))
    top = float(np.abs(T @ D.atoms).max())
    if top == 0.0:
        return np.zeros(1)
    return np.concatenate(([0.0], np.geomspace(top * 1e-3, 2.0 * top, n - 1)))


def format_codes(codes: list[SparseCode], item_ids=None) -> str:
    """One line per item: ``item_index group:value ...`` with 6 significant digits."""
    lines = []
    for k, code in enumerate(codes):
        item = k if item_ids is None else item_ids[k]
        pairs = " ".join(f"{c}:{v:.6g}" for c, v in zip(code.indices.tolist(), code.values.tolist()))
        lines.append(f"{item} {pairs}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def parse_codes(text: str, size: int) -> list[tuple[int, SparseCode]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        head, *pairs = line.split()
        idx, vals = [], []
        for pair in pairs:
            c, _, v = pair.partition(":")
            idx.append(int(c))
            vals.append(float(v))
        out.append((int(head), SparseCode(np.array(idx, dtype=np.int64), np.array(vals), size)))
    return out
