"""Small kernel SVM and nested cross-validation, numpy only."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

KERNELS = ("linear", "rbf")
C_GRID = (0.01, 0.1, 1.0, 2.0, 5.0, 10.0)
GRID = tuple(product(KERNELS, C_GRID))


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Split indices into ``k`` test folds with class proportions preserved."""
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset += len(idx)
    return [np.array(sorted(f), dtype=int) for f in folds if f]


class Standardizer:
    def fit(self, X):
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, X):
        return (X - self.mean_) / self.scale_


class SVM:
    """Binary soft-margin SVM (hinge loss) fit by dual coordinate ascent.

    The bias is folded into the kernel as a constant feature, so there is no
    equality constraint and each dual variable is updated in closed form.
    ``gamma=None`` for the rbf kernel means ``1 / (n_features * X.var())``.
    """

    def __init__(self, kernel="linear", C=1.0, gamma=None, tol=1e-3, max_epochs=10_000, seed=0):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self.C = float(C)
        self.gamma = gamma
        self.tol = tol
        self.max_epochs = max_epochs
        self.seed = seed

    def _k(self, A, B):
        if self.kernel == "linear":
            K = A @ B.T
        else:
            sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * A @ B.T
            K = np.exp(-self.gamma_ * np.maximum(sq, 0.0))
        return K + 1.0

    def fit(self, X, y):
        X = np.asarray(X, float)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError("SVM needs exactly two classes")
        s = np.where(y == self.classes_[1], 1.0, -1.0)
        var = X.var()
        self.gamma_ = self.gamma if self.gamma is not None else (
            1.0 / (X.shape[1] * var) if var > 0 else 1.0
        )
        K = self._k(X, X)
        Q = K * s[:, None] * s[None, :]
        n = len(s)
        alpha = [0.0] * n
        grad = -np.ones(n)  # Q @ alpha - 1
        rows = list(Q)  # Q is symmetric, so row i is column i
        diag = np.diag(Q).tolist()
        C = self.C
        rng = np.random.default_rng(self.seed)
        self.epochs_ = 0
        for epoch in range(self.max_epochs):
            worst = 0.0
            g_all = grad.tolist()
            for i in rng.permutation(n).tolist():
                g = g_all[i] if g_all is not None else float(grad[i])
                a = alpha[i]
                if a == 0.0:
                    pg = g if g < 0.0 else 0.0
                elif a == C:
                    pg = g if g > 0.0 else 0.0
                else:
                    pg = g
                if pg == 0.0 or diag[i] <= 0.0:
                    continue
                if abs(pg) > worst:
                    worst = abs(pg)
                new = min(max(a - g / diag[i], 0.0), C)
                if new != a:
                    alpha[i] = new
                    grad += (new - a) * rows[i]
                    g_all = None  # cached gradient is stale now
            self.epochs_ = epoch + 1
            if worst < self.tol:
                break
        alpha = np.array(alpha)
        self.coef_ = alpha * s
        self.X_ = X
        return self

    def decision_function(self, X):
        return self._k(np.asarray(X, float), self.X_) @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, self.classes_[1], self.classes_[0])


class Pipeline:
    """Standardize (fit on training rows only), then classify."""

    def __init__(self, kernel, C, seed=0):
        self.kernel, self.C, self.seed = kernel, C, seed

    def fit(self, X, y):
        self.scaler = Standardizer().fit(X)
        classes = np.unique(y)
        if len(classes) == 1:
            self.constant = classes[0]
            return self
        self.constant = None
        self.svm = SVM(self.kernel, self.C, seed=self.seed).fit(self.scaler.transform(X), y)
        return self

    def predict(self, X):
        if self.constant is not None:
            return np.full(len(X), self.constant)
        return self.svm.predict(self.scaler.transform(X))


@dataclass
class CvReport:
    outer_accuracy: float
    fold_accuracies: list[float]
    fold_selections: list[tuple[str, float]]
    refit_kernel: str = ""
    refit_C: float = 0.0
    refit_accuracy: float = float("nan")
    inner_scores: list[dict] = field(default_factory=list, repr=False)


def _accuracy(model, X, y) -> float:
    return float(np.mean(model.predict(X) == y))


def grid_search(X, y, folds: int, rng, grid=GRID, seed=0, on_fit=None, rows=None):
    """Best ``(kernel, C)`` by mean validation accuracy; ties go to the earlier cell."""
    rows = np.arange(len(y)) if rows is None else rows
    splits = stratified_folds(y, folds, rng)
    scores = {}
    for cell in grid:
        accs = []
        for test in splits:
            train = np.setdiff1d(np.arange(len(y)), test)
            if on_fit is not None:
                on_fit(rows[train], rows[test])
            m = Pipeline(*cell, seed=seed).fit(X[train], y[train])
            accs.append(_accuracy(m, X[test], y[test]))
        scores[cell] = float(np.mean(accs))
    best = max(grid, key=lambda c: (scores[c], -grid.index(c)))
    return best, scores


def nested_cv(
    X,
    y,
    outer_folds: int = 5,
    inner_folds: int = 4,
    seed: int = 0,
    grid: Sequence[tuple[str, float]] = GRID,
    on_fit: Callable[[np.ndarray, np.ndarray], None] | None = None,
) -> tuple[Pipeline, CvReport]:
    """Nested cross-validation, then a refit on all rows with the config a
    fresh grid search picks over the whole data.

    ``on_fit(train_rows, eval_rows)`` is called before every cross-validated
    fit with global row indices, which lets callers audit for leakage.
    """
    X = np.asarray(X, float)
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("need examples of both classes")
    grid = tuple(grid)
    rng = np.random.default_rng(seed)
    everything = np.arange(len(y))
    accs, picks, inner = [], [], []
    for test in stratified_folds(y, outer_folds, rng):
        train = np.setdiff1d(everything, test)
        cell, scores = grid_search(X[train], y[train], inner_folds, rng, grid, seed, on_fit, train)
        if on_fit is not None:
            on_fit(train, test)
        m = Pipeline(*cell, seed=seed).fit(X[train], y[train])
        accs.append(_accuracy(m, X[test], y[test]))
        picks.append(cell)
        inner.append(scores)
    cell, _ = grid_search(X, y, inner_folds, rng, grid, seed)
    final = Pipeline(*cell, seed=seed).fit(X, y)
    report = CvReport(
        float(np.mean(accs)), accs, picks, cell[0], cell[1], _accuracy(final, X, y), inner
    )
    return final, report
