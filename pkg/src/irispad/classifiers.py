"""Small numpy classifiers for the texture PAD ensemble.

Labels are 0 (live) and 1 (attack); every model exposes ``vote(x) -> bool``
returning True for an attack vote. Training is deterministic given the seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _standardizer(X):
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale


@dataclass
class LinearSVM:
    weights: np.ndarray
    bias: float
    shift: np.ndarray
    scale: np.ndarray
    kind = "linear-svm"

    @property
    def dim(self) -> int:
        return len(self.weights)

    def margin(self, x) -> float:
        z = (np.asarray(x, dtype=np.float64) - self.shift) / self.scale
        return float(z @ self.weights + self.bias)

    def vote(self, x) -> bool:
        return self.margin(x) > 0.0

    @classmethod
    def fit(cls, X, y, seed: int, epochs: int = 60, lam: float = 1e-3) -> "LinearSVM":
        """Pegasos-style stochastic sub-gradient descent on the L2 hinge loss."""
        X = np.asarray(X, dtype=np.float64)
        t_sign = np.where(np.asarray(y) == 1, 1.0, -1.0)
        shift, scale = _standardizer(X)
        Z = (X - shift) / scale
        rng = np.random.default_rng(seed)
        w = np.zeros(X.shape[1])
        b = 0.0
        step = 0
        for _ in range(epochs):
            for i in rng.permutation(len(Z)):
                step += 1
                eta = 1.0 / (lam * (step + 100))
                m = t_sign[i] * (Z[i] @ w + b)
                w *= 1.0 - eta * lam
                if m < 1.0:
                    w += eta * t_sign[i] * Z[i]
                    b += eta * t_sign[i] * 0.1
        return cls(w, float(b), shift, scale)


@dataclass
class MLP:
    w1: np.ndarray  # (hidden, dim)
    b1: np.ndarray
    w2: np.ndarray  # (hidden,)
    b2: float
    shift: np.ndarray
    scale: np.ndarray
    kind = "mlp"

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def probability(self, x) -> float:
        z = (np.asarray(x, dtype=np.float64) - self.shift) / self.scale
        h = np.maximum(0.0, self.w1 @ z + self.b1)
        return float(1.0 / (1.0 + np.exp(-(h @ self.w2 + self.b2))))

    def vote(self, x) -> bool:
        return self.probability(x) >= 0.5

    @classmethod
    def fit(cls, X, y, seed: int, hidden: int = 32, epochs: int = 400,
            batch: int = 16, lr: float = 0.05, momentum: float = 0.9) -> "MLP":
        """Mini-batch gradient descent with momentum on the logistic loss."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        shift, scale = _standardizer(X)
        Z = (X - shift) / scale
        rng = np.random.default_rng(seed)
        d = Z.shape[1]
        w1 = rng.normal(0.0, np.sqrt(2.0 / d), (hidden, d))
        b1 = np.full(hidden, 0.01)
        w2 = rng.normal(0.0, np.sqrt(1.0 / hidden), hidden)
        b2 = 0.0
        params = [w1, b1, w2, np.array([b2])]
        vel = [np.zeros_like(p) for p in params]
        for _ in range(epochs):
            order = rng.permutation(len(Z))
            for start in range(0, len(Z), batch):
                idx = order[start:start + batch]
                zb, yb = Z[idx], y[idx]
                pre = zb @ params[0].T + params[1]
                h = np.maximum(0.0, pre)
                out = 1.0 / (1.0 + np.exp(-(h @ params[2] + params[3][0])))
                g_out = (out - yb) / len(idx)
                g_w2 = h.T @ g_out
                g_b2 = np.array([g_out.sum()])
                g_h = np.outer(g_out, params[2]) * (pre > 0)
                g_w1 = g_h.T @ zb
                g_b1 = g_h.sum(axis=0)
                for p, v, g in zip(params, vel, (g_w1, g_b1, g_w2, g_b2)):
                    v *= momentum
                    v -= lr * g
                    p += v
        return cls(params[0], params[1], params[2], float(params[3][0]), shift, scale)


@dataclass
class DecisionTree:
    """Flat array tree; internal nodes have ``vote == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray

    def predict(self, x) -> bool:
        node = 0
        while self.vote[node] < 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return bool(self.vote[node])


def _best_split(X, y, features):
    """Lowest weighted Gini split among ``features``; ``None`` if no split helps."""
    n = len(y)
    best = None
    total_pos = y.sum()
    parent = 1.0 - (total_pos / n) ** 2 - (1 - total_pos / n) ** 2
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        n_right = n - n_left
        pos_right = total_pos - pos_left
        pl = pos_left / n_left
        pr = pos_right / n_right
        gini = (n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)) / n
        gini[xs[1:] == xs[:-1]] = np.inf
        i = int(np.argmin(gini))
        if np.isfinite(gini[i]) and gini[i] < parent - 1e-12:
            if best is None or gini[i] < best[0]:
                best = (gini[i], int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _leaf_vote(y) -> int:
    # ties vote attack
    return int(2 * y.sum() >= len(y))


def grow_tree(X, y, rng, max_depth: int, n_features: int) -> DecisionTree:
    feature, threshold, left, right, vote = [], [], [], [], []

    def new_node():
        for lst in (feature, left, right, vote):
            lst.append(-1)
        threshold.append(0.0)
        return len(vote) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        split = None
        if depth < max_depth and 0 < ys.sum() < len(ys):
            feats = rng.choice(X.shape[1], size=min(n_features, X.shape[1]), replace=False)
            split = _best_split(X[idx], ys, np.sort(feats))
        if split is None:
            vote[node] = _leaf_vote(ys)
            continue
        _, f, thr = split
        go_left = X[idx, f] <= thr
        ln, rn = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, ln, rn
        stack.append((rn, idx[~go_left], depth + 1))
        stack.append((ln, idx[go_left], depth + 1))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left),
                        np.array(right), np.array(vote))


@dataclass
class RandomForest:
    trees: list
    dim: int
    kind = "random-forest"

    def vote(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        attack = sum(t.predict(x) for t in self.trees)
        return 2 * attack >= len(self.trees)

    @classmethod
    def fit(cls, X, y, seed: int, n_trees: int = 25, max_depth: int = 8,
            n_features: int | None = None) -> "RandomForest":
        """Bootstrap-sampled greedy Gini trees with per-split feature subsampling."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.default_rng(seed)
        k = n_features or max(1, int(np.sqrt(X.shape[1])))
        trees = []
        for _ in range(n_trees):
            boot = rng.integers(0, len(y), size=len(y))
            trees.append(grow_tree(X[boot], y[boot], rng, max_depth, k))
        return cls(trees, X.shape[1])
