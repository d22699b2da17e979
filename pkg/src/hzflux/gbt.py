"""Regularised gradient-boosted regression trees with exact greedy splits.

Squared-error objective, so per-row gradients are ``pred - y`` and hessians
are one. Split gain and leaf weights follow the usual second-order form::

    gain = 0.5 * (S(G_L)^2/(H_L+lam) + S(G_R)^2/(H_R+lam) - S(G)^2/(H+lam))
    w    = -S(G) / (H + lam)

where ``S`` soft-thresholds the gradient sum by the L1 penalty ``alpha``.
Candidate thresholds are midpoints between consecutive distinct values; rows
with ``x < threshold`` go left.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GbtParams",
    "Tree",
    "GbtModel",
    "fit_gbt",
    "predict_gbt",
    "gbt_importance",
    "split_gain",
    "save_gbt",
    "load_gbt",
]

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtParams:
    n_estimators: int = 150
    learning_rate: float = 0.1
    max_depth: int = 6
    subsample: float = 0.08
    reg_alpha: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        if self.reg_alpha < 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("regularisation terms must be non-negative")


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            r = rows[inner]
            n = node[inner]
            go_left = X[r, feat[inner]] < self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])


@dataclass
class GbtModel:
    params: GbtParams
    base_score: float
    n_features: int
    trees: list[Tree] = field(default_factory=list)
    feature_gain: np.ndarray | None = None


def _soft(G, alpha):
    if alpha == 0:
        return G
    return G - np.clip(G, -alpha, alpha)


def _score(G, H, lam, alpha):
    s = _soft(G, alpha)
    return np.divide(s * s, H + lam, out=np.zeros(np.broadcast(s, H).shape), where=(H + lam) > 0)


def split_gain(G_L, H_L, G_R, H_R, reg_lambda=1.0, reg_alpha=0.0):
    """Loss reduction from splitting a node into the given children."""
    G = np.asarray(G_L) + G_R
    H = np.asarray(H_L) + H_R
    return 0.5 * (
        _score(G_L, H_L, reg_lambda, reg_alpha)
        + _score(G_R, H_R, reg_lambda, reg_alpha)
        - _score(G, H, reg_lambda, reg_alpha)
    )


class _Builder:
    """Grows one tree. Each node carries, per feature, its row indices and
    feature values in sorted order, so children inherit sorted lists by
    filtering instead of re-sorting."""

    def __init__(self, X, g, h, params: GbtParams):
        self.X = X
        self.g = g
        self.h = h
        self.unit_hess = bool(np.all(h == 1.0))
        self.p = params
        self.nodes: list[list] = []  # [feature, threshold, left, right, value, gain]

    def new_node(self):
        self.nodes.append([-1, 0.0, -1, -1, 0.0, 0.0])
        return len(self.nodes) - 1

    def leaf(self, node, G, H):
        p = self.p
        w = -_soft(G, p.reg_alpha) / (H + p.reg_lambda) if H + p.reg_lambda > 0 else 0.0
        self.nodes[node][4] = float(w) * p.learning_rate

    def best_split(self, sorted_idx, xs, G, H):
        """Best (gain, feature, threshold) over all features, or None."""
        p = self.p
        n = sorted_idx.shape[1]
        if n < 2:
            return None
        cg = np.cumsum(self.g[sorted_idx], axis=1)[:, :-1]
        if self.unit_hess:
            ch = np.arange(1.0, n)
            ok = (ch >= p.min_child_weight) & (H - ch >= p.min_child_weight)
            if not ok.any():
                return None
            lo = int(np.argmax(ok))
            hi = n - 1 - int(np.argmax(ok[::-1]))
            ch = ch[lo:hi]
            cg = cg[:, lo:hi]
            valid = xs[:, lo + 1 : hi + 1] > xs[:, lo:hi]
        else:
            ch = np.cumsum(self.h[sorted_idx], axis=1)[:, :-1]
            lo = 0
            valid = (xs[:, 1:] > xs[:, :-1]) & (ch >= p.min_child_weight) & (H - ch >= p.min_child_weight)
        total = _score(cg, ch, p.reg_lambda, p.reg_alpha)
        total += _score(G - cg, H - ch, p.reg_lambda, p.reg_alpha)
        total[~valid] = -np.inf
        width = total.shape[1]
        if width == 0:
            return None
        flat = int(np.argmax(total))
        f, i = divmod(flat, width)
        if not np.isfinite(total[f, i]):
            return None
        best = 0.5 * (total[f, i] - float(_score(G, H, p.reg_lambda, p.reg_alpha)))
        if not best > 0:
            return None
        i += lo
        low, high = xs[f, i], xs[f, i + 1]
        thr = 0.5 * (low + high)
        if not low < thr:
            thr = high
        return float(best), int(f), float(thr)

    def build(self, sorted_idx, xs, depth):
        node = self.new_node()
        rows = sorted_idx[0]
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        split = self.best_split(sorted_idx, xs, G, H) if depth < self.p.max_depth else None
        if split is None:
            self.leaf(node, G, H)
            return node
        gain, f, thr = split
        goes_left = np.zeros(self.X.shape[0], dtype=bool)
        goes_left[rows] = self.X[rows, f] < thr
        mask = goes_left[sorted_idx]
        n_feat = sorted_idx.shape[0]
        self.nodes[node][0] = f
        self.nodes[node][1] = thr
        self.nodes[node][5] = gain
        self.nodes[node][2] = self.build(
            sorted_idx[mask].reshape(n_feat, -1), xs[mask].reshape(n_feat, -1), depth + 1
        )
        self.nodes[node][3] = self.build(
            sorted_idx[~mask].reshape(n_feat, -1), xs[~mask].reshape(n_feat, -1), depth + 1
        )
        return node

    def tree(self) -> Tree:
        a = list(zip(*self.nodes))
        return Tree(
            feature=np.array(a[0], dtype=np.int64),
            threshold=np.array(a[1], dtype=float),
            left=np.array(a[2], dtype=np.int64),
            right=np.array(a[3], dtype=np.int64),
            value=np.array(a[4], dtype=float),
            gain=np.array(a[5], dtype=float),
        )


def _check_xy(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    if y is None:
        return X
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
    if y.size < 2:
        raise ValueError("need at least two training rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite entries")
    return X, y


def fit_gbt(X, y, params: GbtParams = GbtParams(), on_round=None) -> GbtModel:
    """Boost ``params.n_estimators`` trees on squared error.

    ``on_round(k, pred)`` is called after each round with the training-set
    predictions, which the tests use to watch the training loss.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    base = float(y[0]) if np.all(y == y[0]) else float(y.mean())
    pred = np.full(n, base)
    h = np.ones(n)
    XT = np.ascontiguousarray(X.T)
    m = max(2, int(round(params.subsample * n))) if params.subsample < 1 else n
    if m == n:
        presorted = np.argsort(XT, axis=1, kind="stable")
        xsorted = np.take_along_axis(XT, presorted, axis=1)
    rng = np.random.default_rng(params.seed)
    model = GbtModel(params, base, p, [], np.zeros(p))
    for k in range(params.n_estimators):
        g = pred - y
        if m < n:
            chosen = np.zeros(n, dtype=bool)
            chosen[rng.choice(n, size=m, replace=False)] = True
            sub = np.flatnonzero(chosen)
            vals = XT[:, sub]
            order = np.argsort(vals, axis=1, kind="stable")
            sorted_idx = sub[order]
            xs = np.take_along_axis(vals, order, axis=1)
        else:
            sorted_idx, xs = presorted, xsorted
        builder = _Builder(X, g, h, params)
        builder.build(sorted_idx, xs, 0)
        tree = builder.tree()
        model.trees.append(tree)
        inner = tree.feature >= 0
        np.add.at(model.feature_gain, tree.feature[inner], tree.gain[inner])
        pred = pred + tree.predict(X)
        if on_round is not None:
            on_round(k, pred)
    return model


def predict_gbt(model: GbtModel, X) -> np.ndarray:
    X = _check_xy(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    out = np.full(X.shape[0], model.base_score)
    if not model.trees:
        return out
    feature, threshold, left, right, value, roots, depth = _packed(model)
    n = X.shape[0]
    flat_x = X.ravel()
    row_base = (np.arange(n) * X.shape[1])[None, :]
    node = np.broadcast_to(roots[:, None], (roots.size, n)).copy()
    for _ in range(depth):
        go_left = flat_x[row_base + feature[node]] < threshold[node]
        node = np.where(go_left, left[node], right[node])
    leaf = value[node]
    # add tree by tree so the sum matches the order used during fitting
    for contribution in leaf:
        out += contribution
    return out


def _packed(model: GbtModel):
    """All trees as flat node arrays with global indices; leaves loop back to themselves."""
    key = len(model.trees)
    cached = model.__dict__.get("_packed")
    if cached is not None and cached[0] == key:
        return cached[1]
    sizes = np.array([t.feature.size for t in model.trees])
    roots = np.r_[0, np.cumsum(sizes)[:-1]]
    feature, threshold, left, right, value = [], [], [], [], []
    for root, t in zip(roots, model.trees):
        inner = t.feature >= 0
        own = np.arange(t.feature.size) + root
        feature.append(np.where(inner, t.feature, 0))
        threshold.append(np.where(inner, t.threshold, np.inf))
        left.append(np.where(inner, t.left + root, own))
        right.append(np.where(inner, t.right + root, own))
        value.append(t.value)
    depth = max(t.depth for t in model.trees)
    packed = tuple(np.concatenate(a) for a in (feature, threshold, left, right, value)) + (roots, depth)
    model.__dict__["_packed"] = (key, packed)
    return packed


def gbt_importance(model: GbtModel) -> np.ndarray:
    """Total split gain per feature, summed over all trees."""
    if model.feature_gain is None:
        return np.zeros(model.n_features)
    return model.feature_gain.copy()


def _tree_to_dict(tree: Tree, i=0):
    if tree.feature[i] < 0:
        return {"leaf": float(tree.value[i])}
    return {
        "feature": int(tree.feature[i]),
        "threshold": float(tree.threshold[i]),
        "gain": float(tree.gain[i]),
        "left": _tree_to_dict(tree, tree.left[i]),
        "right": _tree_to_dict(tree, tree.right[i]),
    }


def _tree_from_dict(doc) -> Tree:
    nodes = []

    def add(d):
        i = len(nodes)
        nodes.append(None)
        if "leaf" in d:
            nodes[i] = (-1, 0.0, -1, -1, d["leaf"], 0.0)
        else:
            left = add(d["left"])
            right = add(d["right"])
            nodes[i] = (d["feature"], d["threshold"], left, right, 0.0, d["gain"])
        return i

    add(doc)
    a = list(zip(*nodes))
    return Tree(
        np.array(a[0], dtype=np.int64),
        np.array(a[1], dtype=float),
        np.array(a[2], dtype=np.int64),
        np.array(a[3], dtype=np.int64),
        np.array(a[4], dtype=float),
        np.array(a[5], dtype=float),
    )


def gbt_to_dict(model: GbtModel) -> dict:
    """Versioned JSON-ready document. Leaf values already include the learning rate."""
    return {
        "format": "hzflux.gbt",
        "version": FORMAT_VERSION,
        "params": asdict(model.params),
        "base_score": model.base_score,
        "n_features": model.n_features,
        "trees": [_tree_to_dict(t) for t in model.trees],
    }


def gbt_from_dict(doc: dict) -> GbtModel:
    if doc.get("format") != "hzflux.gbt" or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a version-1 hzflux.gbt document")
    trees = [_tree_from_dict(t) for t in doc["trees"]]
    gain = np.zeros(doc["n_features"])
    for t in trees:
        inner = t.feature >= 0
        np.add.at(gain, t.feature[inner], t.gain[inner])
    return GbtModel(GbtParams(**doc["params"]), doc["base_score"], doc["n_features"], trees, gain)


def save_gbt(model: GbtModel, path) -> None:
    Path(path).write_text(json.dumps(gbt_to_dict(model)))


def load_gbt(path) -> GbtModel:
    return gbt_from_dict(json.loads(Path(path).read_text()))
