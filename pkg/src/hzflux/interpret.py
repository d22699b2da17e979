"""Accumulated local effects, importance pooling and top-K ranking similarity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from hzflux.features import KIND_ORDER, FeatureKey

__all__ = [
    "DegenerateFeatureError",
    "AleCurve",
    "ale_main_effect",
    "ale_importance",
    "ale_table",
    "pool_importance",
    "top_k",
    "jaccard_topk",
    "write_importance_csv",
    "write_pooled_csv",
]


class DegenerateFeatureError(ValueError):
    pass


@dataclass(frozen=True)
class AleCurve:
    """Centered accumulated effects evaluated at the (merged) quantile edges."""

    feature: object
    bin_edges: np.ndarray
    accumulated_effects: np.ndarray
    importance: float
    n_bins_requested: int

    @property
    def n_bins(self) -> int:
        """Effective bin count after duplicate edges were merged."""
        return self.bin_edges.size - 1

    def __call__(self, x) -> np.ndarray:
        """Curve value at ``x`` by linear interpolation between edges."""
        return np.interp(x, self.bin_edges, self.accumulated_effects)


def ale_main_effect(
    predict: Callable[[np.ndarray], np.ndarray], X, feature: int, n_bins: int = 10, key=None
) -> AleCurve:
    """First-order ALE of column ``feature`` over ``n_bins`` quantile bins.

    For each bin the prediction change between its upper and lower edge is
    averaged over the rows inside it; bin means are accumulated from the
    smallest edge and the curve is shifted so that its mean over the rows,
    with each row evaluated at its own feature value, is zero. Empty bins add
    nothing. The first bin is closed on both sides, the others are
    half-open on the left.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    x = X[:, feature]
    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)))
    if edges.size < 2:
        raise DegenerateFeatureError(f"feature {feature if key is None else key} is constant")
    nb = edges.size - 1
    bins = np.clip(np.searchsorted(edges, x, side="left") - 1, 0, nb - 1)
    hi = X.copy()
    lo = X.copy()
    hi[:, feature] = edges[bins + 1]
    lo[:, feature] = edges[bins]
    both = np.asarray(predict(np.concatenate([hi, lo])), dtype=float).ravel()
    diff = both[: x.size] - both[x.size :]
    counts = np.bincount(bins, minlength=nb)
    sums = np.bincount(bins, weights=diff, minlength=nb)
    means = np.divide(sums, counts, out=np.zeros(nb), where=counts > 0)
    acc = np.concatenate([[0.0], np.cumsum(means)])
    acc -= np.mean(np.interp(x, edges, acc))
    curve = AleCurve(key if key is not None else feature, edges, acc, 0.0, n_bins)
    return AleCurve(curve.feature, edges, acc, ale_importance(curve), n_bins)


def ale_importance(curve: AleCurve) -> float:
    """Sample standard deviation of the effects at the bin edges."""
    a = np.asarray(curve.accumulated_effects, dtype=float)
    if a.size < 2:
        return 0.0
    return float(np.std(a, ddof=1))


def ale_table(predict, X, keys: Sequence | None = None, n_bins: int = 10) -> list[AleCurve | None]:
    """ALE curve for every column; constant columns yield ``None``."""
    X = np.asarray(X, dtype=float)
    keys = list(keys) if keys is not None else list(range(X.shape[1]))
    out: list[AleCurve | None] = []
    for j, key in enumerate(keys):
        try:
            out.append(ale_main_effect(predict, X, j, n_bins, key=key))
        except DegenerateFeatureError:
            out.append(None)
    return out


def _group_value(key: FeatureKey, group_by: str):
    if group_by == "kind":
        return key.kind
    if group_by == "depth":
        return key.depth_m
    if group_by == "lag":
        return key.lag_steps
    raise ValueError(f"group_by must be kind, depth or lag, not {group_by!r}")


def _group_order(value, group_by):
    return KIND_ORDER.index(value) if group_by == "kind" else value


def pool_importance(keys: Sequence[FeatureKey], importance, group_by: str) -> dict:
    """Mean importance per kind, depth or lag, in canonical group order."""
    importance = np.asarray(importance, dtype=float)
    if len(keys) != importance.size:
        raise ValueError("keys and importances differ in length")
    groups: dict = {}
    for key, value in zip(keys, importance):
        groups.setdefault(_group_value(key, group_by), []).append(value)
    if not groups:
        raise ValueError("no features to pool")
    ordered = sorted(groups, key=lambda g: _group_order(g, group_by))
    return {g: float(np.mean(np.sort(groups[g]))) for g in ordered}


def _canonical_rank(keys: Sequence | None, n: int) -> np.ndarray:
    if keys is None:
        return np.arange(n)
    order = sorted(range(n), key=lambda i: keys[i].sort_key() if hasattr(keys[i], "sort_key") else keys[i])
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    return rank


def top_k(importance, K: int, keys: Sequence | None = None) -> list[int]:
    """Indices of the ``K`` largest importances; ties go to the canonically earlier key."""
    importance = np.asarray(importance, dtype=float)
    n = importance.size
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    order = np.lexsort((_canonical_rank(keys, n), -importance))
    return sorted(order[:K].tolist())


def jaccard_topk(importance_a, importance_b, K: int | None = None, keys: Sequence | None = None) -> float:
    """Jaccard index of the two top-``K`` sets; ``K`` defaults to a third, rounded up."""
    a = np.asarray(importance_a, dtype=float)
    b = np.asarray(importance_b, dtype=float)
    if a.size != b.size:
        raise ValueError("importance tables cover different feature sets")
    if K is None:
        K = math.ceil(a.size / 3)
    sa, sb = set(top_k(a, K, keys)), set(top_k(b, K, keys))
    return len(sa & sb) / len(sa | sb)


def _format_key(key) -> str:
    return key.encode() if hasattr(key, "encode") and not isinstance(key, str) else str(key)


def write_importance_csv(path, keys: Sequence, importance) -> None:
    """``feature_key,importance,rank`` with rank 1 the most important."""
    importance = np.asarray(importance, dtype=float)
    order = np.lexsort((_canonical_rank(keys, importance.size), -importance))
    rank = np.empty(importance.size, dtype=int)
    rank[order] = np.arange(1, importance.size + 1)
    lines = ["feature_key,importance,rank"]
    lines += [f"{_format_key(k)},{v:.10g},{r}" for k, v, r in zip(keys, importance, rank)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_pooled_csv(path, pooled: dict) -> None:
    lines = ["group,mean_importance"]
    for g, v in pooled.items():
        lines.append(f"{getattr(g, 'value', g)},{v:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")
