"""Regression scores, sign-stratified reports and multi-seed summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = ["rmse", "r2", "rmse_normalized", "EvalReport", "stratified", "SeedSummary", "summarize_seeds"]


def _pair(pred, obs):
    pred = np.asarray(pred, dtype=float).ravel()
    obs = np.asarray(obs, dtype=float).ravel()
    if pred.size != obs.size:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {obs.size} observations")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, obs


def rmse(pred, obs) -> float:
    pred, obs = _pair(pred, obs)
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def r2(pred, obs) -> float:
    """``1 - SSE/SST`` with SST taken about the observation mean."""
    pred, obs = _pair(pred, obs)
    sst = float(np.sum((obs - obs.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("R^2 is undefined for constant observations")
    return 1.0 - float(np.sum((pred - obs) ** 2)) / sst


def rmse_normalized(rmse_value: float, flux_max: float, flux_min: float) -> float:
    span = flux_max - flux_min
    if not span > 0:
        raise ValueError("flux range must be positive")
    return float(rmse_value) / span


@dataclass(frozen=True)
class EvalReport:
    """Scores overall and per flux direction; an empty stratum is ``None``."""

    rmse: float
    r2: float | None
    rmse_normalized: float | None
    rmse_upward: float | None
    rmse_downward: float | None
    n_points: int
    n_upward: int
    n_downward: int

    def to_dict(self) -> dict:
        return asdict(self)


def stratified(pred, obs) -> EvalReport:
    """Overall scores plus RMSE restricted to ``obs > 0`` and ``obs < 0``.

    The normalizing range for the scaled RMSE is that of ``obs``; exactly zero
    observations belong to neither stratum.
    """
    pred, obs = _pair(pred, obs)
    up = obs > 0
    down = obs < 0
    overall = rmse(pred, obs)
    span = float(obs.max() - obs.min())
    return EvalReport(
        rmse=overall,
        r2=r2(pred, obs) if span > 0 else None,
        rmse_normalized=overall / span if span > 0 else None,
        rmse_upward=rmse(pred[up], obs[up]) if up.any() else None,
        rmse_downward=rmse(pred[down], obs[down]) if down.any() else None,
        n_points=int(obs.size),
        n_upward=int(up.sum()),
        n_downward=int(down.sum()),
    )


@dataclass(frozen=True)
class SeedSummary:
    reports: tuple[EvalReport, ...]
    mean: dict
    variance: dict

    def to_dict(self) -> dict:
        return {"n_seeds": len(self.reports), "mean": self.mean, "variance": self.variance}


_STATS = [f.name for f in fields(EvalReport) if not f.name.startswith("n_")]


def summarize_seeds(reports) -> SeedSummary:
    """Mean and population variance of each statistic across seeds.

    Statistics missing in any report are summarized over the reports that
    have them, and are ``None`` if none do.
    """
    reports = tuple(reports)
    if not reports:
        raise ValueError("need at least one report")
    mean, var = {}, {}
    for name in _STATS:
        vals = np.array([getattr(r, name) for r in reports if getattr(r, name) is not None], dtype=float)
        # sort so the floating-point sum does not depend on seed order
        vals = np.sort(vals)
        mean[name] = float(vals.mean()) if vals.size else None
        var[name] = float(vals.var()) if vals.size else None
    return SeedSummary(reports, mean, var)
