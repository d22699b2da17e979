"""Window-function smoothing applied independently within index segments."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from hzflux.data import TemperatureField

__all__ = [
    "WindowKind",
    "WindowFilter",
    "window_coefficients",
    "make_filter",
    "smooth_segment",
    "smooth_by_segments",
    "select_window_length",
]


class WindowKind(str, enum.Enum):
    FLAT = "Flat"
    HANNING = "Hanning"
    HAMMING = "Hamming"
    BLACKMAN = "Blackman"
    BARTLETT = "Bartlett"


def _raw(kind: WindowKind, n: np.ndarray, N: int) -> np.ndarray:
    c1 = np.cos(2 * np.pi * n / N)
    if kind is WindowKind.FLAT:
        return np.full(n.shape, 1.0 / N)
    if kind is WindowKind.HANNING:
        return 0.5 + 0.5 * c1
    if kind is WindowKind.HAMMING:
        return 0.54 + 0.46 * c1
    if kind is WindowKind.BLACKMAN:
        # centred form: peak at n = 0, zero at the ends
        return 0.42 + 0.5 * c1 + 0.08 * np.cos(4 * np.pi * n / N)
    return 1.0 - 2.0 * np.abs(n) / N


def window_coefficients(kind, N: int) -> np.ndarray:
    """Normalized taps for ``n = -N/2 .. N/2`` (``N + 1`` values, ``N`` even).

    Examples
    --------
    >>> window_coefficients("Flat", 2)
    array([0.33333333, 0.33333333, 0.33333333])
    """
    kind = WindowKind(kind)
    if int(N) != N or N < 2 or N % 2:
        raise ValueError(f"window length must be an even integer >= 2, got {N}")
    N = int(N)
    n = np.arange(-N // 2, N // 2 + 1)
    raw = _raw(kind, n, N)
    c = raw / raw.sum()
    # enforce exact symmetry against rounding in cos
    return 0.5 * (c + c[::-1])


@dataclass(frozen=True)
class WindowFilter:
    kind: WindowKind
    length_N: int
    coefficients: np.ndarray

    @property
    def half_width(self) -> int:
        return self.length_N // 2


def make_filter(kind, N: int) -> WindowFilter:
    coeffs = window_coefficients(kind, N)
    coeffs.setflags(write=False)
    return WindowFilter(WindowKind(kind), int(N), coeffs)


def smooth_segment(series, filt: WindowFilter) -> np.ndarray:
    """Zero-padded convolution returning a series of the input's length.

    Within half a window of either end the missing samples count as zero, so
    edge values are pulled toward zero; interior values are weighted means.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be a non-empty vector")
    # symmetric taps, so correlation and convolution coincide
    return np.convolve(x, filt.coefficients, mode="full")[filt.half_width : filt.half_width + x.size]


def _check_segments(segments: Iterable[tuple[int, int]], n: int) -> list[tuple[int, int]]:
    segs = sorted((int(a), int(b)) for a, b in segments)
    pos = 0
    for a, b in segs:
        if a >= b:
            raise ValueError(f"empty or reversed segment [{a}, {b})")
        if a < pos:
            raise ValueError(f"segment [{a}, {b}) overlaps a previous segment")
        if a > pos:
            raise ValueError(f"segments leave [{pos}, {a}) uncovered")
        pos = b
    if pos != n:
        raise ValueError(f"segments cover [0, {pos}) but the series has {n} samples")
    return segs


def smooth_by_segments(field: TemperatureField, filt: WindowFilter, segments) -> TemperatureField:
    """Smooth every depth column separately inside each segment.

    ``segments`` must be disjoint half-open ranges covering every time index.
    """
    segs = _check_segments(segments, field.n_times)
    out = np.empty_like(field.values)
    for a, b in segs:
        for j in range(field.depths_m.size):
            out[a:b, j] = smooth_segment(field.values[a:b, j], filt)
    return field.with_values(out)


def select_window_length(candidates: Sequence[int], objective: Callable[[int], float]) -> tuple[int, dict]:
    """Candidate with the smallest objective; ties go to the smaller ``N``.

    Returns the winner and the objective value of every candidate.
    """
    if not candidates:
        raise ValueError("no candidate window lengths")
    scores = {int(N): float(objective(int(N))) for N in candidates}
    best = min(sorted(scores), key=lambda N: scores[N])
    return best, scores
