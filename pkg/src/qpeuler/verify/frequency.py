"""Spectral peaks of sampled time series, matched against combinations k . nu / 2 pi."""

from __future__ import annotations

import itertools
from typing import Callable
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from scipy.signal.windows import hann

MIN_SAMPLES = 64
MEDIAN_FACTOR = 10.0


@dataclass(frozen=True)
class Peak:
    frequency: float
    magnitude: float
    combination: tuple[int, ...] | None
    predicted: float | None
    deviation: float | None
    matched: bool


def combinations(nu: np.ndarray, max_order: int, harmonics_only: bool = False
                 ) -> list[tuple[tuple[int, ...], float]]:
    """All nonnegative frequencies k . nu / 2 pi with 0 < |k|_1 <= max_order.

    With ``harmonics_only`` k has a single nonzero entry, i.e. the table holds
    the multiples of each fundamental and no mixed tones.
    """
    out = []
    rng = range(-max_order, max_order + 1)
    for k in itertools.product(rng, repeat=len(nu)):
        if harmonics_only and sum(c != 0 for c in k) > 1:
            continue
        if 0 < sum(abs(c) for c in k) <= max_order:
            f = float(np.dot(k, nu)) / (2.0 * np.pi)
            if f >= 0:
                out.append((k, f))
    return out


def _refine(mag: np.ndarray, i: int) -> float:
    """Sub-bin offset from a parabola through the log magnitudes around bin i."""
    if i <= 0 or i >= mag.size - 1:
        return 0.0
    a, b, c = np.log(mag[i - 1:i + 2] + 1e-300)
    denom = a - 2 * b + c
    return 0.0 if denom == 0 else 0.5 * (a - c) / denom


def frequency_analysis(t, g, expected_nu, tolerance: float | None = None, max_order: int = 3,
                       rel_height: float = 0.05, harmonics_only: bool = False) -> dict:
    """Hann-windowed spectrum of g(t); peaks above 10x the median are matched to k . nu / 2 pi.

    Dominant peaks are those above ``rel_height`` times the largest one.  The
    verdict passes when every dominant peak lies within ``tolerance`` (default
    1/T) of a predicted frequency with |k|_1 <= ``max_order``.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    nu = np.atleast_1d(np.asarray(expected_nu, dtype=float))
    if t.shape != g.shape or t.ndim != 1:
        raise ValueError("t and g must be 1-d arrays of equal length")
    if t.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {t.size}")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12 * abs(dt)):
        raise ValueError("sampling must be uniform")
    duration = t[-1] - t[0] + dt
    slowest = np.abs(nu[nu != 0]).min() / (2 * np.pi) if np.any(nu != 0) else 0.0
    if slowest and duration * slowest < 2.0:
        raise ValueError(f"duration {duration:.3g} covers fewer than two periods of the slowest frequency")
    tol = 1.0 / duration if tolerance is None else float(tolerance)
    window = hann(t.size, sym=False)
    spectrum = np.abs(np.fft.rfft((g - g.mean()) * window))
    freqs = np.fft.rfftfreq(t.size, dt)
    scale = max(float(np.abs(g).max()), 1.0)
    floor = max(MEDIAN_FACTOR * float(np.median(spectrum)), 1e-9 * scale * window.sum())
    idx, _ = find_peaks(spectrum, height=floor)
    table = combinations(nu, max_order, harmonics_only) if np.any(nu != 0) else []
    peaks: list[Peak] = []
    top = spectrum[idx].max() if idx.size else 0.0
    for i in idx:
        if spectrum[i] < rel_height * top:
            continue
        f = float(freqs[i] + _refine(spectrum, i) * (freqs[1] - freqs[0]))
        best = min(table, key=lambda kf: abs(kf[1] - f), default=None)
        dev = None if best is None else abs(best[1] - f)
        peaks.append(Peak(f, float(spectrum[i]), None if best is None else best[0],
                          None if best is None else best[1], dev, dev is not None and dev <= tol))
    return {
        "duration": float(duration),
        "tolerance": tol,
        "max_order": max_order,
        "harmonics_only": harmonics_only,
        "peaks": peaks,
        "nonzero_peaks": len(peaks),
        "pass": all(p.matched for p in peaks),
    }


def probe_signal(velocity: Callable[[np.ndarray, np.ndarray], np.ndarray], t, points) -> np.ndarray:
    """g(t) = sum over probes and components of u(t, probe), evaluated for all t at once."""
    t = np.asarray(t, dtype=float)
    pts = np.asarray(points, dtype=float)
    total = np.zeros(t.size)
    for p in pts:
        total += np.asarray(velocity(t[:, None], np.broadcast_to(p, (t.size, p.size)))).sum(axis=-1)
    return total
