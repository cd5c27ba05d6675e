"""Waveform analysis: log-envelope decay fit, cross-correlation delay, FFT spectrum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientPeaksError,
    NoDecayError,
    SamplingError,
    ShapeError,
    UndefinedCorrelationError,
)


@dataclass(frozen=True)
class DecayFit:
    t1: float
    intercept: float
    r_squared: float
    peaks_used: int


def _uniform_dt(t: np.ndarray, rtol: float = 1e-6) -> float:
    if t.ndim != 1 or t.size < 2:
        raise SamplingError("need at least two time samples")
    d = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0 or np.max(np.abs(d - dt)) > rtol * dt:
        raise SamplingError("samples are not uniformly spaced")
    return float(dt)


def envelope_peaks(v: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Indices of interior local maxima of |v| strictly above ``floor``.

    A flat top counts once, at its first sample.
    """
    a = np.abs(np.asarray(v, dtype=float))
    if a.size < 3:
        return np.array([], dtype=int)
    left = a[1:-1] > a[:-2]
    right = a[1:-1] >= a[2:]
    idx = np.nonzero(left & right)[0] + 1
    return idx[a[idx] > floor]


def t1_fit(t, v, floor: float = 0.0, mode: str = "auto") -> DecayFit:
    """Fit ln|v| at envelope points to a line; T1 = -1/slope.

    ``mode`` selects the envelope points: ``peaks`` (local maxima of |v|),
    ``samples`` (every sample above ``floor``) or ``auto``, which uses all
    samples when |v| never increases and local maxima otherwise.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ShapeError("t and v must be 1-D arrays of equal length")
    a = np.abs(v)
    if mode == "auto":
        mode = "samples" if a.size >= 2 and np.all(np.diff(a) <= 0) else "peaks"
    if mode == "samples":
        idx = np.nonzero(a > floor)[0]
    elif mode == "peaks":
        idx = envelope_peaks(v, floor)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if idx.size < 3:
        raise InsufficientPeaksError(f"found {idx.size} envelope points, need at least 3")
    x = t[idx]
    y = np.log(a[idx])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    if not slope < 0:
        raise NoDecayError(f"envelope does not decay (slope {slope:.3g})")
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(t1=-1.0 / slope, intercept=float(intercept),
                    r_squared=min(1.0, max(0.0, r2)), peaks_used=int(idx.size))


def cross_correlation(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Normalized cross-correlation c[k] = sum_n a'[n] b'[n+k] / (N sigma_a sigma_b).

    Returns (lags, c) for lags -(N-1)..(N-1).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("a and b must be 1-D arrays of equal length")
    n = a.size
    a0 = a - a.mean()
    b0 = b - b.mean()
    sa = math.sqrt(float(np.dot(a0, a0)))
    sb = math.sqrt(float(np.dot(b0, b0)))
    if sa == 0.0 or sb == 0.0:
        raise UndefinedCorrelationError("zero-variance input")
    c = np.correlate(b0, a0, mode="full") / (sa * sb)
    return np.arange(-(n - 1), n), c


def estimate_delay(a, b, dt: float) -> tuple[float, float]:
    """Lag of b relative to a at the largest |correlation|; (delay, signed peak)."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    lags, c = cross_correlation(a, b)
    mag = np.abs(c)
    best = mag.max()
    ties = np.nonzero(mag >= best * (1.0 - 1e-12))[0]
    k = ties[np.argmin(np.abs(lags[ties]))]
    return float(lags[k] * dt), float(c[k])


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def spectrum(t, v, window: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Single-sided DFT magnitude |X_k| after zero-padding to a power of two.

    Bins are spaced 1/(N dt) with N the padded length.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.shape != v.shape:
        raise ShapeError("t and v must have equal length")
    dt = _uniform_dt(t)
    x = v
    if window in (None, "none"):
        pass
    elif window == "hann":
        x = v * np.hanning(v.size)
    else:
        raise ValueError(f"unknown window {window!r}")
    n = next_pow2(v.size)
    X = np.fft.rfft(x, n)
    return np.fft.rfftfreq(n, dt), np.abs(X)


def spectral_energy(magnitude: np.ndarray, n: int) -> float:
    """Energy sum |x|^2 recovered from a single-sided spectrum of padded length n."""
    m2 = np.asarray(magnitude, dtype=float) ** 2
    inner = m2[1:-1] if n % 2 == 0 else m2[1:]
    edge = m2[0] + (m2[-1] if n % 2 == 0 else 0.0)
    return float((edge + 2.0 * inner.sum()) / n)


def parseval_residual(t, v) -> float:
    """Relative mismatch between time-domain and spectral energy."""
    v = np.asarray(v, dtype=float)
    _, mag = spectrum(t, v)
    e_time = float(np.dot(v, v))
    e_freq = spectral_energy(mag, next_pow2(v.size))
    return abs(e_time - e_freq) / e_time if e_time else abs(e_freq)
