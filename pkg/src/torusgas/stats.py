"""Monte Carlo estimate bookkeeping: batch means, autocorrelation, pairing.

Every statistical claim in the package is carried by an `Estimate` whose
standard error accounts for chain autocorrelation through batch means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo value with batch-means standard error."""

    value: float
    std_error: float
    n_samples: int
    n_eff: float

    def z_against(self, target: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.value == target else math.inf
        return (self.value - target) / self.std_error

    def __str__(self) -> str:
        return (f"{self.value:.6g} +- {self.std_error:.2g} "
                f"(n={self.n_samples}, n_eff={self.n_eff:.0f})")


def batch_means(values, n_batches: int = 20) -> Estimate:
    """Batch-means estimate; n_batches >= 20 keeps the error bar honest for
    autocorrelated series."""
    x = np.asarray(values, dtype=float).ravel()
    n = len(x)
    if n < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} values, got {n}")
    m = n // n_batches
    used = x[n - m * n_batches:]          # drop the head, keep full batches
    bm = used.reshape(n_batches, m).mean(axis=1)
    se = float(np.std(bm, ddof=1) / math.sqrt(n_batches))
    var = float(np.var(used, ddof=1))
    n_eff = var / se**2 if se > 0 else float(len(used))
    return Estimate(float(used.mean()), se, n, n_eff)


def batch_transform(series: dict[str, np.ndarray], fn, n_batches: int = 20) -> Estimate:
    """Batch-means estimate of fn applied to per-batch means of several series.

    Captures cross-correlations (for example u2 = k2 - k1^2 from the same
    chain) that independent error propagation would miss.
    """
    keys = list(series)
    n = len(series[keys[0]])
    if any(len(series[k]) != n for k in keys):
        raise ValueError("all series must share a length")
    if n < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} values, got {n}")
    m = n // n_batches
    bvals = []
    for b in range(n_batches):
        sl = slice(n - (n_batches - b) * m, n - (n_batches - b - 1) * m)
        bvals.append(fn(**{k: float(np.mean(series[k][sl])) for k in keys}))
    bvals = np.asarray(bvals, dtype=float)
    se = float(np.std(bvals, ddof=1) / math.sqrt(n_batches))
    full = fn(**{k: float(np.mean(series[k][n - m * n_batches:])) for k in keys})
    return Estimate(float(full), se, n, float(n_batches))


def paired_z(a, b, n_batches: int = 20) -> tuple[Estimate, float]:
    """Estimate of mean(a - b) with its z-score against zero.

    The right 'combined sigma' when both sides come from the same samples.
    """
    diff = batch_means(np.asarray(a, float) - np.asarray(b, float), n_batches)
    return diff, diff.z_against(0.0)


def integrated_autocorr_time(x, c: float = 6.0) -> float:
    """Integrated autocorrelation time with an automatic Sokal window.

    Returns a value >= 1 (in units of the series spacing); short or constant
    series fall back to 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n].real / (var * n)
    tau = 1.0
    for w in range(1, n):
        tau = 1.0 + 2.0 * float(np.sum(acf[1:w + 1]))
        if w >= c * tau:
            break
    return max(1.0, tau)


def merge_batch_collections(parts: list[np.ndarray]) -> np.ndarray:
    """Associative merge of per-chain batch-mean collections."""
    return np.concatenate([np.asarray(p, float).ravel() for p in parts])
