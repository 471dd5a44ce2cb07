"""Deterministic quadrature with breakpoint-aligned composite rules.

The integrands here are piecewise smooth: indicator-edged jump kernels,
square-well energy weights and compactly supported test functions all jump at
known positions.  Aligning subintervals to those positions makes a low-order
Gauss-Legendre rule exact on the flat parts and high-order accurate on the
smooth parts, so Richardson doubling can certify the result.
"""

from __future__ import annotations

import math

import numpy as np

_GL_OFF = 0.5 / math.sqrt(3.0)  # 2-point Gauss-Legendre offsets from midpoints


class QuadratureError(RuntimeError):
    """Raised when Richardson doubling flags insufficient resolution."""


def line_rule(lo: float, hi: float, breakpoints, max_spacing: float
              ) -> tuple[np.ndarray, np.ndarray]:
    """Composite 2-point Gauss-Legendre nodes/weights on [lo, hi].

    Interior breakpoints become subinterval boundaries; every subinterval is
    further split to length <= max_spacing.
    """
    if hi <= lo:
        raise ValueError("empty integration interval")
    bps = np.asarray(breakpoints, dtype=float)
    bps = np.unique(bps[(bps > lo + 1e-12) & (bps < hi - 1e-12)])
    edges = np.concatenate([[lo], bps, [hi]])
    lengths = np.diff(edges)
    keep = lengths > 1e-14
    starts, lengths = edges[:-1][keep], lengths[keep]
    counts = np.maximum(1, np.ceil(lengths / max_spacing).astype(int))
    piece = np.repeat(np.arange(len(counts)), counts)
    local = np.arange(counts.sum()) - np.repeat(
        np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    h = (lengths / counts)[piece]
    mids = starts[piece] + (local + 0.5) * h
    nodes = np.concatenate([mids - _GL_OFF * h, mids + _GL_OFF * h])
    weights = np.concatenate([0.5 * h, 0.5 * h])
    return nodes, weights


def wrap_points(points, L: float) -> np.ndarray:
    out = np.mod(np.asarray(points, dtype=float), L)
    return np.where(out >= L, out - L, out)


def torus_rule(L: float, breakpoints, max_spacing: float
               ) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoint-aligned rule covering the whole circle [0, L)."""
    return line_rule(0.0, L, wrap_points(breakpoints, L), max_spacing)


def integrate_1d(f, lo: float, hi: float, breakpoints, max_spacing: float,
                 check: bool = True, rtol: float = 1e-4) -> float:
    """Integrate a vectorized integrand, optionally gating on Richardson
    doubling: halving the spacing must move the value by < rtol relative."""
    x, w = line_rule(lo, hi, breakpoints, max_spacing)
    val = float(np.dot(w, f(x)))
    if check:
        x2, w2 = line_rule(lo, hi, breakpoints, 0.5 * max_spacing)
        val2 = float(np.dot(w2, f(x2)))
        denom = max(abs(val), abs(val2))
        if denom > 1e-14 and abs(val - val2) > rtol * denom:
            raise QuadratureError(
                f"Richardson doubling moved the integral by "
                f"{abs(val - val2) / denom:.2e} relative (> {rtol:g}); "
                "refine max_spacing or add breakpoints")
    return val


def richardson_deviation(f, lo: float, hi: float, breakpoints,
                         max_spacing: float) -> float:
    """Relative change of the integral under one spacing halving."""
    x, w = line_rule(lo, hi, breakpoints, max_spacing)
    x2, w2 = line_rule(lo, hi, breakpoints, 0.5 * max_spacing)
    v1, v2 = float(np.dot(w, f(x))), float(np.dot(w2, f(x2)))
    denom = max(abs(v1), abs(v2))
    return 0.0 if denom <= 1e-14 else abs(v1 - v2) / denom


def integrate_2d_tensor(f, lo, hi, max_spacing: float, rtol: float = 1e-4,
                        max_refine: int = 6) -> float:
    """Tensor midpoint rule on a box with refinement until the Richardson
    gate passes; raises QuadratureError if it never does."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    spans = hi - lo
    counts = np.maximum(1, np.ceil(spans / max_spacing).astype(int))
    prev = None
    for _ in range(max_refine + 1):
        axes = [lo[k] + (np.arange(counts[k]) + 0.5) * spans[k] / counts[k]
                for k in range(2)]
        gx, gy = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        cell = spans[0] / counts[0] * spans[1] / counts[1]
        val = float(np.sum(f(pts)) * cell)
        if prev is not None:
            denom = max(abs(val), abs(prev))
            if denom <= 1e-14 or abs(val - prev) <= rtol * denom:
                return val
        prev = val
        counts = counts * 2
    raise QuadratureError(
        "tensor-grid refinement did not converge to the requested tolerance")


def importance_integral(f_over_density, draws: np.ndarray, mass: float
                        ) -> tuple[float, float]:
    """Monte Carlo integral of g against a density of known mass.

    `draws` come from density/mass; the integral of g * density is
    mass * mean(g(draws)).  Returns (value, standard error).
    """
    vals = mass * np.asarray(f_over_density(draws), dtype=float)
    n = len(vals)
    if n < 2:
        raise ValueError("need at least two draws")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))
