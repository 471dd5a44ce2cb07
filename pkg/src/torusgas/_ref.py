"""Pure-numpy kernel backend.

Same API as the compiled `_hot` extension; selected at import time by
`torusgas.kernels` when the extension is unavailable (or forced via the
TORUSGAS_PURE_PYTHON environment variable).

Potential encoding shared by both backends:
    kind 0: zero
    kind 1: square well        p = (J, R, -, -)      phi = J for r <= R
    kind 2: triangle           p = (J, R, -, -)      phi = J (1 - r/R) for r <= R
    kind 3: hard core + well   p = (J, R, r_hc, -)   phi = +inf for r <= r_hc
    kind 4: truncated LJ       p = (eps, R, sigma, -)
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_LJ_CAP = 1e150  # (sigma/r)^6 above this is treated as a hard-core overlap


def min_image_abs(delta: np.ndarray, L: float) -> np.ndarray:
    """Componentwise |minimal image| of a coordinate difference, in [0, L/2]."""
    dd = np.abs(delta)
    dd = dd - L * np.floor(dd / L)
    return np.where(dd > 0.5 * L, L - dd, dd)


def phi_of_dist(dist, kind: int, p: np.ndarray):
    """Radial pair potential evaluated at distances (vectorized)."""
    if np.ndim(dist) == 0:
        return float(phi_of_dist(np.asarray([dist], dtype=float), kind, p)[0])
    dist = np.asarray(dist, dtype=float)
    if kind == 0:
        return np.zeros_like(dist)
    J, R = p[0], p[1]
    if kind == 1:
        return np.where(dist <= R, J, 0.0)
    if kind == 2:
        return np.where(dist <= R, J * (1.0 - dist / R), 0.0)
    if kind == 3:
        r_hc = p[2]
        return np.where(dist <= r_hc, np.inf, np.where(dist <= R, J, 0.0))
    if kind == 4:
        eps, sigma = p[0], p[2]
        with np.errstate(divide="ignore", over="ignore"):
            sr6 = (sigma / np.maximum(dist, 1e-300)) ** 6
        sr6 = np.minimum(sr6, _LJ_CAP)
        val = np.where(sr6 >= _LJ_CAP, np.inf, 4.0 * eps * (sr6 * sr6 - sr6))
        return np.where(dist <= R, val, 0.0)
    raise ValueError(f"unknown potential kind {kind}")


def _dists_to_point(pts: np.ndarray, x: np.ndarray, L: float) -> np.ndarray:
    dd = min_image_abs(pts - x, L)
    if dd.ndim == 1:
        return dd
    return np.sqrt(np.sum(dd * dd, axis=-1))


def rel_energy(pts: np.ndarray, x: np.ndarray, L: float, kind: int, p: np.ndarray) -> float:
    """Sum of phi(x - y) over all configuration points y (minimal image)."""
    if kind == 0 or len(pts) == 0:
        return 0.0
    return float(np.sum(phi_of_dist(_dists_to_point(pts, x, L), kind, p)))


def rel_energy_excl(pts: np.ndarray, skip: int, x: np.ndarray, L: float,
                    kind: int, p: np.ndarray) -> float:
    """rel_energy against the configuration with point `skip` removed."""
    if kind == 0 or len(pts) <= 1:
        return 0.0
    e = phi_of_dist(_dists_to_point(pts, x, L), kind, p)
    e[skip] = 0.0
    return float(np.sum(e))


def rel_energy_grid(pts: np.ndarray, grid: np.ndarray, L: float,
                    kind: int, p: np.ndarray) -> np.ndarray:
    """Relative energy of every grid point against the configuration."""
    grid = np.atleast_2d(grid)
    m = grid.shape[0]
    if kind == 0 or len(pts) == 0:
        return np.zeros(m)
    dd = min_image_abs(grid[:, None, :] - pts[None, :, :], L)
    dist = np.sqrt(np.sum(dd * dd, axis=-1))
    return np.sum(phi_of_dist(dist, kind, p), axis=1)


def total_energy(pts: np.ndarray, L: float, kind: int, p: np.ndarray) -> float:
    """Energy summed over unordered pairs."""
    n = len(pts)
    if kind == 0 or n < 2:
        return 0.0
    total = 0.0
    for i in range(n - 1):
        total += float(np.sum(phi_of_dist(
            _dists_to_point(pts[i + 1:], pts[i], L), kind, p)))
    return total


def pair_dist_hist(pts: np.ndarray, L: float, edges: np.ndarray) -> np.ndarray:
    """Histogram of unordered-pair minimal-image distances.

    Bins are [e_k, e_{k+1}); a distance exactly on the last edge lands in the
    last bin so the covered range is effectively (e_0, e_last].
    """
    n = len(pts)
    nb = len(edges) - 1
    counts = np.zeros(nb, dtype=np.int64)
    if n < 2:
        return counts
    for i in range(n - 1):
        dist = _dists_to_point(pts[i + 1:], pts[i], L)
        idx = np.searchsorted(edges, dist, side="right") - 1
        idx = np.where((idx == nb) & (dist == edges[-1]), nb - 1, idx)
        ok = (idx >= 0) & (idx < nb)
        np.add.at(counts, idx[ok], 1)
    return counts


def run_proposals(buf: np.ndarray, n: int, L: float, kind: int, p: np.ndarray,
                  z: float, p_birth: float, p_death: float, disp_scale: float,
                  u: np.ndarray) -> tuple[int, np.ndarray]:
    """Metropolis-Hastings proposals for the grand-canonical chain.

    One row of `u` per proposal: (move selector, particle selector, d
    coordinate draws, acceptance draw); every row consumes the same layout so
    the random stream is backend-independent.  Acceptance ratios target the
    density proportional to z^n e^{-U} dx/n!:

        birth:        z V exp(-E(x, gamma)) / (n+1)
        death:        n exp(+E(x, gamma\\x)) / (z V)
        displacement: exp(-[E(x', gamma\\x) - E(x, gamma\\x)])

    Mutates `buf` in place (capacity is the caller's problem) and returns the
    new point count plus per-move (proposed, accepted) counters.
    """
    d = buf.shape[1]
    V = L ** d
    counts = np.zeros(6, dtype=np.int64)  # pb, ab, pd, ad, pm, am
    for row in u:
        u_move = row[0]
        u_pick = row[1]
        u_coord = row[2:2 + d]
        u_acc = row[2 + d]
        if u_move < p_birth:
            counts[0] += 1
            x = u_coord * L
            e = rel_energy(buf[:n], x, L, kind, p)
            acc = 0.0 if math.isinf(e) else z * V * math.exp(-e) / (n + 1)
            if u_acc < acc:
                buf[n] = x
                n += 1
                counts[1] += 1
        elif u_move < p_birth + p_death:
            counts[2] += 1
            if n == 0:
                continue
            i = min(int(u_pick * n), n - 1)
            e = rel_energy_excl(buf[:n], i, buf[i], L, kind, p)
            acc = math.inf if math.isinf(e) else n * math.exp(e) / (z * V)
            if u_acc < acc:
                buf[i] = buf[n - 1]
                n -= 1
                counts[3] += 1
        else:
            counts[4] += 1
            if n == 0:
                continue
            i = min(int(u_pick * n), n - 1)
            x_new = buf[i] + disp_scale * (2.0 * u_coord - 1.0)
            x_new = x_new - L * np.floor(x_new / L)
            x_new = np.where(x_new >= L, x_new - L, x_new)
            e_new = rel_energy_excl(buf[:n], i, x_new, L, kind, p)
            if math.isinf(e_new):
                continue
            e_old = rel_energy_excl(buf[:n], i, buf[i], L, kind, p)
            acc = math.inf if math.isinf(e_old) else math.exp(e_old - e_new)
            if u_acc < acc:
                buf[i] = x_new
                counts[5] += 1
    return n, counts
