"""Independent oracles for the statistical tests.

Everything here deliberately avoids the package's samplers and estimators:
grand-canonical quantities on tiny boxes come from truncated partition sums
with quasi-Monte-Carlo (scrambled Sobol) integration of the Boltzmann
factors, which is deterministic given the scramble seed.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import qmc

from torusgas.model import ModelSpec


def _pair_energy_sum(pts: np.ndarray, model: ModelSpec) -> np.ndarray:
    """U for a batch of configurations, shape (m, n, d) -> (m,)."""
    L = model.dom.L
    m, n, _ = pts.shape
    total = np.zeros(m)
    for i in range(n - 1):
        for j in range(i + 1, n):
            dd = np.abs(pts[:, i, :] - pts[:, j, :])
            dd = np.minimum(dd, L - dd)
            r = np.sqrt(np.sum(dd * dd, axis=-1))
            total = total + np.asarray(model.phi.at_distance(r))
    return total


def _sobol(n_points: int, dim: int, seed: int) -> np.ndarray:
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    return eng.random(n_points)


def boltzmann_volume_ratio(model: ModelSpec, n: int, n_points: int = 1 << 18,
                           seed: int = 9) -> float:
    """Z_n / L^{n d} = mean of e^{-U} over n iid uniform points."""
    if n < 2:
        return 1.0
    d = model.dom.d
    u = _sobol(n_points, n * d, seed).reshape(-1, n, d) * model.dom.L
    with np.errstate(over="ignore"):
        w = np.exp(-_pair_energy_sum(u, model))
    return float(np.mean(w))


def count_distribution(model: ModelSpec, n_max: int, seed: int = 9) -> np.ndarray:
    """P(|gamma| = n) for n = 0..n_max from the truncated partition sum."""
    L, d = model.dom.L, model.dom.d
    terms = []
    for n in range(n_max + 1):
        zn = boltzmann_volume_ratio(model, n, seed=seed + n)
        terms.append(model.z**n * (L**d) ** n * zn / math.factorial(n))
    terms = np.asarray(terms)
    return terms / terms.sum()


def count_distribution_tail_bound(model: ModelSpec, n_max: int) -> float:
    """Upper bound on the probability mass ignored by the truncation."""
    lam = model.z * model.dom.volume  # e^{-U} <= 1 for positive potentials
    tail = 0.0
    term = lam ** (n_max + 1) / math.factorial(n_max + 1)
    for _ in range(60):
        tail += term
        term *= lam / (n_max + 2)
    return tail * math.exp(lam)


def k2_oracle(model: ModelSpec, r_values: np.ndarray, m_max: int = 3,
              n_points: int = 1 << 16, seed: int = 21) -> np.ndarray:
    """Two-point correlation at given separations on a tiny box.

    k2(r) = z^2 e^{-phi(r)} * E_extra[ prod_j e^{-phi(u_j-x1)-phi(u_j-x2)}
    e^{-U(extra)} ] summed over the number of extra points, normalized by the
    truncated partition sum.  Exact up to the truncation at m_max extras.
    """
    L, d = model.dom.L, model.dom.d
    assert d == 1, "oracle wired for d=1"
    z = model.z
    x1 = 0.0

    def phi_r(r):
        return np.asarray(model.phi.at_distance(np.abs(r)))

    xi_terms = [z**n * L**n * boltzmann_volume_ratio(model, n, seed=seed + n)
                / math.factorial(n) for n in range(m_max + 3)]
    xi = sum(xi_terms)

    out = np.empty(len(r_values))
    for k, r in enumerate(r_values):
        x2 = float(r)
        acc = 0.0
        for m in range(m_max + 1):
            if m == 0:
                mean_w = 1.0
            else:
                u = _sobol(n_points, m, seed + 100 + m) * L
                dd1 = np.minimum(np.abs(u - x1), L - np.abs(u - x1))
                dd2 = np.minimum(np.abs(u - x2), L - np.abs(u - x2))
                with np.errstate(over="ignore"):
                    w = np.exp(-phi_r(dd1).sum(axis=1) - phi_r(dd2).sum(axis=1))
                if m >= 2:
                    w = w * np.exp(-_pair_energy_sum(u[:, :, None], model))
                mean_w = float(np.mean(w))
            acc += z**m * L**m * mean_w / math.factorial(m)
        with np.errstate(over="ignore"):
            cross = math.exp(-float(phi_r(np.minimum(abs(x2 - x1),
                                                     L - abs(x2 - x1)))))
        out[k] = z**2 * cross * acc / xi
    return out
