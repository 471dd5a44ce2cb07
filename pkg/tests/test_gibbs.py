import math

import numpy as np
import pytest

import torusgas as tg
from torusgas.gibbs import (GNZFunctional, GibbsChain, boltzmann_average_series,
                            density_profile, double_gnz_residual, estimate_k1,
                            estimate_k2, estimate_ursell2, exp_moment,
                            gnz_residual, mcmc_step, ruelle_probe, sample_gibbs,
                            sample_gibbs_rejection)
from torusgas.testfunctions import TestFunction

from oracles import (count_distribution, count_distribution_tail_bound,
                     k2_oracle)


def tiny_model():
    return tg.ModelSpec(tg.TorusDomain(1, 2.0),
                        tg.PairPotential.square_well(1.0, 0.5),
                        0.2, tg.JumpKernel.uniform_ball(0.3, 1))


def test_mcmc_step_records(poisson_model):
    chain = GibbsChain(poisson_model, seed=0)
    kinds = set()
    for _ in range(200):
        rec = mcmc_step(chain)
        kinds.add(rec["kind"])
        assert isinstance(rec["accepted"], bool)
    assert kinds == {"birth", "death", "disp"}
    total = sum(chain.counters[f"{k}_proposed"] for k in ("birth", "death", "disp"))
    assert total == 200


def test_poisson_stationary_moments(poisson_samples):
    ns = np.array([len(s) for s in poisson_samples])
    est = estimate_k1(poisson_samples)
    assert abs(est.z_against(0.2)) < 3
    # Poisson(2): mean = var = 2
    assert abs(ns.mean() - 2.0) < 0.08
    assert abs(ns.var() - 2.0) < 0.2


def test_hardcore_overlap_rejected(hardcore_model):
    samples = sample_gibbs(hardcore_model, 300, burn_in=1000, seed=1)
    for s in samples:
        if len(s) >= 2:
            d = np.abs(s.points[:, None, 0] - s.points[None, :, 0])
            d = np.minimum(d, hardcore_model.dom.L - d)
            np.fill_diagonal(d, 1.0)
            assert d.min() > hardcore_model.phi.hard_core


def test_count_distribution_matches_partition_oracle():
    model = tiny_model()
    samples = sample_gibbs(model, 40_000, burn_in=2000, seed=2)
    ns = np.array([len(s) for s in samples])
    n_max = 4
    oracle = count_distribution(model, n_max)
    tail = count_distribution_tail_bound(model, n_max)
    assert tail < 2e-4
    for n in range(n_max + 1):
        p_hat = float(np.mean(ns == n))
        se = math.sqrt(max(p_hat * (1 - p_hat), 1e-6) / len(ns)) * 2.0
        assert abs(p_hat - oracle[n]) <= 4 * se + tail, (n, p_hat, oracle[n])


def test_sample_gibbs_determinism(well_model):
    a = sample_gibbs(well_model, 50, burn_in=200, seed=33)
    b = sample_gibbs(well_model, 50, burn_in=200, seed=33)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.points, sb.points)


def test_sample_gibbs_bad_init(hardcore_model):
    bad = tg.Configuration([[5.0], [5.05]], hardcore_model.dom)
    with pytest.raises(ValueError, match="initial"):
        sample_gibbs(hardcore_model, 10, burn_in=10, seed=0, init=bad)


def test_lahht_warning():
    dom = tg.TorusDomain(1, 10.0)
    hot = tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.5), 0.4,
                       tg.JumpKernel.uniform_ball(0.5, 1))
    with pytest.warns(UserWarning, match="low-activity"):
        sample_gibbs(hot, 5, burn_in=10, seed=0)


def test_k1_below_z_for_positive_potential(well_samples, well_model):
    est = estimate_k1(well_samples)
    assert est.value + 3 * est.std_error < well_model.z
    assert est.value > 0


def test_k1_requires_samples(well_samples):
    with pytest.raises(ValueError):
        estimate_k1(well_samples[:50])


def test_translation_invariance_profiles(well_samples):
    prof = density_profile(well_samples, bins=8)
    k1 = estimate_k1(well_samples)
    for est in prof:
        z = (est.value - k1.value) / math.hypot(est.std_error, k1.std_error)
        assert abs(z) < 3.5
    # two half boxes agree
    half = density_profile(well_samples, bins=2)
    z = (half[0].value - half[1].value) / math.hypot(half[0].std_error,
                                                     half[1].std_error)
    assert abs(z) < 3


def test_k2_poisson_flat(poisson_samples, poisson_model):
    k2 = estimate_k2(poisson_samples, bins=10)
    target = poisson_model.z ** 2
    for v, se, cnt in zip(k2.values, k2.std_errors, k2.counts):
        if cnt == 0:
            continue
        assert abs(v - target) <= 3.5 * se


def test_k2_hardcore_zero_in_core(hardcore_model):
    samples = sample_gibbs(hardcore_model, 2000, burn_in=1500, seed=4)
    edges = np.array([0.0, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0])
    k2 = estimate_k2(samples, edges)
    assert 0 in k2.missing_bins and 1 in k2.missing_bins  # r < r_hc: no pairs
    assert k2.counts[3] > 0


def test_k2_matches_quadrature_oracle():
    model = tiny_model()
    samples = sample_gibbs(model, 30_000, burn_in=2000, seed=5)
    # bin edges aligned with the potential range so no bin straddles the jump
    edges = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    k2 = estimate_k2(samples, edges)
    oracle = k2_oracle(model, k2.centers, m_max=3)
    for v, se, o in zip(k2.values, k2.std_errors, oracle):
        assert abs(v - o) <= 4 * se + 0.02 * o, (v, o, se)


def test_ursell_poisson_zero(poisson_samples):
    edges, ests = estimate_ursell2(poisson_samples, bins=8)
    for est in ests:
        if est is not None:
            assert abs(est.z_against(0.0)) < 3.5


def test_ursell_signs(well_samples, well_model):
    edges, ests = estimate_ursell2(well_samples, bins=20)
    centers = 0.5 * (edges[:-1] + edges[1:])
    R = well_model.phi.range
    # short range: repulsion makes u2 negative and significant
    near = [e for c, e in zip(centers, ests) if c < R and e is not None]
    assert any(e.value < 0 and abs(e.z_against(0.0)) > 3 for e in near)
    far = [e for c, e in zip(centers, ests) if c >= 10 * R and e is not None]
    assert far and all(abs(e.z_against(0.0)) < 3.5 for e in far)


def test_gnz_poisson_plain(poisson_samples, poisson_model):
    f = TestFunction.step([4.0], [6.0], 1.0)
    res = gnz_residual(poisson_model, poisson_samples, GNZFunctional(f))
    assert abs(res.z_score) < 3.5
    # rhs is z*int(f) exactly per sample for phi=0
    assert math.isclose(res.rhs.value, 0.2 * 2.0, rel_tol=1e-9)


def test_gnz_alpha_identity_routes(well_samples, well_model):
    # lhs/int f estimates k1; rhs/int f estimates z E[e^{-E}]; their
    # agreement is the identity behind the limiting death rate
    from torusgas.stats import batch_means
    f = TestFunction.step([8.0], [12.0], 1.0)
    res = gnz_residual(well_model, well_samples, GNZFunctional(f))
    dom = well_model.dom
    window_series = np.array([f.pairing(s.points, dom) / 4.0
                              for s in well_samples])
    k1_series = np.array([len(s) / dom.volume for s in well_samples])
    d = batch_means(window_series - k1_series)
    assert abs(d.z_against(0.0)) < 3.5
    bavg = batch_means(boltzmann_average_series(well_model, well_samples))
    z2 = (res.rhs.value / 4.0 - well_model.z * bavg.value) / math.hypot(
        res.rhs.std_error / 4.0, well_model.z * bavg.std_error)
    assert abs(z2) < 3.5
    assert abs(res.z_score) < 3.5


def test_gnz_battery_interacting(well_samples, well_model):
    from torusgas.experiments import default_gnz_battery
    for fl in default_gnz_battery(well_model):
        res = gnz_residual(well_model, well_samples, fl)
        assert abs(res.z_score) < 4.0, (fl.label, res.z_score)


@pytest.mark.parametrize("phi,rate_cap", [
    (tg.PairPotential.zero(), None),
    (tg.PairPotential.triangle(0.7, 0.8), None),
    (tg.PairPotential.hardcore_square_well(0.1, 1.0, 0.5), None),
    (tg.PairPotential.lennard_jones_truncated(0.25, 0.3, 1.0, B=0.15), 50.0),
])
def test_gnz_battery_every_builtin(phi, rate_cap):
    """The identity battery holds for every built-in potential at LA-HT
    parameters (moderate sample count, looser 4-sigma gate)."""
    from torusgas.experiments import default_gnz_battery
    from torusgas.gibbs import gnz_battery_residuals
    model = tg.ModelSpec(tg.TorusDomain(1, 20.0), phi, 0.2,
                         tg.JumpKernel.uniform_ball(0.5, 1), rate_cap=rate_cap)
    assert tg.lahht_check(model)[2]
    samples = sample_gibbs(model, 4000, burn_in=2500, seed=1000 + phi.kind_id)
    for res in gnz_battery_residuals(model, samples, default_gnz_battery(model)):
        assert abs(res.z_score) < 4.0, (phi.kind, res.label, res.z_score)


def test_gnz_rejects_degenerate():
    f = TestFunction.bump([5.0], 1.0, 0.0)
    with pytest.raises(ValueError, match="degenerate"):
        GNZFunctional(f)
    with pytest.raises(ValueError, match="degenerate"):
        GNZFunctional(TestFunction.bump([5.0], 1.0, 1.0), None, ("poly", (0.0,)))


def test_double_gnz_poisson_closed_form(poisson_samples, poisson_model):
    f = TestFunction.step([4.0], [6.0], 1.0)
    res = double_gnz_residual(poisson_model, poisson_samples, GNZFunctional(f))
    z, intf, intf2 = 0.2, 2.0, 2.0
    expect = z**2 * intf**2 + z * intf2
    assert abs(res.lhs.value - expect) <= 3.5 * res.lhs.std_error
    # the rhs is sample-independent for phi=0, so this is a float comparison
    assert abs(res.rhs.value - expect) <= 3.5 * res.rhs.std_error + 1e-12
    assert abs(res.z_score) < 3.5


def test_double_gnz_disjoint_support_factorizes(poisson_samples, poisson_model):
    # f away from psi, phi=0: E[f-sum^2 * g] = E[f-sum^2] E[g] under independence
    f = TestFunction.step([2.0], [3.0], 1.0)
    psi = TestFunction.step([7.0], [8.0], 0.5)
    res = double_gnz_residual(poisson_model, poisson_samples,
                              GNZFunctional(f, psi, ("exp",)))
    z, intf, intf2 = 0.2, 1.0, 1.0
    pair_part = z**2 * intf**2 + z * intf2
    e_g = math.exp(z * 1.0 * (math.exp(0.5) - 1.0))  # Poisson exp formula
    assert abs(res.rhs.value - pair_part * e_g) <= 4 * res.rhs.std_error
    assert abs(res.z_score) < 3.5


def test_double_gnz_interacting(well_samples, well_model):
    fl = GNZFunctional(TestFunction.bump([10.0], 1.0, 1.0),
                       TestFunction.bump([12.0], 1.0, 0.5), ("poly", (1.0, 0.3)))
    res = double_gnz_residual(well_model, well_samples, fl)
    assert abs(res.z_score) < 3.5


def test_exp_moment_poisson(poisson_samples, poisson_model):
    f = TestFunction.step([4.0], [5.0], math.log(2.0))
    res = exp_moment(poisson_model, poisson_samples, f)
    assert math.isclose(res.poisson_value, math.exp(0.2), rel_tol=1e-9)
    assert abs(res.estimate.value - res.poisson_value) \
        <= 3.5 * res.estimate.std_error


def test_exp_moment_zero_function(poisson_samples, poisson_model):
    f = TestFunction.bump([5.0], 1.0, 0.0)
    res = exp_moment(poisson_model, poisson_samples, f)
    assert res.estimate.value == 1.0
    assert res.estimate.std_error == 0.0


def test_exp_moment_series_consistency(well_samples, well_model):
    f = TestFunction.bump([10.0], 1.0, 0.6)
    res = exp_moment(well_model, well_samples, f, series_bins=40)
    assert res.series is not None
    assert res.series.consistent, (res.series.difference,
                                   res.series.combined_se,
                                   res.series.truncation_budget)


def test_ruelle_probe_poisson(poisson_samples, poisson_model):
    rep = ruelle_probe(poisson_samples, bins=20)
    assert rep.ok
    assert abs(rep.xi_hat - poisson_model.z) < 0.05


def test_ruelle_probe_interacting(well_samples, well_model):
    rep = ruelle_probe(well_samples, bins=20)
    assert rep.ok
    assert rep.xi_hat <= well_model.z + 3 * rep.k1.std_error + 0.05


def test_ruelle_probe_hardcore(hardcore_model):
    samples = sample_gibbs(hardcore_model, 1500, burn_in=1500, seed=6)
    rep = ruelle_probe(samples, bins=20)
    assert rep.ok


def test_chain_vs_rejection_sampler_moments(well_model):
    tiny = tg.ModelSpec(tg.TorusDomain(1, 10.0), well_model.phi, 0.2,
                        well_model.a)
    mc = sample_gibbs(tiny, 5000, burn_in=2000, seed=7)
    rej = sample_gibbs_rejection(tiny, 5000, seed=8)
    n_mc = np.array([len(s) for s in mc], dtype=float)
    n_rj = np.array([len(s) for s in rej], dtype=float)
    from torusgas.stats import batch_means
    for power in (1, 2):
        a = batch_means(n_mc ** power)
        b = batch_means(n_rj ** power)
        z = (a.value - b.value) / math.hypot(a.std_error, b.std_error)
        assert abs(z) < 3.5, (power, a.value, b.value)


def test_record_roundtrip(tmp_path, well_samples, well_model):
    from torusgas.recordio import read_records, write_records
    path = tmp_path / "samples.txt"
    subset = well_samples[:20]
    write_records(path, subset, well_model.model_hash, 101)
    meta, rows = read_records(path)
    assert meta.model_hash == well_model.model_hash
    assert meta.d == 1 and meta.L == 20.0
    assert len(rows) == 20
    for (t, cfg), orig in zip(rows, subset):
        assert t is None
        assert np.allclose(cfg.points, orig.points, atol=1e-7)

    times = [0.5 * i for i in range(5)]
    write_records(path, subset[:5], well_model.model_hash, 101, times=times)
    meta, rows = read_records(path)
    assert [t for t, _ in rows] == times
