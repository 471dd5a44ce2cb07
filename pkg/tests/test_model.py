import math

import numpy as np
import pytest
from scipy import integrate

import torusgas as tg
from torusgas import kernels
from torusgas.model import RateBoundError, a_eps_eval


def test_phi_eval_examples():
    zero = tg.PairPotential.zero()
    assert tg.phi_eval(zero, [0.3]) == 0.0
    sw = tg.PairPotential.square_well(1.0, 0.5)
    assert tg.phi_eval(sw, [0.3]) == 1.0
    assert tg.phi_eval(sw, [0.6]) == 0.0
    hc = tg.PairPotential.hardcore_square_well(0.1, 1.0, 0.5)
    assert math.isinf(tg.phi_eval(hc, [0.05]))


def test_potential_symmetry_positivity_and_lower_bound():
    rng = np.random.default_rng(0)
    pots = [tg.PairPotential.square_well(1.0, 0.5),
            tg.PairPotential.triangle(0.7, 0.9),
            tg.PairPotential.hardcore_square_well(0.1, 2.0, 0.5),
            tg.PairPotential.lennard_jones_truncated(0.3, 0.5, 1.0, B=1.0)]
    for phi in pots:
        xs = rng.normal(scale=0.7, size=(500, 1))
        v_plus = np.array([phi(x) for x in xs])
        v_minus = np.array([phi(-x) for x in xs])
        both_inf = np.isinf(v_plus) & np.isinf(v_minus)
        assert np.all(both_inf | np.isclose(v_plus, v_minus))
        assert np.all(v_plus[np.isfinite(v_plus)] >= -2.0 * phi.B - 1e-12)
        if phi.positive:
            assert np.all(v_plus >= 0)
        beyond = np.array([phi([phi.range + 0.01 + r]) for r in rng.random(50)])
        assert np.all(beyond == 0.0)


def test_relative_energy_examples(well_model):
    dom = well_model.dom
    empty = tg.Configuration.empty(dom)
    assert tg.relative_energy([1.0], empty, well_model) == 0.0
    gamma = tg.Configuration([[2.0]], dom)
    assert tg.relative_energy([2.3], gamma, well_model) == 1.0

    # brute-force oracle with a triangle potential, no cell list
    tri = tg.ModelSpec(dom, tg.PairPotential.triangle(0.8, 1.3), 0.2,
                       tg.JumpKernel.uniform_ball(0.5, 1))
    rng = np.random.default_rng(1)
    pts = rng.random((20, 1)) * dom.L
    gamma = tg.Configuration(pts, dom)
    x = np.array([7.7])
    direct = 0.0
    for ptn in pts:
        dd = abs(float(ptn[0] - x[0]))
        dd = min(dd % dom.L, dom.L - dd % dom.L)
        direct += float(tri.phi.at_distance(dd))
    assert math.isclose(tg.relative_energy(x, gamma, tri), direct,
                        rel_tol=1e-12)


def test_relative_energy_cell_list_path_matches_brute(well_model):
    rng = np.random.default_rng(2)
    pts = rng.random((40, 1)) * well_model.dom.L
    gamma = tg.Configuration(pts, well_model.dom)
    via_cl = tg.relative_energy([3.0], gamma, well_model)  # len>8: cell list
    direct = kernels.rel_energy(pts, np.array([3.0]), well_model.dom.L,
                                well_model.phi.kind_id,
                                well_model.phi.kernel_params)
    assert math.isclose(via_cl, direct, rel_tol=1e-12)


def test_total_energy_examples_and_increment(well_model):
    dom = well_model.dom
    assert tg.total_energy(tg.Configuration.empty(dom), well_model) == 0.0
    assert tg.total_energy(tg.Configuration([[1.0]], dom), well_model) == 0.0
    trio = tg.Configuration([[1.0], [1.3], [1.5]], dom)
    assert tg.total_energy(trio, well_model) == 3.0

    rng = np.random.default_rng(3)
    for _ in range(50):
        pts = rng.random((30, 1)) * dom.L
        gamma = tg.Configuration(pts, dom)
        gamma_minus = tg.Configuration(pts[:-1], dom)
        u_full = tg.total_energy(gamma, well_model)
        u_minus = tg.total_energy(gamma_minus, well_model)
        e = tg.relative_energy(pts[-1], gamma_minus, well_model)
        assert abs(u_full - (u_minus + e)) <= 1e-12 * max(1.0, abs(u_full))


def test_configuration_invariants(well_model):
    dom = well_model.dom
    gamma = tg.Configuration([[21.0], [-0.5]], dom)  # wrapped on construction
    assert np.all((gamma.points >= 0) & (gamma.points < dom.L))
    u = tg.total_energy(gamma, well_model)
    assert gamma.cached_energy == u
    gamma.add([5.0], energy_increment=tg.relative_energy([5.0], gamma, well_model))
    tg.total_energy(gamma, well_model)  # revalidates the cache


def test_a_eps_identity_scale(poisson_model):
    ker = poisson_model.a
    dom = poisson_model.dom
    xs = np.linspace(-2, 2, 101)[:, None]
    direct = np.array([ker.density(x) for x in xs])
    scaled = a_eps_eval(ker, 1.0, xs, dom)
    assert np.allclose(scaled, direct)


def test_a_eps_mass_preserved_all_scales():
    dom = tg.TorusDomain(1, 8.0)
    for ker in (tg.JumpKernel.uniform_ball(1.0, 1),
                tg.JumpKernel.gaussian_truncated(0.6, 2.0, 1, amplitude=1.3)):
        for eps in (1.0, 0.5, 0.17, 0.05):  # smallest eps spans the box
            val, err = integrate.quad(
                lambda y: float(a_eps_eval(ker, eps, np.array([[y]]), dom)[0]),
                0.0, dom.L, limit=400)
            assert abs(val - ker.mass) <= 1e-6


def test_a_eps_direct_formula():
    dom = tg.TorusDomain(1, 20.0)
    ker = tg.JumpKernel.uniform_ball(1.0, 1)  # a = 1/2 on [-1, 1]
    got = a_eps_eval(ker, 0.5, np.array([[0.3], [1.9], [2.1]]), dom)
    assert np.allclose(got, [0.25, 0.25, 0.0])


def test_kernel_samplers_match_density():
    rng = np.random.default_rng(4)
    for ker in (tg.JumpKernel.uniform_ball(0.8, 1),
                tg.JumpKernel.gaussian_truncated(0.5, 1.5, 1)):
        draws = ker.sample(rng, 40_000)[:, 0]
        assert np.all(np.abs(draws) <= ker.r_cut + 1e-12)
        hist, edges = np.histogram(draws, bins=24,
                                   range=(-ker.r_cut, ker.r_cut), density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        dens = np.array([float(ker.density(np.array([c]))) for c in centers])
        assert np.allclose(hist, dens / ker.mass, atol=0.05)


@pytest.mark.parametrize("d", [2, 3])
def test_kernel_sampler_dims(d):
    rng = np.random.default_rng(5)
    for ker in (tg.JumpKernel.uniform_ball(0.8, d),
                tg.JumpKernel.gaussian_truncated(0.5, 1.5, d)):
        draws = ker.sample(rng, 20_000)
        assert draws.shape == (20_000, d)
        radii = np.linalg.norm(draws, axis=1)
        assert np.all(radii <= ker.r_cut + 1e-9)
        # isotropy: mean direction vanishes
        assert np.allclose(draws.mean(axis=0), 0.0, atol=0.02)


def test_kawasaki_rate_examples(poisson_model, well_model):
    dom = poisson_model.dom
    gamma = tg.Configuration([[4.0], [9.0]], dom)
    x, y = np.array([4.2]), np.array([4.3])
    rate = tg.kawasaki_rate(x, y, gamma, poisson_model)
    a_val = float(a_eps_eval(poisson_model.a, 1.0,
                             (x - y)[None, :], dom)[0])
    assert math.isclose(rate, a_val, rel_tol=1e-12)

    # one neighbor within range of the landing point: factor e^{-1}
    dom_w = well_model.dom
    eta = tg.Configuration([[10.0]], dom_w)
    rate = tg.kawasaki_rate([10.8], [10.3], eta, well_model)
    a_val = float(a_eps_eval(well_model.a, 1.0, np.array([[0.5]]), dom_w)[0])
    assert math.isclose(rate, a_val * math.exp(-1.0), rel_tol=1e-12)


def test_kawasaki_rate_s_half_oracle():
    dom = tg.TorusDomain(1, 12.0)
    m = tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.5), 0.2,
                     tg.JumpKernel.uniform_ball(0.5, 1), s=0.5, rate_cap=100.0)
    rng = np.random.default_rng(6)
    pts = rng.random((10, 1)) * dom.L
    eta = tg.Configuration(pts, dom)
    x = np.array([4.1])
    y = np.array([4.45])
    e_x = sum(float(m.phi.at_distance(min(abs(x[0] - q) % 12, 12 - abs(x[0] - q) % 12)))
              for q in pts[:, 0])
    e_y = sum(float(m.phi.at_distance(min(abs(y[0] - q) % 12, 12 - abs(y[0] - q) % 12)))
              for q in pts[:, 0])
    expect = float(a_eps_eval(m.a, 1.0, (x - y)[None, :], dom)[0]) \
        * math.exp(0.5 * e_x - 0.5 * e_y)
    assert math.isclose(tg.kawasaki_rate(x, y, eta, m), expect, rel_tol=1e-12)


def test_kawasaki_rate_positive_bounded(well_model):
    rng = np.random.default_rng(7)
    dom = well_model.dom
    for _ in range(200):
        pts = rng.random((8, 1)) * dom.L
        eta = tg.Configuration(pts, dom)
        x = rng.random(1) * dom.L
        y = x + well_model.a.sample(rng, 1)[0]
        a_val = float(a_eps_eval(well_model.a, 1.0,
                                 (x - np.asarray(tg.wrap(y, dom)))[None, :], dom)[0])
        rate = tg.kawasaki_rate(x, tg.wrap(y, dom), eta, well_model)
        assert rate <= a_val * (1 + 1e-12)


def test_kawasaki_hardcore_target_zero(hardcore_model):
    dom = hardcore_model.dom
    eta = tg.Configuration([[5.0]], dom)
    assert tg.kawasaki_rate([7.0], [5.05], eta, hardcore_model) == 0.0


def test_rate_cap_violation_raises():
    dom = tg.TorusDomain(1, 12.0)
    m = tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.5), 0.2,
                     tg.JumpKernel.uniform_ball(0.5, 1), s=1.0, rate_cap=1.5)
    eta = tg.Configuration([[5.0]], dom)
    with pytest.raises(RateBoundError):
        tg.kawasaki_rate([5.2], [8.0], eta, m)  # factor e^{+1} > 1.5


def test_glauber_rates_examples(poisson_model, well_model):
    dom = poisson_model.dom
    alpha = 0.7
    death, birth = tg.glauber_rates([3.0], tg.Configuration.empty(dom),
                                    poisson_model, alpha)
    assert math.isclose(death, alpha) and math.isclose(birth, alpha * 0.2)

    # E(x, gamma) = 1: birth density alpha z e^{-1}
    gamma = tg.Configuration([[5.0]], well_model.dom)
    death, birth = tg.glauber_rates([5.3], gamma, well_model, alpha)
    assert math.isclose(birth, alpha * 0.2 * math.exp(-1.0), rel_tol=1e-12)
    assert math.isclose(death, alpha)

    # s=1: death rate alpha e^{2} when two neighbors are in range
    m1 = tg.ModelSpec(well_model.dom, well_model.phi, 0.2, well_model.a,
                      s=1.0, rate_cap=20.0)
    gamma = tg.Configuration([[5.0], [5.2], [5.4]], well_model.dom)
    death, _ = tg.glauber_rates([5.2], gamma, m1, alpha)  # x in gamma
    assert math.isclose(death, alpha * math.exp(2.0), rel_tol=1e-12)


def test_alpha_from_k1_examples(poisson_model):
    assert math.isclose(tg.alpha_from_k1(0.2, 0.2, poisson_model.a), 1.0)
    assert math.isclose(tg.alpha_from_k1(0.18, 0.2, poisson_model.a), 0.9)
    with pytest.raises(ValueError):
        tg.alpha_from_k1(0.0, 0.2, poisson_model.a)


def test_lahht_check_closed_forms(poisson_model):
    lhs, rhs, ok = tg.lahht_check(poisson_model)
    assert lhs == 0.0 and ok

    dom = tg.TorusDomain(1, 20.0)
    sw = tg.PairPotential.square_well(1.0, 0.5)
    ker = tg.JumpKernel.uniform_ball(0.5, 1)
    lhs, rhs, ok = tg.lahht_check(tg.ModelSpec(dom, sw, 0.2, ker))
    assert math.isclose(lhs, 0.2 * 2 * 0.5 * (1 - math.exp(-1)), rel_tol=1e-9)
    assert math.isclose(rhs, 1 / (2 * math.e), rel_tol=1e-12)
    assert ok

    lhs, rhs, ok = tg.lahht_check(tg.ModelSpec(dom, sw, 0.4, ker))
    assert math.isclose(lhs, 0.4 * 2 * 0.5 * (1 - math.exp(-1)), rel_tol=1e-9)
    assert not ok


def test_modelspec_validation():
    dom = tg.TorusDomain(1, 1.0)
    ker = tg.JumpKernel.uniform_ball(0.2, 1)
    with pytest.raises(ValueError, match="L/2"):
        tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.6), 0.2, ker)
    with pytest.raises(ValueError, match="rate_cap"):
        tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.3), 0.2, ker, s=0.5)
    with pytest.raises(ValueError, match="rate_cap"):
        tg.ModelSpec(dom, tg.PairPotential.lennard_jones_truncated(
            0.1, 0.2, 0.3, B=0.5), 0.2, ker)
    m = tg.ModelSpec(dom, tg.PairPotential.square_well(1.0, 0.3), 0.2, ker)
    assert m.thinning_cap == 1.0
    assert len(m.model_hash) == 12


def test_detailed_balance_identities_fuzz(well_model, hardcore_model):
    # the model-level identity checks; the dynamics audit re-runs these at scale
    from torusgas.dynamics import detailed_balance_audit
    for model in (well_model, hardcore_model):
        rep = detailed_balance_audit(model, 500, seed=9)
        assert rep.passed, (rep.max_residual_kawasaki, rep.max_residual_glauber)
    m_s = tg.ModelSpec(well_model.dom, well_model.phi, 0.2, well_model.a,
                       s=0.37, rate_cap=50.0)
    rep = detailed_balance_audit(m_s, 500, seed=10)
    assert rep.passed
