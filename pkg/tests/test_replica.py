import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from vecoder import rmt
from vecoder.alphabet import Alphabet, DataPrior, enumerate_points, lattice_points
from vecoder.errors import BadBracket, DomainError, MaxIterations
from vecoder.replica import (FixedPointConfig, ReplicaSolution, energy_from_qb, find_threshold,
                             gaussian_moments, gaussian_q, planar_moments,
                             semidiscrete_vs_quadrature_crossover, solve, solve_1d, solve_general,
                             solve_quadrature, solve_semidiscrete, solve_square_1d, sweep)
from vecoder.rmt import RTransformSpec

IG = RTransformSpec.inverse_gramian

# L=2 one-dimensional threshold load, frozen from find_threshold (self-regression)
L2_THRESHOLD = 1.4062


# -- gaussian_q ----------------------------------------------------------------


def test_gaussian_q_examples():
    assert gaussian_q(0.0) == 0.5
    assert 0.0 <= gaussian_q(40.0) < 1e-300
    for x in (0.3, 1.7, 5.0, 12.0):
        assert gaussian_q(x) + gaussian_q(-x) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("x", [-3.0, -0.5, 0.1, 2.0, 6.0])
def test_gaussian_q_against_integral(x):
    tail = quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), x, np.inf,
                epsabs=1e-15)[0]
    assert gaussian_q(x) == pytest.approx(tail, abs=1e-12)


# -- energy_from_qb ------------------------------------------------------------


def test_energy_point_mass():
    spec = RTransformSpec.point_mass(1.7)
    assert energy_from_qb(2.0, 0.3, spec) == pytest.approx(2.0 * 1.7, rel=1e-8)


def test_energy_square_inverse():
    assert energy_from_qb(1.0, 1.0, IG(1.0)) == pytest.approx(0.5, rel=1e-14)
    q, b = 2.3, 0.4
    assert energy_from_qb(q, b, IG(1.0)) == pytest.approx(q / (2 * math.sqrt(b)), rel=1e-14)


def test_energy_matches_rectangular_closed_form():
    sol = solve_1d(0.5, lattice_points(3))
    assert energy_from_qb(sol.q, sol.b, IG(0.5)) == pytest.approx(sol.q / sol.p, rel=1e-8)


def test_energy_finite_difference_route():
    eigs = [0.4, 1.0, 2.5]
    spec = RTransformSpec.tabulated(eigs)
    q, b = 1.3, 0.2
    r = rmt.r_transform(spec, -b)
    h = 1e-5
    rp = (rmt.r_transform(spec, -b + h) - rmt.r_transform(spec, -b - h)) / (2 * h)
    assert energy_from_qb(q, b, spec) == pytest.approx(q * (r - b * rp), rel=1e-7)


# -- Gaussian integrals ---------------------------------------------------------


def test_axis_moments_closed_form():
    a = Alphabet.one_dim(3)
    sigma = 0.8
    c = np.sort(a.base)
    v = (c[1:] + c[:-1]) / 2
    edges = np.concatenate(([-np.inf], v / sigma, [np.inf]))
    mass = np.diff(norm.cdf(edges))
    m2 = np.sum(mass * c ** 2)
    corr = np.sum(c * -np.diff(norm.pdf(edges)))
    got = gaussian_moments(a, 0, sigma)
    assert got == pytest.approx((m2, corr), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(sigma=st.floats(0.05, 6.0), L=st.integers(1, 6), s=st.sampled_from(["00", "01", "10", "11"]))
def test_planar_rule_matches_separable_rule(sigma, L, s):
    a = Alphabet.quadrature(L)
    planar = planar_moments(enumerate_points(a, s), sigma, 64)
    assert planar == pytest.approx(gaussian_moments(a, s, sigma), rel=1e-10, abs=1e-12)


def test_planar_rule_monte_carlo_oracle():
    pts = enumerate_points(Alphabet.checkerboard(3), 1)
    sigma = 1.3
    rng = np.random.default_rng(0)
    z = rng.standard_normal(400_000) + 1j * rng.standard_normal(400_000)
    x = pts[np.argmin(np.abs(sigma * z[:, None] - pts[None, :]), axis=1)]
    m2, corr = planar_moments(pts, sigma, 64)
    assert m2 == pytest.approx(np.mean(np.abs(x) ** 2), rel=0.01)
    assert corr == pytest.approx(np.mean((x * z.conj()).real), rel=0.01)


def test_free_axis_moments():
    a = Alphabet.semi_discrete(1)
    m2, corr = gaussian_moments(a, 0, 0.7)
    assert m2 == pytest.approx(1.0 + 0.49)
    assert corr == pytest.approx(0.7)


# -- closed forms ----------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_solve_1d_no_precoding(alpha):
    sol = solve_1d(alpha, [1])
    assert sol.converged and not sol.diverged
    assert sol.es == pytest.approx(1 / (1 - alpha), abs=1e-12)
    assert sol.q == 1 and sol.p == pytest.approx(1 - alpha)


@pytest.mark.parametrize("alpha", [1.0, 1.3])
def test_solve_1d_no_precoding_diverges(alpha):
    sol = solve_1d(alpha, [1])
    assert sol.diverged and not sol.converged and math.isinf(sol.es)


def test_solve_1d_square_point():
    assert solve_1d(1.0, [1, 3]).es == pytest.approx(2.6942, abs=1e-3)
    assert solve_1d(1.0, [1, 3]).es == pytest.approx(solve_square_1d([1, 3]).es, rel=1e-9)


@pytest.mark.parametrize("L,ref", [(2, 2.6942), (3, 2.6656), (4, 2.6655)])
def test_solve_square_table(L, ref):
    assert solve_square_1d(lattice_points(L)).es == pytest.approx(ref, abs=1e-4)


def test_solve_square_magnitude_lists():
    assert solve_square_1d([1, 3, 5]).es == pytest.approx(2.6656, abs=1e-4)
    assert solve_square_1d([1, 3, 5, 7]).es == pytest.approx(2.6655, abs=1e-4)


def test_solve_square_no_precoding():
    sol = solve_square_1d([1])
    assert sol.diverged


def test_square_backfill_consistent():
    sol = solve_square_1d(lattice_points(3))
    assert sol.es == pytest.approx(energy_from_qb(sol.q, sol.b, IG(1.0)), rel=1e-10)
    assert sol.p == pytest.approx(2 * math.sqrt(sol.b), rel=1e-12)


def test_quadrature_small_load():
    # the outer points carry no mass: q = 2 c_1^2 and p = 1 - alpha
    alpha = 1e-3
    sol = solve_quadrature(alpha, lattice_points(2))
    assert sol.converged
    assert sol.q == pytest.approx(2.0, abs=1e-9)
    assert sol.p == pytest.approx(1 - alpha, abs=1e-9)
    assert sol.eb == pytest.approx(1 / (1 - alpha), abs=1e-9)
    assert sol.eb == pytest.approx(1.0, abs=2e-3)


def test_quadrature_large_lattice_high_load():
    assert solve_quadrature(4.0, lattice_points(100)).eb == pytest.approx(4 / 3, rel=0.05)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.3])
def test_quadrature_matches_general(alpha):
    ref = solve_quadrature(alpha, lattice_points(2))
    gen = solve_general(IG(alpha), Alphabet.quadrature(2))
    assert gen.es == pytest.approx(ref.es, rel=1e-4)


@pytest.mark.parametrize("alpha,L", [(0.3, 1), (0.8, 2), (1.5, 3)])
def test_semidiscrete_matches_general(alpha, L):
    ref = solve_semidiscrete(alpha, lattice_points(L))
    gen = solve_general(IG(alpha), Alphabet.semi_discrete(L))
    assert gen.es == pytest.approx(ref.es, rel=1e-6)


def test_semidiscrete_no_precoding_closed_form():
    # a free imaginary axis with one real point: es = eb = 2 / (2 - alpha)
    for alpha in (0.2, 1.0, 1.8):
        assert solve_semidiscrete(alpha, [1]).eb == pytest.approx(2 / (2 - alpha), rel=1e-12)
    assert solve_semidiscrete(2.0, [1]).diverged


def test_semidiscrete_beats_quadrature_at_low_load():
    alpha = 0.05
    assert (solve_semidiscrete(alpha, lattice_points(1)).eb
            < solve_quadrature(alpha, lattice_points(100)).eb)


def test_semidiscrete_crossover():
    assert semidiscrete_vs_quadrature_crossover() == pytest.approx(0.479, abs=0.01)


def test_semidiscrete_large_lattice_high_load():
    assert solve_semidiscrete(4.0, lattice_points(100)).eb == pytest.approx(4 / 3, rel=0.05)


# -- invariants of converged rectangular solutions --------------------------------


@pytest.mark.parametrize("solver", [solve_1d, solve_quadrature, solve_semidiscrete])
@pytest.mark.parametrize("alpha", [0.3, 0.9, 1.2])
def test_p_substitution_identities(solver, alpha):
    sol = solver(alpha, lattice_points(3))
    assert sol.converged
    assert sol.p ** 2 == pytest.approx((1 - alpha) ** 2 + 4 * alpha * sol.b, rel=1e-8)
    assert sol.p >= abs(1 - alpha)
    if solver is not solve_semidiscrete:
        assert sol.es * sol.p == pytest.approx(sol.q, rel=1e-8)
    assert sol.es == pytest.approx(energy_from_qb(sol.q, sol.b, IG(alpha)), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.1, 1.3), gamma=st.floats(0.2, 5.0), L=st.integers(1, 4))
def test_scaling_law(alpha, gamma, L):
    base = solve_1d(alpha, lattice_points(L))
    scaled = solve_1d(alpha, gamma * lattice_points(L))
    assert base.converged == scaled.converged
    if base.converged:
        assert scaled.es == pytest.approx(gamma ** 2 * base.es, rel=1e-6)
        assert scaled.q == pytest.approx(gamma ** 2 * base.q, rel=1e-6)
        assert scaled.b == pytest.approx(base.b, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.25, 0.6, 1.0, 1.3])
def test_energy_non_increasing_in_L(alpha):
    es = [solve_1d(alpha, lattice_points(L)).es for L in range(1, 7)]
    assert all(b <= a + 1e-9 for a, b in zip(es, es[1:]))


def test_mirror_invariance():
    a = solve_1d(0.7, [1, -3, 5])
    b = solve_1d(0.7, [-1, 3, -5])
    assert a.es == pytest.approx(b.es, rel=1e-12)


# -- general solver --------------------------------------------------------------


def test_general_no_precoding():
    sol = solve_general(IG(0.5), Alphabet.one_dim(1))
    assert sol.converged and sol.q == 1 and sol.b == 0
    assert sol.es == pytest.approx(2.0, abs=1e-12)


def test_general_no_precoding_diverges():
    assert solve_general(IG(1.0), Alphabet.one_dim(1)).diverged


def test_general_square_point():
    assert solve_general(IG(1.0), Alphabet.one_dim(2)).es == pytest.approx(2.6942, abs=1e-3)


def test_general_scaling():
    base = solve_general(IG(0.7), Alphabet.one_dim(2))
    scaled = solve_general(IG(0.7), Alphabet.one_dim(2, 2 * lattice_points(2)))
    assert scaled.q == pytest.approx(4 * base.q, rel=1e-8)
    assert scaled.b == pytest.approx(base.b, rel=1e-8)
    assert scaled.es == pytest.approx(4 * base.es, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 1.4])
@pytest.mark.parametrize("L", [2, 3])
def test_general_matches_one_dim(alpha, L):
    ref = solve_1d(alpha, lattice_points(L))
    gen = solve_general(IG(alpha), Alphabet.one_dim(L))
    assert gen.es == pytest.approx(ref.es, rel=1e-8)


def test_general_beyond_threshold():
    sol = solve_general(IG(1.5), Alphabet.one_dim(2))
    assert sol.diverged and not sol.converged


def test_general_marchenko_pastur():
    sol = solve_general(RTransformSpec.marchenko_pastur(0.5), Alphabet.one_dim(1))
    assert sol.es == pytest.approx(1.0)
    sol = solve_general(RTransformSpec.marchenko_pastur(0.5), Alphabet.one_dim(2))
    assert sol.converged and 0 < sol.es < 1.0


def test_general_tabulated_spectrum():
    # a point-mass spectrum at c scales the identity channel: es = q c with q = 1
    sol = solve_general(RTransformSpec.point_mass(2.0), Alphabet.one_dim(1))
    assert sol.es == pytest.approx(2.0)


def test_general_tabulated_matches_analytic():
    # a fine quantile grid of the inverse-Gramian law reproduces the analytic solve
    alpha = 0.5
    lo, hi = (1 - math.sqrt(alpha)) ** 2, (1 + math.sqrt(alpha)) ** 2
    grid = np.linspace(lo, hi, 200_001)
    dens = np.sqrt(np.clip((grid - lo) * (hi - grid), 0, None)) / (2 * math.pi * alpha * grid)
    cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))))
    cdf /= cdf[-1]
    u = (np.arange(4000) + 0.5) / 4000
    eigs = 1.0 / np.interp(u, cdf, grid)
    tab = solve_general(RTransformSpec.tabulated(eigs), Alphabet.one_dim(2))
    ana = solve_general(IG(alpha), Alphabet.one_dim(2))
    assert tab.es == pytest.approx(ana.es, rel=0.01)


def test_general_prior_weighting():
    a = Alphabet.one_dim(2)
    skew = DataPrior((("0", 0.9), ("1", 0.1)))
    # the 1-D sets are mirror images, so any prior gives the same answer
    assert solve_general(IG(0.5), a, skew).es == pytest.approx(
        solve_general(IG(0.5), a).es, rel=1e-10)
    with pytest.raises(DomainError):
        solve_general(IG(0.5), a, DataPrior((("x", 1.0),)))


def test_general_max_iterations():
    cfg = FixedPointConfig(max_iter=2, continuation=False)
    with pytest.raises(MaxIterations):
        solve_general(IG(0.5), Alphabet.one_dim(2), cfg=cfg)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_checkerboard_matches_quadrature(alpha):
    pts = lattice_points(3)
    cb = solve("checkerboard", alpha, pts)
    qd = solve_quadrature(alpha, pts)
    assert cb.eb == pytest.approx(qd.eb, rel=1e-6)


# -- sweeps and thresholds -------------------------------------------------------


def test_sweep_no_precoding():
    rows = sweep("1d", [0.25, 0.5, 0.75], [1])
    np.testing.assert_allclose([s.es for _, s in rows], [4 / 3, 2, 4], rtol=1e-12)


def test_sweep_monotone_transition():
    grid = np.linspace(1.2, 1.7, 11)
    flags = [s.converged for _, s in sweep("1d", grid, lattice_points(2))]
    k = flags.index(False)
    assert all(flags[:k]) and not any(flags[k:]) and 0 < k < len(flags)


def test_sweep_single_point_square():
    (_, sol), = sweep("square", [1.0], lattice_points(2))
    assert sol.es == pytest.approx(2.6942, abs=1e-3)


@pytest.mark.parametrize("kind", ["1d", "quadrature", "semidiscrete"])
def test_sweep_parallel_matches_sequential(kind):
    grid = np.linspace(0.2, 1.6, 8)
    seq = sweep(kind, grid, lattice_points(3))
    par = sweep(kind, grid, lattice_points(3), parallel=True, workers=4)
    for (_, a), (_, b) in zip(seq, par):
        assert a.converged == b.converged
        if a.converged:
            assert a.es == pytest.approx(b.es, rel=1e-8)


def test_sweep_records_errors():
    rows = sweep("square", [0.5, 1.0], lattice_points(2))
    assert rows[0][1].error and not rows[0][1].converged and not rows[0][1].diverged
    assert rows[1][1].converged


def test_sweep_grid_validation():
    with pytest.raises(DomainError):
        sweep("1d", [], [1])
    with pytest.raises(DomainError):
        sweep("1d", [0.5, 0.5], [1])


def test_threshold_no_precoding():
    assert find_threshold("1d", [1]) == pytest.approx(1.0, abs=1e-3)


def test_threshold_two_points():
    thr = find_threshold("1d", lattice_points(2))
    assert thr > 1
    assert thr == pytest.approx(L2_THRESHOLD, abs=2e-3)


def test_threshold_grows_with_L():
    thresholds = [find_threshold("1d", lattice_points(L)) for L in (2, 3, 4)]
    assert all(b >= a - 1e-3 for a, b in zip(thresholds, thresholds[1:]))


def test_threshold_bad_bracket():
    with pytest.raises(BadBracket):
        find_threshold("1d", [1], lo=1.2, hi=2.0)
    with pytest.raises(BadBracket):
        find_threshold("1d", lattice_points(2), lo=0.5, hi=1.1)


# -- configuration and records ---------------------------------------------------


@pytest.mark.parametrize("kw", [dict(damping=0), dict(damping=1.5), dict(tol=0),
                                dict(max_iter=0), dict(quad_order=4),
                                dict(divergence_cap=0), dict(init_q=-1), dict(init_b=0)])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        FixedPointConfig(**kw)


def test_solution_record():
    sol = solve_1d(0.5, [1])
    d = sol.to_dict()
    assert list(d) == ["alpha", "q", "b", "p", "es", "eb", "es_db", "converged", "diverged",
                       "iterations", "error"]
    assert d["es_db"] == pytest.approx(10 * math.log10(2.0))
    assert sol.converged != sol.diverged
    div = solve_1d(1.0, [1])
    assert math.isinf(div.es_db)
    assert isinstance(div, ReplicaSolution)


def test_bits_per_symbol():
    sol = solve_quadrature(0.5, lattice_points(2))
    assert sol.eb == pytest.approx(sol.es / 2)
    assert solve_semidiscrete(0.5, [1]).eb == pytest.approx(solve_semidiscrete(0.5, [1]).es)
