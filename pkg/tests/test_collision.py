import math

import numpy as np
import pytest
from scipy import special

from dyson_qsd import _kernels as K
from dyson_qsd.collision import (besq_hitting_law, besq_hitting_oracle, boundary_occupation, comparison_violation,
                                 coupled_besq, first_collision_time, gap_path, inverse_gap_integral, ks_censored,
                                 ks_two_sample)
from dyson_qsd.errors import InvalidParameter
from dyson_qsd.integrator import Path, SchemeConfig, simulate_path
from dyson_qsd.model import ModelParams, VSpec
from dyson_qsd.rng import NoiseStream


def const_path(x, n_steps=10, dt=0.1):
    states = np.tile(np.asarray(x, dtype=float), (n_steps + 1, 1))
    return Path(np.arange(n_steps + 1) * dt, states, np.zeros(n_steps + 1, dtype=bool), None, dt,
                np.zeros(n_steps + 1, dtype=bool))


def test_first_collision_none_for_separated_path():
    assert first_collision_time(const_path([0.0, 5.0]), 1e-6) is None


def test_first_collision_not_at_time_zero():
    p = const_path([0.0, 5.0])
    p.states[0] = [1.0, 1.0]
    assert first_collision_time(p, 1e-6) is None
    p.states[3] = [2.0, 2.0]
    assert first_collision_time(p, 1e-6) == pytest.approx(0.3)


def test_first_collision_crossing_and_bridge_flags():
    p = const_path([0.0, 5.0])
    p.crossings[4] = True
    p.bridge_hits[2] = True
    assert first_collision_time(p, 1e-6) == pytest.approx(0.4)
    assert first_collision_time(p, 1e-6, bridge=True) == pytest.approx(0.2)


def test_gap_path_nonnegative():
    path = simulate_path([-1, 0, 1], 0.5, SchemeConfig(dt=1e-3), ModelParams(3, 0.25), NoiseStream(2))
    for l in (1, 2):
        gp = gap_path(path, l)
        assert np.all(gp.gap_sq >= 0)
        assert np.allclose(gp.gap_sq, (path.states[:, l] - path.states[:, l - 1]) ** 2)
    with pytest.raises(InvalidParameter):
        gap_path(path, 3)


def test_coupled_besq_zero_noise_is_linear():
    b = coupled_besq(NoiseStream(1, zero=True), 0.25, 1e-3, 1.0, 0.0)
    assert np.allclose(b.values, 3.0 * b.times, rtol=1e-13, atol=0)


def test_coupled_besq_nonnegative():
    b = coupled_besq(NoiseStream(4), 0.25, 1e-3, 5.0, 0.01)
    assert np.all(b.values >= 0)


def test_comparison_violation_counts():
    path = const_path([0.0, 1.0])
    gp = gap_path(path, 1)
    b = coupled_besq(NoiseStream(1, zero=True), 0.25, 0.1, 1.0, 0.0)
    # 1 > 3t + 0.1 only for t in {0, 0.1, 0.2}
    assert comparison_violation(gp, b, 0.1) == pytest.approx(3 / 11)


@pytest.mark.parametrize("mu", [0.05, 0.25, 0.5, 0.75, 0.95])
@pytest.mark.parametrize("z", [1e-3, 0.1, 1.0, 5.0, 25.0])
def test_bessel_ratio_against_scipy(mu, z):
    assert K.bessel_ratio(mu, z) == pytest.approx(special.iv(mu, z) / special.iv(-mu, z), rel=1e-12)


@pytest.mark.parametrize("z", [0.01, 0.3, 2.0, 10.0])
def test_bridge_probability_brownian_limit(z):
    # gamma = 0: |B| bridge from a to b hits 0 with probability 2 / (exp(2z) + 1)
    a = 0.2
    b = 2 * z * 1e-3 / a
    assert K.bridge_hit_prob(0.0, a, b, 1e-3) == pytest.approx(2 / (math.exp(2 * z) + 1), rel=1e-12)


def test_bridge_probability_properties():
    assert K.bridge_hit_prob(0.5, 0.01, 0.01, 1e-4) == 0.0
    assert K.bridge_hit_prob(0.75, 0.01, 0.01, 1e-4) == 0.0
    ps = [K.bridge_hit_prob(0.25, g, g, 1e-4) for g in (1e-3, 3e-3, 1e-2, 3e-2)]
    assert all(0 < p < 1 for p in ps[:3])
    assert np.all(np.diff(ps) < 0)


def test_hitting_law_matches_upper_incomplete_gamma():
    # P[x0 / (2Z) <= t] = P[Z >= x0 / (2t)] = Q(1 - delta/2, x0 / (2t))
    law = besq_hitting_law(1.5, 2.0)
    t = np.array([0.1, 0.5, 1.0, 4.0, 50.0])
    assert np.allclose(law.cdf(t), special.gammaincc(0.25, 1.0 / t), rtol=1e-12)


def test_oracle_matches_closed_form():
    s = besq_hitting_oracle(1.5, 1.0, 4000, dt=1e-2, horizon=4.0, seed=3)
    assert ks_censored(s, besq_hitting_law(1.5, 1.0).cdf, 4.0) < 0.04


def test_oracle_brownian_scaling():
    a = besq_hitting_oracle(1.0, 1.0, 4000, dt=2.5e-3, horizon=2.0, seed=1)
    b = besq_hitting_oracle(1.0, 4.0, 4000, dt=1e-2, horizon=8.0, seed=2)
    assert ks_two_sample(a, b / 4.0) < 0.045


def test_oracle_median_grows_towards_dimension_two():
    meds = [np.median(besq_hitting_oracle(d, 1.0, 2000, dt=1e-2, horizon=40.0, seed=5)) for d in (0.5, 1.0, 1.5, 1.9)]
    assert np.all(np.diff(meds) > 0)


def test_oracle_repeatable_and_validated():
    a = besq_hitting_oracle(1.5, 1.0, 100, dt=1e-2, horizon=2.0, seed=9)
    assert np.array_equal(a, besq_hitting_oracle(1.5, 1.0, 100, dt=1e-2, horizon=2.0, seed=9))
    assert np.all((a > 0) & ((a <= 2.0) | np.isinf(a)))
    with pytest.raises(InvalidParameter):
        besq_hitting_oracle(2.0, 1.0, 10)
    with pytest.raises(InvalidParameter):
        besq_hitting_oracle(1.5, 0.0, 10)


def test_euler_oracle_available():
    s = besq_hitting_oracle(1.5, 1.0, 500, dt=1e-3, horizon=2.0, seed=1, method="euler")
    assert ks_censored(s, besq_hitting_law(1.5, 1.0).cdf, 2.0) < 0.1


def test_ks_censored():
    law = besq_hitting_law(1.5, 1.0)
    q = law.ppf((np.arange(1000) + 0.5) / 1000)
    assert ks_censored(q, law.cdf) == pytest.approx(0.0005, abs=1e-12)
    cens = np.where(q > 3.0, np.inf, q)
    assert ks_censored(cens, law.cdf, 3.0) < 0.001
    assert ks_censored(np.full(10, np.inf), law.cdf, 3.0) == pytest.approx(law.cdf(3.0))


def test_ks_two_sample_with_censoring():
    a = np.array([0.1, 0.2, np.inf, np.inf])
    assert ks_two_sample(a, a) == 0.0
    assert ks_two_sample(a, np.full(4, np.inf)) == 0.5


def test_boundary_occupation_examples():
    p = const_path([0.0, 2.0, 5.0])
    assert boundary_occupation(p, 0.5) == 0.0
    assert boundary_occupation(p, 1e9) == 1.0
    p.states[:5] = [0.0, 0.1, 5.0]
    assert boundary_occupation(p, 0.5) == pytest.approx(5 / 11)


def test_inverse_gap_integral_examples():
    assert inverse_gap_integral(const_path([0.0, 2.0], 10, 0.1), 1, 2) == pytest.approx(0.5)
    p3 = ModelParams(3, 0.25, VSpec.zero())
    path = simulate_path([-3.0, 0.0, 3.0], 1.0, SchemeConfig(dt=1e-3), p3, NoiseStream(1))
    assert np.diff(path.states, axis=1).min() >= 1.0
    assert inverse_gap_integral(path, 1, 3) <= 1.0
    with pytest.raises(InvalidParameter):
        inverse_gap_integral(path, 2, 2)


def test_inverse_gap_integral_floor():
    p = const_path([1.0, 1.0], 10, 0.1)
    assert inverse_gap_integral(p, 1, 2) == pytest.approx(1e12)


def test_model_gap_squared_is_besq_for_two_free_particles():
    # N=2, v=0: g^2 solves the same equation as B, so the coupled pair stays close
    p = ModelParams(2, 0.25, VSpec.zero())
    dt = 1e-4
    for i in range(5):
        s = NoiseStream(8, i)
        path = simulate_path([0.0, 1.0], 0.1, SchemeConfig("gap_implicit", dt=dt), p, s)
        gp = gap_path(path, 1)
        b = coupled_besq(s, 0.25, dt, 0.1, 1.0)
        assert np.max(np.abs(gp.gap_sq - b.values)) < 5 * math.sqrt(dt)
