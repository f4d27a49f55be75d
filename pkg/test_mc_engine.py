import math

import numpy as np
import pytest
from scipy import stats

from exact_dist import chi_square_against, exact_distribution
from mc_engine import (
    SampleSet, _completion, completion_cumulants, completion_variances, connexion_pairs,
    convergence_sweep, ks_distance, pooled_std, sample_connexion, sample_ct, sample_gamma_power, sample_red_counts, sample_W_dt,
    simulate_ct_trajectory, simulate_W_dt, two_sample_w2, within_standard_errors,
)
from moments import ct_moments_exact, dt_moments_direct
from urn import Composition, UrnClassError, build_spec, expected_u2_exact, expected_W_dt


def test_sample_set_is_sorted_with_metadata(spec6, one_red):
    samples = sample_W_dt(spec6, one_red, 50, 1000, seed=1)
    assert samples.N == 1000
    assert (np.diff(samples.values) >= 0).all()
    assert samples.meta['estimator'] == 'W_dt'
    assert samples.meta['seed'] == 1
    assert samples.meta['completed'] is False


def test_seeded_and_independent_of_workers(spec6, one_red):
    first = simulate_W_dt(spec6, one_red, 30, 9000, seed=5, threads=1)
    second = simulate_W_dt(spec6, one_red, 30, 9000, seed=5, threads=3)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, simulate_W_dt(spec6, one_red, 30, 9000, seed=6))


def test_prefix_of_larger_run_is_stable(spec6, one_red):
    small = simulate_W_dt(spec6, one_red, 20, 4096, seed=2)
    large = simulate_W_dt(spec6, one_red, 20, 8192, seed=2)
    assert np.array_equal(small, large[:4096])


def test_requires_large_urn_and_positive_sizes(spec6, one_red):
    with pytest.raises(UrnClassError):
        sample_W_dt(build_spec(1, 1, 1, 1), one_red, 10, 10, seed=1)
    with pytest.raises(ValueError):
        sample_W_dt(spec6, one_red, 0, 10, seed=1)


def test_dt_mean_matches_finite_horizon_expectation(spec6, one_red):
    n, N = 50, 1_000_000
    samples = sample_W_dt(spec6, one_red, n, N, seed=3)
    target = float(expected_u2_exact(spec6, one_red, n)) / n ** float(spec6.sigma)
    assert within_standard_errors(samples.mean(), samples.standard_error(), target)


def test_completed_dt_mean(spec6, one_red):
    samples = sample_W_dt(spec6, one_red, 500, 100_000, seed=4, complete=True)
    assert samples.meta['completed'] is True
    assert within_standard_errors(samples.mean(), samples.standard_error(), expected_W_dt(spec6, one_red), factor=4.0)


def test_ct_estimators_are_martingale_means(spec6, one_red):
    xi, w = sample_ct(spec6, one_red, 300, 100_000, seed=7)
    assert within_standard_errors(xi.mean(), xi.standard_error(), 1 / 7, factor=4.0)
    assert within_standard_errors(w.mean(), w.standard_error(), 1 / 7, factor=4.0)
    assert (xi.values > 0).all()


def test_xi_is_gamma_distributed(spec6, one_red):
    xi, _ = sample_ct(spec6, one_red, 500, 50_000, seed=8)
    # xi ~ Gamma(1/S) up to the finite-horizon error
    assert ks_distance(xi, stats.gamma(1 / 7).cdf) < 0.03


@pytest.mark.parametrize("n", [3, 10])
def test_embedded_jump_chain_follows_exact_law(spec6, n):
    init = Composition(1, 1)
    red = sample_red_counts(spec6, init, n, 50_000, seed=9, embedded=True)
    result = chi_square_against(exact_distribution(spec6, init, n), red)
    assert result.p_value > 1e-3


def test_dt_chain_follows_exact_law(spec18):
    init = Composition(1, 0)
    red = sample_red_counts(spec18, init, 8, 50_000, seed=10)
    assert chi_square_against(exact_distribution(spec18, init, 8), red).p_value > 1e-3


def test_trajectory_times_increase(spec6, one_red):
    path = simulate_ct_trajectory(spec6, one_red, 40, seed=11)
    assert path.times[0] == 0
    assert (np.diff(path.times) > 0).all()
    assert (path.red + path.black == 1 + 7 * np.arange(41)).all()


def test_gamma_power_mean():
    values = sample_gamma_power(1 / 7, 4 / 7, 200_000, seed=12)
    target = math.gamma(1 / 7 + 4 / 7) / math.gamma(1 / 7)
    assert values.mean() == pytest.approx(target, rel=0.02)


def test_connexion_pairs_are_uncorrelated(spec6, one_red):
    N = 40_000
    xi_power, w_dt = connexion_pairs(spec6, one_red, 100, N, seed=13)
    assert xi_power.shape == w_dt.shape == (N,)
    assert abs(np.corrcoef(xi_power, w_dt)[0, 1]) <= 3 / math.sqrt(N)


def test_completion_variances(spec6):
    table = ct_moments_exact(spec6, 2)
    assert completion_variances(spec6) == (pytest.approx(28 / 49), pytest.approx(40 / 49))
    assert completion_variances(spec6)[0] == pytest.approx(float(table.variance_x()))


def test_two_sample_w2_examples():
    assert two_sample_w2([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)
    x = np.random.default_rng(0).normal(size=1000)
    assert two_sample_w2(x, x + 0.3) == pytest.approx(0.3)
    assert two_sample_w2(x, x[::-1]) == 0.0
    with pytest.raises(ValueError):
        two_sample_w2([], [1.0])


def test_two_sample_w2_resamples_unequal_sizes():
    x = np.zeros(10)
    assert two_sample_w2(x, np.zeros(25)) == 0.0
    assert two_sample_w2(x, np.ones(25), seed=3) == pytest.approx(1.0)


def test_pooled_std():
    assert pooled_std([0.0, 2.0], [1.0, 3.0]) == pytest.approx(math.sqrt(2.0))


def test_sample_set_moments_and_csv(tmp_path):
    samples = SampleSet.build([3.0, 1.0, 2.0], estimator='W_dt', seed=1)
    assert samples.values.tolist() == [1.0, 2.0, 3.0]
    assert samples.moment(2) == pytest.approx(14 / 3)
    path = tmp_path / 'w.csv'
    samples.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert '# estimator=W_dt' in lines
    assert lines[-1] == '3.0'


def test_convergence_sweep_agrees(spec6, one_red):
    report = convergence_sweep(spec6, one_red, 100, 40_000, seed=14, complete=True)
    assert report.horizons == [100, 200, 400]
    assert report.agree
    assert report.target == pytest.approx(expected_W_dt(spec6, one_red))


@pytest.mark.slow
def test_connexion_in_law(spec6, one_red):
    N = 200_000
    _, w_ct = sample_ct(spec6, one_red, 2000, N, seed=15, complete=True)
    connexion = sample_connexion(spec6, one_red, 2000, N, seed=16, complete=True)
    assert two_sample_w2(w_ct, connexion) <= 0.05 * pooled_std(w_ct, connexion)


@pytest.mark.slow
def test_xi_law_at_acceptance_size(spec6, one_red):
    xi, _ = sample_ct(spec6, one_red, 2000, 200_000, seed=17)
    assert ks_distance(xi, stats.gamma(1 / 7).cdf) <= 0.02


def test_completion_matches_two_cumulants(spec6):
    (k2_x, k3_x), (k2_y, k3_y) = completion_cumulants(spec6)
    red = np.full(400_000, 3)
    # 1 + 7*1 balls after one drawing: 3 red, 5 black
    draws = _completion(spec6, Composition(1, 0), 1, red, np.random.default_rng(23))
    k2 = 3 * k2_x + 5 * k2_y
    k3 = 3 * k3_x + 5 * k3_y
    assert draws.mean() == pytest.approx(0.0, abs=5 * math.sqrt(k2 / draws.size))
    assert draws.var() == pytest.approx(k2, rel=0.02)
    assert stats.moment(draws, 3) == pytest.approx(k3, rel=0.15)


@pytest.mark.slow
@pytest.mark.parametrize("fixture", ["spec6", "spec18"])
@pytest.mark.parametrize("p", [2, 3, 4])
def test_completed_moments_match_exact(fixture, p, request, one_red):
    spec = request.getfixturevalue(fixture)
    N = 1_000_000
    _, w_ct = sample_ct(spec, one_red, 2000, N, seed=18, complete=True)
    exact = float(ct_moments_exact(spec, p).x[p])
    assert within_standard_errors(w_ct.moment(p), w_ct.moment_standard_error(p), exact, factor=4.0)
    w_dt = sample_W_dt(spec, one_red, 2000, N, seed=19, complete=True)
    direct = dt_moments_direct(spec, p).x[p]
    assert within_standard_errors(w_dt.moment(p), w_dt.moment_standard_error(p), direct, factor=4.0)


@pytest.mark.slow
def test_odd_moment_signs_match_sample_skew(spec6):
    table = ct_moments_exact(spec6, 9)
    for init, exact in ((Composition(1, 0), table.x), (Composition(0, 1), table.y)):
        _, w_ct = sample_ct(spec6, init, 2000, 200_000, seed=20, complete=True)
        checked = []
        for p in (1, 3, 5, 7, 9):
            target = float(exact[p])
            if abs(target) > 3 * w_ct.moment_standard_error(p):
                assert np.sign(w_ct.moment(p)) == np.sign(target)
                checked.append(p)
        assert checked[:2] == [1, 3]
