import logging
import math

import numpy as np
import pytest

from density_cf import (
    CFReport, bandwidth_stability, density_grid, empirical_cf, kde_density, silverman_bandwidth, support_span,
)
from mc_engine import SampleSet, sample_W_dt
from smoothing import fixpoint_pools


@pytest.fixture
def normal_draws():
    return np.random.default_rng(21).normal(size=20_000)


def test_cf_at_zero_and_bounded(normal_draws):
    report = empirical_cf(normal_draws, np.linspace(0, 5, 51))
    assert report.modulus[0] == pytest.approx(1.0)
    assert (report.modulus <= 1).all()
    assert report.noise_floor == pytest.approx(4 / math.sqrt(20_000))


def test_cf_of_gaussian_decays(normal_draws):
    report = empirical_cf(normal_draws, np.linspace(0, 4, 41))
    assert report.at(1.0) == pytest.approx(math.exp(-0.5), abs=0.03)
    assert report.decays(1.0, 4.0, report.noise_floor)


def test_cf_grid_validation(normal_draws):
    with pytest.raises(ValueError):
        empirical_cf(normal_draws, [1.0, 0.5])
    with pytest.raises(ValueError):
        empirical_cf(normal_draws, [-1.0, 0.0])
    with pytest.raises(ValueError):
        empirical_cf([], [0.0])


def test_cf_warns_on_small_samples(caplog):
    with caplog.at_level(logging.WARNING, logger="UrnLab"):
        empirical_cf(np.zeros(100), [0.0, 1.0])
    assert "noise floor is high" in caplog.text


def test_cf_frame_columns(normal_draws):
    frame = empirical_cf(normal_draws, [0.0, 1.0]).to_frame()
    assert list(frame.columns) == ['t', 'modulus', 'noise_floor']


def test_support_span():
    span = support_span(np.array([-1.0, 0.5, 2.0, 3.0]))
    assert (span.minimum, span.maximum) == (-1.0, 3.0)
    assert span.fraction_negative == 0.25
    assert span.both_signs()
    assert not span.both_signs(at_least=0.3)
    assert support_span(np.ones(5)).degenerate


def test_kde_integrates_to_one(normal_draws):
    grid = density_grid(normal_draws)
    estimate = kde_density(normal_draws, silverman_bandwidth(normal_draws), grid)
    assert estimate.integral() == pytest.approx(1.0, abs=1e-3)
    assert estimate.peak() == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.05)
    assert list(estimate.to_frame().columns) == ['x', 'density']


def test_kde_of_symmetric_sample_is_symmetric():
    values = np.array([-2.0, -1.0, 1.0, 2.0])
    grid = np.linspace(-3, 3, 13)
    density = kde_density(values, 0.5, grid).density
    assert density == pytest.approx(density[::-1])


def test_kde_bandwidth_must_be_positive(normal_draws):
    with pytest.raises(ValueError):
        kde_density(normal_draws, 0.0, [0.0])


def test_silverman_bandwidth(normal_draws):
    assert silverman_bandwidth(normal_draws) == pytest.approx(0.9 * 20_000 ** -0.2, rel=0.05)


def test_bandwidth_stability_is_small_for_smooth_law(normal_draws):
    assert bandwidth_stability(normal_draws, density_grid(normal_draws)) < 0.08


def test_accepts_sample_sets(normal_draws):
    samples = SampleSet.build(normal_draws)
    assert support_span(samples).minimum == normal_draws.min()


def test_moduli_inside_the_noise_floor_count_as_decayed():
    t = np.array([20.0, 160.0])
    assert CFReport(t, np.array([6.8e-4, 7.8e-4]), 1_000_000, 4e-3).decays(20.0, 160.0, 0.1)
    assert CFReport(t, np.array([0.05, 0.02]), 1_000_000, 4e-3).decays(20.0, 160.0, 0.1)
    assert not CFReport(t, np.array([0.02, 0.03]), 1_000_000, 4e-3).decays(20.0, 160.0, 0.1)
    assert not CFReport(t, np.array([0.5, 0.2]), 1_000_000, 4e-3).decays(20.0, 160.0, 0.1)


def test_cf_gap(normal_draws):
    grid = np.linspace(0, 5, 11)
    report = empirical_cf(normal_draws, grid)
    assert report.gap(report) == 0.0
    assert report.gap(empirical_cf(normal_draws * 2, grid)) > 0.1
    with pytest.raises(ValueError):
        report.gap(empirical_cf(normal_draws, grid[:5]))


@pytest.mark.slow
def test_limit_law_has_decaying_cf_and_both_signs(spec6, one_red):
    samples = sample_W_dt(spec6, one_red, 2000, 1_000_000, seed=22, complete=True)
    report = empirical_cf(samples, np.linspace(0, 200, 201))
    assert report.decays(20.0, 160.0, 0.1)
    assert report.at(160.0) <= 0.1
    assert support_span(samples).both_signs(at_least=0.01)


@pytest.mark.slow
def test_limit_density_is_stable_under_bandwidth_halving(spec6, one_red):
    samples = sample_W_dt(spec6, one_red, 2000, 1_000_000, seed=37, complete=True)
    assert bandwidth_stability(samples, density_grid(samples)) <= 0.05


@pytest.mark.slow
def test_fixed_point_pools_share_the_cf_of_direct_samples(spec6, one_red):
    N = 100_000
    grid = np.linspace(0, 200, 401)
    pools = fixpoint_pools(spec6, 'dt', N, 40, seed=34)
    direct = sample_W_dt(spec6, one_red, 2000, N, seed=35, complete=True)
    from_pools = empirical_cf(pools.x_pool, grid)
    assert from_pools.gap(empirical_cf(direct, grid)) <= 2 * from_pools.noise_floor
