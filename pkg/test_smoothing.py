import math

import numpy as np
import pytest

from mc_engine import pooled_std, sample_ct, two_sample_w2, within_standard_errors
from moments import ct_moments_exact, dt_moments_direct
from smoothing import (
    DirichletTransform, ParticlePair, UniformTransform, apply_K_ct, apply_K_dt, contraction_constant,
    dirichlet_power_weights, fixpoint_pools, gaussian_pair, iterate_fixpoint, mean_map,
    point_mass_pair, resampling_floor, target_means, transfer_dt_to_ct,
)
from urn import Composition, build_spec


def test_target_means(spec6):
    assert target_means(spec6, 'ct') == pytest.approx((1 / 7, -2 / 7))
    B, C = target_means(spec6, 'dt')
    assert B == pytest.approx(math.gamma(1 / 7) / math.gamma(5 / 7) / 7)
    assert spec6.c * B + spec6.b * C == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        target_means(spec6, 'xt')


def test_target_means_are_fixed_by_the_mean_map(spec6, spec18):
    for spec in (spec6, spec18):
        for system in ('dt', 'ct'):
            B, C = target_means(spec, system)
            assert mean_map(spec, B, C) == pytest.approx((B, C), rel=1e-12)


def test_contraction_constant(spec6, spec18):
    assert contraction_constant(spec6) == pytest.approx(math.sqrt(8 / 9))
    assert contraction_constant(spec18) == pytest.approx(math.sqrt(21 / 31))


@pytest.mark.parametrize("fixture", ["spec6", "spec18"])
def test_power_weight_moments(fixture, request):
    spec = request.getfixturevalue(fixture)
    N = 500_000
    weights = dirichlet_power_weights(spec, seed=2, size=N)
    assert weights.shape == (N, spec.S + 1)
    unpowered = weights ** (1 / float(spec.sigma))
    assert np.abs(unpowered.sum(axis=1) - 1).max() <= 1e-12
    # E V^sigma = 1/(m+1) and E V^(2 sigma) = 1/(2m+1) for every coordinate
    for power, target in ((1, 1 / (spec.m + 1)), (2, 1 / (2 * spec.m + 1))):
        per_draw = (weights ** power).mean(axis=1)
        se = per_draw.std(ddof=1) / math.sqrt(N)
        assert within_standard_errors(per_draw.mean(), se, target)


def test_pair_validation(spec6):
    with pytest.raises(ValueError):
        ParticlePair(np.zeros(3), np.zeros(4), (0.0, 0.0), spec6, 'ct')
    with pytest.raises(ValueError):
        ParticlePair(np.zeros(1), np.zeros(1), (0.0, 0.0), spec6, 'ct')
    with pytest.raises(ValueError, match="cB \\+ bC"):
        ParticlePair(np.zeros(4), np.zeros(4), (1.0, 1.0), spec6, 'ct')


def test_only_large_urns():
    with pytest.raises(ValueError):
        UniformTransform(build_spec(1, 1, 1, 1))


def test_apply_recentres_on_target(spec6):
    for system, apply in (('ct', apply_K_ct), ('dt', apply_K_dt)):
        pair = point_mass_pair(spec6, system, 5000)
        new = apply(pair, seed=4)
        assert new.means() == pytest.approx(pair.target_means, abs=1e-12)
        assert new.x_pool.std() > 0
        assert abs(new.shifts[0]) < 0.1


@pytest.mark.parametrize("system", ["dt", "ct"])
def test_means_before_recentering_are_on_target(spec6, system):
    apply = apply_K_dt if system == 'dt' else apply_K_ct
    new = apply(point_mass_pair(spec6, system, 100_000), seed=24)
    for pool, shift in ((new.x_pool, new.shifts[0]), (new.y_pool, new.shifts[1])):
        assert abs(shift) <= 3 * pool.std(ddof=1) / math.sqrt(pool.size)


def test_apply_is_seeded(spec6):
    pair = point_mass_pair(spec6, 'dt', 5000)
    first = apply_K_dt(pair, seed=25)
    assert np.array_equal(first.x_pool, apply_K_dt(pair, seed=25).x_pool)
    assert np.array_equal(first.y_pool, apply_K_dt(pair, seed=25).y_pool)
    assert not np.array_equal(first.x_pool, apply_K_dt(pair, seed=26).x_pool)


def test_apply_rejects_other_system(spec6):
    with pytest.raises(ValueError):
        DirichletTransform(spec6).apply(point_mass_pair(spec6, 'ct', 10), seed=1)


def test_uniform_weights_are_shared(spec6):
    weights = UniformTransform(spec6).weights(np.random.default_rng(0), 100)
    assert weights.shape == (100, 8)
    assert (weights == weights[:, :1]).all()


def test_iteration_is_seeded(spec6):
    first = fixpoint_pools(spec6, 'ct', 6000, 5, seed=3, threads=1)
    second = fixpoint_pools(spec6, 'ct', 6000, 5, seed=3, threads=4)
    assert np.array_equal(first.x_pool, second.x_pool)
    other = fixpoint_pools(spec6, 'ct', 6000, 5, seed=4)
    assert not np.array_equal(first.x_pool, other.x_pool)


def test_iteration_validation(spec6):
    with pytest.raises(ValueError):
        iterate_fixpoint(spec6, 'ct', 100, 0, seed=1)
    with pytest.raises(ValueError):
        iterate_fixpoint(spec6, 'ct', 100, 3, seed=1, init='uniform')


def test_ratios_within_constant_from_the_first_step(spec6):
    trace = iterate_fixpoint(spec6, 'ct', 20_000, 4, seed=5)
    frame = trace.to_frame()
    assert list(frame['iteration']) == [1, 2, 3, 4]
    assert len(trace.checked_ratios()) == 4
    assert trace.contraction_holds()
    assert frame['distance'][0] > frame['distance'][3]
    assert trace.floor >= 3 / math.sqrt(20_000)


def test_coupled_distance_of_a_pair_with_itself(spec6):
    pair = gaussian_pair(spec6, 'dt', 3000, seed=27)
    assert DirichletTransform(spec6).coupled_distance(pair, pair, seed=1) == (0.0, 0.0)


@pytest.mark.parametrize("system", ["dt", "ct"])
def test_coupled_distance_follows_the_weight_moments(spec6, system):
    first = gaussian_pair(spec6, system, 50_000, seed=28)
    B, C = first.target_means
    second = ParticlePair(B + 1.5 * (first.x_pool - B), C + 1.5 * (first.y_pool - C), (B, C), spec6, system)
    wx = two_sample_w2(first.x_pool, second.x_pool)
    wy = two_sample_w2(first.y_pool, second.y_pool)
    transform = DirichletTransform(spec6) if system == 'dt' else UniformTransform(spec6)
    cx, cy = transform.coupled_distance(first, second, seed=30)
    # slot second moments are 1/(2m+1) in both systems: (6+1) X-slots, 1 Y-slot for X; 2 and 6 for Y
    assert cx == pytest.approx(math.sqrt((7 * wx ** 2 + wy ** 2) / 9), rel=0.05)
    assert cy == pytest.approx(math.sqrt((2 * wx ** 2 + 6 * wy ** 2) / 9), rel=0.05)


def test_coupled_distance_needs_equal_sizes(spec6):
    with pytest.raises(ValueError):
        UniformTransform(spec6).coupled_distance(point_mass_pair(spec6, 'ct', 10), point_mass_pair(spec6, 'ct', 12), 1)


def test_gaussian_start(spec6):
    pair = gaussian_pair(spec6, 'dt', 4000, seed=6)
    assert pair.means() == pytest.approx(pair.target_means, abs=1e-12)
    assert pair.x_pool.std() == pytest.approx(1.0, abs=0.05)


def test_ct_fixed_point_second_moment(spec6):
    pair = fixpoint_pools(spec6, 'ct', 50_000, 60, seed=7)
    exact = ct_moments_exact(spec6, 2)
    assert np.mean(pair.x_pool ** 2) == pytest.approx(float(exact.x[2]), abs=0.03)
    assert np.mean(pair.y_pool ** 2) == pytest.approx(float(exact.y[2]), abs=0.03)


def test_dt_fixed_point_second_moment(spec6):
    pair = fixpoint_pools(spec6, 'dt', 50_000, 60, seed=8)
    direct = dt_moments_direct(spec6, 2)
    assert np.mean(pair.x_pool ** 2) == pytest.approx(direct.x[2], rel=0.05)
    assert np.mean(pair.y_pool ** 2) == pytest.approx(direct.y[2], rel=0.05)


def test_transfer_keeps_ct_mean(spec6):
    dt_pair = fixpoint_pools(spec6, 'dt', 50_000, 30, seed=9)
    ct_pair = transfer_dt_to_ct(dt_pair, seed=9)
    assert ct_pair.system == 'ct'
    assert ct_pair.target_means == pytest.approx(target_means(spec6, 'ct'))
    for pool, target in ((ct_pair.x_pool, 1 / 7), (ct_pair.y_pool, -2 / 7)):
        se = pool.std() / math.sqrt(pool.size)
        assert abs(pool.mean() - target) <= 5 * se
    with pytest.raises(ValueError):
        transfer_dt_to_ct(ct_pair, seed=9)


@pytest.mark.slow
@pytest.mark.parametrize("fixture", ["spec6", "spec18"])
@pytest.mark.parametrize("system", ["dt", "ct"])
def test_contraction_at_acceptance_size(fixture, system, request):
    spec = request.getfixturevalue(fixture)
    trace = iterate_fixpoint(spec, system, 100_000, 40, seed=7)
    assert len(trace.checked_ratios()) == 40
    assert trace.contraction_holds()
    assert max(trace.checked_ratios()) <= trace.constant + 0.05


@pytest.mark.slow
def test_transferred_pair_is_a_ct_fixed_point(spec6):
    N = 100_000
    transferred = transfer_dt_to_ct(fixpoint_pools(spec6, 'dt', N, 40, seed=31), seed=31)
    moved = apply_K_ct(transferred, seed=32)
    residual = max(two_sample_w2(transferred.x_pool, moved.x_pool), two_sample_w2(transferred.y_pool, moved.y_pool))
    floor = resampling_floor(transferred, seed=33)
    assert floor >= 3 / math.sqrt(N)
    assert residual <= 2 * floor


@pytest.mark.slow
def test_fixed_point_does_not_depend_on_start(spec6):
    from_point = fixpoint_pools(spec6, 'ct', 100_000, 80, seed=11)
    from_gaussian = fixpoint_pools(spec6, 'ct', 100_000, 80, seed=12, init='gaussian')
    w2 = two_sample_w2(from_point.x_pool, from_gaussian.x_pool)
    assert w2 <= 0.05 * pooled_std(from_point.x_pool, from_gaussian.x_pool)


@pytest.mark.slow
def test_three_routes_agree(spec6):
    N = 100_000
    pools = fixpoint_pools(spec6, 'ct', N, 60, seed=13)
    transferred = transfer_dt_to_ct(fixpoint_pools(spec6, 'dt', N, 60, seed=13), seed=13)
    _, direct = sample_ct(spec6, Composition(1, 0), 2000, N, seed=13, complete=True)
    routes = [pools.x_pool, transferred.x_pool, direct.values]
    for i in range(3):
        for j in range(i + 1, 3):
            assert two_sample_w2(routes[i], routes[j]) <= 0.05 * pooled_std(routes[i], routes[j])
