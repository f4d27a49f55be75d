"""
Particle solver for the smoothing-transform fixed points (X^DT, Y^DT) and
(X^CT, Y^CT).

A pair of N-particle pools approximates the two laws. One application of the
transform builds every new particle from S+1 uniformly resampled parents
(a+1 from the X-pool and b from the Y-pool for X; c and d+1 for Y) weighted
either by powered Dirichlet(1/S, ..., 1/S) coordinates (DT) or by one shared
U^m (CT). Pools are recentred on the exact target means after every step.
"""
from __future__ import annotations

import abc
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

import config
from mc_engine import SampleSet, sample_gamma_power, two_sample_w2
from urn import gamma_ratio
from utils import log_gamma_variates, run_blocks, write_csv

logger = logging.getLogger("UrnLab")

SYSTEMS = ('dt', 'ct')


def _check_system(system):
    if system not in SYSTEMS:
        raise ValueError(f"System must be one of {SYSTEMS}, got {system!r}")


def target_means(spec, system):
    """
    Exact expectations of the fixed point: (b/S, -c/S) for CT,
    Gamma(1/S)/Gamma((m+1)/S) * (b/S, -c/S) for DT
    """
    _check_system(system)
    spec.require_large()
    B, C = spec.b / spec.S, -spec.c / spec.S
    if system == 'dt':
        scale = gamma_ratio(1 / spec.S, (spec.m + 1) / spec.S)
        B, C = scale * B, scale * C
    return B, C


def mean_map(spec, B, C):
    """Means after one transform step from pools with means (B, C); identical for both systems"""
    m = spec.m
    return ((spec.a + 1) * B + spec.b * C) / (m + 1), (spec.c * B + (spec.d + 1) * C) / (m + 1)


def contraction_constant(spec):
    """Lipschitz constant sqrt((S+1)/(2m+1)) of the transform in the product W2 metric"""
    return math.sqrt((spec.S + 1) / (2 * spec.m + 1))


def noise_floor(N):
    return config.NOISE_FLOOR_FACTOR / math.sqrt(N)


@dataclass
class ParticlePair:
    """Empirical approximants of the laws of X and Y"""
    x_pool: np.ndarray
    y_pool: np.ndarray
    target_means: tuple
    spec: object
    system: str
    shifts: tuple = (0.0, 0.0)

    def __post_init__(self):
        _check_system(self.system)
        self.x_pool = np.asarray(self.x_pool, dtype=float)
        self.y_pool = np.asarray(self.y_pool, dtype=float)
        if self.x_pool.size != self.y_pool.size:
            raise ValueError(f"Pools must have equal sizes, got {self.x_pool.size} and {self.y_pool.size}")
        if self.x_pool.size < 2:
            raise ValueError(f"Pools need at least 2 particles, got {self.x_pool.size}")
        B, C = self.target_means
        if abs(self.spec.c * B + self.spec.b * C) > 1e-12 * max(1.0, abs(B), abs(C)):
            raise ValueError(f"Target means ({B}, {C}) violate cB + bC = 0 for {self.spec.label()}")

    @property
    def N(self):
        return int(self.x_pool.size)

    def means(self):
        return float(self.x_pool.mean()), float(self.y_pool.mean())

    def samples(self, seed=None):
        """Pools as (X SampleSet, Y SampleSet)"""
        meta = {'matrix': self.spec.label(), 'system': self.system, 'seed': seed}
        return (
            SampleSet.build(self.x_pool, estimator=f'X_{self.system}', **meta),
            SampleSet.build(self.y_pool, estimator=f'Y_{self.system}', **meta),
        )


def point_mass_pair(spec, system, N):
    B, C = target_means(spec, system)
    return ParticlePair(np.full(N, B), np.full(N, C), (B, C), spec, system)


def gaussian_pair(spec, system, N, seed, threads=None):
    """Centred unit-variance Gaussian pools shifted to the target means"""
    B, C = target_means(spec, system)

    def worker(rng, size):
        return rng.standard_normal(size), rng.standard_normal(size)

    x, y = run_blocks(worker, N, seed, 'init_pools', threads)
    return ParticlePair(x - x.mean() + B, y - y.mean() + C, (B, C), spec, system)


class SmoothingTransform(abc.ABC):
    """
    One step of a distributional fixed-point system over a ParticlePair
    """

    system = None

    def __init__(self, spec):
        spec.require_large()
        self.spec = spec
        self.slots = spec.S + 1

    @abc.abstractmethod
    def weights(self, rng, size):
        """
        Slot multipliers of `size` new particles

        Returns:
            numpy array of shape (size, S+1)
        """
        pass

    def _combine(self, rng, size, x_pool, y_pool, from_x):
        # the first `from_x` slots take X-parents, the remaining ones Y-parents
        weights = self.weights(rng, size)
        parents = np.empty((size, self.slots))
        parents[:, :from_x] = x_pool[rng.integers(0, x_pool.size, size=(size, from_x))]
        parents[:, from_x:] = y_pool[rng.integers(0, y_pool.size, size=(size, self.slots - from_x))]
        return np.einsum('ij,ij->i', weights, parents)

    def apply(self, pair, seed, step=0, threads=None, stream='fixpoint'):
        """
        New pair with recentred pools; the recentering shifts are recorded on it

        Args:
            pair: ParticlePair of this transform's system
            seed: user seed
            step: iteration index selecting the random sub-stream
            threads: worker cap
            stream: stream name from config.STREAMS
        """
        if pair.system != self.system:
            raise ValueError(f"{type(self).__name__} expects a {self.system} pair, got {pair.system}")
        spec = self.spec
        x_pool, y_pool = pair.x_pool, pair.y_pool

        def worker(rng, size):
            new_x = self._combine(rng, size, x_pool, y_pool, spec.a + 1)
            new_y = self._combine(rng, size, x_pool, y_pool, spec.c)
            return new_x, new_y

        new_x, new_y = run_blocks(worker, pair.N, seed, stream, threads, step=step)
        B, C = pair.target_means
        shift_x, shift_y = B - new_x.mean(), C - new_y.mean()
        return ParticlePair(new_x + shift_x, new_y + shift_y, (B, C), spec, self.system,
                            shifts=(float(shift_x), float(shift_y)))

    def coupled_distance(self, first, second, seed, step=0, threads=None):
        """
        Distances between this step applied to two pairs with shared weights and
        shared parent ranks

        Parents are taken by rank from the sorted pools, so each parent
        difference follows the order-statistic coupling that realises the W2
        distance between the pools. The result bounds W2 between the two
        recentred outputs; both share every random draw.

        Returns:
            (distance of the X outputs, distance of the Y outputs)
        """
        if first.N != second.N:
            raise ValueError(f"Coupled pairs need equal sizes, got {first.N} and {second.N}")
        spec = self.spec
        dx = np.sort(first.x_pool) - np.sort(second.x_pool)
        dy = np.sort(first.y_pool) - np.sort(second.y_pool)

        def worker(rng, size):
            diffs = []
            for from_x in (spec.a + 1, spec.c):
                weights = self.weights(rng, size)
                parents = np.concatenate([
                    dx[rng.integers(0, dx.size, size=(size, from_x))],
                    dy[rng.integers(0, dy.size, size=(size, self.slots - from_x))],
                ], axis=1)
                diffs.append(np.einsum('ij,ij->i', weights, parents))
            return tuple(diffs)

        diff_x, diff_y = run_blocks(worker, first.N, seed, 'coupling', threads, step=step)
        # recentering removes the mean difference
        return float(diff_x.std()), float(diff_y.std())

    def resampling_floor(self, pair, seed, threads=None):
        """W2 between two independent applications to the same pair, larger of the two pools"""
        first = self.apply(pair, seed, 1, threads, stream='floor')
        second = self.apply(pair, seed, 2, threads, stream='floor')
        return max(two_sample_w2(first.x_pool, second.x_pool), two_sample_w2(first.y_pool, second.y_pool))


class DirichletTransform(SmoothingTransform):
    """X = sum_k V_k^sigma X_k + sum_k V_k^sigma Y_k, V ~ Dirichlet(1/S, ..., 1/S)"""

    system = 'dt'

    def weights(self, rng, size):
        return _powered_dirichlet(rng, self.spec, size)


class UniformTransform(SmoothingTransform):
    """X = U^m (sum_k X_k + sum_k Y_k), U uniform on [0,1]"""

    system = 'ct'

    def weights(self, rng, size):
        shared = rng.random(size) ** self.spec.m
        return np.repeat(shared[:, None], self.slots, axis=1)


TRANSFORMS = {'dt': DirichletTransform, 'ct': UniformTransform}


def _powered_dirichlet(rng, spec, size):
    shape = 1.0 / spec.S
    log_g = np.column_stack([log_gamma_variates(rng, shape, size) for _ in range(spec.S + 1)])
    log_v = log_g - logsumexp(log_g, axis=1, keepdims=True)
    return np.exp(float(spec.sigma) * log_v)


def dirichlet_power_weights(spec, seed, size=1, threads=None):
    """
    V_k^sigma for V ~ Dirichlet(1/S, ..., 1/S) over S+1 coordinates

    Returns:
        numpy array of shape (size, S+1)
    """
    spec.require_large()
    return run_blocks(lambda rng, n: _powered_dirichlet(rng, spec, n), size, seed, 'fixpoint', threads)


def apply_K_dt(pair, seed, step=0, threads=None):
    return DirichletTransform(pair.spec).apply(pair, seed, step, threads)


def apply_K_ct(pair, seed, step=0, threads=None):
    return UniformTransform(pair.spec).apply(pair, seed, step, threads)


def resampling_floor(pair, seed, threads=None):
    """Distance a converged pair still moves under one step, from resampling alone"""
    return TRANSFORMS[pair.system](pair.spec).resampling_floor(pair, seed, threads)


@dataclass
class FixpointTrace:
    """
    Successive distances of one fixed-point iteration and its final pools.

    `distance` is W2 between consecutive pools. `ratio` divides the coupled
    distance after one more step by it, which measures the Lipschitz ratio of
    the transform on those two pools. `floor` is the larger of 3/sqrt(N) and
    the resampling floor of the final pair; distances below it are noise.
    """
    rows: list
    constant: float
    floor: float
    pair: ParticlePair

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=[
            'iteration', 'w2_x', 'w2_y', 'distance', 'coupled_x', 'coupled_y', 'ratio_x', 'ratio_y', 'ratio',
            'shift_x', 'shift_y', 'above_floor',
        ])

    def checked_ratios(self):
        return [row['ratio'] for row in self.rows if math.isfinite(row['ratio'])]

    def contraction_holds(self, allowance=None):
        """Every measured ratio stays within constant + allowance"""
        allowance = config.CONTRACTION_ALLOWANCE if allowance is None else allowance
        return all(ratio <= self.constant + allowance for ratio in self.checked_ratios())

    def decay_rate(self):
        """
        Geometric decay factor fitted by least squares on log distances above
        the floor, or None with fewer than two such points
        """
        points = [(row['iteration'], row['distance']) for row in self.rows if row['above_floor']]
        if len(points) < 2:
            return None
        it, dist = np.array(points).T
        slope = np.polyfit(it, np.log(dist), 1)[0]
        return float(np.exp(slope))

    def to_csv(self, path):
        write_csv(self.to_frame(), path, header_lines={
            'matrix': self.pair.spec.label(),
            'system': self.pair.system,
            'N': self.pair.N,
            'contraction_constant': self.constant,
            'allowance': config.CONTRACTION_ALLOWANCE,
            'noise_floor': self.floor,
            'ratio': 'coupled step over consecutive-pool W2',
        })


def _ratio(current, previous):
    return current / previous if previous > 0 else float('nan')


def iterate_fixpoint(spec, system, N, iterations, seed, init='point', threads=None):
    """
    Iterate the transform from point masses at the exact means (or Gaussian pools)

    Args:
        spec: large UrnSpec
        system: 'dt' or 'ct'
        N: particles per pool
        iterations: number of transform applications
        seed: user seed
        init: 'point' or 'gaussian'

    Returns:
        FixpointTrace
    """
    _check_system(system)
    if iterations < 1:
        raise ValueError(f"Iteration count must be positive, got {iterations}")
    if init == 'point':
        pair = point_mass_pair(spec, system, N)
    elif init == 'gaussian':
        pair = gaussian_pair(spec, system, N, seed, threads)
    else:
        raise ValueError(f"Initialisation must be 'point' or 'gaussian', got {init!r}")

    transform = TRANSFORMS[system](spec)
    constant = contraction_constant(spec)
    rows = []
    for step in range(1, iterations + 1):
        new = transform.apply(pair, seed, step, threads)
        w2_x = two_sample_w2(pair.x_pool, new.x_pool)
        w2_y = two_sample_w2(pair.y_pool, new.y_pool)
        distance = max(w2_x, w2_y)
        coupled_x, coupled_y = transform.coupled_distance(pair, new, seed, step, threads)
        row = {
            'iteration': step,
            'w2_x': w2_x,
            'w2_y': w2_y,
            'distance': distance,
            'coupled_x': coupled_x,
            'coupled_y': coupled_y,
            'ratio_x': _ratio(coupled_x, distance),
            'ratio_y': _ratio(coupled_y, distance),
            'ratio': _ratio(max(coupled_x, coupled_y), distance),
            'shift_x': new.shifts[0],
            'shift_y': new.shifts[1],
        }
        rows.append(row)
        logger.debug(f"{system} iteration {step}: W2 = ({w2_x:.5f}, {w2_y:.5f}), ratio = {row['ratio']:.4f}")
        pair = new

    floor = max(noise_floor(N), transform.resampling_floor(pair, seed, threads))
    for row in rows:
        row['above_floor'] = row['distance'] > floor
    trace = FixpointTrace(rows, constant, floor, pair)
    logger.info(
        f"{system.upper()} fixed point for {spec.label()}: {iterations} iterations, N={N}, "
        f"constant={constant:.4f}, max ratio={max(trace.checked_ratios(), default=float('nan')):.4f}, "
        f"floor={floor:.5f}, fitted decay={trace.decay_rate()}"
    )
    if not trace.contraction_holds():
        logger.warning(f"Measured ratios exceed {constant:.4f} + {config.CONTRACTION_ALLOWANCE}")
    return trace


def fixpoint_pools(spec, system, N, iterations, seed, init='point', threads=None):
    """Final pools of iterate_fixpoint"""
    return iterate_fixpoint(spec, system, N, iterations, seed, init, threads).pair


def transfer_dt_to_ct(pair, seed, threads=None):
    """
    Multiply every DT particle by an independent xi^sigma, xi ~ Gamma(1/S)

    Returns:
        CT-tagged ParticlePair with the exact CT target means (no recentering)
    """
    if pair.system != 'dt':
        raise ValueError(f"Transfer expects a dt pair, got {pair.system}")
    spec = pair.spec
    shape, power = 1.0 / spec.S, float(spec.sigma)
    # X and Y pools use disjoint halves of the transfer stream
    factors = sample_gamma_power(shape, power, 2 * pair.N, seed, 'transfer', threads)
    x = pair.x_pool * factors[:pair.N]
    y = pair.y_pool * factors[pair.N:]
    return ParticlePair(x, y, target_means(spec, 'ct'), spec, 'ct')
