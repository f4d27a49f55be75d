"""
Seeded Monte Carlo for the discrete-time urn chain and its continuous-time
branching embedding, with estimators of W^DT, W^CT and xi.

Trajectories are simulated in fixed-size blocks; block b of a stream draws
from SeedSequence(seed, spawn_key=(stream, b)), so results depend on the seed
and never on the worker count.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

import config
from moments import ct_moments_exact
from urn import expected_W_dt
from utils import log_gamma_variates, run_blocks, write_csv, write_json

logger = logging.getLogger("UrnLab")


@dataclass
class SampleSet:
    """Sorted draws with provenance metadata"""
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, values, **meta):
        values = np.sort(np.asarray(values, dtype=float))
        meta['N'] = int(values.size)
        return cls(values, meta)

    @property
    def N(self):
        return int(self.values.size)

    def mean(self):
        return float(self.values.mean())

    def std(self):
        return float(self.values.std(ddof=1)) if self.N > 1 else 0.0

    def standard_error(self):
        return self.std() / math.sqrt(self.N)

    def moment(self, p):
        return float(np.mean(self.values ** p))

    def moment_standard_error(self, p):
        return float(np.std(self.values ** p, ddof=1) / math.sqrt(self.N))

    def to_csv(self, path):
        """One value per line with '# key=value' metadata header"""
        write_csv(pd.DataFrame({'value': self.values}), path, header_lines=self.meta)

    def to_json(self, path):
        """JSON sidecar with the metadata"""
        write_json(self.meta, path)


@dataclass
class CTTrajectory:
    """Jump times and compositions of one embedded trajectory"""
    times: np.ndarray
    red: np.ndarray
    black: np.ndarray


def _run_chain(spec, init, n, rng, size, embedded=False):
    """
    Advance `size` independent chains by n drawings

    Returns:
        (red counts, jump times tau_n or None)
    """
    red = np.full(size, init.red, dtype=np.int64)
    tau = np.zeros(size) if embedded else None
    for k in range(n):
        total = init.total + k * spec.S
        drew_red = rng.random(size) * total < red
        red += np.where(drew_red, spec.a, spec.c)
        if embedded:
            # holding time: Exp(rate = current ball count)
            tau += rng.standard_exponential(size) / total
    return red, tau


def _u_forms(spec, init, n, red):
    total = init.total + n * spec.S
    u1 = total / spec.S
    u2 = (spec.b * red - spec.c * (total - red)) / spec.S
    return u1, u2


@functools.lru_cache(maxsize=None)
def completion_cumulants(spec):
    """
    Exact second and third cumulants of the elementary limits X^CT and Y^CT

    Returns:
        ((k2_x, k3_x), (k2_y, k3_y)) as floats
    """
    table = ct_moments_exact(spec, 3)

    def cumulants(m):
        return float(m[2] - m[1] ** 2), float(m[3] - 3 * m[2] * m[1] + 2 * m[1] ** 3)

    return cumulants(table.x), cumulants(table.y)


def completion_variances(spec):
    """Exact variances of the elementary limits X^CT and Y^CT"""
    (var_x, _), (var_y, _) = completion_cumulants(spec)
    return var_x, var_y


def _completion(spec, init, n, red, rng):
    """
    Stand-in for the fluctuation still to come after n drawings: every red
    (black) ball would contribute an independent centred copy of X^CT (Y^CT).
    The sum is drawn as a shifted Gamma variate with the same second and third
    cumulants; lanes with a vanishing third cumulant fall back to a Gaussian.
    """
    (k2_x, k3_x), (k2_y, k3_y) = completion_cumulants(spec)
    black = init.total + n * spec.S - red
    k2 = red * k2_x + black * k2_y
    k3 = red * k3_x + black * k3_y
    skewed = np.abs(k3) > 1e-12 * k2 ** 1.5
    scale = np.where(skewed, k3 / (2 * k2), 1.0)
    shape = np.where(skewed, k2 / scale ** 2, 1.0)
    gamma_part = scale * (rng.gamma(shape) - shape)
    normal_part = np.sqrt(k2) * rng.standard_normal(red.size)
    return np.where(skewed, gamma_part, normal_part)


def _meta(spec, init, estimator, horizon, seed, complete=False):
    return {
        'matrix': spec.label(),
        'init': str(init),
        'estimator': estimator,
        'horizon': horizon,
        'seed': seed,
        'completed': complete,
    }


def sample_red_counts(spec, init, n, N, seed, embedded=False, threads=None):
    """
    Red counts after n drawings, from the DT chain or from the jump chain of the embedding

    Returns:
        int64 numpy array of length N (trajectory order)
    """
    stream = 'ct_chain' if embedded else 'dt_chain'

    def worker(rng, size):
        return _run_chain(spec, init, n, rng, size, embedded)[0]

    return run_blocks(worker, N, seed, stream, threads)


def _check_horizon(spec, n, N):
    spec.require_large()
    if n < 1 or N < 1:
        raise ValueError(f"Horizon and trajectory count must be positive, got n={n}, N={N}")


def simulate_W_dt(spec, init, n, N, seed, threads=None, complete=False):
    """
    W^DT estimators in trajectory order: u2(U(n))/n^sigma, or with
    complete=True (u2(U(n)) + completion)/u1(U(n))^sigma
    """
    _check_horizon(spec, n, N)
    scale = n ** float(spec.sigma)

    def worker(rng, size):
        red, _ = _run_chain(spec, init, n, rng, size)
        u1, u2 = _u_forms(spec, init, n, red)
        if complete:
            return (u2 + _completion(spec, init, n, red, rng)) / u1 ** float(spec.sigma)
        return u2 / scale

    return run_blocks(worker, N, seed, 'dt_chain', threads)


def sample_W_dt(spec, init, n, N, seed, threads=None, complete=False):
    """
    u2(U(n))/n^sigma over N independent DT trajectories

    Raises:
        UrnClassError: the urn is not large
    """
    values = simulate_W_dt(spec, init, n, N, seed, threads, complete)
    logger.debug(f"Sampled {N} W^DT values for {spec.label()} from {init} at n={n}")
    return SampleSet.build(values, **_meta(spec, init, 'W_dt', n, seed, complete))


def simulate_ct_estimators(spec, init, n, N, seed, threads=None, complete=False):
    """
    Per-trajectory pairs (e^{-S tau_n} u1(U(n)), e^{-m tau_n} u2(U(n))), unsorted.
    With complete=True the completion is added to u2 before scaling.

    Returns:
        (xi values, W^CT values) as numpy arrays
    """
    _check_horizon(spec, n, N)

    def worker(rng, size):
        red, tau = _run_chain(spec, init, n, rng, size, embedded=True)
        u1, u2 = _u_forms(spec, init, n, red)
        if complete:
            u2 = u2 + _completion(spec, init, n, red, rng)
        return np.exp(-spec.S * tau) * u1, np.exp(-spec.m * tau) * u2

    return run_blocks(worker, N, seed, 'ct_chain', threads)


def sample_ct(spec, init, n, N, seed, threads=None, complete=False):
    """
    Estimators of xi and W^CT from the jump chain of the embedding

    Returns:
        (xi SampleSet, W^CT SampleSet)
    """
    xi, w = simulate_ct_estimators(spec, init, n, N, seed, threads, complete)
    logger.debug(f"Sampled {N} embedded trajectories for {spec.label()} from {init} at n={n}")
    return (
        SampleSet.build(xi, **_meta(spec, init, 'xi', n, seed)),
        SampleSet.build(w, **_meta(spec, init, 'W_ct', n, seed, complete)),
    )


def simulate_ct_trajectory(spec, init, n, seed):
    """
    One embedded trajectory: jump times tau_0 = 0 < tau_1 < ... < tau_n and
    the compositions at the jumps

    Returns:
        CTTrajectory
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(config.STREAMS['ct_chain'],)))
    times = np.zeros(n + 1)
    red = np.zeros(n + 1, dtype=np.int64)
    red[0] = init.red
    for k in range(n):
        total = init.total + k * spec.S
        drew_red = rng.random() * total < red[k]
        red[k + 1] = red[k] + (spec.a if drew_red else spec.c)
        times[k + 1] = times[k] + rng.standard_exponential() / total
    black = init.total + np.arange(n + 1) * spec.S - red
    return CTTrajectory(times=times, red=red, black=black)


def sample_gamma_power(shape, power, N, seed, stream='gamma_power', threads=None):
    """
    xi^power with xi ~ Gamma(shape), through log-space boosting for small shapes

    Returns:
        numpy array of length N (trajectory order)
    """
    def worker(rng, size):
        return np.exp(power * log_gamma_variates(rng, shape, size))

    return run_blocks(worker, N, seed, stream, threads)


def connexion_pairs(spec, init, n, N, seed, threads=None, complete=False):
    """
    Independent (xi^sigma, W^DT) pairs with xi ~ Gamma((alpha+beta)/S)

    Returns:
        (xi^sigma values, W^DT values) in trajectory order
    """
    w_dt = simulate_W_dt(spec, init, n, N, seed, threads, complete)
    xi_power = sample_gamma_power(init.total / spec.S, float(spec.sigma), N, seed, 'connexion_xi', threads)
    return xi_power, w_dt


def sample_connexion(spec, init, n, N, seed, threads=None, complete=False):
    """
    Samples of xi^sigma * W^DT, the right-hand side of the martingale connexion

    Returns:
        SampleSet
    """
    xi_power, w_dt = connexion_pairs(spec, init, n, N, seed, threads, complete)
    return SampleSet.build(xi_power * w_dt, **_meta(spec, init, 'xi_sigma_W_dt', n, seed, complete))


def _values(samples):
    values = samples.values if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("Sample set is empty")
    return values


def ks_distance(samples, cdf):
    """Empirical Kolmogorov-Smirnov statistic against a CDF"""
    return float(stats.kstest(_values(samples), cdf).statistic)


def two_sample_w2(first, second, seed=0):
    """
    Wasserstein-2 distance of two empirical measures on the line:
    root mean squared difference of paired order statistics. When the sizes
    differ, the smaller set is resampled with replacement to the larger size.
    """
    x = np.sort(_values(first))
    y = np.sort(_values(second))
    if x.size != y.size:
        small, large = (x, y) if x.size < y.size else (y, x)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(config.STREAMS['resample'],)))
        logger.info(f"Resampling {small.size} values to {large.size} for the W2 pairing")
        small = np.sort(rng.choice(small, size=large.size, replace=True))
        x, y = small, large
    return float(np.sqrt(np.mean((x - y) ** 2)))


def pooled_std(first, second):
    x, y = _values(first), _values(second)
    return float(np.sqrt((x.var(ddof=1) + y.var(ddof=1)) / 2.0))


def within_standard_errors(estimate, standard_error, target, factor=3.0):
    return abs(estimate - target) <= factor * standard_error


@dataclass
class SweepReport:
    horizons: list
    means: list
    standard_errors: list
    stds: list
    target: float
    agree: bool

    def as_dict(self):
        return {
            'horizons': self.horizons,
            'means': self.means,
            'standard_errors': self.standard_errors,
            'stds': self.stds,
            'target': self.target,
            'agree': self.agree,
        }


def convergence_sweep(spec, init, n, N, seed, threads=None, complete=False):
    """
    W^DT estimators at horizons n, 2n, 4n; they agree when every pair of means
    differs by at most 3 combined standard errors. The standard deviations are
    reported too: without completion they still grow with the horizon.

    Returns:
        SweepReport
    """
    horizons = [n, 2 * n, 4 * n]
    sets = [sample_W_dt(spec, init, h, N, seed + i, threads, complete) for i, h in enumerate(horizons)]
    means = [s.mean() for s in sets]
    errors = [s.standard_error() for s in sets]
    agree = all(
        abs(means[i] - means[j]) <= 3.0 * math.hypot(errors[i], errors[j])
        for i in range(3) for j in range(i + 1, 3)
    )
    report = SweepReport(horizons, means, errors, [s.std() for s in sets], expected_W_dt(spec, init), agree)
    if not agree:
        logger.warning(f"Horizon sweep {horizons} has not stabilised: means {means}")
    return report


