"""
Exact law of the number of red balls of the discrete-time urn after n drawings.

The state after k drawings is indexed by i, the number of red draws, so the
red count is alpha + i*a + (k-i)*c. All probabilities after k drawings share
the denominator prod_{j<k} (alpha+beta+jS); the DP carries the integer
numerators and builds Fractions only on request.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy import stats

import config
from dirichlet import diagonal_urn_counts
from utils import format_fraction, run_blocks

logger = logging.getLogger("UrnLab")


@dataclass(frozen=True)
class ExactDistribution:
    """
    Law of U^DT(n). weights[i] is the mass of i red draws, exact (int over
    denominator) or floating (denominator 1, float weights).
    """
    spec: object
    init: object
    n: int
    weights: tuple
    denominator: int = 1
    exact: bool = True
    _mass: dict = field(default=None, init=False, repr=False, compare=False)

    def red_count(self, i):
        return self.init.red + i * self.spec.a + (self.n - i) * self.spec.c

    @property
    def total_balls(self):
        return self.init.total + self.n * self.spec.S

    @property
    def mass(self):
        """dict red count -> probability (Fraction in exact mode), nonzero atoms only"""
        if self._mass is None:
            mass = {}
            for i, w in enumerate(self.weights):
                if w == 0:
                    continue
                r = self.red_count(i)
                p = Fraction(w, self.denominator) if self.exact else float(w)
                mass[r] = mass.get(r, 0) + p
            object.__setattr__(self, '_mass', dict(sorted(mass.items())))
        return self._mass

    def _expect(self, func, divisor=1):
        # func maps a red count to an integer
        if self.exact:
            num = sum(w * func(self.red_count(i)) for i, w in enumerate(self.weights) if w)
            return Fraction(num, self.denominator * divisor)
        return sum(float(w) * func(self.red_count(i)) for i, w in enumerate(self.weights) if w) / divisor

    def mean_red(self):
        return self._expect(lambda r: r)

    def mean_u2(self):
        """E u2(U(n)) with the black count implied by the total"""
        b, c, total = self.spec.b, self.spec.c, self.total_balls
        return self._expect(lambda r: b * r - c * (total - r), self.spec.S)

    def total_mass(self):
        if self.exact:
            return Fraction(sum(self.weights), self.denominator)
        return float(sum(self.weights))

    def to_frame(self):
        """Table with columns state, black, probability, probability_decimal"""
        rows = []
        for r, p in self.mass.items():
            rows.append({
                'state': r,
                'black': self.total_balls - r,
                'probability': format_fraction(p) if self.exact else repr(float(p)),
                'probability_decimal': float(p),
            })
        return pd.DataFrame(rows, columns=['state', 'black', 'probability', 'probability_decimal'])


def iter_exact_distributions(spec, init, n, exact=None):
    """
    Yield the law after 0, 1, ..., n drawings from a single DP pass

    Args:
        spec: UrnSpec
        init: Composition
        n: last drawing count
        exact: force exact (True) or floating (False) mode; default exact up to
            config.FLOAT_MODE_THRESHOLD drawings

    Yields:
        ExactDistribution
    """
    if n < 0:
        raise ValueError(f"Number of drawings must be nonnegative, got {n}")
    if exact is None:
        exact = n <= config.FLOAT_MODE_THRESHOLD
    a, c, S = spec.a, spec.c, spec.S
    alpha, start_total = init.red, init.total

    if exact:
        weights = [1]
        denominator = 1
        yield ExactDistribution(spec, init, 0, tuple(weights), denominator, True)
        for k in range(n):
            t = start_total + k * S
            new = [0] * (k + 2)
            for i, w in enumerate(weights):
                if not w:
                    continue
                r = alpha + i * a + (k - i) * c
                new[i + 1] += w * r
                new[i] += w * (t - r)
            weights = new
            denominator *= t
            yield ExactDistribution(spec, init, k + 1, tuple(weights), denominator, True)
        return

    probs = np.ones(1)
    yield ExactDistribution(spec, init, 0, tuple(probs), 1, False)
    for k in range(n):
        t = start_total + k * S
        i = np.arange(k + 1)
        p_red = (alpha + i * a + (k - i) * c) / t
        new = np.zeros(k + 2)
        new[1:] += probs * p_red
        new[:-1] += probs * (1.0 - p_red)
        probs = new
        if k + 1 == n:
            deficit = abs(1.0 - probs.sum())
            if deficit > config.MASS_DEFICIT_TOLERANCE:
                logger.warning(f"Floating DP mass deficit {deficit:.3e} exceeds {config.MASS_DEFICIT_TOLERANCE}")
        yield ExactDistribution(spec, init, k + 1, tuple(probs), 1, False)


def exact_distribution(spec, init, n, exact=None):
    """
    Law of the number of red balls after n drawings

    Returns:
        ExactDistribution
    """
    logger.debug(f"Exact DP for urn {spec.label()} from {init}, n={n}")
    dist = None
    for dist in iter_exact_distributions(spec, init, n, exact):
        pass
    return dist


def normalized_profile(dist):
    """
    Centre the red count on its exact mean and divide by n^sigma

    Returns:
        list of (value, probability) sorted by value
    """
    if dist.n < 1:
        raise ValueError("Normalised profile needs at least one drawing")
    mean = dist.mean_red()
    scale = dist.n ** float(dist.spec.sigma)
    profile = [(float(r - mean) / scale, float(p)) for r, p in dist.mass.items()]
    return sorted(profile)


def profile_frame(profile):
    return pd.DataFrame(profile, columns=['value', 'probability'])


@dataclass
class GoodnessOfFit:
    statistic: float
    p_value: float
    bins: int
    samples: int
    trivial: bool = False

    def as_dict(self):
        return {
            'statistic': self.statistic,
            'p_value': self.p_value,
            'bins': self.bins,
            'samples': self.samples,
            'trivial': self.trivial,
        }


def merge_bins(probabilities, observed, samples):
    """
    Merge consecutive atoms until each bin expects at least
    config.CHI_SQUARE_MIN_EXPECTED counts; a short tail joins the last bin.

    Returns:
        (expected, observed) numpy arrays
    """
    expected_bins, observed_bins = [], []
    acc_e, acc_o = 0.0, 0
    for p, o in zip(probabilities, observed):
        acc_e += p * samples
        acc_o += o
        if acc_e >= config.CHI_SQUARE_MIN_EXPECTED:
            expected_bins.append(acc_e)
            observed_bins.append(acc_o)
            acc_e, acc_o = 0.0, 0
    if acc_e > 0 or acc_o > 0:
        if expected_bins:
            expected_bins[-1] += acc_e
            observed_bins[-1] += acc_o
        else:
            expected_bins.append(acc_e)
            observed_bins.append(acc_o)
    return np.array(expected_bins), np.array(observed_bins)


def chi_square_against(dist, red_counts):
    """
    Chi-square goodness of fit of simulated red counts against an exact law

    Returns:
        GoodnessOfFit
    """
    samples = len(red_counts)
    atoms = list(dist.mass.items())
    values, counts = np.unique(red_counts, return_counts=True)
    tally = dict(zip(values.tolist(), counts.tolist()))
    unknown = set(tally) - set(dist.mass)
    if unknown:
        # impossible states: the test must fail outright
        logger.error(f"Simulated red counts outside the exact support: {sorted(unknown)[:5]}")
        return GoodnessOfFit(float('inf'), 0.0, len(atoms), samples)
    probabilities = [float(p) for _, p in atoms]
    observed = [tally.get(r, 0) for r, _ in atoms]
    expected, observed = merge_bins(probabilities, observed, samples)
    if len(expected) < 2:
        return GoodnessOfFit(0.0, 1.0, len(expected), samples, trivial=True)
    expected = expected * samples / expected.sum()
    result = stats.chisquare(observed, expected)
    return GoodnessOfFit(float(result.statistic), float(result.pvalue), len(expected), samples)


def _simulate_subtrees(spec, init, draws, rng):
    """
    Red counts of the forest: tree k starts from one ball (red for k < alpha)
    and receives draws[:, k] drawings of its own urn
    """
    size, trees = draws.shape
    red = np.zeros((size, trees), dtype=np.int64)
    red[:, :init.red] = 1
    total = np.ones((size, trees), dtype=np.int64)
    for step in range(int(draws.max(initial=0))):
        active = draws > step
        is_red = rng.random((size, trees)) * total < red
        red += np.where(active, np.where(is_red, spec.a, spec.c), 0)
        total += np.where(active, spec.S, 0)
    return red.sum(axis=1)


def decomposition_check(spec, init, n, N, seed, threads=None):
    """
    Sample the forest decomposition of U(n): alpha+beta independent sub-urns
    started from one ball each, the sub-urn k being run for (D_k(n)-1)/S
    drawings where D(n) is a diagonal S*I urn started from (1,...,1).
    The red counts are compared with the exact law by a chi-square test.

    Returns:
        GoodnessOfFit
    """
    dist = exact_distribution(spec, init, n, exact=True)
    if n == 0:
        return GoodnessOfFit(0.0, 1.0, 1, N, trivial=True)
    trees = init.total
    if trees == 1:
        logger.info("Single-ball initial composition: the decomposition is the identity")
        return GoodnessOfFit(0.0, 1.0, len(dist.mass), N, trivial=True)

    sizes = diagonal_urn_counts(trees, spec.S, [1] * trees, n, N, seed, stream='forest', threads=threads)
    draws = (sizes - 1) // spec.S

    def worker(rng, size, start):
        return _simulate_subtrees(spec, init, draws[start:start + size], rng)

    red_counts = run_blocks(worker, N, seed, 'dt_chain', threads, indexed=True)
    result = chi_square_against(dist, red_counts)
    logger.info(
        f"Decomposition check {spec.label()} from {init}, n={n}, N={N}: "
        f"chi2={result.statistic:.3f}, p={result.p_value:.4f}, bins={result.bins}"
    )
    return result
