"""
Dirichlet distributions and diagonal urns (replacement matrix S*I_d).

The normalised composition of a diagonal urn converges to a Dirichlet vector
with parameters alpha_k/S; the products of rising factorials Gamma_p are
eigenfunctions of its one-step expectation operator, which makes their
expectations exact rationals at every finite time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from utils import log_gamma_variates, run_blocks

logger = logging.getLogger("UrnLab")


@dataclass(frozen=True)
class DirichletParams:
    nu: tuple

    def __post_init__(self):
        if len(self.nu) < 2:
            raise ValueError(f"Dirichlet dimension must be at least 2, got {len(self.nu)}")
        for k, value in enumerate(self.nu):
            if value <= 0:
                raise ValueError(f"Dirichlet parameter nu[{k}] must be positive, got {value}")

    @property
    def d(self):
        return len(self.nu)

    @property
    def total(self):
        return sum(self.nu)


def rising(x, k):
    """
    Gamma(x + k) / Gamma(x) for an integer k of either sign, exact when x is rational
    """
    value = Fraction(1) if isinstance(x, Rational) else 1.0
    if k >= 0:
        for j in range(k):
            value *= x + j
    else:
        for j in range(1, -k + 1):
            value /= x - j
    return value


def sample(params, N, seed, threads=None):
    """
    Draw N points of Dirichlet(nu) by normalising independent Gamma(nu_k) variates

    Returns:
        numpy array of shape (N, d); rows sum to 1 within 1e-12
    """
    shapes = np.array([float(v) for v in params.nu])

    def worker(rng, size):
        log_g = np.column_stack([log_gamma_variates(rng, shape, size) for shape in shapes])
        return np.exp(log_g - logsumexp(log_g, axis=1, keepdims=True))

    return run_blocks(worker, N, seed, 'dirichlet', threads)


def joint_moment(params, powers):
    """
    E prod_k D_k^{p_k} = Gamma(nu)/Gamma(nu + |p|) * prod_k Gamma(nu_k + p_k)/Gamma(nu_k)

    Args:
        params: DirichletParams
        powers: one power per coordinate, integers or reals

    Returns:
        Fraction when all powers are integers and all parameters rational, float otherwise

    Raises:
        ValueError: nu_k + p_k <= 0 for some coordinate
    """
    if len(powers) != params.d:
        raise ValueError(f"Expected {params.d} powers, got {len(powers)}")
    for k, (nu_k, p_k) in enumerate(zip(params.nu, powers)):
        if nu_k + p_k <= 0:
            raise ValueError(
                f"Moment not integrable at coordinate {k}: nu[{k}] + p[{k}] = {nu_k + p_k} <= 0"
            )

    integer_powers = all(float(p).is_integer() for p in powers)
    rational_params = all(isinstance(v, Rational) for v in params.nu)
    if integer_powers and rational_params:
        powers = [int(p) for p in powers]
        value = Fraction(1) / rising(Fraction(params.total), sum(powers))
        for nu_k, p_k in zip(params.nu, powers):
            value *= rising(Fraction(nu_k), p_k)
        return value

    nu = float(params.total)
    order = float(sum(powers))
    log_value = gammaln(nu) - gammaln(nu + order)
    for nu_k, p_k in zip(params.nu, powers):
        log_value += gammaln(float(nu_k) + float(p_k)) - gammaln(float(nu_k))
    return math.exp(log_value)


def _check_diagonal(d, S, init):
    if d < 2:
        raise ValueError(f"Diagonal urn needs at least 2 colours, got {d}")
    if S < 1:
        raise ValueError(f"Diagonal urn needs S >= 1, got {S}")
    if len(init) != d or min(init) < 0 or sum(init) == 0:
        raise ValueError(f"Initial composition must have {d} nonnegative entries, not all zero, got {init}")


def diagonal_urn_counts(d, S, init, n, N, seed, stream='diagonal_urn', threads=None):
    """
    Simulate N trajectories of the d-colour urn with replacement matrix S*I_d

    Returns:
        int64 array of shape (N, d), the compositions after n drawings
    """
    _check_diagonal(d, S, init)
    start = np.array(init, dtype=np.int64)

    def worker(rng, size):
        counts = np.tile(start, (size, 1))
        rows = np.arange(size)
        total = int(start.sum())
        for _ in range(n):
            threshold = rng.random(size) * total
            colour = (np.cumsum(counts, axis=1) > threshold[:, None]).argmax(axis=1)
            counts[rows, colour] += S
            total += S
        return counts

    return run_blocks(worker, N, seed, stream, threads)


def simulate_diagonal_urn(d, S, init, n, N, seed, threads=None):
    """
    Normalised compositions P_n/(nS) of the diagonal urn

    Returns:
        float array of shape (N, d); each row sums to 1 + sum(init)/(nS)
    """
    if n < 1:
        raise ValueError(f"Number of drawings must be positive, got {n}")
    counts = diagonal_urn_counts(d, S, init, n, N, seed, threads=threads)
    return counts / float(n * S)


def gamma_p(composition, S, powers):
    """Gamma_p(P) = prod_k Gamma(P_k/S + p_k)/Gamma(P_k/S)"""
    value = Fraction(1)
    for count, p_k in zip(composition, powers):
        value *= rising(Fraction(count, S), p_k)
    return value


def gamma_p_expectation(d, S, init, n, powers):
    """
    Exact E Gamma_p(P_n) for the diagonal urn:
    Gamma(a/S+n+|p|)/Gamma(a/S+n) * Gamma(a/S)/Gamma(a/S+|p|) * Gamma_p(P_0), a = sum(init).
    All Gamma arguments differ by integers, so the value is a ratio of rising factorials.
    """
    _check_diagonal(d, S, init)
    if len(powers) != d or min(powers) < 0:
        raise ValueError(f"Powers must be {d} nonnegative integers, got {powers}")
    order = sum(powers)
    start = Fraction(sum(init), S)
    return rising(start + n, order) / rising(start, order) * gamma_p(init, S, powers)


def exact_diagonal_distribution(d, S, init, n):
    """
    Exact law of the diagonal urn composition after n drawings (small n only)

    Returns:
        dict composition tuple -> Fraction
    """
    _check_diagonal(d, S, init)
    law = {tuple(init): Fraction(1)}
    for _ in range(n):
        step = {}
        for state, prob in law.items():
            total = sum(state)
            for k, count in enumerate(state):
                if count == 0:
                    continue
                nxt = state[:k] + (count + S,) + state[k + 1:]
                step[nxt] = step.get(nxt, 0) + prob * Fraction(count, total)
        law = step
    return law


def beta_marginal_check(params, samples, k):
    """
    KS statistic of coordinate k of Dirichlet samples against its Beta(nu_k, nu - nu_k) marginal
    """
    nu_k = float(params.nu[k])
    rest = float(params.total) - nu_k
    return stats.kstest(samples[:, k], stats.beta(nu_k, rest).cdf).statistic
