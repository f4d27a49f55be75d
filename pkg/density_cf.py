"""
Empirical characteristic functions, support extremes and Gaussian kernel
density estimates of limit-variable samples.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

import config

logger = logging.getLogger("UrnLab")

MIN_CF_SAMPLES = 10_000


def _values(samples):
    values = getattr(samples, 'values', samples)
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("Sample set is empty")
    return values


@dataclass
class CFReport:
    t_grid: np.ndarray
    modulus: np.ndarray
    N: int
    noise_floor: float

    def at(self, t):
        """Modulus at the grid point closest to t"""
        return float(self.modulus[np.abs(self.t_grid - t).argmin()])

    def decays(self, t_low, t_high, cap):
        """
        |phi(t_high)| <= cap, and either below |phi(t_low)| or already within
        the noise floor, where the two moduli cannot be ordered
        """
        high = self.at(t_high)
        if high > cap:
            return False
        return high <= self.noise_floor or high < self.at(t_low)

    def gap(self, other):
        """Largest pointwise difference of moduli against another report on the same grid"""
        if not np.array_equal(self.t_grid, other.t_grid):
            raise ValueError("Reports must share their t-grid")
        return float(np.max(np.abs(self.modulus - other.modulus)))

    def to_frame(self):
        return pd.DataFrame({
            't': self.t_grid,
            'modulus': self.modulus,
            'noise_floor': self.noise_floor,
        })


def empirical_cf(samples, t_grid):
    """
    |N^-1 sum_j exp(i t X_j)| on a strictly increasing grid of t >= 0

    Returns:
        CFReport with noise floor config.CF_NOISE_FACTOR / sqrt(N)
    """
    values = _values(samples)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("The t-grid must be nonnegative and strictly increasing")
    if values.size < MIN_CF_SAMPLES:
        logger.warning(f"Empirical CF from only {values.size} samples; noise floor is high")

    modulus = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        modulus[i] = abs(np.mean(np.exp(1.0j * t * values)))
    modulus = np.minimum(modulus, 1.0)
    floor = config.CF_NOISE_FACTOR / math.sqrt(values.size)
    return CFReport(t_grid, modulus, int(values.size), floor)


@dataclass
class SupportSpan:
    minimum: float
    maximum: float
    fraction_negative: float
    degenerate: bool

    def both_signs(self, at_least=0.0):
        return self.minimum < 0 < self.maximum and at_least <= self.fraction_negative <= 1 - at_least

    def as_dict(self):
        return {
            'min': self.minimum,
            'max': self.maximum,
            'fraction_negative': self.fraction_negative,
            'degenerate': self.degenerate,
        }


def support_span(samples):
    values = _values(samples)
    low, high = float(values.min()), float(values.max())
    return SupportSpan(low, high, float(np.mean(values < 0)), low == high)


def silverman_bandwidth(samples):
    """0.9 min(std, IQR/1.34) N^(-1/5)"""
    values = _values(samples)
    std = values.std(ddof=1) if values.size > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) or std
    return float(0.9 * spread * values.size ** -0.2)


def density_grid(samples, points=512, width=6.0):
    """Evenly spaced grid over mean +- width * std"""
    values = _values(samples)
    centre, std = values.mean(), values.std()
    return np.linspace(centre - width * std, centre + width * std, points)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(trapezoid(self.density, self.grid))

    def peak(self):
        return float(self.density.max())

    def to_frame(self):
        return pd.DataFrame({'x': self.grid, 'density': self.density})


def kde_density(samples, bandwidth, grid, chunk=16):
    """
    Gaussian kernel density estimate evaluated on a grid

    Args:
        samples: SampleSet or array
        bandwidth: kernel standard deviation, > 0
        grid: evaluation points
        chunk: grid points evaluated per vectorised pass

    Returns:
        DensityEstimate
    """
    if not bandwidth > 0:
        raise ValueError(f"Bandwidth must be positive, got {bandwidth}")
    values = _values(samples)
    grid = np.asarray(grid, dtype=float)
    density = np.empty(grid.size)
    norm = 1.0 / (values.size * bandwidth * math.sqrt(2 * math.pi))
    for start in range(0, grid.size, chunk):
        z = (grid[start:start + chunk, None] - values[None, :]) / bandwidth
        density[start:start + chunk] = np.exp(-0.5 * z ** 2).sum(axis=1) * norm
    return DensityEstimate(grid, density, float(bandwidth))


def bandwidth_stability(samples, grid, bandwidth=None):
    """Sup-norm distance between the estimates at bandwidths h and h/2"""
    h = bandwidth or silverman_bandwidth(samples)
    wide = kde_density(samples, h, grid)
    narrow = kde_density(samples, h / 2, grid)
    return float(np.max(np.abs(wide.density - narrow.density)))
