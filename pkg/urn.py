"""
Two-colour balanced urns: validated replacement matrices, spectral data,
classification and the closed-form expectations of the limit variables.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from scipy.special import gammaln

logger = logging.getLogger("UrnLab")


class UrnValidationError(ValueError):
    """Raised for an invalid replacement matrix or composition"""


class UrnClassError(ValueError):
    """Raised when an operation needs a large urn and gets another class"""


class UrnClass(enum.Enum):
    ORIGINAL = "Original"
    LARGE = "Large"
    CRITICAL = "Critical"
    SMALL = "Small"
    TRIANGULAR = "Triangular"


@dataclass(frozen=True)
class Composition:
    """Urn content: red and black ball counts"""
    red: int
    black: int

    def __post_init__(self):
        if self.red < 0 or self.black < 0:
            raise UrnValidationError(f"Composition must be nonnegative, got ({self.red},{self.black})")
        if self.red + self.black < 1:
            raise UrnValidationError("Composition must contain at least one ball")

    @property
    def total(self):
        return self.red + self.black

    def __str__(self):
        return f"({self.red},{self.black})"


@dataclass(frozen=True)
class SpectralData:
    """
    Right eigenvectors of the transposed replacement matrix and the dual
    linear forms u1, u2 (stored as coefficient pairs acting on (x, y))
    """
    v1: tuple
    v2: tuple
    u1: tuple
    u2: tuple

    @staticmethod
    def _apply(form, x, y):
        return form[0] * x + form[1] * y

    def project_u1(self, x, y):
        return self._apply(self.u1, x, y)

    def project_u2(self, x, y):
        return self._apply(self.u2, x, y)


@dataclass(frozen=True)
class UrnSpec:
    """
    Replacement matrix R = (a b; c d) with balance S and second eigenvalue m.
    Build it with build_spec(); the constructor trusts its arguments.
    """
    a: int
    b: int
    c: int
    d: int
    S: int
    m: int
    sigma: Fraction
    spectral: SpectralData

    @property
    def matrix(self):
        return ((self.a, self.b), (self.c, self.d))

    @property
    def is_large(self):
        return classify(self) is UrnClass.LARGE

    def require_large(self):
        """Raise UrnClassError unless the urn is large"""
        urn_class = classify(self)
        if urn_class is not UrnClass.LARGE:
            raise UrnClassError(
                f"Urn {self.label()} is {urn_class.value}, a Large urn (bc != 0, 1/2 < sigma < 1) is required"
            )

    def label(self):
        return f"({self.a},{self.b},{self.c},{self.d})"

    def as_dict(self):
        return {
            'a': self.a, 'b': self.b, 'c': self.c, 'd': self.d,
            'S': self.S, 'm': self.m, 'sigma': str(self.sigma),
            'class': classify(self).value,
        }


def build_spec(a, b, c, d):
    """
    Validate a replacement matrix and derive its spectral data

    Args:
        a, b: balls added (red, black) when a red ball is drawn
        c, d: balls added (red, black) when a black ball is drawn

    Returns:
        UrnSpec

    Raises:
        UrnValidationError: negative entries or unbalanced rows
    """
    entries = (a, b, c, d)
    if any(int(v) != v for v in entries):
        raise UrnValidationError(f"Replacement matrix entries must be integers, got {entries}")
    a, b, c, d = (int(v) for v in entries)
    if min(a, b, c, d) < 0:
        raise UrnValidationError(f"Replacement matrix entries must be nonnegative, got {entries}")
    if a + b != c + d:
        raise UrnValidationError(f"Urn is unbalanced: row sums {a + b} != {c + d}")
    S = a + b
    if S < 1:
        raise UrnValidationError("Urn balance S must be at least 1")
    m = a - c
    sigma = Fraction(m, S)

    # v1 = S/(b+c) (c, b), v2 = S/(b+c) (1, -1); (u1, u2) is the dual basis.
    # Diagonal urns (b = c = 0) have no such basis; their forms are still usable.
    if b + c == 0:
        v1 = (Fraction(S, 2), Fraction(S, 2))
        v2 = (Fraction(1), Fraction(-1))
    else:
        scale = Fraction(S, b + c)
        v1 = (scale * c, scale * b)
        v2 = (scale, -scale)
    spectral = SpectralData(
        v1=v1,
        v2=v2,
        u1=(Fraction(1, S), Fraction(1, S)),
        u2=(Fraction(b, S), Fraction(-c, S)),
    )
    spec = UrnSpec(a=a, b=b, c=c, d=d, S=S, m=m, sigma=sigma, spectral=spectral)
    logger.debug(f"Built urn {spec.label()}: S={S}, m={m}, sigma={sigma}")
    return spec


def classify(spec):
    """
    Classify an urn. Triangular (bc = 0) takes precedence over the
    sigma-based classes.

    Returns:
        UrnClass
    """
    if spec.b * spec.c == 0:
        return UrnClass.TRIANGULAR
    if spec.sigma == 1:
        return UrnClass.ORIGINAL
    if spec.sigma > Fraction(1, 2):
        return UrnClass.LARGE
    if spec.sigma == Fraction(1, 2):
        return UrnClass.CRITICAL
    return UrnClass.SMALL


def project(spec, comp):
    """
    Evaluate the eigenforms on a composition

    Returns:
        tuple (u1, u2) of Fractions
    """
    x, y = comp.red, comp.black
    return spec.spectral.project_u1(x, y), spec.spectral.project_u2(x, y)


def expected_u2_exact(spec, init, n):
    """
    Exact E[u2(U(n))] for the discrete-time chain, from the martingale product
    prod_{k<n} (1 + sigma/(k + (alpha+beta)/S)) * u2(init)
    """
    if n < 0:
        raise ValueError(f"Number of drawings must be nonnegative, got {n}")
    _, value = project(spec, init)
    start = Fraction(init.total, spec.S)
    for k in range(n):
        value *= 1 + spec.sigma / (k + start)
    return value


def gamma_ratio(x, y):
    """Gamma(x)/Gamma(y) through log-Gamma, for positive arguments"""
    return math.exp(gammaln(float(x)) - gammaln(float(y)))


def expected_W_dt(spec, init):
    """
    E[W^DT] = Gamma((alpha+beta)/S) / Gamma((alpha+beta)/S + sigma) * (b alpha - c beta)/S

    Raises:
        UrnClassError: the urn is not large
    """
    spec.require_large()
    _, u2 = project(spec, init)
    if u2 == 0:
        return 0.0
    start = Fraction(init.total, spec.S)
    return gamma_ratio(start, start + spec.sigma) * float(u2)


def expected_W_ct(spec, init):
    """
    E[W^CT] = (b alpha - c beta)/S

    Raises:
        UrnClassError: the urn is not large
    """
    spec.require_large()
    _, u2 = project(spec, init)
    return float(u2)


def parse_matrix(text):
    """Parse 'a,b,c,d' into an UrnSpec"""
    try:
        values = [int(v) for v in str(text).split(',')]
    except ValueError:
        raise UrnValidationError(f"Matrix must be four comma-separated integers, got '{text}'")
    if len(values) != 4:
        raise UrnValidationError(f"Matrix must have exactly four entries, got '{text}'")
    return build_spec(*values)


def parse_composition(text):
    """Parse 'alpha,beta' into a Composition"""
    try:
        values = [int(v) for v in str(text).split(',')]
    except ValueError:
        raise UrnValidationError(f"Composition must be two comma-separated integers, got '{text}'")
    if len(values) != 2:
        raise UrnValidationError(f"Composition must have exactly two entries, got '{text}'")
    return Composition(*values)
