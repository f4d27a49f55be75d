"""
Moments of the limit laws.

For p >= 2 the moments (x_p, y_p) of the elementary variables solve
(mp - a) x_p - b y_p = r_X(p) and -c x_p + (mp - d) y_p = r_Y(p), where the
right-hand sides collect the compositions of p into S+1 parts all smaller
than p. Those sums are coefficients of products of exponential generating
functions, extended one order at a time with the J.C.P. Miller recurrence.
CT tables are exact Fractions; DT tables are floats.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from urn import Composition
from utils import format_fraction

logger = logging.getLogger("UrnLab")


@dataclass
class MomentTable:
    """
    x[p], y[p] for p = 0..P with x[0] = y[0] = 1. Composite tables (init set)
    hold the moments of the limit started from `init` in x and leave y empty.
    """
    spec: object
    system: str
    P: int
    x: list
    y: list = None
    init: Composition = None
    t_x: list = field(default_factory=list)
    t_y: list = field(default_factory=list)

    @property
    def exact(self):
        return isinstance(self.x[0], Fraction)

    @property
    def composite(self):
        return self.init is not None

    def variance_x(self):
        return self.x[2] - self.x[1] ** 2

    def variance_y(self):
        return self.y[2] - self.y[1] ** 2

    def check(self):
        """
        Names of violated table invariants (empty when all hold)
        """
        failures = []
        sequences = [('x', self.x)] + ([] if self.composite else [('y', self.y)])
        for name, seq in sequences:
            for p in range(2, self.P + 1, 2):
                if not seq[p] > 0:
                    failures.append(f"even moment {name}_{p} is not positive")
        if self.composite or self.P < 2:
            return failures
        if self.system == 'ct':
            if self.x[1] != Fraction(self.spec.b, self.spec.S) or self.y[1] != Fraction(-self.spec.c, self.spec.S):
                failures.append("first moments differ from (b/S, -c/S)")
        if not self.variance_x() > 0:
            failures.append("variance of X is not positive")
        if not self.variance_y() > 0:
            failures.append("variance of Y is not positive")
        return failures


class _IncrementalPower:
    """
    Coefficients H = F^n of a series with F[0] = 1, extended one order at a time.
    partial(p) is H[p] computed as if F[p] were 0.
    """

    def __init__(self, n, one):
        self.n = n
        self.f = [one]
        self.h = [one]

    def partial(self, p):
        if p == 0:
            return self.h[0]
        total = self.h[0] * 0
        for k in range(1, p):
            total += ((self.n + 1) * k - p) * self.f[k] * self.h[p - k]
        return total / p

    def extend(self, coefficient):
        p = len(self.f)
        value = self.partial(p) + self.n * coefficient
        self.f.append(coefficient)
        self.h.append(value)
        return value


def series_power(coefficients, n):
    """First len(coefficients) coefficients of F^n, F[0] must be 1"""
    if coefficients[0] != 1:
        raise ValueError("Series power needs a unit constant term")
    power = _IncrementalPower(n, coefficients[0])
    for coefficient in coefficients[1:]:
        power.extend(coefficient)
    return list(power.h)


def series_product(f, g, P):
    return [sum(f[j] * g[p - j] for j in range(p + 1)) for p in range(P + 1)]


def _lower_order_sum(first, second, p):
    # [t^p] of first * second with the order-p coefficients of both series treated as 0
    total = first.partial(p) + second.partial(p)
    for j in range(1, p):
        total += first.h[j] * second.h[p - j]
    return total


def _solve(spec, p, r_x, r_y):
    mp = spec.m * p
    det = (mp - spec.a) * (mp - spec.d) - spec.b * spec.c
    x = (r_x * (mp - spec.d) + spec.b * r_y) / det
    y = ((mp - spec.a) * r_y + spec.c * r_x) / det
    return x, y


def _recursion(spec, P, x1, y1, slot_weight, scale):
    """
    Shared recursion of both systems

    Args:
        slot_weight: q -> multiplier of the order-q moment inside a slot
        scale: p -> factor turning p! times the lower-order sum into r(p)
    """
    one = x1 * 0 + 1
    x, y = [one, x1], [one, y1]
    x_a = _IncrementalPower(spec.a + 1, one)
    y_b = _IncrementalPower(spec.b, one)
    x_c = _IncrementalPower(spec.c, one)
    y_d = _IncrementalPower(spec.d + 1, one)
    t_x, t_y = [None, None], [None, None]

    def extend(q):
        ex = slot_weight(q) * x[q] / math.factorial(q)
        ey = slot_weight(q) * y[q] / math.factorial(q)
        x_a.extend(ex)
        x_c.extend(ex)
        y_b.extend(ey)
        y_d.extend(ey)

    extend(1)
    for p in range(2, P + 1):
        sum_x = math.factorial(p) * _lower_order_sum(x_a, y_b, p)
        sum_y = math.factorial(p) * _lower_order_sum(x_c, y_d, p)
        t_x.append(sum_x)
        t_y.append(sum_y)
        x_p, y_p = _solve(spec, p, scale(p) * sum_x, scale(p) * sum_y)
        x.append(x_p)
        y.append(y_p)
        extend(p)
    return x, y, t_x, t_y


def ct_moments_exact(spec, P):
    """
    Exact moments of (X^CT, Y^CT) up to order P

    Returns:
        MomentTable of Fractions; P = 0 gives only the order-0 entries
    """
    spec.require_large()
    if P < 0:
        raise ValueError(f"Maximal order must be nonnegative, got {P}")
    if P == 0:
        return MomentTable(spec, 'ct', 0, [Fraction(1)], [Fraction(1)])
    x1, y1 = Fraction(spec.b, spec.S), Fraction(-spec.c, spec.S)
    x, y, t_x, t_y = _recursion(spec, P, x1, y1, lambda q: 1, lambda p: 1)
    logger.debug(f"CT moments of {spec.label()} up to order {P}")
    return MomentTable(spec, 'ct', P, x, y, t_x=t_x, t_y=t_y)


def dt_moments_direct(spec, P):
    """
    Moments of (X^DT, Y^DT) from the Dirichlet system, with the fractional
    joint moments E prod V_k^{sigma p_k} = G(p) prod h(p_k),
    G(p) = Gamma(nu)/Gamma(nu + sigma p), h(q) = Gamma(1/S + sigma q)/Gamma(1/S), nu = (S+1)/S

    Returns:
        MomentTable of floats
    """
    spec.require_large()
    if P < 0:
        raise ValueError(f"Maximal order must be nonnegative, got {P}")
    if P == 0:
        return MomentTable(spec, 'dt', 0, [1.0], [1.0])
    S, m, sigma = spec.S, spec.m, float(spec.sigma)
    nu = (S + 1) / S

    def slot_weight(q):
        return math.exp(gammaln(1 / S + sigma * q) - gammaln(1 / S))

    def scale(p):
        return (m * p + 1) * math.exp(gammaln(nu) - gammaln(nu + sigma * p))

    first = math.exp(gammaln(1 / S) - gammaln((m + 1) / S))
    x, y, t_x, t_y = _recursion(spec, P, first * spec.b / S, -first * spec.c / S, slot_weight, scale)
    logger.debug(f"DT moments of {spec.label()} up to order {P}")
    return MomentTable(spec, 'dt', P, x, y, t_x=t_x, t_y=t_y)


def connexion_factor(start, sigma, p):
    """Gamma(A)/Gamma(A + sigma p) = 1 / E xi^{sigma p} for xi ~ Gamma(A)"""
    return math.exp(gammaln(float(start)) - gammaln(float(start) + float(sigma) * p))


def _as_pair(init):
    if isinstance(init, Composition):
        return init.red, init.black
    alpha, beta = init
    if alpha < 0 or beta < 0 or alpha + beta == 0:
        raise ValueError(f"Composite moments need alpha, beta >= 0 with alpha + beta > 0, got {init}")
    return alpha, beta


def composite_moments(table, init, system='ct'):
    """
    Moments of the limit variable started from (alpha, beta) balls: the CT
    limit is the sum of alpha copies of X^CT and beta copies of Y^CT, all
    independent; the DT limit follows by the connexion with xi ~ Gamma((alpha+beta)/S).

    Args:
        table: elementary CT MomentTable
        init: Composition or (alpha, beta)
        system: 'ct' or 'dt'

    Returns:
        composite MomentTable
    """
    if table.system != 'ct' or table.composite:
        raise ValueError("Composite moments are built from an elementary CT table")
    alpha, beta = _as_pair(init)
    if system not in ('ct', 'dt'):
        raise ValueError(f"System must be 'ct' or 'dt', got {system!r}")
    P = table.P
    ex = [table.x[q] / math.factorial(q) for q in range(P + 1)]
    ey = [table.y[q] / math.factorial(q) for q in range(P + 1)]
    product = series_product(series_power(ex, alpha), series_power(ey, beta), P)
    moments = [math.factorial(p) * product[p] for p in range(P + 1)]
    composition = Composition(alpha, beta)
    if system == 'dt':
        start = Fraction(alpha + beta, table.spec.S)
        moments = [float(value) * connexion_factor(start, table.spec.sigma, p) for p, value in enumerate(moments)]
    return MomentTable(table.spec, system, P, moments, None, init=composition)


def dt_moments_via_connexion(table, init=None):
    """
    DT moments from CT moments: E (W^DT)^p = E (W^CT)^p * Gamma(A)/Gamma(A + sigma p)

    Args:
        table: CT MomentTable, elementary or composite
        init: starting composition; None keeps the table's own (one ball, A = 1/S, for elementary tables)

    Returns:
        MomentTable of floats
    """
    if table.system != 'ct':
        raise ValueError("The connexion transfer needs a CT table")
    if init is not None and not table.composite:
        return composite_moments(table, init, 'dt')
    spec, sigma = table.spec, table.spec.sigma
    if table.composite:
        start = Fraction(table.init.total, spec.S)
        x = [float(v) * connexion_factor(start, sigma, p) for p, v in enumerate(table.x)]
        return MomentTable(spec, 'dt', table.P, x, None, init=table.init)
    start = Fraction(1, spec.S)
    x = [float(v) * connexion_factor(start, sigma, p) for p, v in enumerate(table.x)]
    y = [float(v) * connexion_factor(start, sigma, p) for p, v in enumerate(table.y)]
    return MomentTable(spec, 'dt', table.P, x, y)


def _phi_weights(P):
    q = np.arange(P + 1)
    return np.log(q + 2.0) ** q


def _composition_sums(P, S):
    # [t^p] (sum_q phi(q) t^q)^{S+1} for p = 0..P
    weights = _phi_weights(P)
    power = np.ones(1)
    for _ in range(S + 1):
        power = np.convolve(power, weights)[:P + 1]
    return power, weights


def phi_capital(p, S):
    """
    Sum over compositions of p into S+1 parts, each below p, of
    prod phi(p_k) / phi(p), with phi(q) = log^q(q+2)
    """
    if p < 2:
        raise ValueError(f"Phi is defined for p >= 2, got {p}")
    sums, weights = _composition_sums(p, S)
    return float((sums[p] - (S + 1) * weights[p]) / weights[p])


def phi_bound(p, S):
    return (1 + 8 * math.log(p + 2)) ** (S + 1)


def phi_bound_check(p, S):
    return phi_capital(p, S) <= phi_bound(p, S)


def phi_table(p_max, S):
    """
    Rows (p, phi, bound, holds) for p = 2..p_max from one convolution pass
    """
    if p_max < 2:
        raise ValueError(f"Maximal order must be at least 2, got {p_max}")
    sums, weights = _composition_sums(p_max, S)
    rows = []
    for p in range(2, p_max + 1):
        value = float((sums[p] - (S + 1) * weights[p]) / weights[p])
        bound = phi_bound(p, S)
        rows.append({'p': p, 'S': S, 'phi': value, 'bound': bound, 'holds': bool(value <= bound)})
    return rows


@dataclass
class GrowthReport:
    """Moment growth sequences; soft diagnostics"""
    orders: list
    l_values: list
    b_values: list
    carleman_sums: list
    l_increasing: bool
    b_bounded: bool
    carleman_increasing: bool

    def as_dict(self):
        return {
            'orders': self.orders,
            'L': self.l_values,
            'B': self.b_values,
            'carleman_partial_sums': self.carleman_sums,
            'L_increasing_from_10': self.l_increasing,
            'B_bounded': self.b_bounded,
            'carleman_increasing': self.carleman_increasing,
        }


def _root(value, p):
    return float(value) ** (1.0 / p)


def growth_diagnostics(table):
    """
    L_p = (x_p/p!)^{1/p}, B_k = (x_{2k}/((2k)! log^{2k}(2k)))^{1/(2k)} and the
    partial Carleman sums sum_k x_{2k}^{-1/(2k)}, over the even orders of the X column

    Returns:
        GrowthReport
    """
    if table.P < 2:
        raise ValueError("Growth diagnostics need moments up to order 2 at least")
    orders = list(range(2, table.P + 1, 2))
    l_values, b_values, sums = [], [], []
    running = 0.0
    for p in orders:
        x_p = table.x[p]
        l_p = _root(x_p / math.factorial(p), p)
        l_values.append(l_p)
        b_values.append(l_p / math.log(p))
        running += float(x_p) ** (-1.0 / p)
        sums.append(running)

    tail = [value for p, value in zip(orders, l_values) if p >= 10]
    l_increasing = all(later > earlier for earlier, later in zip(tail, tail[1:]))
    b_bounded = max(b_values) <= 2 * max(b_values[:5])
    carleman_increasing = all(later > earlier for earlier, later in zip(sums, sums[1:]))
    if not (l_increasing and b_bounded):
        logger.warning(f"Growth diagnostics off trend: L increasing={l_increasing}, B bounded={b_bounded}")
    return GrowthReport(orders, l_values, b_values, sums, l_increasing, b_bounded, carleman_increasing)


def _cells(value):
    if value is None:
        return '', float('nan')
    if isinstance(value, Fraction):
        return format_fraction(value), float(value)
    return repr(float(value)), float(value)


def table_rows(table):
    """
    Rows (p, x, x_decimal, y, y_decimal) for p = 1..P; exact values as 'num/den'
    """
    rows = []
    for p in range(1, table.P + 1):
        x_text, x_dec = _cells(table.x[p])
        y_text, y_dec = _cells(table.y[p] if table.y is not None else None)
        rows.append({'p': p, 'x': x_text, 'x_decimal': x_dec, 'y': y_text, 'y_decimal': y_dec})
    return rows
