#!/usr/bin/env python3
import argparse
import logging
import os
import sys
import traceback
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from scipy import stats

import config
import density_cf
import dirichlet
import exact_dist
import mc_engine
import moments
import smoothing
from urn import (
    UrnClassError, UrnValidationError, classify, expected_u2_exact, expected_W_ct, expected_W_dt,
    parse_composition, parse_matrix, project,
)
from utils import format_fraction, write_csv, write_json

logger = logging.getLogger("UrnLab")

STOCHASTIC_COMMANDS = {
    'mc-w', 'connexion-check', 'fixpoint', 'dirichlet-check', 'density', 'cf-decay', 'decomposition-check',
}
URN_FREE_COMMANDS = {'phi-check', 'dirichlet-check', 'gamma-p'}
EVERY_STEP_LIMIT = 1000


class ConfigError(Exception):
    """Invalid flags, config file or option combination"""


class InvariantViolation(Exception):
    """A numerical check of a run failed"""


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises ConfigError instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def setup_logging(level):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(config.LOG_FILE)
        ],
        force=True,
    )


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(',')]
    except ValueError:
        raise ConfigError(f"Expected comma-separated integers, got '{text}'")


def _bool(text):
    value = str(text).strip().lower()
    if value in ('1', 'true', 'yes'):
        return True
    if value in ('0', 'false', 'no', ''):
        return False
    raise ConfigError(f"Expected a boolean, got '{text}'")


# dest -> (config file converter, default)
OPTIONS = {
    'matrix': (str, None),
    'init': (lambda s: [v.strip() for v in s.split(';')], ['1,0']),
    'steps': (int, None),
    'horizon': (int, config.DEFAULT_HORIZON),
    'samples': (int, 100_000),
    'particles': (int, 100_000),
    'iters': (int, 40),
    'seed': (int, None),
    'system': (str, None),
    'max_order': (int, 8),
    'init_mode': (str, 'point'),
    'three_way': (_bool, False),
    'complete': (_bool, True),
    'S': (_int_list, [7]),
    'pmax': (int, 60),
    'dim': (int, 3),
    'start': (_int_list, None),
    'powers': (_int_list, None),
    'float_mode': (_bool, False),
    't_max': (float, 200.0),
    't_points': (int, 201),
    'bandwidth': (float, None),
    'out': (str, None),
    'out_dir': (str, config.OUTPUT_DIR),
    'threads': (int, config.THREADS),
    'log_level': (str, config.LOG_LEVEL),
}

DEFAULT_SYSTEMS = {'mc-w': 'dt', 'fixpoint': 'dt', 'moments': 'ct', 'density': 'dt', 'cf-decay': 'dt'}


@dataclass
class RunConfig:
    """Resolved options of one command"""
    command: str
    matrix: str = None
    spec: object = None
    inits: list = field(default_factory=list)
    steps: int = None
    horizon: int = config.DEFAULT_HORIZON
    samples: int = 100_000
    particles: int = 100_000
    iters: int = 40
    seed: int = None
    system: str = None
    max_order: int = 8
    init_mode: str = 'point'
    three_way: bool = False
    complete: bool = True
    S: list = field(default_factory=lambda: [7])
    pmax: int = 60
    dim: int = 3
    start: list = None
    powers: list = None
    float_mode: bool = False
    t_max: float = 200.0
    t_points: int = 201
    bandwidth: float = None
    out: str = None
    out_dir: str = config.OUTPUT_DIR
    threads: int = config.THREADS
    log_level: str = config.LOG_LEVEL

    def as_dict(self):
        data = asdict(self)
        data['spec'] = self.spec.as_dict() if self.spec is not None else None
        data['inits'] = [str(init) for init in self.inits]
        return data


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help='KEY=VALUE file with option values')
    common.add_argument('--out', help='Primary artifact path')
    common.add_argument('--out-dir', dest='out_dir', help='Artifact directory')
    common.add_argument('--threads', type=int, help='Worker cap (results never depend on it)')
    common.add_argument('--log-level', dest='log_level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    parser = ArgumentParser(description='Numerical lab for large two-colour Polya urns')
    subparsers = parser.add_subparsers(dest='command', parser_class=ArgumentParser)

    def urn_flags(p, with_init=True):
        p.add_argument('--matrix', help='Replacement matrix a,b,c,d')
        if with_init:
            p.add_argument('--init', action='append', help='Initial composition alpha,beta (repeatable)')

    def raw_flag(p):
        p.add_argument('--raw', dest='complete', action='store_const', const=False, default=None,
                       help='Plain finite-horizon estimators u2/n^sigma and e^(-m tau) u2, without the completion term '
                            '(completed estimators are the default)')

    def sampling_flags(p):
        p.add_argument('--horizon', type=int, help='Number of drawings per trajectory')
        p.add_argument('--samples', type=int, help='Number of trajectories')
        p.add_argument('--seed', type=int, help='Seed (mandatory)')

    exact = subparsers.add_parser('exact-dist', parents=[common], help='Exact law after n drawings')
    urn_flags(exact)
    exact.add_argument('--steps', type=int, help='Number of drawings')
    exact.add_argument('--float', dest='float_mode', action='store_true', default=None, help='Floating DP')

    mc = subparsers.add_parser('mc-w', parents=[common],
                               help='Monte Carlo W estimators (completed by default, --raw for plain)',
                               description='Samples W^DT or W^CT. By default a shifted Gamma term with the exact '
                                           'second and third cumulants of the fluctuation left after the horizon '
                                           'is added; --raw gives the plain finite-horizon estimators.')
    urn_flags(mc)
    sampling_flags(mc)
    raw_flag(mc)
    mc.add_argument('--system', choices=['dt', 'ct'])

    connexion = subparsers.add_parser('connexion-check', parents=[common], help='W^CT against xi^sigma W^DT')
    urn_flags(connexion)
    sampling_flags(connexion)
    raw_flag(connexion)

    fixpoint = subparsers.add_parser('fixpoint', parents=[common], help='Smoothing transform iteration')
    urn_flags(fixpoint, with_init=False)
    fixpoint.add_argument('--system', choices=['dt', 'ct'])
    fixpoint.add_argument('--particles', type=int)
    fixpoint.add_argument('--iters', type=int)
    fixpoint.add_argument('--seed', type=int)
    fixpoint.add_argument('--init-mode', dest='init_mode', choices=['point', 'gaussian'])
    fixpoint.add_argument('--three-way', dest='three_way', action='store_true', default=None,
                          help='Compare CT pools with transferred DT pools and direct simulation')
    fixpoint.add_argument('--horizon', type=int, help='Drawings of the direct simulation')
    raw_flag(fixpoint)

    moment = subparsers.add_parser('moments', parents=[common], help='Exact moment tables')
    urn_flags(moment)
    moment.add_argument('--system', choices=['ct', 'dt', 'composite'])
    moment.add_argument('--max-order', dest='max_order', type=int)

    phi = subparsers.add_parser('phi-check', parents=[common], help='Composition functional bound')
    phi.add_argument('--S', dest='S', type=_int_list, help='Balances, comma separated')
    phi.add_argument('--pmax', type=int)

    def diagonal_flags(p):
        p.add_argument('--dim', type=int, help='Number of colours')
        p.add_argument('--S', dest='S', type=_int_list, help='Balance of the diagonal urn')
        p.add_argument('--start', type=_int_list, help='Initial composition, one entry per colour')

    diri = subparsers.add_parser('dirichlet-check', parents=[common], help='Diagonal urn limit')
    diagonal_flags(diri)
    sampling_flags(diri)
    diri.add_argument('--powers', type=_int_list)

    gamma = subparsers.add_parser('gamma-p', parents=[common], help='Exact Gamma_p expectations')
    diagonal_flags(gamma)
    gamma.add_argument('--steps', type=int)
    gamma.add_argument('--powers', type=_int_list)

    density = subparsers.add_parser('density', parents=[common], help='Kernel density of W')
    urn_flags(density)
    sampling_flags(density)
    raw_flag(density)
    density.add_argument('--system', choices=['dt', 'ct'])
    density.add_argument('--bandwidth', type=float)

    cf = subparsers.add_parser('cf-decay', parents=[common], help='Empirical characteristic function of W')
    urn_flags(cf)
    sampling_flags(cf)
    raw_flag(cf)
    cf.add_argument('--system', choices=['dt', 'ct'])
    cf.add_argument('--t-max', dest='t_max', type=float)
    cf.add_argument('--t-points', dest='t_points', type=int)

    decomposition = subparsers.add_parser('decomposition-check', parents=[common], help='Forest decomposition')
    urn_flags(decomposition)
    decomposition.add_argument('--steps', type=int)
    decomposition.add_argument('--samples', type=int)
    decomposition.add_argument('--seed', type=int)
    return parser


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    values = {}
    for key, text in dotenv_values(path).items():
        dest = key.lower()
        if dest not in OPTIONS:
            raise ConfigError(f"Unknown key in config file {path}: {key}")
        converter = OPTIONS[dest][0]
        try:
            values[dest] = converter(text)
        except (TypeError, ValueError):
            raise ConfigError(f"Invalid value for {key} in {path}: '{text}'")
    return values


def parse_config(argv, config_file=None):
    """
    Resolve a RunConfig; explicit flags win over config file values, which win over defaults

    Raises:
        ConfigError: bad flags, unknown config keys or missing mandatory options
        UrnValidationError: invalid matrix or composition
    """
    args = build_parser().parse_args(argv)
    if not args.command:
        raise ConfigError("A subcommand is required")
    config_file = args.config or config_file
    from_file = _read_config_file(config_file) if config_file else {}

    values = {}
    for dest, (_, default) in OPTIONS.items():
        value = getattr(args, dest, None)
        if value is None:
            value = from_file.get(dest, default)
        values[dest] = value
    command = args.command
    if values['system'] is None:
        values['system'] = DEFAULT_SYSTEMS.get(command)

    if command in STOCHASTIC_COMMANDS and values['seed'] is None:
        raise ConfigError(f"--seed is required for {command}")
    if command in ('exact-dist', 'decomposition-check', 'gamma-p') and values['steps'] is None:
        raise ConfigError(f"--steps is required for {command}")

    spec = None
    if command not in URN_FREE_COMMANDS:
        if not values['matrix']:
            raise ConfigError(f"--matrix is required for {command}")
        spec = parse_matrix(values['matrix'])
    inits = [parse_composition(text) for text in values.pop('init')]

    if command in ('dirichlet-check', 'gamma-p'):
        d = values['dim']
        values['start'] = values['start'] or [1] * d
        values['powers'] = values['powers'] or [1] + [0] * (d - 1)
        if len(values['start']) != d or len(values['powers']) != d:
            raise ConfigError(f"--start and --powers need {d} entries each")

    for dest in ('steps', 'horizon', 'samples', 'particles', 'iters', 'max_order', 'pmax', 't_points'):
        if values[dest] is not None and values[dest] < 0:
            raise ConfigError(f"--{dest.replace('_', '-')} must be nonnegative, got {values[dest]}")

    return RunConfig(command=command, spec=spec, inits=inits, **values)


class UrnLab:
    """Runs one command and collects its artifacts and checks"""

    def __init__(self, run_config):
        self.config = run_config
        self.spec = run_config.spec
        self.results = {}
        self.checks = {}

    @property
    def primary(self):
        cfg = self.config
        return cfg.out or os.path.join(cfg.out_dir, f"{cfg.command}.csv")

    def artifact(self, suffix, ext='.csv'):
        return f"{os.path.splitext(self.primary)[0]}_{suffix}{ext}"

    def check(self, name, passed):
        self.checks[name] = bool(passed)
        if passed:
            logger.info(f"Check {name}: ok")
        else:
            logger.error(f"Check {name}: FAILED")

    def run(self):
        handlers = {
            'exact-dist': self.run_exact_dist,
            'mc-w': self.run_mc_w,
            'connexion-check': self.run_connexion_check,
            'fixpoint': self.run_fixpoint,
            'moments': self.run_moments,
            'phi-check': self.run_phi_check,
            'dirichlet-check': self.run_dirichlet_check,
            'gamma-p': self.run_gamma_p,
            'density': self.run_density,
            'cf-decay': self.run_cf_decay,
            'decomposition-check': self.run_decomposition_check,
        }
        if self.spec is not None:
            self.results['class'] = classify(self.spec).value
        handlers[self.config.command]()
        summary = {
            'command': self.config.command,
            'config': self.config.as_dict(),
            'results': self.results,
            'checks': self.checks,
        }
        write_json(summary, self.artifact('summary', '.json'))
        failed = [name for name, passed in self.checks.items() if not passed]
        if failed:
            raise InvariantViolation(f"Failed checks: {', '.join(failed)}")

    def run_exact_dist(self):
        cfg, spec = self.config, self.spec
        exact = False if cfg.float_mode else None
        for init in cfg.inits:
            suffix = f"{init.red}_{init.black}" if len(cfg.inits) > 1 else ''
            key = suffix or 'init'
            # every intermediate law is compared with the martingale product on short runs
            every_step = cfg.steps <= EVERY_STEP_LIMIT
            target = project(spec, init)[1]
            start = Fraction(init.total, spec.S)
            product_ok = True
            dist = None
            for dist in exact_dist.iter_exact_distributions(spec, init, cfg.steps, exact):
                if every_step and dist.exact and dist.mean_u2() != target:
                    product_ok = False
                target *= 1 + spec.sigma / (dist.n + start)

            expected = expected_u2_exact(spec, init, cfg.steps)
            if dist.exact:
                self.check(f"total_mass_{key}", dist.total_mass() == 1)
                self.check(f"mean_u2_product_{key}", product_ok and dist.mean_u2() == expected)
            else:
                self.check(f"total_mass_{key}", abs(1.0 - dist.total_mass()) <= config.MASS_DEFICIT_TOLERANCE)
                expected = float(expected)
                self.check(f"mean_u2_product_{key}", abs(dist.mean_u2() - expected) <= 1e-9 * max(1.0, abs(expected)))

            path = self.artifact(suffix) if suffix else self.primary
            write_csv(dist.to_frame(), path, header_lines={'matrix': spec.label(), 'init': init, 'n': cfg.steps})
            if spec.is_large and cfg.steps >= 1:
                profile = exact_dist.normalized_profile(dist)
                write_csv(exact_dist.profile_frame(profile), self.artifact('_'.join(filter(None, ['profile', suffix]))))
            self.results[str(init)] = {
                'n': cfg.steps,
                'atoms': len(dist.mass),
                'exact': dist.exact,
                'mean_u2': format_fraction(dist.mean_u2()) if dist.exact else dist.mean_u2(),
            }

    def run_mc_w(self):
        cfg, spec, init = self.config, self.spec, self.config.inits[0]
        if cfg.system == 'dt':
            samples = mc_engine.sample_W_dt(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)
            target = expected_W_dt(spec, init)
        else:
            xi, samples = mc_engine.sample_ct(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)
            target = expected_W_ct(spec, init)
            xi.to_csv(self.artifact('xi'))
            self.results['xi_mean'] = xi.mean()
        samples.to_csv(self.primary)
        samples.to_json(self.artifact('meta', '.json'))
        self.results.update({'mean': samples.mean(), 'standard_error': samples.standard_error(), 'expected': target})
        self.check('mean_within_3se', mc_engine.within_standard_errors(samples.mean(), samples.standard_error(), target))

        if cfg.complete:
            # only completed estimators carry the full limit variance
            exact = moments.composite_moments(moments.ct_moments_exact(spec, 4), init, cfg.system)
            rows = []
            for p in (2, 3, 4):
                estimate, se = samples.moment(p), samples.moment_standard_error(p)
                rows.append({'p': p, 'estimate': estimate, 'standard_error': se, 'exact': float(exact.x[p])})
                self.check(f"moment_{p}_within_3se",
                           mc_engine.within_standard_errors(estimate, se, float(exact.x[p])))
            write_csv(pd.DataFrame(rows), self.artifact('moments'))
            self.results['moments'] = rows

    def run_connexion_check(self):
        cfg, spec, init = self.config, self.spec, self.config.inits[0]
        xi, w_ct = mc_engine.sample_ct(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)
        rhs = mc_engine.sample_connexion(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)
        w2 = mc_engine.two_sample_w2(w_ct, rhs, cfg.seed)
        pooled = mc_engine.pooled_std(w_ct, rhs)
        ks = mc_engine.ks_distance(xi, stats.gamma(init.total / spec.S).cdf)
        write_csv(pd.DataFrame({'W_ct': w_ct.values, 'xi_sigma_W_dt': rhs.values}), self.primary,
                  header_lines={'matrix': spec.label(), 'init': init, 'seed': cfg.seed})
        self.results.update({'w2': w2, 'pooled_std': pooled, 'xi_ks': ks})
        self.check('connexion_w2', w2 <= 0.05 * pooled)
        self.check('xi_gamma_ks', ks <= 0.02)

    def run_fixpoint(self):
        cfg, spec = self.config, self.spec
        trace = smoothing.iterate_fixpoint(spec, cfg.system, cfg.particles, cfg.iters, cfg.seed,
                                           cfg.init_mode, cfg.threads)
        trace.to_csv(self.primary)
        x_set, y_set = trace.pair.samples(cfg.seed)
        x_set.to_csv(self.artifact('x_pool'))
        y_set.to_csv(self.artifact('y_pool'))
        self.results.update({
            'contraction_constant': trace.constant,
            'noise_floor': trace.floor,
            'max_checked_ratio': max(trace.checked_ratios(), default=None),
            'decay_rate': trace.decay_rate(),
            'means': trace.pair.means(),
        })
        self.check('contraction', trace.contraction_holds())

        if cfg.three_way and cfg.system == 'ct':
            dt_pair = smoothing.fixpoint_pools(spec, 'dt', cfg.particles, cfg.iters, cfg.seed, cfg.init_mode, cfg.threads)
            transferred = smoothing.transfer_dt_to_ct(dt_pair, cfg.seed, cfg.threads)
            residual = smoothing.apply_K_ct(transferred, cfg.seed, 0, cfg.threads)
            self.results['transfer_residual'] = max(
                mc_engine.two_sample_w2(transferred.x_pool, residual.x_pool),
                mc_engine.two_sample_w2(transferred.y_pool, residual.y_pool),
            )
            self.results['transfer_floor'] = smoothing.resampling_floor(transferred, cfg.seed, cfg.threads)
            _, direct = mc_engine.sample_ct(spec, self.config.inits[0], cfg.horizon, cfg.particles,
                                            cfg.seed, cfg.threads, cfg.complete)
            routes = {'pools': trace.pair.x_pool, 'direct': direct.values, 'transferred': transferred.x_pool}
            names = list(routes)
            for i, first in enumerate(names):
                for second in names[i + 1:]:
                    w2 = mc_engine.two_sample_w2(routes[first], routes[second], cfg.seed)
                    pooled = mc_engine.pooled_std(routes[first], routes[second])
                    self.results[f"w2_{first}_{second}"] = w2
                    self.check(f"agreement_{first}_{second}", w2 <= 0.05 * pooled)

    def run_moments(self):
        cfg, spec, P = self.config, self.spec, self.config.max_order
        ct = moments.ct_moments_exact(spec, P)
        if cfg.system == 'ct':
            table = ct
            failures = table.check()
            self.results['violations'] = failures
            self.check('table_invariants', not failures)
            if P >= 4:
                self.results['growth'] = moments.growth_diagnostics(table).as_dict()
        elif cfg.system == 'dt':
            table = moments.dt_moments_direct(spec, P)
            via = moments.dt_moments_via_connexion(ct)
            agree = all(
                abs(table.x[p] - via.x[p]) <= 1e-6 * abs(via.x[p]) and abs(table.y[p] - via.y[p]) <= 1e-6 * abs(via.y[p])
                for p in range(1, P + 1)
            )
            self.check('dual_route', agree)
            self.results['via_connexion'] = moments.table_rows(via)
        else:
            init = cfg.inits[0]
            table = moments.composite_moments(ct, init, 'ct')
            dt_table = moments.composite_moments(ct, init, 'dt')
            write_csv(pd.DataFrame(moments.table_rows(dt_table)), self.artifact('dt'))
            self.results['dt'] = moments.table_rows(dt_table)
            self.check('even_moments_positive', not table.check())
        rows = moments.table_rows(table)
        write_csv(pd.DataFrame(rows), self.primary, header_lines={'matrix': spec.label(), 'system': cfg.system})
        self.results['table'] = rows

    def run_phi_check(self):
        cfg = self.config
        rows = []
        for S in cfg.S:
            rows.extend(moments.phi_table(cfg.pmax, S))
        write_csv(pd.DataFrame(rows), self.primary)
        self.results['violations'] = [(row['p'], row['S']) for row in rows if not row['holds']]
        self.check('phi_bound', all(row['holds'] for row in rows))

    def run_dirichlet_check(self):
        cfg = self.config
        d, S, start = cfg.dim, cfg.S[0], cfg.start
        n = cfg.horizon
        values = dirichlet.simulate_diagonal_urn(d, S, start, n, cfg.samples, cfg.seed, cfg.threads)
        write_csv(pd.DataFrame(values, columns=[f"p{k + 1}" for k in range(d)]), self.primary)
        self.check('conservation', np.allclose(values.sum(axis=1), 1 + sum(start) / (n * S), rtol=0, atol=1e-12))

        params = dirichlet.DirichletParams(tuple(Fraction(a, S) for a in start))
        se = np.sqrt(values.var(axis=0, ddof=1) / cfg.samples)
        for k in range(d):
            mean_target = float(params.nu[k] / params.total)
            self.check(f"mean_{k + 1}", mc_engine.within_standard_errors(values[:, k].mean(), se[k], mean_target))
            powers = [0] * d
            powers[k] = 2
            second = values[:, k] ** 2
            second_se = second.std(ddof=1) / np.sqrt(cfg.samples)
            self.check(f"second_moment_{k + 1}", mc_engine.within_standard_errors(
                second.mean(), second_se, float(dirichlet.joint_moment(params, powers))))

        direct = dirichlet.sample(params, cfg.samples, cfg.seed, cfg.threads)
        self.results['beta_marginal_ks'] = [float(dirichlet.beta_marginal_check(params, direct, k)) for k in range(d)]
        self.check('gamma_p_exact_dp', all(
            _dp_gamma_p(d, S, start, steps, cfg.powers) == dirichlet.gamma_p_expectation(d, S, start, steps, cfg.powers)
            for steps in range(11)
        ))

    def run_gamma_p(self):
        cfg = self.config
        d, S, start, powers = cfg.dim, cfg.S[0], cfg.start, cfg.powers
        rows = []
        for n in range(cfg.steps + 1):
            value = dirichlet.gamma_p_expectation(d, S, start, n, powers)
            rows.append({'n': n, 'value': format_fraction(value), 'decimal': float(value)})
        write_csv(pd.DataFrame(rows), self.primary)
        self.results['value'] = rows[-1]['value']

        order, alpha = sum(powers), sum(start)
        current = dirichlet.gamma_p_expectation(d, S, start, cfg.steps, powers)
        following = dirichlet.gamma_p_expectation(d, S, start, cfg.steps + 1, powers)
        self.check('one_step_eigenvalue', following == (1 + Fraction(order * S, alpha + cfg.steps * S)) * current)
        if cfg.steps <= 10:
            self.check('exact_dp', _dp_gamma_p(d, S, start, cfg.steps, powers) == current)

    def _w_samples(self):
        cfg, spec, init = self.config, self.spec, self.config.inits[0]
        if cfg.system == 'ct':
            return mc_engine.sample_ct(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)[1]
        return mc_engine.sample_W_dt(spec, init, cfg.horizon, cfg.samples, cfg.seed, cfg.threads, cfg.complete)

    def run_density(self):
        cfg = self.config
        samples = self._w_samples()
        bandwidth = cfg.bandwidth or density_cf.silverman_bandwidth(samples)
        grid = density_cf.density_grid(samples)
        estimate = density_cf.kde_density(samples, bandwidth, grid)
        write_csv(estimate.to_frame(), self.primary, header_lines={'bandwidth': bandwidth, 'system': cfg.system})
        self.results.update({
            'bandwidth': bandwidth,
            'peak': estimate.peak(),
            'integral': estimate.integral(),
            'bandwidth_halving_sup': density_cf.bandwidth_stability(samples, grid, bandwidth),
        })
        self.check('integral', abs(estimate.integral() - 1.0) <= 1e-3)

    def run_cf_decay(self):
        cfg = self.config
        samples = self._w_samples()
        report = density_cf.empirical_cf(samples, np.linspace(0.0, cfg.t_max, cfg.t_points))
        write_csv(report.to_frame(), self.primary, header_lines={'N': report.N, 'system': cfg.system})
        span = density_cf.support_span(samples)
        self.results.update({'support': span.as_dict(), 'noise_floor': report.noise_floor})
        self.check('both_signs', span.both_signs(at_least=0.01))
        if cfg.t_max >= 160:
            self.results['modulus_20'] = report.at(20.0)
            self.results['modulus_160'] = report.at(160.0)
            self.check('cf_decay', report.decays(20.0, 160.0, 0.1))

    def run_decomposition_check(self):
        cfg = self.config
        result = exact_dist.decomposition_check(self.spec, cfg.inits[0], cfg.steps, cfg.samples, cfg.seed, cfg.threads)
        write_csv(pd.DataFrame([result.as_dict()]), self.primary)
        self.results.update(result.as_dict())
        self.check('chi_square', result.trivial or result.p_value >= 1e-3)


def _dp_gamma_p(d, S, start, n, powers):
    law = dirichlet.exact_diagonal_distribution(d, S, start, n)
    return sum(prob * dirichlet.gamma_p(state, S, powers) for state, prob in law.items())


def run_command(run_config):
    """
    Execute a resolved command

    Returns:
        exit code: 0 success, 1 configuration error, 2 failed check or numerical failure
    """
    try:
        UrnLab(run_config).run()
    except InvariantViolation as e:
        logger.error(str(e))
        return 2
    except (ConfigError, UrnValidationError, UrnClassError) as e:
        logger.error(f"Configuration error: {str(e)}")
        return 1
    except Exception as e:
        logger.error(f"Computation failed: {str(e)}")
        logger.debug(f"Exception traceback: {traceback.format_exc()}")
        return 2
    return 0


def main(argv=None):
    """Main entry point"""
    argv = sys.argv[1:] if argv is None else argv
    try:
        run_config = parse_config(argv)
    except (ConfigError, UrnValidationError, UrnClassError) as e:
        setup_logging(config.LOG_LEVEL)
        logger.error(f"Configuration error: {str(e)}")
        return 1
    setup_logging(run_config.log_level)
    logger.info(f"Running {run_config.command}")
    return run_command(run_config)


if __name__ == '__main__':
    sys.exit(main())
