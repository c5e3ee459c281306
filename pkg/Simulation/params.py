"""
Sweep parameters     Script  ver： Oct 17th 14:00

a sweep config is a flat yaml mapping, e.g.

    algorithms: [fedepm, sfedavg]
    m: 10
    k0: [4, 12, 20]        # the one list-valued key among k0 / rho / epsilon is the sweep axis
    epsilon: 0.1           # null or off switches the noise off
    trials: 20

every key can be overridden from the environment as FEDEPM_<KEY>, the value is read as yaml
(FEDEPM_K0="[4, 12]")
"""
import argparse
import os
import re
from dataclasses import dataclass, replace
from typing import Any, List, Mapping, Optional

import yaml

from FedCore.elastic_net import PenaltyConfig
from FedCore.fed_algorithms import ALGORITHMS, BaselineConfig
from FedCore.numkit import InvalidInputError
from Simulation.harness import CLOCKS, SELECTION_POLICIES, STOP_RULES, ExperimentConfig

ENV_PREFIX = 'FEDEPM_'
AXIS_KEYS = ('k0', 'rho', 'epsilon')

DEFAULTS = {
    'algorithms': ['fedepm'],
    'm': 50,
    'k0': 12,
    'rho': 0.5,
    'epsilon': 0.1,
    'selection': 'iid',
    's0': None,
    'max_iterations': 5000,
    'seeds': None,
    'trials': None,
    'seed_base': 0,
    'beta': 0.001,
    'mu0': 0.05,
    'c': 1e-8,
    'alpha': 1.001,
    'lambda': None,
    'eta': None,
    'prox_mu': 1e-5,
    'inner_steps': 3,
    'step_rule': 'formula',
    'fixed_step': None,
    'clock': 'wall',
    'monitor': False,
    'stop_rule': 'standard',
    'grad_tol': 1e-6,
    'var_tol': 1e-8,
    'workers': 1,
    'partition': 'equal',
    'dirichlet_alpha': 1.0,
    'data': 'synthetic',
    'synthetic_n': 14,
    'synthetic_d': 2000,
    'w_true_scale': 1.0,
    'data_seed': 0,
}

CHOICES = {
    'selection': SELECTION_POLICIES,
    'step_rule': ('formula', 'fixed'),
    'clock': CLOCKS,
    'stop_rule': STOP_RULES,
    'partition': ('equal', 'dirichlet'),
}
INT_KEYS = ('m', 'k0', 's0', 'max_iterations', 'trials', 'seed_base', 'inner_steps', 'workers',
            'synthetic_n', 'synthetic_d', 'data_seed')
FLOAT_KEYS = ('rho', 'epsilon', 'beta', 'mu0', 'c', 'alpha', 'lambda', 'eta', 'prox_mu', 'fixed_step',
              'grad_tol', 'var_tol', 'dirichlet_alpha', 'w_true_scale')
NULLABLE_KEYS = ('s0', 'seeds', 'trials', 'lambda', 'eta', 'fixed_step', 'epsilon')


class ConfigError(ValueError):
    """Raised on an unknown key, a wrongly typed value or a violated invariant; names the key."""

    def __init__(self, key: str, message: str):
        super().__init__(f'config key "{key}": {message}')
        self.key = key


@dataclass
class SweepSpec:
    '''
    Arguments:
    ----------
    base (ExperimentConfig): the run settings shared by every cell
    axis (str): 'k0', 'rho' or 'epsilon'
    values (list): axis values, one cell per (algorithm, value)
    seeds (list): trial seeds, each cell runs once per seed
    algorithms (list): subset of fedepm, sfedavg, sfedprox
    penalty (PenaltyConfig): explicit lambda / eta, None follows the default rule from (m, rho) per cell
    data (str): 'synthetic' or 'adult:<path>'
    '''
    base: ExperimentConfig
    axis: str
    values: List[Any]
    seeds: List[int]
    algorithms: List[str]
    penalty: Optional[PenaltyConfig] = None
    data: str = 'synthetic'
    beta: float = 0.001
    partition: str = 'equal'
    dirichlet_alpha: float = 1.0
    synthetic_n: int = 14
    synthetic_d: int = 2000
    w_true_scale: float = 1.0
    data_seed: int = 0

    def cell_config(self, algorithm: str, value, seed: int) -> ExperimentConfig:
        return replace(self.base, algorithm=algorithm, seed=seed, penalty=self.penalty, **{self.axis: value})


def coerce_int(key: str, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f'expected an integer, got {value!r}')
    return value


def coerce_float(key: str, value):
    if isinstance(value, bool):
        raise ConfigError(key, f'expected a number, got {value!r}')
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        # yaml 1.1 reads exponents without a dot (1e-8) as text
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(key, f'expected a number, got {value!r}')


def coerce_value(key: str, value):
    if value is None:
        if key in NULLABLE_KEYS:
            return None
        raise ConfigError(key, 'may not be null')
    # yaml 1.1 reads a bare off as False
    if key == 'epsilon' and (value is False or (isinstance(value, str) and value.lower() == 'off')):
        return None
    if key in INT_KEYS:
        return coerce_int(key, value)
    if key in FLOAT_KEYS:
        return coerce_float(key, value)
    if key in CHOICES:
        if value not in CHOICES[key]:
            raise ConfigError(key, f'{value!r} is not one of {CHOICES[key]}')
        return value
    if key == 'monitor':
        if not isinstance(value, bool):
            raise ConfigError(key, f'expected true or false, got {value!r}')
        return value
    if key == 'data':
        if not isinstance(value, str) or not (value == 'synthetic' or value.startswith('adult:')):
            raise ConfigError(key, f'expected "synthetic" or "adult:<path>", got {value!r}')
        return value
    if key == 'algorithms':
        value = [value] if isinstance(value, str) else value
        if not isinstance(value, list) or not value or any(a not in ALGORITHMS for a in value):
            raise ConfigError(key, f'expected a nonempty subset of {ALGORITHMS}, got {value!r}')
        return value
    if key == 'seeds':
        if not isinstance(value, list) or not value:
            raise ConfigError(key, 'expected a nonempty list of integers')
        return [coerce_int(key, s) for s in value]
    return value


def parse_config(text: str, environ: Optional[Mapping[str, str]] = None) -> SweepSpec:
    """
    Validate a yaml sweep config and fill the defaults.

    :param text: file contents, may be empty
    :param environ: environment used for FEDEPM_<KEY> overrides (os.environ by default)
    :return: SweepSpec
    """
    try:
        doc = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as e:
        raise ConfigError('<document>', f'not valid yaml: {e}') from e
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError('<document>', 'expected a mapping of keys to values')

    environ = os.environ if environ is None else environ
    for key in DEFAULTS:
        override = environ.get(ENV_PREFIX + key.upper())
        if override is not None:
            try:
                doc[key] = yaml.safe_load(override)
            except yaml.YAMLError as e:
                raise ConfigError(key, f'environment override is not valid yaml: {e}') from e

    for key in doc:
        if key not in DEFAULTS:
            raise ConfigError(str(key), 'unknown key')
    raw = {**DEFAULTS, **doc}

    axis_keys = [key for key in AXIS_KEYS if isinstance(raw[key], list)]
    if len(axis_keys) > 1:
        raise ConfigError(axis_keys[1], f'only one sweep axis is allowed, found lists for {axis_keys}')
    axis = axis_keys[0] if axis_keys else 'k0'
    axis_values = raw[axis] if axis_keys else [raw[axis]]
    if len(axis_values) == 0:
        raise ConfigError(axis, 'sweep axis is empty')

    values = {key: coerce_value(key, raw[key]) for key in DEFAULTS if key != axis}
    axis_values = [coerce_value(axis, v) for v in axis_values]
    values[axis] = axis_values[0]

    if values['seeds'] is not None and values['trials'] is not None:
        raise ConfigError('trials', 'give either seeds or trials, not both')
    if values['seeds'] is not None:
        seeds = values['seeds']
    elif values['trials'] is not None:
        if values['trials'] < 1:
            raise ConfigError('trials', 'must be >= 1')
        seeds = list(range(values['seed_base'], values['seed_base'] + values['trials']))
    else:
        seeds = [values['seed_base']]

    penalty = None
    if values['lambda'] is not None or values['eta'] is not None:
        if values['eta'] is None:
            raise ConfigError('eta', 'lambda given without eta')
        lam = values['lambda'] if values['lambda'] is not None else values['eta'] / 2
        try:
            penalty = PenaltyConfig(lam=lam, eta=values['eta'], k0=1)
        except InvalidInputError as e:
            raise ConfigError('lambda' if values['lambda'] is not None else 'eta', str(e)) from e

    try:
        baseline = BaselineConfig(prox_mu=values['prox_mu'], inner_steps=values['inner_steps'],
                                  step_rule=values['step_rule'], fixed_step=values['fixed_step'])
    except InvalidInputError as e:
        raise ConfigError('step_rule', str(e)) from e

    base_kwargs = dict(algorithm=values['algorithms'][0], m=values['m'], k0=values['k0'], rho=values['rho'],
                       epsilon=values['epsilon'], selection=values['selection'], s0=values['s0'],
                       max_iterations=values['max_iterations'], seed=seeds[0], penalty=penalty,
                       baseline=baseline, mu0=values['mu0'], c=values['c'], alpha=values['alpha'],
                       clock=values['clock'], workers=values['workers'], monitor=values['monitor'],
                       stop_rule=values['stop_rule'], grad_tol=values['grad_tol'], var_tol=values['var_tol'])
    for value in axis_values:
        try:
            ExperimentConfig(**{**base_kwargs, axis: value})
        except InvalidInputError as e:
            raise ConfigError(guess_key(str(e), axis), str(e)) from e
    base = ExperimentConfig(**base_kwargs)

    if values['synthetic_n'] < 1 or values['synthetic_d'] < values['m']:
        raise ConfigError('synthetic_d', 'need synthetic_n >= 1 and synthetic_d >= m')
    return SweepSpec(base=base, axis=axis, values=axis_values, seeds=seeds, algorithms=values['algorithms'],
                     penalty=penalty, data=values['data'], beta=values['beta'], partition=values['partition'],
                     dirichlet_alpha=values['dirichlet_alpha'], synthetic_n=values['synthetic_n'],
                     synthetic_d=values['synthetic_d'], w_true_scale=values['w_true_scale'],
                     data_seed=values['data_seed'])


def guess_key(message: str, fallback: str) -> str:
    '''Name the longest config key mentioned as a word in a validation message.'''
    for key in sorted(DEFAULTS, key=len, reverse=True):
        if re.search(rf'\b{re.escape(key)}\b', message):
            return key
    return fallback


def load_sweep_config(config_path: str, environ: Optional[Mapping[str, str]] = None) -> SweepSpec:
    '''Load the yaml file that specifies the sweep.'''
    with open(config_path, 'r', encoding='utf-8') as f:
        return parse_config(f.read(), environ)


def get_args_parser():
    parser = argparse.ArgumentParser(description='Federated exact-penalty simulator sweeps')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='run a sweep described by a yaml config')
    run.add_argument('--config',    type=str, required=True, help='Path to the sweep configuration file')
    run.add_argument('--out',       type=str, default='runs', help='Output folder for aggregate, per-run table and log')
    run.add_argument('--format',    type=str, default='csv', choices=['csv', 'json'], help='Aggregate file format')
    run.add_argument('--parallel',  type=int, default=1, help='Number of worker processes over sweep cells')
    run.add_argument('--data',      type=str, default=None, help='synthetic or adult:<path>, overrides the config key')
    run.add_argument('--traces',    action='store_true', default=False, help='Also write one trace csv per run')
    return parser
