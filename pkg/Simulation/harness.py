"""
Federated simulation harness     Script  ver： Oct 17th 14:00

drives one run of FedEPM / SFedAvg / SFedProx over m client shards:

    iteration clock k = 0, 1, ..., communication iterations K = {0, k0, 2k0, ...}, tau_k = k // k0
    k in K      server aggregates (ENS over all m stored uploads for FedEPM, mean over the newly
                selected set for the baselines), selects S^{tau+1}, checks the stopping rules
                and broadcasts; FedEPM clients in S refresh their cached gradient
    every k     clients in S update locally, the others hold (w, z, mu) untouched
    k+1 in K    clients in S perturb their parameter with Laplace noise and upload it

all randomness comes from cfg.seed: stream 0 drives selection, stream 1+i the noise of client i.
A run that hits max_iterations is returned with status 'budget-exhausted', it is not an error.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from multiprocessing.pool import ThreadPool
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from FedCore.diagnostics import ConvergenceTrace, MonitorSettings, MonitorSnapshot, monitor_step
from FedCore.elastic_net import PenaltyConfig
from FedCore.fed_algorithms import (ALGORITHMS, BaselineConfig, ClientState, fedepm_aggregate,
                                    fedepm_client_update, mean_aggregate, refresh_gradient,
                                    sfedavg_client_update, sfedprox_client_update)
from FedCore.numkit import InvalidInputError, LocalObjective, global_objective, lipschitz_bound
from FedCore.privacy import DpConfig, noise_scale, perturb, snr
from Utils.tools import spawn_streams

TRACE_COLUMNS = ['iter', 'tau', 'cr', 'f_over_m', 'grad_sq', 'F', 'L_surrogate', 'dW_sq', 'dw_global_sq',
                 'lct_s', 'tct_s', 'snr']
STOP_RULES = ('standard', 'gradient', 'none')
SELECTION_POLICIES = ('iid', 'coverage')
CLOCKS = ('wall', 'virtual')


@dataclass
class ExperimentConfig:
    '''
    One simulated run.

    Arguments:
    ----------
    algorithm (str): 'fedepm', 'sfedavg' or 'sfedprox'
    m (int): number of clients
    k0 (int): communication period
    rho (float): participation fraction in (0, 1]
    epsilon (float): privacy budget, None switches the noise off
    selection (str): 'iid' (uniform without replacement) or 'coverage' (round-robin blocks)
    s0 (int): coverage window, defaults to ceil(1 / rho) for the coverage policy
    max_iterations (int): iteration budget
    seed (int): master seed
    penalty (PenaltyConfig): lambda, eta; None takes the default rule from (m, rho)
    baseline (BaselineConfig): SFedAvg / SFedProx settings
    mu0, c, alpha (float): proximal schedule shared by all clients
    clock (str): 'wall' seconds or 'virtual' (virtual_tick seconds per local gradient evaluation)
    workers (int): >1 runs the client updates of one iteration on a thread pool
    monitor (bool): record F, L^k and the iterate differences every iteration
    stop_rule (str): 'standard' (gradient or variance rule), 'gradient' or 'none'
    '''
    algorithm: str = 'fedepm'
    m: int = 50
    k0: int = 12
    rho: float = 0.5
    epsilon: Optional[float] = 0.1
    selection: str = 'iid'
    s0: Optional[int] = None
    max_iterations: int = 5000
    seed: int = 0
    penalty: Optional[PenaltyConfig] = None
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    mu0: float = 0.05
    c: float = 1e-8
    alpha: float = 1.001
    clock: str = 'wall'
    workers: int = 1
    monitor: bool = True
    stop_rule: str = 'standard'
    grad_tol: float = 1e-6
    var_tol: float = 1e-8
    virtual_tick: float = 1e-3

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f'unknown algorithm {self.algorithm}, choose from {ALGORITHMS}')
        if self.m < 1 or self.k0 < 1:
            raise InvalidInputError(f'need m >= 1 and k0 >= 1, got m={self.m}, k0={self.k0}')
        if not 0 < self.rho <= 1:
            raise InvalidInputError(f'rho must lie in (0, 1], got {self.rho}')
        if not 1 <= self.n_selected <= self.m:
            raise InvalidInputError(f'rho * m rounds to {self.n_selected} clients')
        if self.max_iterations < self.k0:
            raise InvalidInputError(f'max_iterations ({self.max_iterations}) must be >= k0 ({self.k0})')
        if self.selection not in SELECTION_POLICIES:
            raise InvalidInputError(f'unknown selection policy {self.selection}')
        if self.s0 is not None and not 1 <= self.s0 <= self.m:
            raise InvalidInputError(f's0 must lie in [1, m], got {self.s0}')
        if self.clock not in CLOCKS:
            raise InvalidInputError(f'unknown clock {self.clock}')
        if self.stop_rule not in STOP_RULES:
            raise InvalidInputError(f'unknown stop rule {self.stop_rule}')
        if self.penalty is None:
            self.penalty = PenaltyConfig.from_rho(self.m, self.rho, self.k0)
        elif self.penalty.k0 != self.k0:
            self.penalty = replace(self.penalty, k0=self.k0)
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidInputError(f'epsilon must be positive (or None for no noise), got {self.epsilon}')

    @property
    def n_selected(self) -> int:
        return max(1, int(round(self.rho * self.m)))

    @property
    def dp(self) -> DpConfig:
        if self.epsilon is None:
            return DpConfig.off()
        return DpConfig(epsilon=self.epsilon, enabled=True)


@dataclass
class RoundTrace:
    '''
    One communication round and the local period it opens.

    lct / lct_max are the mean / max over the selected clients of their local compute time
    in that period, period_iterations is 0 when the run stopped at this round.
    '''
    tau: int
    iteration: int
    f_over_m: float
    grad_sq: float
    cr: int
    tct: float
    selected: Tuple[int, ...]
    lct: float = 0.0
    lct_max: float = 0.0
    period_iterations: int = 0


class TimingMetrics(NamedTuple):
    cr: int
    tct: float
    lct: float
    lct_max: float


@dataclass
class ExperimentResult:
    w_final: np.ndarray
    rounds: List[RoundTrace]
    convergence: ConvergenceTrace
    records: List[dict]
    status: str
    clients: List[ClientState]
    snr: float
    iterations: int
    tct: float

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.records, columns=TRACE_COLUMNS)

    def to_csv(self, path: Optional[str] = None) -> str:
        text = self.trace_frame().to_csv(index=False, float_format='%.17g', lineterminator='\n')
        if path is not None:
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        return text


class ClientSelector:
    """
    Participation policy.

    iid:      every round a uniform subset of size max(1, round(rho m)) without replacement
    coverage: one shuffled partition of [m] into s0 blocks, served round-robin, so any s0
              consecutive rounds together cover every client
    """

    def __init__(self, policy: str, rng: np.random.Generator, m: int, rho: float, s0: Optional[int] = None):
        if policy not in SELECTION_POLICIES:
            raise InvalidInputError(f'unknown selection policy {policy}')
        self.policy = policy
        self.rng = rng
        self.m = m
        self.rho = rho
        self.size = max(1, int(round(rho * m)))
        self.round = 0
        if policy == 'coverage':
            self.s0 = int(s0) if s0 is not None else math.ceil(1 / rho)
            if not 1 <= self.s0 <= m:
                raise InvalidInputError(f'coverage window s0={self.s0} must lie in [1, {m}]')
            self.blocks = np.array_split(rng.permutation(m), self.s0)
        else:
            self.s0 = math.ceil(1 / rho)
            self.blocks = None

    @property
    def s0_enforced(self) -> bool:
        return self.policy == 'coverage'

    def select_clients(self) -> np.ndarray:
        if self.policy == 'coverage':
            chosen = self.blocks[self.round % self.s0]
        else:
            chosen = self.rng.choice(self.m, size=self.size, replace=False)
        self.round += 1
        return np.sort(chosen)


def should_stop(history: Sequence[float], grad_sq: float, n: int, grad_tol: float = 1e-6,
                var_tol: float = 1e-8, rule: str = 'standard') -> bool:
    """
    Gradient rule: ||grad f(w^tau)||^2 < grad_tol.
    Variance rule: population variance of the last 4 round objectives <= n var_tol / (1 + |f|).
    """
    if rule == 'none':
        return False
    if grad_sq < grad_tol:
        return True
    if rule == 'gradient' or len(history) < 4:
        return False
    last = np.asarray(history[-4:], dtype=np.float64)
    return bool(np.var(last) <= n * var_tol / (1 + abs(last[-1])))


def timing_metrics(result: ExperimentResult) -> TimingMetrics:
    '''CR, TCT, and the mean over local periods of the per-period mean (and max) client time.'''
    periods = [r for r in result.rounds if r.period_iterations > 0]
    lct = float(np.mean([r.lct for r in periods])) if periods else 0.0
    lct_max = float(np.mean([r.lct_max for r in periods])) if periods else 0.0
    return TimingMetrics(cr=len(result.rounds), tct=result.tct, lct=lct, lct_max=lct_max)


def _close_period(round_trace: RoundTrace, period_time: dict, iterations: int):
    times = np.array(list(period_time.values()), dtype=np.float64)
    round_trace.lct = float(times.mean()) if times.size else 0.0
    round_trace.lct_max = float(times.max()) if times.size else 0.0
    round_trace.period_iterations = iterations


def run_experiment(cfg: ExperimentConfig, shards: Sequence[LocalObjective]) -> ExperimentResult:
    if len(shards) != cfg.m:
        raise InvalidInputError(f'config has m={cfg.m} but {len(shards)} shards were given')
    m, k0 = cfg.m, cfg.k0
    n = shards[0].dim
    penalty, dp, baseline = cfg.penalty, cfg.dp, cfg.baseline
    streams = spawn_streams(cfg.seed, m + 1)
    selector = ClientSelector(cfg.selection, streams[0], m, cfg.rho, cfg.s0)
    noise_rngs = streams[1:]
    virtual = cfg.clock == 'virtual'

    # initial uploads z_i^0 = 0 + eps_i^0, eps scale taken at k = -1
    clients = []
    delta_inf = np.zeros(m)
    tct = 0.0
    for i, shard in enumerate(shards):
        start = time.perf_counter()
        state = ClientState.initial(i, n, cfg.mu0, cfg.c, cfg.alpha)
        _, g0 = shard.value_grad(state.w_local)
        b = noise_scale(g0, state.w_local, state.w_local, -1, dp, state)
        z, record = perturb(state.w_local, b, noise_rngs[i], client_id=i, tau=0)
        clients.append(replace(state, z_uploaded=z, last_noise=record, grad_evals=1))
        delta_inf[i] = 2 * np.sum(np.abs(g0))
        tct += cfg.virtual_tick if virtual else time.perf_counter() - start

    monitor_settings = MonitorSettings(
        shards=shards, penalty=penalty, dp=dp, mu0=np.full(m, cfg.mu0), c=np.full(m, cfg.c),
        alpha=np.full(m, cfg.alpha), s0=selector.s0, s0_nominal=not selector.s0_enforced)
    r_bounds = [lipschitz_bound(shard) for shard in shards] if cfg.monitor else None

    w_global = np.zeros(n)
    selected = np.arange(m)
    rounds: List[RoundTrace] = []
    records: List[dict] = []
    trace = ConvergenceTrace()
    history: List[float] = []
    period_time: dict = {}
    period_iterations = 0
    status = 'budget-exhausted'
    iterations = 0

    def client_step(i: int, k: int, w_tau: np.ndarray) -> Tuple[ClientState, float]:
        start = time.perf_counter()
        before = clients[i]
        state = before
        if cfg.algorithm == 'fedepm':
            if k % k0 == 0:
                state = refresh_gradient(state, w_tau, shards[i])
            state = fedepm_client_update(state, w_tau, state.g_cached, k, penalty)
        elif cfg.algorithm == 'sfedavg':
            step = baseline.step(shards[i].num_rows, k, k0)
            state = sfedavg_client_update(state, w_tau, shards[i], k, k0, step)
        else:
            step = baseline.step(shards[i].num_rows, k, k0)
            state = sfedprox_client_update(state, w_tau, shards[i], k, k0, baseline, step)

        if (k + 1) % k0 == 0:
            b = noise_scale(state.g_cached, before.w_local, w_tau, k, dp, state)
            z, record = perturb(state.w_local, b, noise_rngs[i], client_id=i, tau=(k + 1) // k0)
            state = replace(state, z_uploaded=z, last_noise=record)
        if virtual:
            return state, (state.grad_evals - before.grad_evals) * cfg.virtual_tick
        return state, time.perf_counter() - start

    pool = ThreadPool(cfg.workers) if cfg.workers > 1 else None
    try:
        for k in range(cfg.max_iterations):
            iterations = k + 1
            w_global_prev = w_global
            W_prev = np.vstack([c.w_local for c in clients])
            stop = False

            if k % k0 == 0:
                if rounds:
                    _close_period(rounds[-1], period_time, period_iterations)
                start = time.perf_counter()
                selected = selector.select_clients()
                if cfg.algorithm == 'fedepm':
                    w_global = fedepm_aggregate([c.z_uploaded for c in clients], penalty)
                else:
                    w_global = mean_aggregate([clients[i].z_uploaded for i in selected])
                if not virtual:
                    tct += time.perf_counter() - start

                f, grad = global_objective(w_global, shards)
                grad_sq = float(grad @ grad)
                history.append(f)
                rounds.append(RoundTrace(tau=k // k0, iteration=k, f_over_m=f / m, grad_sq=grad_sq,
                                         cr=len(rounds) + 1, tct=tct, selected=tuple(int(i) for i in selected)))
                logging.debug(f'{cfg.algorithm} seed {cfg.seed}: round {k // k0}, f/m {f / m:.6g}, '
                              f'|grad|^2 {grad_sq:.3g}')
                period_time = {int(i): 0.0 for i in selected}
                period_iterations = 0
                stop = should_stop(history, grad_sq, n, cfg.grad_tol, cfg.var_tol, cfg.stop_rule)

            if not stop:
                jobs = [int(i) for i in selected]
                if pool is not None:
                    start = time.perf_counter()
                    results = pool.starmap(client_step, [(i, k, w_global) for i in jobs])
                    elapsed = time.perf_counter() - start
                else:
                    results = [client_step(i, k, w_global) for i in jobs]
                    elapsed = sum(seconds for _, seconds in results)
                for i, (state, seconds) in zip(jobs, results):
                    if k % k0 == 0 and state.g_cached is not None:
                        delta_inf[i] = max(delta_inf[i], 2 * np.sum(np.abs(state.g_cached)))
                    clients[i] = state
                    period_time[i] += seconds
                tct += sum(seconds for _, seconds in results) if virtual else elapsed
                period_iterations += 1

            record = {'iter': k, 'tau': k // k0, 'cr': len(rounds), 'f_over_m': rounds[-1].f_over_m,
                      'grad_sq': rounds[-1].grad_sq, 'F': math.nan, 'L_surrogate': math.nan,
                      'dW_sq': math.nan, 'dw_global_sq': math.nan,
                      'lct_s': float(np.mean(list(period_time.values()))), 'tct_s': tct,
                      'snr': snr([(c.w_local, c.last_noise.noise) for c in clients])}
            if cfg.monitor:
                snapshot = MonitorSnapshot(w_global=w_global, w_global_prev=w_global_prev,
                                           W=np.vstack([c.w_local for c in clients]), W_prev=W_prev,
                                           delta_inf=delta_inf.copy())
                monitor_step(trace, snapshot, r_bounds, monitor_settings, k)
                record.update(F=trace.F[-1], L_surrogate=trace.L_surrogate[-1], dW_sq=trace.dW_sq[-1],
                              dw_global_sq=trace.dw_global_sq[-1])
            records.append(record)

            if stop:
                status = 'converged'
                break
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    _close_period(rounds[-1], period_time, period_iterations)
    final_snr = snr([(c.w_local, c.last_noise.noise) for c in clients])
    if status == 'budget-exhausted':
        logging.warning(f'{cfg.algorithm} seed {cfg.seed}: budget of {cfg.max_iterations} iterations exhausted')
    logging.info(f'{cfg.algorithm} seed {cfg.seed}: {status} after {iterations} iterations, '
                 f'CR {len(rounds)}, f/m {rounds[-1].f_over_m:.6g}')
    return ExperimentResult(w_final=w_global, rounds=rounds, convergence=trace, records=records, status=status,
                            clients=clients, snr=final_snr, iterations=iterations, tct=tct)
