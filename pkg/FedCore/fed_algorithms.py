"""
Federated update rules    Script  ver： Oct 17th 14:00

client and server steps of the three algorithms driven by Simulation/harness.py

FedEPM (exact penalty):
    server  w^tau = ENS(z_1..z_m) over all stored uploads
    client  mu_{i,k+1} = mu_i0 (1 + c_i ||w_i^k - w^tau||^2) alpha_i^(k+1)
            w_i^{k+1} = w^tau + soft(mu (w_i^k - w^tau) - g_i, lambda) / (eta + mu)
            with g_i = grad f_i(w^tau) computed once per period

SFedAvg / SFedProx (baselines):
    server  mean of the uploads of the selected clients
    client  gradient steps (SFedProx: l inner steps on f_i + prox_mu/2 ||v - w^tau||^2)

Updates never mutate their input state, a new ClientState is returned.
"""
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from FedCore.elastic_net import PenaltyConfig, ens, soft_vec
from FedCore.numkit import InvalidInputError, LocalObjective, as_model_vector, stack_vectors
from FedCore.privacy import NoiseRecord

ALGORITHMS = ('fedepm', 'sfedavg', 'sfedprox')


@dataclass
class ClientState:
    '''
    State carried by one client between iterations.

    Arguments:
    ----------
    client_id (int): position of the client in [m]
    w_local (np.ndarray): local parameter w_i^k
    z_uploaded (np.ndarray): last noisy upload z_i^tau held by the server
    mu0, c, alpha (float): proximal schedule mu_i0, c_i, alpha_i
    mu (float): current proximal weight mu_{i,k}, starts at mu0
    last_noise (NoiseRecord): noise of the last upload
    g_cached (np.ndarray): gradient at the current broadcast point, refreshed once per period
    grad_evals (int): number of local gradient evaluations so far (virtual clock)
    '''
    client_id: int
    w_local: np.ndarray
    z_uploaded: np.ndarray
    mu0: float = 0.05
    c: float = 1e-8
    alpha: float = 1.001
    mu: Optional[float] = None
    last_noise: Optional[NoiseRecord] = None
    g_cached: Optional[np.ndarray] = None
    grad_evals: int = 0

    def __post_init__(self):
        if self.mu is None:
            self.mu = self.mu0
        if not self.mu0 > 0:
            raise InvalidInputError(f'mu0 must be positive, got {self.mu0}')
        if not self.alpha > 1:
            raise InvalidInputError(f'alpha must exceed 1, got {self.alpha}')
        if self.c < 0:
            raise InvalidInputError(f'c must be nonnegative, got {self.c}')
        if self.mu < self.mu0:
            raise InvalidInputError(f'mu ({self.mu}) fell below mu0 ({self.mu0})')

    @classmethod
    def initial(cls, client_id: int, n: int, mu0: float = 0.05, c: float = 1e-8,
                alpha: float = 1.001) -> 'ClientState':
        return cls(client_id=client_id, w_local=np.zeros(n), z_uploaded=np.zeros(n),
                   mu0=mu0, c=c, alpha=alpha)


@dataclass(frozen=True)
class BaselineConfig:
    '''
    Arguments:
    ----------
    prox_mu (float): proximal weight of SFedProx
    inner_steps (int): l, inner gradient steps of SFedProx per iteration
    step_rule (str): 'formula' for gamma = 2 d_i / sqrt(2 k0 + tau), or 'fixed'
    fixed_step (float): gamma used when step_rule == 'fixed'
    '''
    prox_mu: float = 1e-5
    inner_steps: int = 3
    step_rule: str = 'formula'
    fixed_step: Optional[float] = None

    def __post_init__(self):
        if self.inner_steps < 1:
            raise InvalidInputError(f'inner_steps must be >= 1, got {self.inner_steps}')
        if self.prox_mu < 0:
            raise InvalidInputError(f'prox_mu must be nonnegative, got {self.prox_mu}')
        if self.step_rule not in ('formula', 'fixed'):
            raise InvalidInputError(f'unknown step rule {self.step_rule}')
        if self.step_rule == 'fixed' and (self.fixed_step is None or self.fixed_step < 0):
            raise InvalidInputError('fixed step rule needs a nonnegative fixed_step')

    def step(self, d_i: int, k: int, k0: int) -> float:
        if self.step_rule == 'fixed':
            return float(self.fixed_step)
        return step_size_gamma(d_i, k, k0)


# FedEPM
def fedepm_client_update(state: ClientState, w_global, g_cached, k: int, cfg: PenaltyConfig) -> ClientState:
    w_global = as_model_vector(w_global, state.w_local.shape[0], 'w_global')
    g_cached = as_model_vector(g_cached, state.w_local.shape[0], 'g_cached')

    gap = state.w_local - w_global
    mu = state.mu0 * (1.0 + state.c * (gap @ gap)) * state.alpha ** (k + 1)
    w_tilde = mu * gap - g_cached
    w_new = w_global + soft_vec(w_tilde, cfg.lam) / (cfg.eta + mu)
    return replace(state, w_local=w_new, mu=mu)


def refresh_gradient(state: ClientState, w_global, shard: LocalObjective) -> ClientState:
    '''Evaluate g_i = grad f_i(w^tau) once at the start of a period and cache it.'''
    _, g = shard.value_grad(w_global)
    return replace(state, g_cached=g, grad_evals=state.grad_evals + 1)


def fedepm_aggregate(uploads: Sequence, cfg: PenaltyConfig) -> np.ndarray:
    return ens(uploads, cfg)


# baselines
def step_size_gamma(d_i: int, k: int, k0: int) -> float:
    return 2.0 * d_i / np.sqrt(2 * k0 + k // k0)


def sfedavg_client_update(state: ClientState, w_global, shard: LocalObjective, k: int, k0: int,
                          step: float) -> ClientState:
    if k % k0 == 0:
        start = as_model_vector(w_global, state.w_local.shape[0], 'w_global')
    else:
        start = state.w_local
    _, g = shard.value_grad(start)
    g_cached = g if k % k0 == 0 else state.g_cached
    return replace(state, w_local=start - step * g, g_cached=g_cached, grad_evals=state.grad_evals + 1)


def sfedprox_client_update(state: ClientState, w_global, shard: LocalObjective, k: int, k0: int,
                           cfg: BaselineConfig, step: float) -> ClientState:
    """
    l inexact gradient steps on f_i(v) + prox_mu/2 ||v - w^tau||^2,
    warm started at w^tau on communication iterations and at w_i^k otherwise.
    """
    w_global = as_model_vector(w_global, state.w_local.shape[0], 'w_global')
    communicating = k % k0 == 0
    v = w_global.copy() if communicating else state.w_local.copy()
    g_cached = state.g_cached

    for t in range(cfg.inner_steps):
        _, g = shard.value_grad(v)
        if t == 0 and communicating:
            g_cached = g
        v = v - step * (g + cfg.prox_mu * (v - w_global))

    return replace(state, w_local=v, g_cached=g_cached, grad_evals=state.grad_evals + cfg.inner_steps)


def mean_aggregate(uploads: Sequence) -> np.ndarray:
    if len(uploads) == 0:
        raise InvalidInputError('mean aggregation over an empty selection')
    return stack_vectors(uploads, 'uploads').mean(axis=0)
