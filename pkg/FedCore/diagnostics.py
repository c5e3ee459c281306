"""
Convergence diagnostics    Script  ver： Oct 17th 14:00

penalized objective F(w, W) = sum_i f_i(w_i) + phi(w_i - w), stationarity residuals of the
consensus problem and of the penalized problem, the exact-penalty threshold
    lambda* = max_i max_j |grad f_i(w*)_j|
and a per-iteration monitor recording F, the descent surrogate L^k and the squared iterate
differences of a run.
"""
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Set

import numpy as np

from FedCore.elastic_net import PenaltyConfig, phi
from FedCore.numkit import InvalidInputError, LocalObjective, as_model_vector, stack_vectors
from FedCore.privacy import DpConfig


def penalized_objective(w, W: Sequence, shards: Sequence[LocalObjective], cfg: PenaltyConfig) -> float:
    w = as_model_vector(w)
    W = stack_vectors(W, 'W')
    if W.shape[0] != len(shards):
        raise InvalidInputError(f'{W.shape[0]} local vectors for {len(shards)} shards')
    total = 0.0
    for w_i, shard in zip(W, shards):
        value, _ = shard.value_grad(w_i)
        total += value + phi(w_i - w, cfg)
    return total


def lambda_star(w_star, shards: Sequence[LocalObjective]) -> float:
    w_star = as_model_vector(w_star, name='w_star')
    return max(float(np.max(np.abs(shard.value_grad(w_star)[1]))) for shard in shards)


def stationarity_residual_original(w, W: Sequence, pis: Sequence, shards: Sequence[LocalObjective]) -> float:
    '''
    Largest violation of: grad f_i(w_i) + pi_i = 0, w_i = w, sum_i pi_i = 0.
    '''
    w = as_model_vector(w)
    W = stack_vectors(W, 'W')
    P = stack_vectors(pis, 'pis')
    grad_part = max(float(np.linalg.norm(shard.value_grad(w_i)[1] + pi_i))
                    for w_i, pi_i, shard in zip(W, P, shards))
    consensus_part = float(np.max(np.linalg.norm(W - w[None, :], axis=1)))
    multiplier_part = float(np.linalg.norm(P.sum(axis=0)))
    return max(grad_part, consensus_part, multiplier_part)


def stationarity_residual_penalized(w, W: Sequence, shards: Sequence[LocalObjective], cfg: PenaltyConfig) -> float:
    """
    Largest violation of
        0 = grad f_i(w_i) + lambda pi_i + eta (w_i - w),   pi_i in sgn(w_i - w)
        0 = sum_i lambda pi_i + eta (w_i - w)
    where sgn(0) = [-1, 1]. On zero gaps pi_i is chosen to minimise the first residual
    (clip(-q / lambda, -1, 1)) and that same pi_i enters the second block.
    """
    w = as_model_vector(w)
    W = stack_vectors(W, 'W')
    gap = W - w[None, :]
    G = np.vstack([shard.value_grad(w_i)[1] for w_i, shard in zip(W, shards)])

    q = G + cfg.eta * gap
    pi = np.where(gap != 0, np.sign(gap), np.clip(-q / cfg.lam, -1.0, 1.0))
    first = np.abs(q + cfg.lam * pi)
    second = np.abs(np.sum(cfg.lam * pi + cfg.eta * gap, axis=0))
    return float(max(first.max(), second.max()))


@dataclass
class ConvergenceTrace:
    '''Per-iteration diagnostics, record k describes the state after iteration k.'''
    F: List[float] = field(default_factory=list)
    L_surrogate: List[float] = field(default_factory=list)
    dW_sq: List[float] = field(default_factory=list)
    dw_global_sq: List[float] = field(default_factory=list)
    flags: Set[str] = field(default_factory=set)

    def __len__(self):
        return len(self.F)


@dataclass
class MonitorSnapshot:
    w_global: np.ndarray
    w_global_prev: np.ndarray
    W: np.ndarray
    W_prev: np.ndarray
    delta_inf: np.ndarray  # running max of 2||g_i||_1 per client


@dataclass
class MonitorSettings:
    '''
    Static inputs of the descent surrogate.

    Arguments:
    ----------
    shards: the m local objectives
    penalty (PenaltyConfig): lambda, eta, k0
    dp (DpConfig): privacy budget, disabled means zero noise terms
    mu0, c, alpha (np.ndarray): per-client proximal schedule
    s0 (int): coverage window
    s0_nominal (bool): True when s0 was not enforced by the selection policy
    '''
    shards: Sequence[LocalObjective]
    penalty: PenaltyConfig
    dp: DpConfig
    mu0: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    s0: int
    s0_nominal: bool = False


def noise_drift(delta_inf: np.ndarray, t: int, settings: MonitorSettings, n: int) -> np.ndarray:
    '''phi_{i,t} terms of the surrogate, zero when DP is off.'''
    if not settings.dp.enabled:
        return np.zeros_like(settings.mu0)
    lam, eta, k0 = settings.penalty.lam, settings.penalty.eta, settings.penalty.k0
    alpha, mu0, eps = settings.alpha, settings.mu0, settings.dp.epsilon
    spread = delta_inf * alpha ** (2 * settings.s0 * k0)
    linear = 4 * n * lam * spread / (eps * mu0 * (alpha - 1) * alpha ** t)
    quadratic = 8 * n * eta * spread ** 2 / ((eps * mu0) ** 2 * (alpha ** 2 - 1) * alpha ** (2 * t))
    return linear + quadratic


def monitor_step(trace: ConvergenceTrace, snapshot: MonitorSnapshot, r_bounds: Sequence[float],
                 settings: MonitorSettings, k: int) -> ConvergenceTrace:
    """
    Append the record of iteration k (the state W^{k+1}).

    L^{t} = F + sum_i [r_i^2 / (2 mu_i0 c_i (alpha_i - 1) alpha_i^t) + 2 phi_{i,t-1}],  t = k + 1
    """
    if k != len(trace):
        raise InvalidInputError(f'monitor expected iteration {len(trace)}, got {k}')
    F = penalized_objective(snapshot.w_global, snapshot.W, settings.shards, settings.penalty)
    t = k + 1
    n = snapshot.W.shape[1]

    if np.any(settings.c == 0):
        trace.flags.add('L-undefined: c_i = 0')
        L = math.nan
    else:
        r = np.asarray(r_bounds, dtype=np.float64)
        decay = r ** 2 / (2 * settings.mu0 * settings.c * (settings.alpha - 1) * settings.alpha ** t)
        L = F + float(np.sum(decay + 2 * noise_drift(snapshot.delta_inf, t - 1, settings, n)))
    if settings.s0_nominal:
        trace.flags.add('s0-nominal')

    trace.F.append(F)
    trace.L_surrogate.append(L)
    trace.dW_sq.append(float(np.sum((snapshot.W - snapshot.W_prev) ** 2)))
    trace.dw_global_sq.append(float(np.sum((snapshot.w_global - snapshot.w_global_prev) ** 2)))
    return trace
