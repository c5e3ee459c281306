"""
Upload privacy    Script  ver： Oct 17th 14:00

Laplace perturbation of the parameters a client sends to the server.
The scale follows the decaying schedule
    b = 2 ||g_i||_1 / (epsilon * mu_i0 * (1 + c_i ||w_i^k - w^tau||^2) * alpha_i^(k+1))
where 2||g_i||_1 stands in for the (not computable) sensitivity of the local gradient.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from FedCore.numkit import InvalidInputError, as_model_vector

# lower end of the uniform draw, keeps ln(1 - 2|u - 0.5|) finite
_U_LOW = np.finfo(np.float64).eps


@dataclass(frozen=True)
class DpConfig:
    epsilon: float = 0.1
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not self.epsilon > 0:
            raise InvalidInputError(f'epsilon must be positive when DP is enabled, got {self.epsilon}')

    @classmethod
    def off(cls) -> 'DpConfig':
        return cls(epsilon=math.inf, enabled=False)


@dataclass
class NoiseRecord:
    client_id: int
    tau: int
    noise: np.ndarray
    scale: float


def laplace_from_uniform(u, b: float):
    '''Inverse CDF of Laplace(0, b) applied to u in (0, 1).'''
    u = np.asarray(u, dtype=np.float64)
    return -b * np.sign(u - 0.5) * np.log(1.0 - 2.0 * np.abs(u - 0.5))


def laplace_sample(rng: np.random.Generator, b: float, size: Optional[int] = None):
    """
    Draw from the Laplace law with density exp(-|x|/b) / (2b).

    b = 0 returns exact zeros without touching the stream.
    """
    if b < 0:
        raise InvalidInputError(f'Laplace scale must be nonnegative, got {b}')
    if b == 0:
        return 0.0 if size is None else np.zeros(size, dtype=np.float64)
    u = rng.uniform(_U_LOW, 1.0, size)
    x = laplace_from_uniform(u, b)
    return float(x) if size is None else x


def noise_scale(g, w_local, w_global, k: int, cfg: DpConfig, client) -> float:
    '''
    Laplace scale for the upload after iteration k.

    Arguments:
    ----------
    g: cached gradient g_i at the current broadcast point
    w_local: w_i^k, the local parameter before the update
    w_global: w^tau, the current broadcast point
    k (int): iteration index, k = -1 gives the initial upload (alpha power 0)
    cfg (DpConfig): privacy budget
    client: anything carrying mu0, c and alpha (a ClientState)
    '''
    if not cfg.enabled:
        return 0.0
    if not cfg.epsilon > 0:
        raise InvalidInputError(f'epsilon must be positive when DP is enabled, got {cfg.epsilon}')
    if k < -1:
        raise InvalidInputError(f'iteration index must be >= -1, got {k}')
    g = as_model_vector(g, name='g')
    gap = as_model_vector(w_local, g.shape[0], 'w_local') - as_model_vector(w_global, g.shape[0], 'w_global')
    denominator = cfg.epsilon * client.mu0 * (1.0 + client.c * (gap @ gap)) * client.alpha ** (k + 1)
    return float(2.0 * np.sum(np.abs(g)) / denominator)


def perturb(w, b: float, rng: np.random.Generator, client_id: int = -1, tau: int = 0) -> Tuple[np.ndarray, NoiseRecord]:
    w = as_model_vector(w)
    if b < 0:
        raise InvalidInputError(f'Laplace scale must be nonnegative, got {b}')
    noise = laplace_sample(rng, b, size=w.shape[0])
    record = NoiseRecord(client_id=client_id, tau=tau, noise=noise, scale=float(b))
    if b == 0:
        return w.copy(), record
    return w + noise, record


def snr(final_states: Sequence[Tuple[np.ndarray, np.ndarray]]) -> float:
    """
    min_i log10(||w_i|| / ||eps_i||) over clients.

    A client with zero noise contributes +inf (so DP off gives +inf overall),
    a client with ||w_i|| = 0 and nonzero noise contributes -inf.
    """
    if len(final_states) == 0:
        raise InvalidInputError('snr needs at least one client')
    ratios = []
    for w, eps in final_states:
        w_norm = float(np.linalg.norm(w))
        eps_norm = float(np.linalg.norm(eps))
        if eps_norm == 0.0:
            ratios.append(math.inf)
        elif w_norm == 0.0:
            ratios.append(-math.inf)
        else:
            ratios.append(math.log10(w_norm / eps_norm))
    return min(ratios)
