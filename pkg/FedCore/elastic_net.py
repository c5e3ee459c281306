"""
Elastic-net tools    Script  ver： Oct 17th 14:00

soft-thresholding, the elastic-net penalty
    phi(z) = lambda ||z||_1 + eta/2 ||z||^2
and the server-side consensus solver ENS:
    ens(w_1..w_m) = argmin_w sum_i phi(w_i - w)     (solved per coordinate)

for one coordinate h(w) = sum_i lambda|w - w_i| + eta/2 (w - w_i)^2 is strictly convex,
on the open interval between the s-th and (s+1)-th largest values its stationary point is
    w(s) = mean + (lambda / eta) (2s/m - 1)
if no w(s) lands strictly inside its own interval the minimiser is one of the data points.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from FedCore.numkit import InvalidInputError, as_model_vector, stack_vectors


@dataclass(frozen=True)
class PenaltyConfig:
    '''
    Arguments:
    ----------
    lam (float): l1 weight lambda of phi
    eta (float): l2 weight eta of phi
    k0 (int): communication period, tau_k = k // k0
    '''
    lam: float
    eta: float
    k0: int = 12

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError(f'lambda must be positive, got {self.lam}')
        if not self.eta > 0:
            raise InvalidInputError(f'eta must be positive, got {self.eta}')
        if int(self.k0) != self.k0 or self.k0 < 1:
            raise InvalidInputError(f'k0 must be an integer >= 1, got {self.k0}')

    @classmethod
    def from_rho(cls, m: int, rho: float, k0: int = 12) -> 'PenaltyConfig':
        '''eta = (0.02m + 1)(rho + 0.1) 1e-5 and lambda = eta / 2.'''
        eta = (0.02 * m + 1) * (rho + 0.1) * 1e-5
        return cls(lam=eta / 2, eta=eta, k0=k0)

    def tau(self, k: int) -> int:
        return k // self.k0

    def is_communication(self, k: int) -> bool:
        return k % self.k0 == 0


def soft(t: float, a: float) -> float:
    return float(soft_vec(np.array([t], dtype=np.float64), a)[0])


def soft_vec(w, a: float) -> np.ndarray:
    """
    Elementwise shrinkage, the prox of a||.||_1:
    soft(t, a) = t - a if t > a, 0 if |t| <= a, t + a if t < -a
    """
    if a < 0:
        raise InvalidInputError(f'threshold must be nonnegative, got {a}')
    w = np.asarray(w, dtype=np.float64)
    return np.sign(w) * np.maximum(np.abs(w) - a, 0.0)


def phi(z, cfg: PenaltyConfig) -> float:
    z = as_model_vector(z, name='z')
    return float(cfg.lam * np.sum(np.abs(z)) + 0.5 * cfg.eta * (z @ z))


def h_eval(w: float, values: Sequence[float], cfg: PenaltyConfig) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError('h needs at least one value')
    gap = w - values
    return float(np.sum(cfg.lam * np.abs(gap) + 0.5 * cfg.eta * gap ** 2))


def ens(vectors: Sequence, cfg: PenaltyConfig) -> np.ndarray:
    """
    Elastic-net consensus of m vectors, coordinate j solved over {w_1j, ..., w_mj}.

    The first s whose w(s) sits strictly between the s-th and (s+1)-th largest values wins,
    ties and boundary cases fall back to the data point with the smallest h (smallest value
    among equal h).
    """
    W = stack_vectors(vectors, 'uploads')
    m, n = W.shape
    if m == 1:
        return W[0].copy()

    descending = -np.sort(-W, axis=0, kind='stable')
    mean = W.mean(axis=0)
    s = np.arange(1, m, dtype=np.float64)[:, None]
    candidates = mean[None, :] + (cfg.lam / cfg.eta) * (2.0 * s / m - 1.0)  # (m-1, n)

    sandwich = (descending[:-1] > candidates) & (candidates > descending[1:])
    found = sandwich.any(axis=0)
    first_s = np.argmax(sandwich, axis=0)

    out = np.empty(n, dtype=np.float64)
    closed = np.flatnonzero(found)
    out[closed] = candidates[first_s[closed], closed]

    fallback = np.flatnonzero(~found)
    if fallback.size:
        V = W[:, fallback]                                   # (m, c)
        gap = V[:, None, :] - V[None, :, :]                  # candidate x data point
        H = np.sum(cfg.lam * np.abs(gap) + 0.5 * cfg.eta * gap ** 2, axis=1)
        best = H <= H.min(axis=0)
        out[fallback] = np.where(best, V, np.inf).min(axis=0)
    return out


def ens_scalar(values: Sequence[float], cfg: PenaltyConfig) -> float:
    values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    return float(ens(list(values), cfg)[0])


def median_cols(vectors: Sequence) -> np.ndarray:
    '''Column-wise median, even m takes the midpoint of the two central values.'''
    return np.median(stack_vectors(vectors, 'vectors'), axis=0)
