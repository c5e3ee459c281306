"""
Numerical kit    Script  ver： Oct 17th 14:00

dense vector helpers and the logistic-regression kernels used by every client:
    f_i(w) = (1/d_i) sum_t [ln(1+exp(<x_t,w>)) - b_t <x_t,w>] + beta/2 ||w||^2

a local objective is anything exposing value_grad(w) and num_rows,
DataShard is the logistic one used in the experiments
"""
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import expit


class InvalidInputError(ValueError):
    """Raised on dimension mismatch, non-finite entries or empty inputs."""


class LocalObjective(Protocol):
    num_rows: int
    dim: int

    def value_grad(self, w: np.ndarray) -> Tuple[float, np.ndarray]:
        ...


def as_model_vector(w, n: Optional[int] = None, name: str = 'w') -> np.ndarray:
    '''Validate and convert to a 1-D float64 vector of (optional) length n.'''
    vec = np.asarray(w, dtype=np.float64)
    if vec.ndim != 1:
        raise InvalidInputError(f'{name} must be a 1-D vector, got shape {vec.shape}')
    if n is not None and vec.shape[0] != n:
        raise InvalidInputError(f'{name} has length {vec.shape[0]}, expected {n}')
    if not np.all(np.isfinite(vec)):
        raise InvalidInputError(f'{name} contains NaN or Inf')
    return vec


def stack_vectors(vectors: Sequence, name: str = 'vectors') -> np.ndarray:
    '''Stack m vectors of a shared dimension into an (m, n) array.'''
    if len(vectors) == 0:
        raise InvalidInputError(f'{name} is empty')
    n = np.asarray(vectors[0]).shape[-1] if np.ndim(vectors[0]) else None
    rows = [as_model_vector(v, n, name) for v in vectors]
    return np.vstack(rows)


@dataclass
class DataShard:
    '''
    One client's samples.

    Arguments:
    ----------
    rows (np.ndarray): (d_i, n) feature matrix
    labels (np.ndarray): d_i labels in {0, 1}
    beta (float): L2 weight of the local loss
    row_ids (np.ndarray): optional indices of the rows in the source dataset
    '''
    rows: np.ndarray
    labels: np.ndarray
    beta: float = 0.001
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if self.rows.shape[0] < 1:
            raise InvalidInputError('a shard needs at least one row')
        if self.labels.shape[0] != self.rows.shape[0]:
            raise InvalidInputError(f'{self.rows.shape[0]} rows but {self.labels.shape[0]} labels')
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise InvalidInputError('labels must be 0 or 1')
        if not np.all(np.isfinite(self.rows)):
            raise InvalidInputError('rows contain NaN or Inf')
        if self.beta < 0:
            raise InvalidInputError(f'beta must be nonnegative, got {self.beta}')

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def value_grad(self, w: np.ndarray) -> Tuple[float, np.ndarray]:
        return logistic_value_grad(w, self)


def logistic_value_grad(w, shard: DataShard) -> Tuple[float, np.ndarray]:
    """
    Value and gradient of the L2-regularised logistic loss on one shard.

    ln(1+e^z) is evaluated as logaddexp(0, z) so large |z| never overflows.
    """
    w = as_model_vector(w, shard.dim)
    z = shard.rows @ w
    d_i = shard.num_rows

    value = float(np.mean(np.logaddexp(0.0, z) - shard.labels * z) + 0.5 * shard.beta * (w @ w))
    grad = shard.rows.T @ (expit(z) - shard.labels) / d_i + shard.beta * w
    return value, grad


def lipschitz_bound(shard: DataShard) -> float:
    # trace bound on the Hessian of the logistic part: sigma' <= 1/4
    return float(np.sum(shard.rows ** 2) / (4 * shard.num_rows) + shard.beta)


def global_objective(w, shards: Sequence[LocalObjective]) -> Tuple[float, np.ndarray]:
    '''f(w) = sum_i f_i(w) and its gradient.'''
    if len(shards) == 0:
        raise InvalidInputError('global objective needs at least one shard')
    w = as_model_vector(w)
    f = 0.0
    grad = np.zeros_like(w)
    for shard in shards:
        value, g = shard.value_grad(w)
        f += value
        grad += g
    return f, grad
