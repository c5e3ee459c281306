"""
Shard tools     Script  ver： Oct 17th 14:00

split a Dataset into m client shards, generate synthetic logistic data,
and save / load a single shard as csv:

    n,d_i,beta
    label,x_1,...,x_n      (one line per sample, 17 significant digits)
"""
import os
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.special import expit

from DataPipe.Adult_dataset import Dataset, normalize_columns
from FedCore.numkit import DataShard, InvalidInputError, as_model_vector


def shard_sizes(d: int, m: int, rng: np.random.Generator, sizes: str = 'equal',
                concentration: float = 1.0) -> np.ndarray:
    '''
    Shard sizes summing to d with every size >= 1.

    'equal' gives near-equal sizes (the first d mod m shards get one extra row),
    'dirichlet' draws proportions from Dirichlet(concentration) for skewed shards.
    '''
    if m < 1 or m > d:
        raise InvalidInputError(f'cannot split {d} rows into {m} shards')
    if sizes == 'equal':
        out = np.full(m, d // m, dtype=np.int64)
        out[:d % m] += 1
        return out
    if sizes == 'dirichlet':
        if not concentration > 0:
            raise InvalidInputError(f'Dirichlet concentration must be positive, got {concentration}')
        proportions = rng.dirichlet(np.full(m, float(concentration)))
        return 1 + rng.multinomial(d - m, proportions)
    raise InvalidInputError(f'unknown shard size policy {sizes}')


def partition(ds: Dataset, m: int, rng: np.random.Generator, beta: float = 0.001,
              sizes: str = 'equal', concentration: float = 1.0) -> List[DataShard]:
    """
    Random permutation of the rows cut into m contiguous blocks.

    :param ds: the full dataset
    :param m: number of clients
    :param rng: seeded generator, the same seed gives the same partition
    :param beta: L2 weight attached to every shard
    :return: m DataShards, row_ids record the source rows
    """
    d = ds.num_rows
    counts = shard_sizes(d, m, rng, sizes, concentration)
    order = rng.permutation(d)
    blocks = np.split(order, np.cumsum(counts)[:-1])
    return [DataShard(rows=ds.rows[ids], labels=ds.labels[ids], beta=beta, row_ids=ids) for ids in blocks]


def make_synthetic_dataset(n: int, d: int, w_true, rng: np.random.Generator) -> Dataset:
    '''Standard normal features, unit-norm columns, labels ~ Bernoulli(sigmoid(<x, w_true>)).'''
    if n < 1 or d < 1:
        raise InvalidInputError(f'need n, d >= 1, got n={n}, d={d}')
    w_true = as_model_vector(w_true, n, 'w_true')
    rows = normalize_columns(rng.standard_normal((d, n)))
    labels = (rng.random(d) < expit(rows @ w_true)).astype(np.float64)
    return Dataset(rows=rows, labels=labels, provenance='synthetic')


def synth_logistic(n: int, d: int, m: int, w_true, rng: np.random.Generator, beta: float = 0.001,
                   sizes: str = 'equal', concentration: float = 1.0) -> List[DataShard]:
    ds = make_synthetic_dataset(n, d, w_true, rng)
    return partition(ds, m, rng, beta=beta, sizes=sizes, concentration=concentration)


def save_shard_csv(shard: DataShard, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    table = pd.DataFrame(np.column_stack([shard.labels, shard.rows]))
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(f'{shard.dim},{shard.num_rows},{shard.beta!r}\n')
        table.to_csv(f, header=False, index=False, float_format='%.17g', lineterminator='\n')


def load_shard_csv(path: str, row_ids: Optional[np.ndarray] = None) -> DataShard:
    with open(path, 'r', encoding='utf-8') as f:
        n, d_i, beta = f.readline().strip().split(',')
        table = pd.read_csv(f, header=None, dtype=np.float64, float_precision='round_trip')
    values = table.to_numpy()
    if values.shape != (int(d_i), int(n) + 1):
        raise InvalidInputError(f'{path}: header says {d_i} rows of {n} features, found {values.shape}')
    return DataShard(rows=values[:, 1:], labels=values[:, 0], beta=float(beta), row_ids=row_ids)
