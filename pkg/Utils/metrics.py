"""
Sweep metrics   Script  ver： Oct 17th 14:00

per-cell summary statistics of the per-run metrics of a sweep,
the aggregate table is in long format: one row per (algorithm, axis value, metric)
"""
from typing import Dict, Sequence

import numpy as np
import pandas as pd

RUN_METRICS = ('f_over_m', 'cr', 'tct', 'lct', 'lct_max', 'snr')
AGGREGATE_COLUMNS = ['algorithm', 'axis', 'value', 'metric', 'mean', 'median', 'q25', 'q75', 'n_runs']


def compute_quantile(values: np.ndarray, q: float) -> float:
    """
    Linear-interpolated quantile, infinite entries (SNR with DP off) fall back to the
    nearest order statistic since inf - inf has no interpolant
    """
    if np.all(np.isfinite(values)):
        return float(np.quantile(values, q))
    return float(np.quantile(values, q, method='lower' if q <= 0.5 else 'higher'))


def summarize(values: Sequence[float]) -> Dict[str, float]:
    '''mean, median, q25, q75 and count of the non-NaN values.'''
    values = np.asarray(values, dtype=np.float64)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return {'mean': np.nan, 'median': np.nan, 'q25': np.nan, 'q75': np.nan, 'n_runs': 0}
    return {'mean': float(np.mean(values)),
            'median': compute_quantile(values, 0.5),
            'q25': compute_quantile(values, 0.25),
            'q75': compute_quantile(values, 0.75),
            'n_runs': int(values.size)}


def aggregate_runs(runs: pd.DataFrame, metrics: Sequence[str] = RUN_METRICS) -> pd.DataFrame:
    """
    Build the aggregate table from a per-run table.

    :param runs: columns algorithm, axis, value, seed, error and one column per metric
    :return: long-format aggregate table with AGGREGATE_COLUMNS
    """
    records = []
    if len(runs) == 0:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    ok = runs[runs['error'].isna()] if 'error' in runs.columns else runs
    # keep the order in which cells first appear, it follows (algorithm, axis value)
    cells = runs[['algorithm', 'axis', 'value']].drop_duplicates()
    for algorithm, axis, value in cells.itertuples(index=False):
        cell = ok[(ok['algorithm'] == algorithm) & (ok['axis'] == axis) & (ok['value'] == value)]
        for metric in metrics:
            stats = summarize(cell[metric].to_numpy(dtype=np.float64))
            records.append({'algorithm': algorithm, 'axis': axis, 'value': value, 'metric': metric, **stats})
    return pd.DataFrame.from_records(records, columns=AGGREGATE_COLUMNS)
