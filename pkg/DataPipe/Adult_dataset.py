"""
Adult income dataset tools     Script  ver： Oct 17th 14:00

load the UCI Adult csv (train and test concatenated, comma separated, '?' for missing) ->
a Dataset of 14 unit-norm attribute columns and a binary label

    (i)   rows with any missing value are removed
    (ii)  the 8 categorical attributes are converted to integers (first appearance order)
    (iii) each attribute column is scaled to unit Euclidean norm
    (iv)  label = 1 iff the income field contains '>50K' (the test split's trailing '.' is fine)

the full file gives d = 45222 rows and n = 14 attributes
"""
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.preprocessing import normalize

ADULT_COLUMNS = ['age', 'workclass', 'fnlwgt', 'education', 'education-num', 'marital-status',
                 'occupation', 'relationship', 'race', 'sex', 'capital-gain', 'capital-loss',
                 'hours-per-week', 'native-country', 'income']
CATEGORICAL_COLUMNS = ['workclass', 'education', 'marital-status', 'occupation', 'relationship',
                       'race', 'sex', 'native-country']
FEATURE_COLUMNS = ADULT_COLUMNS[:-1]


class IngestionError(ValueError):
    """Raised when the Adult csv is missing or malformed."""


@dataclass
class Dataset:
    '''
    Arguments:
    ----------
    rows (np.ndarray): (d, n) feature matrix
    labels (np.ndarray): d binary labels
    provenance (str): 'adult' or 'synthetic'
    '''
    rows: np.ndarray
    labels: np.ndarray
    provenance: str = 'synthetic'

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def normalize_columns(rows: np.ndarray) -> np.ndarray:
    '''Scale each column to unit Euclidean norm, all-zero columns stay zero.'''
    return normalize(np.asarray(rows, dtype=np.float64), norm='l2', axis=0)


def read_adult_frame(path: str) -> pd.DataFrame:
    if not os.path.isfile(path):
        raise IngestionError(f'Adult csv not found: {path}')
    try:
        df = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True, comment='|',
                         keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise IngestionError(f'no data rows in {path}') from e
    except pd.errors.ParserError as e:
        # the parser message names the offending line
        raise IngestionError(f'malformed row in {path}: {e}') from e
    if df.shape[1] != len(ADULT_COLUMNS):
        raise IngestionError(f'row 1 of {path} has {df.shape[1]} fields, expected {len(ADULT_COLUMNS)}')
    df.columns = ADULT_COLUMNS

    short = df.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0]) + 1
        raise IngestionError(f'row {row} of {path} has fewer than {len(ADULT_COLUMNS)} fields')
    return df.apply(lambda col: col.str.strip())


def load_adult(path: str) -> 'Dataset':
    df = read_adult_frame(path)
    total = len(df)

    # (i)
    df = df[~(df == '?').any(axis=1)].reset_index(drop=True)
    if len(df) == 0:
        raise IngestionError(f'no complete rows left in {path}')
    logging.info(f'Adult: kept {len(df)} of {total} rows after removing missing values')

    # (ii)
    features = pd.DataFrame(index=df.index)
    for column in FEATURE_COLUMNS:
        if column in CATEGORICAL_COLUMNS:
            features[column] = pd.factorize(df[column])[0].astype(np.float64)
        else:
            try:
                features[column] = pd.to_numeric(df[column]).astype(np.float64)
            except ValueError as e:
                raise IngestionError(f'non-numeric value in column {column}: {e}') from e

    # (iii) and (iv)
    rows = normalize_columns(features.to_numpy())
    labels = df['income'].str.contains('>50K', regex=False).to_numpy(dtype=np.float64)
    return Dataset(rows=rows, labels=labels, provenance='adult')
