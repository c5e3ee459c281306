import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from DataPipe.shard_tools import synth_logistic  # noqa: E402


class QuadraticObjective:
    '''f(w) = a/2 ||w - center||^2, a toy local objective with a known minimiser.'''

    def __init__(self, center, a: float = 1.0, num_rows: int = 1):
        self.center = np.asarray(center, dtype=np.float64)
        self.a = a
        self.num_rows = num_rows

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def value_grad(self, w):
        gap = np.asarray(w, dtype=np.float64) - self.center
        return 0.5 * self.a * float(gap @ gap), self.a * gap


class ZeroObjective:
    '''f(w) = 0.'''

    def __init__(self, dim: int, num_rows: int = 1):
        self.dim = dim
        self.num_rows = num_rows

    def value_grad(self, w):
        return 0.0, np.zeros(self.dim)


def bisect_minimiser(right_slope, lo, hi, steps: int = 120):
    '''
    Minimiser of a strictly convex 1-D function on [lo, hi] from its right derivative
    (nondecreasing), bisected elementwise when lo and hi are arrays.
    '''
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        rising = right_slope(mid) >= 0
        hi = np.where(rising, mid, hi)
        lo = np.where(rising, lo, mid)
    return 0.5 * (lo + hi)


def right_sign(x):
    '''sign with sign(0) = +1, the right derivative of |x|.'''
    return np.where(x >= 0, 1.0, -1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_shards():
    '''4 logistic shards of 50 rows and 5 attributes.'''
    return synth_logistic(n=5, d=200, m=4, w_true=np.ones(5), rng=np.random.default_rng(7))
