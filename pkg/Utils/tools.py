"""
Tools   Script  ver： Oct 17th 14:00

logging setup, seeded random streams and file search shared by the simulator scripts
"""
import logging
import os
import zlib
from typing import List, Optional, Sequence, Union

import numpy as np


# tools for logging
def setup_logging(log_file_path: Optional[str] = None, level=logging.INFO):
    '''Root logger to a file (or stderr when no path is given).'''
    if log_file_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(log_file_path)), exist_ok=True)
    logging.basicConfig(filename=log_file_path, level=level,
                        format='%(asctime)s - %(levelname)s - %(message)s')


# tools for seeding
def spawn_streams(seed: int, count: int) -> List[np.random.Generator]:
    """
    Independent generators derived from one seed.

    the same (seed, count) always yields the same streams, so each consumer (server selection,
    each client's noise) owns its stream and worker order never matters
    """
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.default_rng(child) for child in children]


def stable_seed(seed: int, *keys) -> int:
    '''Mix a base seed with a text key into a reproducible 64-bit seed (python's hash() is salted).'''
    key = '|'.join(str(k) for k in keys).encode('utf-8')
    mixed = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(key)])
    return int(mixed.generate_state(1, dtype=np.uint64)[0])


def find_all_files(root, suffix: Union[str, Sequence[str], None] = None) -> List[str]:
    """
    Return a sorted list of file paths ended with specific suffix
    """
    if isinstance(suffix, str):
        suffix = (suffix,)
    res = []
    for folder, _, files in os.walk(root):
        for f in files:
            if suffix is not None and not f.endswith(tuple(suffix)):
                continue
            res.append(os.path.join(folder, f))
    return sorted(res)
