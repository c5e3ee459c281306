import sys
import os

# Add the parent directory to the sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np

from DataPipe.shard_tools import synth_logistic
from Simulation.harness import ExperimentConfig, run_experiment, timing_metrics
from Utils.tools import setup_logging

setup_logging()

# 10 clients on 2000 synthetic rows with 14 attributes, half of them selected per round
rng = np.random.default_rng(0)
w_true = rng.standard_normal(14)
shards = synth_logistic(n=14, d=2000, m=10, w_true=w_true, rng=rng)

print(f'{"algorithm":<10} {"status":<17} {"CR":>5} {"TCT(s)":>9} {"LCT(s)":>9} {"f/m":>10} {"SNR":>8}')
for algorithm in ('fedepm', 'sfedavg', 'sfedprox'):
    cfg = ExperimentConfig(algorithm=algorithm, m=10, k0=12, rho=0.5, epsilon=0.1, max_iterations=3000,
                           seed=1, monitor=False, clock='virtual')
    result = run_experiment(cfg, shards)
    timing = timing_metrics(result)
    print(f'{algorithm:<10} {result.status:<17} {timing.cr:>5d} {timing.tct:>9.3f} {timing.lct:>9.4f} '
          f'{result.rounds[-1].f_over_m:>10.6f} {result.snr:>8.3f}')
