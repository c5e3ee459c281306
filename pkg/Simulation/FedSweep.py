"""
Federated sweep runner     Script  ver： Oct 17th 14:00

run every (algorithm, axis value, seed) cell of a sweep config and write

    <out>/runs.csv              one row per run: algorithm, axis, value, seed, status, error, metrics
    <out>/aggregate.csv|json    mean / median / q25 / q75 per (algorithm, axis value, metric)
    <out>/traces/*.csv          per-run iteration traces (--traces)
    <out>/fed_sweep.log

usage:
    python Simulation/FedSweep.py run --config Simulation/sweep_configs/k0_sweep.yaml --out runs/k0

exit code 0 when every cell ran (budget exhausted runs count as ran), 1 when a cell failed,
2 on configuration or data errors
"""
import os
import sys
from pathlib import Path

# For convinience
this_file_dir = Path(__file__).resolve().parent
sys.path.append(str(this_file_dir.parent))

import json
import logging
import multiprocessing
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from DataPipe.Adult_dataset import Dataset, IngestionError, load_adult
from DataPipe.shard_tools import make_synthetic_dataset, partition
from FedCore.numkit import InvalidInputError
from Simulation.harness import run_experiment, timing_metrics
from Simulation.params import ConfigError, SweepSpec, get_args_parser, load_sweep_config
from Utils.metrics import AGGREGATE_COLUMNS, RUN_METRICS, aggregate_runs
from Utils.tools import setup_logging, stable_seed

RUN_COLUMNS = ['algorithm', 'axis', 'value', 'seed', 'status', 'error', 'iterations', *RUN_METRICS]


def format_axis_value(value) -> str:
    '''Axis values are stored as text so runs.csv reads back to the same cell keys.'''
    if value is None:
        return 'off'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_dataset(spec: SweepSpec) -> Dataset:
    if spec.data == 'synthetic':
        rng = np.random.default_rng(spec.data_seed)
        w_true = spec.w_true_scale * rng.standard_normal(spec.synthetic_n)
        return make_synthetic_dataset(spec.synthetic_n, spec.synthetic_d, w_true, rng)
    return load_adult(spec.data[len('adult:'):])


def run_cell(task: Tuple[SweepSpec, Dataset, str, object, int, bool]) -> Tuple[dict, Optional[str]]:
    """
    One run of a sweep cell; failures are recorded, never raised.

    :return: the runs.csv record and the trace csv text (None unless requested)
    """
    spec, dataset, algorithm, value, seed, keep_trace = task
    record = {'algorithm': algorithm, 'axis': spec.axis, 'value': format_axis_value(value), 'seed': seed,
              'status': 'error', 'error': None, 'iterations': 0, **{metric: np.nan for metric in RUN_METRICS}}
    try:
        cfg = spec.cell_config(algorithm, value, stable_seed(seed, algorithm, spec.axis, record['value']))
        # the partition depends on the trial seed only, every algorithm sees the same shards
        shards = partition(dataset, cfg.m, np.random.default_rng(stable_seed(seed, 'partition')), beta=spec.beta,
                           sizes=spec.partition, concentration=spec.dirichlet_alpha)
        result = run_experiment(cfg, shards)
        timing = timing_metrics(result)
        record.update(status=result.status, iterations=result.iterations, f_over_m=result.rounds[-1].f_over_m,
                      cr=timing.cr, tct=timing.tct, lct=timing.lct, lct_max=timing.lct_max, snr=result.snr)
        return record, result.to_csv() if keep_trace else None
    except Exception as e:
        logging.error(f'cell {algorithm} {spec.axis}={record["value"]} seed {seed} failed: {e}')
        record['error'] = f'{type(e).__name__}: {e}'
        return record, None


def run_sweep(spec: SweepSpec, parallel: int = 1, dataset: Optional[Dataset] = None,
              keep_traces: bool = False) -> Tuple[pd.DataFrame, pd.DataFrame, List[Optional[str]]]:
    """
    Run every (algorithm, axis value, seed) of a sweep.

    :param spec: the validated sweep
    :param parallel: number of worker processes over cells, 1 runs in this process
    :param dataset: preloaded data, loaded from spec.data when None
    :param keep_traces: also return the trace csv of every run
    :return: aggregate table, per-run table (cell order) and the traces
    """
    dataset = load_dataset(spec) if dataset is None else dataset
    tasks = [(spec, dataset, algorithm, value, seed, keep_traces)
             for algorithm in spec.algorithms for value in spec.values for seed in spec.seeds]
    logging.info(f'sweep over {spec.axis} = {spec.values}, algorithms {spec.algorithms}, '
                 f'{len(spec.seeds)} seeds -> {len(tasks)} runs on {dataset.provenance} data '
                 f'(d={dataset.num_rows}, n={dataset.dim})')

    if parallel > 1:
        with multiprocessing.Pool(processes=parallel) as pool:
            outputs = list(tqdm(pool.imap(run_cell, tasks), total=len(tasks), desc='Sweep cells', unit='run'))
    else:
        outputs = [run_cell(task) for task in tqdm(tasks, desc='Sweep cells', unit='run')]

    runs = pd.DataFrame.from_records([record for record, _ in outputs], columns=RUN_COLUMNS)
    return aggregate_runs(runs), runs, [trace for _, trace in outputs]


def emit(table: pd.DataFrame, fmt: str = 'csv') -> str:
    '''Serialize an aggregate table, CSV (17 significant digits, LF) or JSON records, same columns.'''
    table = table.reindex(columns=AGGREGATE_COLUMNS)
    if fmt == 'csv':
        return table.to_csv(index=False, float_format='%.17g', lineterminator='\n')
    if fmt == 'json':
        records = table.astype(object).where(table.notna(), None).to_dict(orient='records')
        # numpy scalars expose .item(), floats keep their shortest round-trip repr
        return json.dumps(records, indent=1, default=lambda o: o.item()) + '\n'
    raise ValueError(f'unknown output format {fmt}')


def write_text(path: str, text: str):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)


def write_outputs(out_dir: str, aggregate: pd.DataFrame, runs: pd.DataFrame, traces: Sequence[Optional[str]],
                  fmt: str = 'csv'):
    os.makedirs(out_dir, exist_ok=True)
    write_text(os.path.join(out_dir, f'aggregate.{fmt}'), emit(aggregate, fmt))
    write_text(os.path.join(out_dir, 'runs.csv'),
               runs.to_csv(index=False, float_format='%.17g', lineterminator='\n'))
    kept = [(row, trace) for row, trace in zip(runs.itertuples(index=False), traces) if trace is not None]
    if kept:
        trace_dir = os.path.join(out_dir, 'traces')
        os.makedirs(trace_dir, exist_ok=True)
        for row, trace in kept:
            write_text(os.path.join(trace_dir, f'{row.algorithm}_{row.axis}-{row.value}_seed{row.seed}.csv'), trace)


def main(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    setup_logging(os.path.join(args.out, 'fed_sweep.log'))
    logging.info(f'sweep config {args.config}, output folder {args.out}')

    try:
        spec = load_sweep_config(args.config)
        if args.data is not None:
            if not (args.data == 'synthetic' or args.data.startswith('adult:')):
                raise ConfigError('data', f'expected "synthetic" or "adult:<path>", got {args.data!r}')
            spec.data = args.data
        dataset = load_dataset(spec)
    except (ConfigError, IngestionError, InvalidInputError, OSError) as e:
        logging.error(str(e))
        print(f'error: {e}', file=sys.stderr)
        return 2

    time_start = time.time()
    aggregate, runs, traces = run_sweep(spec, parallel=args.parallel, dataset=dataset, keep_traces=args.traces)
    write_outputs(args.out, aggregate, runs, traces, args.format)

    failed = int(runs['error'].notna().sum())
    exhausted = int((runs['status'] == 'budget-exhausted').sum())
    logging.info(f'sweep of {len(runs)} runs completed in {time.time() - time_start:.2f} seconds, '
                 f'{exhausted} budget-exhausted, {failed} failed')
    logging.info(f'outputs written to {args.out}')
    if failed:
        print(f'{failed} of {len(runs)} runs failed, see {os.path.join(args.out, "fed_sweep.log")}', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    args = get_args_parser().parse_args()
    sys.exit(main(args))
