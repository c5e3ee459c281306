"""
sweep decoding    Script  ver： Oct 17th 14:00

rebuild the aggregate table of one or more sweeps from their per-run tables:
every runs.csv under --runs_path is read, concatenated and summarised again

the output is aggregate_decoded.csv (or .json) in the runs folder
"""
import os
import sys
from pathlib import Path

# For convinience
this_file_dir = Path(__file__).resolve().parent
sys.path.append(str(this_file_dir.parent))
import argparse
import logging

import pandas as pd

from Simulation.FedSweep import emit, write_text
from Utils.metrics import aggregate_runs
from Utils.tools import find_all_files, setup_logging


def read_runs(runs_path: str) -> pd.DataFrame:
    """
    :param runs_path: a runs.csv file or a folder searched recursively for runs.csv files
    :return: the concatenated per-run table, empty when nothing was found
    """
    if os.path.isfile(runs_path):
        files = [runs_path]
    else:
        files = [f for f in find_all_files(runs_path, 'runs.csv') if os.path.basename(f) == 'runs.csv']
    # axis values are cell keys, keep them as the text that was written
    tables = [pd.read_csv(f, dtype={'value': str, 'error': str}, float_precision='round_trip') for f in files]
    for f, table in zip(files, tables):
        logging.info(f'{f}: {len(table)} runs')
    if not tables:
        return pd.DataFrame()
    return pd.concat(tables, ignore_index=True)


def main(args):
    setup_logging(args.log_path)
    runs = read_runs(args.runs_path)
    if len(runs) == 0:
        logging.warning(f'no runs.csv found under {args.runs_path}')
    aggregate = aggregate_runs(runs)

    out_dir = args.runs_path if os.path.isdir(args.runs_path) else os.path.dirname(os.path.abspath(args.runs_path))
    output_path = os.path.join(out_dir, f'aggregate_decoded.{args.format}')
    write_text(output_path, emit(aggregate, args.format))
    logging.info(f'decoded aggregate of {len(runs)} runs written to {output_path}')
    print(output_path)


def get_args_parser():
    parser = argparse.ArgumentParser(description='Decoding the sweep results')

    parser.add_argument('--runs_path', default='runs', type=str,
                        help='Folder searched for runs.csv files, or a single runs.csv')
    parser.add_argument('--format', default='csv', type=str, choices=['csv', 'json'],
                        help='Aggregate file format')
    parser.add_argument('--log_path', default=None, type=str,
                        help='Log file, stderr when not given')
    return parser


if __name__ == '__main__':
    args = get_args_parser().parse_args()
    main(args)
