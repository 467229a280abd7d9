#!/usr/bin/env python
"""Compute Hessian spectra of trained checkpoints.

For each checkpoint, estimate the top eigenvalues of the Hessian of the
training loss at the checkpoint's centre model (posterior mean, SWA mean, last
SGLD particle, MC-dropout weights, or each deep-ensemble member, averaged). For
instance,

    python compute_hessian_spectra.py ckpts/*.json spectra.tsv

The output will be a tab delimited file containing one eigenvalue per row, each
row having the following columns:

- checkpoint  --  name of checkpoint file
- method  --  training method
- flat  --  was the sharpness-aware variant used
- rho  --  perturbation radius used in training
- seed  --  training seed
- component  --  index of eigenvalue (1-indexed, descending)
- eigenvalue  --  eigenvalue estimate
- ratio  --  ratio of the largest to the smallest reported eigenvalue
"""
import argparse
from collections import namedtuple
from pathlib import Path
import sys

from joblib import Parallel, delayed
import numpy as np
import pandas as pd

from checkpoints import load_checkpoint
from flat_bnn import center_eigenvalues, load_eval_data


SpectrumConfig = namedtuple(
    'SpectrumConfig', ['checkpoint', 'data', 'k_eigs', 'iters', 'seed'])


def process_one(config):
    """Compute spectrum for one checkpoint."""
    ckpt = load_checkpoint(config.checkpoint)
    dataset = load_eval_data(ckpt, config.data, 'train')
    eigenvalues, ratio = center_eigenvalues(
        ckpt, dataset, config.k_eigs, config.iters, config.seed)

    # Populate dataframe.
    df = pd.DataFrame({'eigenvalue': eigenvalues})
    df['checkpoint'] = config.checkpoint.name
    df['method'] = ckpt.method
    df['flat'] = ckpt.config.flat
    df['rho'] = ckpt.config.rho
    df['seed'] = ckpt.seed
    df['component'] = np.arange(1, len(eigenvalues)+1)
    df['ratio'] = ratio
    df = df[['checkpoint', 'method', 'flat', 'rho', 'seed', 'component',
             'eigenvalue', 'ratio']]
    return df


def main():
    parser = argparse.ArgumentParser(
        description='compute Hessian spectra of checkpoints', add_help=True)
    parser.add_argument(
        'checkpoints', metavar='checkpoint', type=Path, nargs='+',
        help='checkpoint files written by flat_bnn.py train')
    parser.add_argument(
        'spectra', type=Path, help='path to output tab-delimited file with '
                                   'spectra')
    parser.add_argument(
        '--data', metavar='SOURCE', default=None,
        help='data source (default: each checkpoint\'s own)')
    parser.add_argument(
        '--k', metavar='K', default=5, type=int,
        help='retain the K largest eigenvalues (default: %(default)s)')
    parser.add_argument(
        '--iters', metavar='ITERS', default=100, type=int,
        help='maximum power iterations per eigenvalue (default: %(default)s)')
    parser.add_argument(
        '--seed', metavar='SEED', default=11112930, type=int,
        help='seed for power-iteration starting vectors '
             '(default: %(default)s)')
    parser.add_argument(
        '--n-jobs', metavar='JOBS', default=1, type=int,
        help='run using JOBS parallel jobs (default: %(default)s)')
    if len(sys.argv) == 1:
        parser.print_help()
        sys.exit(1)
    args = parser.parse_args()

    # Compute spectra.
    configs = [SpectrumConfig(path, args.data, args.k, args.iters, args.seed)
               for path in sorted(args.checkpoints)]
    f = delayed(process_one)
    res = Parallel(args.n_jobs)(f(c) for c in configs)
    df = pd.concat(res)

    # Save as tab-delimited file for analysis.
    df.to_csv(args.spectra, index=False, header=True, sep='\t')


if __name__ == '__main__':
    main()
