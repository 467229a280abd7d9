#!/usr/bin/env python
"""Generate training configuration files needed for experiments.

Writes one YAML file per (method, variant) combination, readable by
``flat_bnn.py train --config``. Flat variants are named ``f-<method>.yaml``.
"""
import argparse
from pathlib import Path
import sys

import yaml

from trainers import VALID_METHODS, VARIATIONAL_METHODS


# Radii per method family; the geometry-scaled perturbation uses its own.
FLAT_RHO = 0.05
VARIATIONAL_FLAT_RHO = 5e-3
GEOMETRY_FLAT_RHO = 5e-4


def main():
    parser = argparse.ArgumentParser(
        'generate configuration files', add_help=True)
    parser.add_argument(
        'config_dir', metavar='config-dir', type=Path,
        help='output directory for config files')
    parser.add_argument(
        '--methods', metavar='METHOD', nargs='+', default=list(VALID_METHODS),
        choices=VALID_METHODS,
        help='methods to generate configs for (default: all)')
    parser.add_argument(
        '--data', metavar='SOURCE', default='two-moons:n=400,noise=0.2,seed=0',
        help='data source (default: %(default)s)')
    parser.add_argument(
        '--arch', metavar='WIDTHS', default='2-16-16-2',
        help='layer widths (default: %(default)s)')
    parser.add_argument(
        '--epochs', metavar='EPOCHS', default=200, type=int,
        help='number of epochs (default: %(default)s)')
    parser.add_argument(
        '--batch-size', metavar='BATCH', default=32, type=int,
        help='minibatch size (default: %(default)s)')
    parser.add_argument(
        '--geometry', default=False, action='store_true',
        help='also write geometry-scaled flat configs for the variational '
             'methods')
    if len(sys.argv) == 1:
        parser.print_help()
        sys.exit(1)
    args = parser.parse_args()

    args.config_dir.mkdir(parents=True, exist_ok=True)

    # Determine parameters for configuration files.
    for method in args.methods:
        variational = method in VARIATIONAL_METHODS
        variants = [('', False, 'identity', None),
                    ('f-', True, 'identity',
                     VARIATIONAL_FLAT_RHO if variational else FLAT_RHO)]
        if args.geometry and variational:
            variants.append(
                ('fg-', True, 'mu-over-sigma', GEOMETRY_FLAT_RHO))
        for prefix, flat, geometry, rho in variants:
            data = {
                'method': method,
                'flat': flat,
                'geometry': geometry,
                'data': args.data,
                'arch': args.arch,
                'epochs': args.epochs,
                'batch_size': args.batch_size}
            if rho is not None:
                data['rho'] = rho
            yaml_path = args.config_dir / f'{prefix}{method}.yaml'
            with open(yaml_path, 'w') as f:
                yaml.dump(data, f, default_flow_style=False)


if __name__ == '__main__':
    main()
