#!/usr/bin/env python
"""Prepare desk-scale datasets for experiments.

Each entry of ``config.yaml`` names a generator and its arguments; the
generated dataset is written to ``<name>.csv`` in this directory. To run:

    python prepare_data.py
"""
import argparse
from pathlib import Path
import sys

import yaml

sys.path.insert(0, str(Path(__file__).parent.parent / 'bin'))
from datasets import gen_gaussian_blobs, gen_two_moons, save_csv  # noqa: E402


THIS_DIR = Path(__file__).parent
CONFIG_PATH = Path(THIS_DIR, 'config.yaml')

GENERATORS = {
    'two-moons': gen_two_moons,
    'blobs': gen_gaussian_blobs}


def load_dataset_configs():
    """Load dataset generator settings."""
    with open(CONFIG_PATH, 'r') as f:
        config = yaml.load(f, Loader=yaml.FullLoader)
    configs = {}
    for name in sorted(config):
        generator = config[name].get('generator')
        if generator not in GENERATORS:
            warning(f'Unrecognized generator "{generator}" for dataset '
                    f'"{name}". Please check "config.yaml".')
            continue
        configs[name] = config[name]
    return configs


def warning(msg):
    """Print warning message to STDERR."""
    print(f'WARNING: {msg}', file=sys.stderr)


def main():
    parser = argparse.ArgumentParser(
        description='prepare datasets for experiments', add_help=True)
    parser.add_argument(
        '--out-dir', metavar='DIR', default=THIS_DIR, type=Path,
        help='write CSV files to DIR (default: %(default)s)')
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, config in load_dataset_configs().items():
        print(f'Generating {name}...')
        kwargs = {k: v for k, v in config.items() if k != 'generator'}
        dataset = GENERATORS[config['generator']](**kwargs)
        save_csv(dataset, Path(args.out_dir, f'{name}.csv'))


if __name__ == '__main__':
    main()
