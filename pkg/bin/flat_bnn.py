#!/usr/bin/env python
"""Train and evaluate flat (sharpness-aware) Bayesian MLPs.

Subcommands:

- train  --  train one posterior and write a checkpoint
- eval  --  accuracy, NLL, ECE (and optionally sharpness and Hessian
  eigenvalues) of a checkpoint; reliability table as CSV
- sharpness  --  sharpness of models sampled from a checkpoint
- bound  --  evaluate the PAC-Bayes bound of the sharpness-aware posterior
- gibbs  --  closed-form Gibbs posterior on a finite grid vs. a direct search

For instance, to train a flat SGVB posterior with the geometry-scaled
perturbation on two moons and evaluate it on the held-out split:

    flat_bnn.py train --method sgvb --flat --geometry mu-over-sigma \\
        --data two-moons:n=400,noise=0.2 --seed 1 --out sgvb.json
    flat_bnn.py eval sgvb.json --reliability-out reliability.csv

``train`` also accepts ``--config FILE``, a YAML mapping from flag names to
values; flags given on the command line take precedence.

Exit codes are 0 on success, 1 on usage or configuration errors and 2 on
runtime errors.
"""
import argparse
from pathlib import Path
import sys
import time

import numpy as np
import pandas as pd
import yaml

from checkpoints import (Checkpoint, FORMAT_VERSION, load_checkpoint,
                         save_checkpoint)
from datasets import (fingerprint, load_dataset, normalize, parse_data_source,
                      split_indices, split_normalize)
from evaluation import (PosteriorSampler, center_models, check_payload,
                        evaluate, sampled_sharpness, top_eigenvalues, warning,
                        write_reliability_csv)
from flatness import (GEOMETRY_KINDS, bound_components, gibbs_oracle,
                      gibbs_posterior_grid, make_bound_inputs, make_gibbs_grid,
                      sharpness_aware_grid, total_variation)
from models import LayoutError, mlp_loss_and_grad, parse_mlp_spec
from trainers import (VALID_LR_SCHEDULES, VALID_METHODS, VARIATIONAL_METHODS,
                      make_train_config, resolve_geometry, train)


# Default radius per method family and geometry.
DEFAULT_RHO = 0.05
DEFAULT_VARIATIONAL_RHO = {'identity': 5e-3, 'mu-over-sigma': 5e-4}

DEFAULT_LR = 0.05
DEFAULT_SGLD_LR = 1e-4

SPLITS = ('train', 'test', 'all')


class ConfigError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """``ArgumentParser`` that exits with status 1 on usage errors."""
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f'{self.prog}: error: {message}\n')


def load_train_config(fn, parser):
    """Apply a YAML config file as defaults of the ``train`` parser."""
    fn = Path(fn)
    with open(fn, 'r') as f:
        try:
            config = yaml.load(f, Loader=yaml.FullLoader)
        except yaml.YAMLError as e:
            raise ConfigError(f'malformed config file "{fn}": {e}')
    if config is None:
        return
    if not isinstance(config, dict):
        raise ConfigError(f'config file "{fn}" must contain a mapping')

    # Keys may be long flag names (dashes or underscores) or destinations.
    key_to_dest = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith('--'):
                key_to_dest[opt[2:].replace('-', '_')] = action.dest
        key_to_dest[action.dest] = action.dest
    key_to_dest.pop('config', None)
    key_to_dest.pop('help', None)

    defaults = {}
    for key, value in config.items():
        norm_key = str(key).replace('-', '_')
        if norm_key not in key_to_dest:
            raise ConfigError(
                f'Encountered unknown key "{key}" when parsing config file '
                f'"{fn}".')
        defaults[key_to_dest[norm_key]] = value
    parser.set_defaults(**defaults)


def get_split(dataset, data, split):
    """Rows of ``dataset`` for ``split``, standardised like the training data.

    ``data`` is the checkpoint's data record (split settings plus the
    normalisation statistics of the training split).
    """
    if split not in SPLITS:
        raise ConfigError(
            f'Unrecognized split "{split}". Valid splits: {SPLITS}.')
    n = len(dataset.labels)
    if split == 'all':
        idx = np.arange(n)
    else:
        train_idx, test_idx = split_indices(
            n, data['train_fraction'], data['split_seed'])
        idx = train_idx if split == 'train' else test_idx
    return normalize(dataset, idx, data['feat_mean'], data['feat_std'])


def load_eval_data(ckpt, source=None, split='test'):
    """Load the data a checkpoint is evaluated on.

    Defaults to the checkpoint's own data source.
    """
    source = ckpt.data['source'] if source is None else source
    try:
        parse_data_source(source)
    except ValueError as e:
        raise ConfigError(str(e))
    dataset = load_dataset(source)
    d = dataset.features.shape[1]
    if d != ckpt.data['d'] or dataset.n_classes > ckpt.data['n_classes']:
        raise ValueError(
            f'dataset "{source}" has {d} features and {dataset.n_classes} '
            f'classes; checkpoint was trained on {ckpt.data["d"]} features '
            f'and {ckpt.data["n_classes"]} classes')
    return get_split(dataset, ckpt.data, split)


def make_sampler(ckpt, swa=False):
    check_payload(ckpt.method, ckpt.payload)
    if swa and ckpt.method not in {'swag', 'swag-diag'}:
        raise ConfigError(f'--swa needs a SWAG checkpoint, got "{ckpt.method}"')
    return PosteriorSampler(ckpt.method, ckpt.payload, ckpt.spec,
                            keep_prob=ckpt.config.keep_prob, swa=swa)


def center_eigenvalues(ckpt, dataset, k_eigs=5, iters=100, seed=0):
    """Top Hessian eigenvalues of the training loss at the checkpoint's
    centre model(s), averaged over deep-ensemble members.

    Returns
    -------
    eigenvalues : ndarray, (k_eigs,)
        Eigenvalues in descending order.

    ratio : float
        Ratio of the first to the last eigenvalue.
    """
    rng = np.random.default_rng(seed)
    grad_fn = mlp_loss_and_grad(ckpt.spec, dataset.features, dataset.labels)
    results = [top_eigenvalues(grad_fn, params.values, k_eigs, iters, rng)
               for params in center_models(ckpt.method, ckpt.payload)]
    eigenvalues = np.mean([eigs for eigs, _ in results], axis=0)
    ratio = float(np.mean([ratio for _, ratio in results]))
    return eigenvalues, ratio


def cmd_train(args):
    if args.data is None:
        raise ConfigError('--data is required')
    if args.out is None:
        raise ConfigError('--out is required')
    try:
        source_name, _ = parse_data_source(args.data)
        spec = parse_mlp_spec(args.arch, args.activation)
    except (ValueError, LayoutError) as e:
        raise ConfigError(str(e))

    # Method-dependent defaults.
    rho = args.rho
    if rho is None:
        if args.method in VARIATIONAL_METHODS:
            rho = DEFAULT_VARIATIONAL_RHO.get(args.geometry, DEFAULT_RHO)
        else:
            rho = DEFAULT_RHO
    lr = args.lr
    if lr is None:
        lr = DEFAULT_SGLD_LR if args.method == 'sgld' else DEFAULT_LR
    lam, temperature = args.lam, args.sgld_temperature
    try:
        config = make_train_config(
            method=args.method, flat=bool(args.flat), geometry=args.geometry,
            rho=float(rho), lam=None if lam is None else float(lam),
            learning_rate=float(lr),
            epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
            prior_tau=float(args.prior_tau),
            sgld_temperature=(None if temperature is None
                              else float(temperature)),
            swag_collect_start_epoch=args.swag_start,
            swag_rank=args.swag_rank, ensemble_size=args.ensemble_size,
            keep_prob=float(args.keep_prob),
            mc_train_samples=args.mc_samples, lr_schedule=args.lr_schedule,
            prior_l2=args.prior_l2,
            sgld_collect_every=args.sgld_collect_every, n_jobs=args.n_jobs,
            log_sigma_init=float(args.log_sigma_init))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))

    print('Loading data...')
    dataset = load_dataset(args.data)
    fp = fingerprint(dataset)
    if spec.widths[0] != fp.d or spec.widths[-1] != fp.n_classes:
        raise ConfigError(
            f'architecture {args.arch} does not fit data with {fp.d} features '
            f'and {fp.n_classes} classes')
    train_set, _ = split_normalize(dataset, args.train_fraction,
                                   args.split_seed)

    warnings = []
    _, msg = resolve_geometry(config)
    if msg is not None:
        warning(msg)
        warnings.append(msg)

    print(f'Training {config.method} ({"flat" if config.flat else "baseline"}, '
          f'rho={config.rho})...')
    history = []
    t0 = time.perf_counter()
    payload = train(config, spec, train_set,
                    progress=not args.disable_progress, history=history)
    elapsed = time.perf_counter() - t0

    data = {
        'source': args.data,
        'kind': source_name,
        'train_fraction': args.train_fraction,
        'split_seed': args.split_seed,
        'n': fp.n,
        'd': fp.d,
        'n_classes': fp.n_classes,
        'hash': fp.hash,
        'feat_mean': train_set.feat_mean.tolist(),
        'feat_std': train_set.feat_std.tolist()}
    ckpt = Checkpoint(FORMAT_VERSION, config.method, config, spec, data,
                      config.seed, payload, tuple(warnings))
    save_checkpoint(ckpt, args.out)
    print(f'Final train loss: {history[-1]:.9g}')
    print(f'Wall time: {elapsed:.2f} s')
    print(f'Checkpoint written to "{args.out}".')


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    sampler = make_sampler(ckpt, args.swa)
    dataset = load_eval_data(ckpt, args.data, args.split)
    rng = np.random.default_rng(args.seed)
    report = evaluate(sampler, dataset.features, dataset.labels,
                      args.n_samples, rng, args.ece_bins)

    records = [
        ('method', ckpt.method),
        ('flat', ckpt.config.flat),
        ('split', args.split),
        ('samples', report.n_ensemble_samples),
        ('accuracy', f'{report.accuracy:.9g}'),
        ('nll', f'{report.nll:.9g}'),
        ('ece', f'{report.ece:.9g}')]
    if args.sharpness:
        train_set = load_eval_data(ckpt, args.data, 'train')
        values = sampled_sharpness(
            sampler, train_set.features, train_set.labels, args.sharpness_rho,
            args.sharpness_samples, args.sharpness_steps,
            np.random.default_rng(args.seed))
        records.append(('sharpness', f'{np.mean(values):.9g}'))
    if args.eigs > 0:
        train_set = load_eval_data(ckpt, args.data, 'train')
        eigenvalues, ratio = center_eigenvalues(
            ckpt, train_set, args.eigs, args.eig_iters, args.seed)
        for i, value in enumerate(eigenvalues):
            records.append((f'lambda_{i + 1}', f'{value:.9g}'))
        records.append((f'lambda_1/lambda_{args.eigs}', f'{ratio:.9g}'))
    for key, value in records:
        print(f'{key}\t{value}')

    if args.reliability_out is not None:
        write_reliability_csv(report.reliability, args.reliability_out)
        print(f'Reliability table written to "{args.reliability_out}".')


def cmd_sharpness(args):
    ckpt = load_checkpoint(args.checkpoint)
    sampler = make_sampler(ckpt)
    dataset = load_eval_data(ckpt, args.data, args.split)
    values = sampled_sharpness(
        sampler, dataset.features, dataset.labels, args.rho, args.samples,
        args.steps, np.random.default_rng(args.seed))
    for i, value in enumerate(values):
        print(f'model {i + 1}\t{value:.9g}')
    print(f'mean\t{np.mean(values):.9g}')


def cmd_bound(args):
    try:
        inputs = make_bound_inputs(args.k, args.n, args.R, args.rho,
                                   args.delta, args.omega)
    except ValueError as e:
        raise ConfigError(str(e))
    if inputs.n < 2:
        raise ConfigError(f'--n must be >= 2, got {inputs.n}')
    parts = bound_components(inputs)
    print(f'log covering number\t{parts.log_covering!r}')
    print(f'sigma\t{parts.sigma!r}')
    print(f'1/sqrt(n)\t{parts.inv_sqrt_n!r}')
    print(f'2*omega\t{parts.omega_term!r}')
    print(f'sqrt term\t{parts.sqrt_term!r}')
    print(f'bound term\t{parts.total!r}')
    if args.empirical_sa_loss is not None and args.empirical_loss is not None:
        total = args.empirical_sa_loss + args.empirical_loss + parts.total
        print(f'bound\t{total!r}')


def load_grid(fn):
    """Read a grid CSV with columns ``point``, ``loss``, optional ``prior`` and
    optional coordinate columns ``x0, x1, ...``.
    """
    df = pd.read_csv(fn)
    for col in ['point', 'loss']:
        if col not in df.columns:
            raise ValueError(f'grid file "{fn}" has no "{col}" column')
    prior = df['prior'].to_numpy() if 'prior' in df.columns else None
    grid = make_gibbs_grid(
        df['point'].astype(str).tolist(), df['loss'].to_numpy(), prior,
        normalize=prior is not None)
    coord_cols = [col for col in df.columns
                  if col.startswith('x') and col[1:].isdigit()]
    coords = df[coord_cols].to_numpy(dtype=np.float64) if coord_cols else None
    return grid, coords


def cmd_gibbs(args):
    grid, coords = load_grid(args.grid)
    if args.rho is not None:
        if coords is None:
            raise ConfigError('--rho needs coordinate columns x0, x1, ... in '
                              'the grid file')
        grid = sharpness_aware_grid(grid, coords, args.rho)
    closed_form = gibbs_posterior_grid(grid, args.lam)
    df = pd.DataFrame({
        'point': grid.points,
        'loss': grid.loss,
        'prior': grid.prior_mass,
        'closed_form': closed_form})
    if not args.no_oracle:
        df['oracle'] = gibbs_oracle(grid, args.lam, args.resolution)
    print(df.to_string(index=False, float_format=lambda x: f'{x:.9g}'))
    if not args.no_oracle:
        tv = total_variation(closed_form, df['oracle'].to_numpy())
        print(f'total variation\t{tv:.9g}')
    if args.out is not None:
        df.to_csv(args.out, index=False, float_format='%.12g')


def add_train_parser(subparsers):
    parser = subparsers.add_parser(
        'train', help='train a posterior and write a checkpoint')
    parser.add_argument(
        '--config', metavar='CONFIG', type=Path,
        help='YAML file of flag defaults; command-line flags take precedence')
    parser.add_argument(
        '--data', metavar='SOURCE',
        help='data source, e.g. two-moons:n=400,noise=0.2,seed=0, '
             'blobs:n=300,centers=3,spread=0.5,seed=0 or a CSV path')
    parser.add_argument(
        '--out', metavar='CHECKPOINT', type=Path,
        help='output checkpoint file')
    parser.add_argument(
        '--method', default='sgvb', choices=VALID_METHODS,
        help='inference method (default: %(default)s)')
    parser.add_argument(
        '--flat', default=False, action='store_true',
        help='use the sharpness-aware (flat) variant')
    parser.add_argument(
        '--geometry', default='identity', choices=GEOMETRY_KINDS,
        help='perturbation geometry (default: %(default)s)')
    parser.add_argument(
        '--rho', metavar='RHO', default=None, type=float,
        help='perturbation radius (default: 5e-3 for SGVB, 5e-4 with the '
             'mu-over-sigma geometry, 0.05 otherwise)')
    parser.add_argument(
        '--lambda', metavar='LAMBDA', dest='lam', default=None, type=float,
        help='inverse temperature (default: training-set size)')
    parser.add_argument(
        '--arch', metavar='WIDTHS', default='2-16-16-2',
        help='layer widths (default: %(default)s)')
    parser.add_argument(
        '--activation', default='relu', choices=['relu', 'tanh'],
        help='hidden activation (default: %(default)s)')
    parser.add_argument(
        '--lr', metavar='LR', default=None, type=float,
        help='learning rate (default: 0.05, 1e-4 for SGLD)')
    parser.add_argument(
        '--lr-schedule', default='constant', choices=VALID_LR_SCHEDULES,
        help='learning-rate schedule (default: %(default)s)')
    parser.add_argument(
        '--epochs', metavar='EPOCHS', default=200, type=int,
        help='number of epochs (default: %(default)s)')
    parser.add_argument(
        '--batch-size', metavar='BATCH', default=32, type=int,
        help='minibatch size (default: %(default)s)')
    parser.add_argument(
        '--seed', metavar='SEED', default=0, type=int,
        help='seed for RNG (default: %(default)s)')
    parser.add_argument(
        '--prior-tau', metavar='TAU', default=1.0, type=float,
        help='prior standard deviation (default: %(default)s)')
    parser.add_argument(
        '--no-prior-l2', dest='prior_l2', default=True, action='store_false',
        help='drop the prior (L2) term for SGLD, SWAG, MC-dropout and deep '
             'ensembles')
    parser.add_argument(
        '--log-sigma-init', metavar='LOGSIGMA', default=-5.0, type=float,
        help='initial log posterior std for SGVB (default: %(default)s)')
    parser.add_argument(
        '--mc-samples', metavar='SAMPLES', default=1, type=int,
        help='noise samples per SGVB step (default: %(default)s)')
    parser.add_argument(
        '--sgld-temperature', metavar='TEMP', default=None, type=float,
        help='SGLD temperature (default: 1/n)')
    parser.add_argument(
        '--sgld-collect-every', metavar='EPOCHS', default=1, type=int,
        help='collect an SGLD particle every EPOCHS epochs after burn-in '
             '(default: %(default)s)')
    parser.add_argument(
        '--swag-start', metavar='EPOCH', default=None, type=int,
        help='first epoch collected by SWAG (default: 54%% of epochs)')
    parser.add_argument(
        '--swag-rank', metavar='RANK', default=20, type=int,
        help='SWAG deviation rank (default: %(default)s)')
    parser.add_argument(
        '--ensemble-size', metavar='K', default=3, type=int,
        help='deep-ensemble size (default: %(default)s)')
    parser.add_argument(
        '--keep-prob', metavar='P', default=0.9, type=float,
        help='MC-dropout keep probability (default: %(default)s)')
    parser.add_argument(
        '--train-fraction', metavar='FRAC', default=0.8, type=float,
        help='fraction of examples used for training (default: %(default)s)')
    parser.add_argument(
        '--split-seed', metavar='SEED', default=0, type=int,
        help='seed for the train/test split (default: %(default)s)')
    parser.add_argument(
        '--n-jobs', metavar='JOBS', default=1, type=int,
        help='train deep-ensemble members using JOBS parallel jobs '
             '(default: %(default)s)')
    parser.add_argument(
        '--disable-progress', default=False, action='store_true',
        help='disable progress bar')
    parser.set_defaults(func=cmd_train)
    return parser


def add_checkpoint_args(parser, default_split):
    parser.add_argument(
        'checkpoint', type=Path, help='checkpoint written by train')
    parser.add_argument(
        '--data', metavar='SOURCE', default=None,
        help='data source (default: the checkpoint\'s own)')
    parser.add_argument(
        '--split', default=default_split, choices=SPLITS,
        help='split to evaluate on (default: %(default)s)')
    parser.add_argument(
        '--seed', metavar='SEED', default=0, type=int,
        help='seed for posterior sampling (default: %(default)s)')


def main(argv=None):
    parser = ArgumentParser(
        description='sharpness-aware Bayesian MLPs', add_help=True)
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    train_parser = add_train_parser(subparsers)

    eval_parser = subparsers.add_parser('eval', help='evaluate a checkpoint')
    add_checkpoint_args(eval_parser, 'test')
    eval_parser.add_argument(
        '--n-samples', metavar='SAMPLES', default=30, type=int,
        help='number of ensemble samples (default: %(default)s)')
    eval_parser.add_argument(
        '--ece-bins', metavar='BINS', default=20, type=int,
        help='number of confidence bins (default: %(default)s)')
    eval_parser.add_argument(
        '--reliability-out', metavar='CSV', default=None, type=Path,
        help='write the reliability table to CSV')
    eval_parser.add_argument(
        '--swa', default=False, action='store_true',
        help='evaluate the SWA mean of a SWAG checkpoint')
    eval_parser.add_argument(
        '--sharpness', default=False, action='store_true',
        help='also report mean sharpness on the training split')
    eval_parser.add_argument(
        '--sharpness-rho', metavar='RHO', default=0.05, type=float,
        help='sharpness radius (default: %(default)s)')
    eval_parser.add_argument(
        '--sharpness-samples', metavar='N', default=5, type=int,
        help='models averaged for sharpness (default: %(default)s)')
    eval_parser.add_argument(
        '--sharpness-steps', metavar='STEPS', default=10, type=int,
        help='ascent steps for sharpness (default: %(default)s)')
    eval_parser.add_argument(
        '--eigs', metavar='K', default=0, type=int,
        help='report the top K Hessian eigenvalues (default: %(default)s)')
    eval_parser.add_argument(
        '--eig-iters', metavar='ITERS', default=100, type=int,
        help='power iterations per eigenvalue (default: %(default)s)')
    eval_parser.set_defaults(func=cmd_eval)

    sharp_parser = subparsers.add_parser(
        'sharpness', help='sharpness of models sampled from a checkpoint')
    add_checkpoint_args(sharp_parser, 'train')
    sharp_parser.add_argument(
        '--rho', metavar='RHO', default=0.05, type=float,
        help='radius of the ball (default: %(default)s)')
    sharp_parser.add_argument(
        '--samples', metavar='N', default=5, type=int,
        help='number of sampled models (default: %(default)s)')
    sharp_parser.add_argument(
        '--steps', metavar='STEPS', default=10, type=int,
        help='projected ascent steps (default: %(default)s)')
    sharp_parser.set_defaults(func=cmd_sharpness)

    bound_parser = subparsers.add_parser(
        'bound', help='evaluate the PAC-Bayes bound term')
    bound_parser.add_argument(
        '--k', metavar='K', required=True, type=int,
        help='number of parameters')
    bound_parser.add_argument(
        '--n', metavar='N', required=True, type=int,
        help='number of training examples')
    bound_parser.add_argument(
        '--R', metavar='R', required=True, type=float,
        help='maximum parameter norm')
    bound_parser.add_argument(
        '--rho', metavar='RHO', required=True, type=float,
        help='perturbation radius')
    bound_parser.add_argument(
        '--delta', metavar='DELTA', default=0.05, type=float,
        help='confidence level (default: %(default)s)')
    bound_parser.add_argument(
        '--omega', metavar='OMEGA', default=0.0, type=float,
        help='modulus-of-continuity constant (default: %(default)s)')
    bound_parser.add_argument(
        '--empirical-sa-loss', metavar='LOSS', default=None, type=float,
        help='expected sharpness-aware empirical loss of the posterior')
    bound_parser.add_argument(
        '--empirical-loss', metavar='LOSS', default=None, type=float,
        help='expected empirical loss of the posterior')
    bound_parser.set_defaults(func=cmd_bound)

    gibbs_parser = subparsers.add_parser(
        'gibbs', help='Gibbs posterior on a finite grid')
    gibbs_parser.add_argument(
        'grid', type=Path,
        help='CSV with columns point, loss and optionally prior, x0, x1, ...')
    gibbs_parser.add_argument(
        '--lambda', metavar='LAMBDA', dest='lam', default=1.0, type=float,
        help='inverse temperature (default: %(default)s)')
    gibbs_parser.add_argument(
        '--resolution', metavar='STEP', default=1e-3, type=float,
        help='lattice step of the direct search (default: %(default)s)')
    gibbs_parser.add_argument(
        '--rho', metavar='RHO', default=None, type=float,
        help='replace losses by their max within RHO (sharpness-aware grid)')
    gibbs_parser.add_argument(
        '--no-oracle', default=False, action='store_true',
        help='skip the direct search')
    gibbs_parser.add_argument(
        '--out', metavar='CSV', default=None, type=Path,
        help='write both distributions to CSV')
    gibbs_parser.set_defaults(func=cmd_gibbs)

    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_help()
        sys.exit(1)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        if args.command == 'train' and args.config is not None:
            load_train_config(args.config, train_parser)
            args = parser.parse_args(argv)
        args.func(args)
    except ConfigError as e:
        print(f'ERROR: {e}', file=sys.stderr)
        sys.exit(1)
    except (ValueError, TypeError, RuntimeError, OSError,
            yaml.YAMLError) as e:
        print(f'ERROR: {e}', file=sys.stderr)
        sys.exit(2)


if __name__ == '__main__':
    main()
