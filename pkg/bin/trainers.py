"""Baseline and flat (sharpness-aware) variants of five BNN inference methods.

Every method shares one step skeleton (``sam_step``): evaluate the gradient at
the current point, move to ``sam_perturb(current, grad, rho, T)``, evaluate the
gradient there and apply the method's update at the current point. Prior and
L2 terms are always differentiated at the current point; only the data term
sees the perturbation.

Objectives are divided by the training-set size ``n`` so learning rates are per
example:

- SGVB / SGVB-LRT: ``(lam/n) * L_batch + KL(q || p) / n``
- SWAG, MC-dropout, deep ensemble: ``L_batch + c * |theta|^2 / (2 tau^2 lam)``
  with ``c = keep_prob`` for MC-dropout and 1 otherwise
- SGLD: gradient ``lam * grad L_batch + theta / tau^2`` plus Langevin noise
"""
from collections import namedtuple
import math

from joblib import delayed, Parallel
import numpy as np
from tqdm import tqdm

from diffcore import as_tensor, value_and_grad
from flatness import GEOMETRY_KINDS, geometry_diag, sam_perturb
from models import (FlatParams, GaussianPosterior, check_keep_prob,
                    draw_dropout_masks, draw_lrt_noise, init_params,
                    init_posterior, kl_diag_gaussian, kl_diag_gaussian_grad,
                    local_reparam_program, make_prior, mlp_loss_and_grad,
                    reparam_program)


VALID_METHODS = ('sgvb', 'sgvb-lrt', 'sgld', 'swag', 'swag-diag',
                 'mc-dropout', 'deep-ensemble')
VARIATIONAL_METHODS = {'sgvb', 'sgvb-lrt'}
VALID_LR_SCHEDULES = ('constant', 'cosine')

# Fraction of epochs after which SWAG starts collecting snapshots.
SWAG_COLLECT_FRACTION = 0.54


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter at ``step``."""
    def __init__(self, step, msg):
        self.step = step
        super(DivergenceError, self).__init__(f'step {step}: {msg}')


TrainConfig = namedtuple(
    'TrainConfig',
    ['method', 'flat', 'geometry', 'rho', 'lam', 'learning_rate', 'epochs',
     'batch_size', 'seed', 'prior_tau', 'sgld_temperature',
     'swag_collect_start_epoch', 'swag_rank', 'ensemble_size', 'keep_prob',
     'mc_train_samples', 'lr_schedule', 'prior_l2', 'sgld_collect_every',
     'n_jobs', 'log_sigma_init'],
    defaults=('sgvb', False, 'identity', 0.05, None, 0.05, 200, 32, 0, 1.0,
              None, None, 20, 3, 0.9, 1, 'constant', True, 1, 1, -5.0))
TrainConfig.__doc__ = """Immutable training configuration.

``lam``, ``sgld_temperature`` and ``swag_collect_start_epoch`` default to None,
meaning ``n``, ``1/n`` and 54% of ``epochs`` respectively.
"""

ParticleSet = namedtuple('ParticleSet', ['particles', 'steps'])


def make_train_config(**kwargs):
    """Return a validated ``TrainConfig``."""
    config = TrainConfig(**kwargs)
    if config.method not in VALID_METHODS:
        raise ValueError(
            f'Unrecognized method "{config.method}". Valid methods: '
            f'{VALID_METHODS}.')
    if config.geometry not in GEOMETRY_KINDS:
        raise ValueError(
            f'Unrecognized geometry "{config.geometry}". Valid geometries: '
            f'{GEOMETRY_KINDS}.')
    if config.lr_schedule not in VALID_LR_SCHEDULES:
        raise ValueError(
            f'Unrecognized learning-rate schedule "{config.lr_schedule}". '
            f'Valid schedules: {VALID_LR_SCHEDULES}.')
    if config.rho < 0:
        raise ValueError(f'rho must be non-negative, got {config.rho}')
    if config.lam is not None and config.lam < 0:
        raise ValueError(f'lambda must be non-negative, got {config.lam}')
    if config.sgld_temperature is not None and config.sgld_temperature < 0:
        raise ValueError(
            f'SGLD temperature must be non-negative, got '
            f'{config.sgld_temperature}')
    for name in ['epochs', 'batch_size', 'ensemble_size', 'mc_train_samples',
                 'sgld_collect_every']:
        if getattr(config, name) < 1:
            raise ValueError(
                f'{name} must be >= 1, got {getattr(config, name)}')
    if config.swag_rank < 0:
        raise ValueError(f'swag_rank must be >= 0, got {config.swag_rank}')
    if not config.learning_rate > 0:
        raise ValueError(
            f'learning rate must be positive, got {config.learning_rate}')
    check_keep_prob(config.keep_prob)
    make_prior(config.prior_tau)
    return config


def resolve_geometry(config):
    """Return the geometry a method can use and a warning if it changed.

    The ``mu-over-sigma`` geometry needs a posterior scale, so only the
    variational methods honour it.
    """
    if config.geometry == 'identity' or config.method in VARIATIONAL_METHODS:
        return config.geometry, None
    msg = (f'geometry "{config.geometry}" needs a posterior scale; method '
           f'"{config.method}" falls back to "identity"')
    return 'identity', msg


def resolve_lambda(config, n):
    return float(n) if config.lam is None else float(config.lam)


def swag_start_epoch(config):
    if config.swag_collect_start_epoch is None:
        return int(SWAG_COLLECT_FRACTION * config.epochs)
    return config.swag_collect_start_epoch


def learning_rate_at(config, epoch):
    """Learning rate for ``epoch`` under the configured schedule."""
    if config.lr_schedule == 'cosine':
        return 0.5 * config.learning_rate * (
            1 + math.cos(math.pi * epoch / config.epochs))
    return config.learning_rate


def iterate_minibatches(n, batch_size, rng):
    """Yield index arrays of one shuffled pass over ``n`` examples."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def sam_step(loss_at, current, rho, t_diag=None, flat=True, direction=None):
    """Loss at ``current`` and the gradient to apply there.

    Parameters
    ----------
    loss_at : callable
        ``loss_at(point) -> (loss, grad)``.

    current : ndarray
        Current point.

    rho : float
        Perturbation radius.

    t_diag : ndarray, optional
        Diagonal of the perturbation geometry. Identity if omitted.

    flat : bool, optional
        If False, no perturbation is applied.
        (Default: True)

    direction : callable, optional
        Maps ``grad`` to the part of it that is w.r.t. ``current``; needed
        when ``loss_at`` also returns gradients for other parameters.

    Returns
    -------
    loss : float
        Loss at ``current``.

    grad : object
        Gradient evaluated at the perturbed point (at ``current`` when
        ``flat`` is False or ``rho`` is 0).
    """
    loss, grad = loss_at(current)
    if not flat or rho == 0:
        return loss, grad
    ascent = grad if direction is None else direction(grad)
    perturbed = sam_perturb(current, ascent, rho, t_diag)
    _, grad = loss_at(perturbed)
    return loss, grad


def sgld_update(theta, grad, lr, temperature, z):
    """``theta - lr*grad + sqrt(2*lr*temperature) * z``."""
    return theta - lr * grad + math.sqrt(2 * lr * temperature) * z


def _check_dataset(dataset):
    if len(dataset.labels) == 0:
        raise ValueError('cannot train on an empty dataset')


def _check_finite(step, loss, *arrays):
    if not np.isfinite(loss):
        raise DivergenceError(step, f'non-finite loss {loss}')
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(step, 'non-finite parameter value')


def _epochs(config, desc, progress):
    return tqdm(range(config.epochs), desc=desc, disable=not progress,
                leave=False)


def train_sgvb(config, spec, dataset, rng, local_reparam=False, progress=False,
               history=None):
    """Stochastic-gradient variational Bayes, optionally sharpness-aware.

    Each step draws the weight noise (or, with ``local_reparam``, the
    pre-activation noise) once, and that noise is held fixed across the
    ascent and descent gradient evaluations. The perturbation acts on ``mu``
    only; ``log_sigma`` receives the gradient at ``(mu', log_sigma)``.

    Parameters
    ----------
    config : TrainConfig
        Training configuration.

    spec : MlpSpec
        Architecture.

    dataset : Dataset
        Training data.

    rng : numpy.random.Generator
        Source of all randomness (initialisation, batching, noise).

    local_reparam : bool, optional
        Sample pre-activations instead of weights.
        (Default: False)

    progress : bool, optional
        Show a progress bar over epochs.
        (Default: False)

    history : list, optional
        If given, the mean per-step objective of each epoch is appended.

    Returns
    -------
    GaussianPosterior
        Final variational posterior.
    """
    _check_dataset(dataset)
    X, y = dataset.features, dataset.labels
    n = len(y)
    lam = resolve_lambda(config, n)
    prior = make_prior(config.prior_tau)
    geometry, _ = resolve_geometry(config)
    posterior = init_posterior(spec, rng, config.log_sigma_init)
    mu, log_sigma, layout = posterior.mu, posterior.log_sigma, posterior.layout
    S = config.mc_train_samples

    step = 0
    for epoch in _epochs(config, 'sgvb', progress):
        lr = learning_rate_at(config, epoch)
        epoch_losses = []
        for idx in iterate_minibatches(n, config.batch_size, rng):
            batch = (X[idx], y[idx])
            current = GaussianPosterior(mu, log_sigma, layout)
            t_diag = geometry_diag(mu, current.sigma, geometry)
            g_mu = np.zeros_like(mu)
            g_ls = np.zeros_like(log_sigma)
            data_loss = 0.0
            for _ in range(S):
                if local_reparam:
                    noise = draw_lrt_noise(spec, len(idx), rng)
                    program = local_reparam_program(spec, noise)
                else:
                    eps = rng.standard_normal(mu.size)
                    program = reparam_program(spec, eps)
                f = value_and_grad(program, batch)
                loss, (gm, gl) = sam_step(
                    lambda m: f((m, log_sigma)), mu, config.rho, t_diag,
                    config.flat, direction=lambda g: g[0])
                data_loss += loss / S
                g_mu += gm / S
                g_ls += gl / S
            kl = kl_diag_gaussian(current, prior)
            kl_mu, kl_ls = kl_diag_gaussian_grad(current, prior)
            objective = (lam / n) * data_loss + kl / n
            _check_finite(step, objective)
            mu = mu - lr * ((lam / n) * g_mu + kl_mu / n)
            log_sigma = log_sigma - lr * ((lam / n) * g_ls + kl_ls / n)
            _check_finite(step, objective, mu, log_sigma)
            # Clamp by round-tripping through the posterior.
            log_sigma = GaussianPosterior(mu, log_sigma, layout).log_sigma
            epoch_losses.append(objective)
            step += 1
        if history is not None:
            history.append(float(np.mean(epoch_losses)))
    return GaussianPosterior(mu, log_sigma, layout)


def train_sgld(config, spec, dataset, rng, progress=False, history=None):
    """Stochastic-gradient Langevin dynamics, optionally sharpness-aware.

    The first half of the epochs is burn-in; afterwards a particle is
    collected every ``sgld_collect_every`` epochs.
    """
    _check_dataset(dataset)
    X, y = dataset.features, dataset.labels
    n = len(y)
    lam = resolve_lambda(config, n)
    tau2 = config.prior_tau ** 2
    temperature = (1.0 / n if config.sgld_temperature is None
                   else config.sgld_temperature)
    params = init_params(spec, rng)
    theta, layout = params.values, params.layout
    burn_in = config.epochs // 2

    particles, steps = [], []
    step = 0
    for epoch in _epochs(config, 'sgld', progress):
        lr = learning_rate_at(config, epoch)
        epoch_losses = []
        for idx in iterate_minibatches(n, config.batch_size, rng):
            loss_at = mlp_loss_and_grad(spec, X[idx], y[idx])
            loss, g = sam_step(loss_at, theta, config.rho, None, config.flat)
            g = lam * g
            if config.prior_l2:
                g = g + theta / tau2
            z = rng.standard_normal(theta.size)
            theta = sgld_update(theta, g, lr, temperature, z)
            _check_finite(step, loss, theta)
            epoch_losses.append(loss)
            step += 1
        if history is not None:
            history.append(float(np.mean(epoch_losses)))
        if epoch >= burn_in and (epoch - burn_in) % config.sgld_collect_every == 0:
            particles.append(FlatParams(theta.copy(), layout))
            steps.append(step)
    return ParticleSet(particles, steps)


class SwagStats:
    """Streaming SWAG moments over collected parameter vectors.

    Attributes
    ----------
    count : int
        Number of collected models.

    mean, sq_mean : ndarray
        Running first and second moments.

    deviations : list of ndarray
        Last ``rank`` deviations (collected model minus updated running
        mean), oldest first.
    """
    def __init__(self, layout, rank=20):
        if rank < 0:
            raise ValueError(f'rank must be >= 0, got {rank}')
        size = sum(int(np.prod(slot.shape)) for slot in layout)
        self.layout = tuple(layout)
        self.rank = rank
        self.count = 0
        self.mean = np.zeros(size)
        self.sq_mean = np.zeros(size)
        self.deviations = []

    def collect(self, values):
        values = as_tensor(values)
        n = self.count
        self.mean = self.mean + (values - self.mean) / (n + 1)
        self.sq_mean = self.sq_mean + (values ** 2 - self.sq_mean) / (n + 1)
        self.count = n + 1
        if self.rank > 0:
            self.deviations.append(values - self.mean)
            if len(self.deviations) > self.rank:
                self.deviations.pop(0)

    @property
    def variance(self):
        return np.maximum(self.sq_mean - self.mean ** 2, 0.0)

    def mean_params(self):
        return FlatParams(self.mean, self.layout)


def swag_sample(stats, rng, diag_only=False):
    """Draw one model from the SWAG Gaussian.

    The full sample is the usual half-diagonal, half-low-rank mixture
    ``mean + sqrt(var/2) z1 + D z2 / sqrt(2 (K - 1))`` over the ``K``
    buffered deviations. With fewer than two deviations the diagonal sample
    is returned.
    """
    if stats.count == 0:
        raise ValueError('cannot sample from SWAG statistics with no models')
    z1 = rng.standard_normal(stats.mean.size)
    std = np.sqrt(stats.variance)
    K = len(stats.deviations)
    if diag_only or K < 2:
        values = stats.mean + std * z1
    else:
        D = np.stack(stats.deviations, axis=1)
        z2 = rng.standard_normal(K)
        values = (stats.mean + std * z1 / math.sqrt(2)
                  + (D @ z2) / math.sqrt(2 * (K - 1)))
    return FlatParams(values, stats.layout)


def _run_map(config, spec, dataset, params, rng, keep_prob=1.0, desc='sgd',
             on_epoch_end=None, progress=False, history=None):
    """(Flat-)SGD on the mean loss plus the scaled L2 prior term."""
    X, y = dataset.features, dataset.labels
    n = len(y)
    lam = resolve_lambda(config, n)
    l2 = 0.0
    if config.prior_l2 and lam > 0:
        l2 = keep_prob / (config.prior_tau ** 2 * lam)
    theta, layout = params.values, params.layout

    step = 0
    for epoch in _epochs(config, desc, progress):
        lr = learning_rate_at(config, epoch)
        epoch_losses = []
        for idx in iterate_minibatches(n, config.batch_size, rng):
            masks = draw_dropout_masks(spec, len(idx), keep_prob, rng)
            loss_at = mlp_loss_and_grad(spec, X[idx], y[idx], masks)
            loss, g = sam_step(loss_at, theta, config.rho, None, config.flat)
            objective = loss + 0.5 * l2 * float(theta @ theta)
            theta = theta - lr * (g + l2 * theta)
            _check_finite(step, objective, theta)
            epoch_losses.append(objective)
            step += 1
        if history is not None:
            history.append(float(np.mean(epoch_losses)))
        if on_epoch_end is not None:
            on_epoch_end(epoch, theta)
    return FlatParams(theta, layout)


def train_swag(config, spec, dataset, rng, diag_only=False, progress=False,
               history=None):
    """Run (flat-)SGD and fit SWAG statistics from one snapshot per epoch."""
    _check_dataset(dataset)
    start = swag_start_epoch(config)
    if not 0 <= start < config.epochs:
        raise ValueError(
            f'SWAG collection starts at epoch {start} but training has '
            f'{config.epochs} epochs')
    params = init_params(spec, rng)
    stats = SwagStats(params.layout, 0 if diag_only else config.swag_rank)

    def collect(epoch, theta):
        if epoch >= start:
            stats.collect(theta)

    _run_map(config, spec, dataset, params, rng, desc='swag',
             on_epoch_end=collect, progress=progress, history=history)
    if stats.count == 0:
        raise ValueError('SWAG collected no models')
    return stats


def train_mc_dropout(config, spec, dataset, rng, progress=False, history=None):
    """(Flat-)SGD under a fresh dropout mask per step.

    The mask is fixed within a step, so the ascent and descent gradients see
    the same sub-network.
    """
    _check_dataset(dataset)
    params = init_params(spec, rng)
    return _run_map(config, spec, dataset, params, rng,
                    keep_prob=config.keep_prob, desc='mc-dropout',
                    progress=progress, history=history)


def _train_member(config, spec, dataset, seed, progress):
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    history = []
    params = _run_map(config, spec, dataset, params, rng,
                      desc=f'member (seed {seed})', progress=progress,
                      history=history)
    return params, history


def train_deep_ensemble(config, spec, dataset, progress=False, history=None):
    """Train ``ensemble_size`` independent members.

    Member ``k`` is seeded with ``config.seed + k``; members may run in
    parallel (``config.n_jobs``) and are returned in member order. ``history``
    receives the per-epoch objective averaged over members.
    """
    _check_dataset(dataset)
    seeds = [config.seed + k for k in range(config.ensemble_size)]
    show = progress and config.n_jobs == 1
    f = delayed(_train_member)
    res = Parallel(n_jobs=config.n_jobs)(
        f(config, spec, dataset, seed, show) for seed in seeds)
    members, histories = zip(*res)
    if history is not None:
        history.extend(np.mean(histories, axis=0).tolist())
    return list(members)


def train(config, spec, dataset, progress=False, history=None):
    """Train with the configured method; return its posterior payload.

    Returns
    -------
    GaussianPosterior, ParticleSet, SwagStats, FlatParams or list of FlatParams
        Depending on ``config.method``.
    """
    rng = np.random.default_rng(config.seed)
    method = config.method
    if method in VARIATIONAL_METHODS:
        return train_sgvb(config, spec, dataset, rng,
                          local_reparam=method == 'sgvb-lrt',
                          progress=progress, history=history)
    if method == 'sgld':
        return train_sgld(config, spec, dataset, rng, progress, history)
    if method in {'swag', 'swag-diag'}:
        return train_swag(config, spec, dataset, rng,
                          diag_only=method == 'swag-diag', progress=progress,
                          history=history)
    if method == 'mc-dropout':
        return train_mc_dropout(config, spec, dataset, rng, progress, history)
    if method == 'deep-ensemble':
        return train_deep_ensemble(config, spec, dataset, progress, history)
    raise ValueError(
        f'Unrecognized method "{method}". Valid methods: {VALID_METHODS}.')
