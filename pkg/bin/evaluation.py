"""Ensemble prediction and evaluation metrics for trained posteriors.

Metrics follow the usual conventions:

- accuracy  --  argmax of the ensemble probabilities, ties going to the lowest
  class index
- NLL  --  mean ``-log p[label]`` with probabilities floored at 1e-12
- ECE  --  equal-width, right-closed confidence bins over [0, 1]

Hessian spectra are estimated by power iteration on finite-difference
Hessian-vector products with Gram-Schmidt deflation.
"""
from collections import namedtuple
import sys

import numpy as np
import pandas as pd
from scipy.special import softmax

from diffcore import as_tensor, hessian_vector_product
from flatness import sharpness
from models import (GaussianPosterior, draw_dropout_masks, mlp_forward,
                    mlp_loss_and_grad, sample_weights_reparam)
from trainers import ParticleSet, SwagStats, swag_sample


PROB_FLOOR = 1e-12
RELIABILITY_COLUMNS = ['bin_lo', 'bin_hi', 'count', 'mean_conf', 'accuracy',
                       'gap']


def warning(msg):
    print(f'WARNING: {msg}', file=sys.stderr)


EvalReport = namedtuple(
    'EvalReport',
    ['accuracy', 'nll', 'ece', 'reliability', 'n_ensemble_samples',
     'sharpness', 'eigenvalues', 'eig_ratio'],
    defaults=(None, None, None))

# One model drawn from a posterior: parameters plus optional dropout masks.
Model = namedtuple('Model', ['params', 'masks'])


class PosteriorSampler:
    """Draws models from a trained posterior payload.

    Parameters
    ----------
    method : str
        Training method the payload came from.

    payload : object
        ``GaussianPosterior``, ``SwagStats``, ``ParticleSet``, ``FlatParams``
        (MC-dropout) or list of ``FlatParams`` (deep ensemble).

    spec : MlpSpec
        Architecture.

    keep_prob : float, optional
        Keep probability of MC-dropout masks.
        (Default: 0.9)

    swa : bool, optional
        For SWAG payloads, always return the running mean (SWA) instead of
        sampling.
        (Default: False)
    """
    def __init__(self, method, payload, spec, keep_prob=0.9, swa=False):
        self.method = method
        self.payload = payload
        self.spec = spec
        self.keep_prob = keep_prob
        self.swa = swa

    @property
    def n_models(self):
        """Number of distinct models, or None if unlimited."""
        if self.method == 'deep-ensemble':
            return len(self.payload)
        if self.method == 'sgld':
            return len(self.payload.particles)
        if self.swa:
            return 1
        return None

    def n_draws(self, n_samples):
        if n_samples < 1:
            raise ValueError(f'n_samples must be >= 1, got {n_samples}')
        if self.n_models is None:
            return n_samples
        return min(n_samples, self.n_models)

    def _particle_index(self, i, n_draws):
        # Evenly spaced over the particle set, latest particle included.
        P = len(self.payload.particles)
        inds = np.round(np.linspace(P - 1, 0, n_draws)).astype(int)[::-1]
        return int(inds[i])

    def draw(self, i, n_rows, rng, n_draws=1):
        """Return the ``i``-th of ``n_draws`` models for ``n_rows`` inputs."""
        payload = self.payload
        if self.method in {'sgvb', 'sgvb-lrt'}:
            params, _ = sample_weights_reparam(payload, rng)
            return Model(params, None)
        if self.method in {'swag', 'swag-diag'}:
            if self.swa:
                return Model(payload.mean_params(), None)
            return Model(
                swag_sample(payload, rng, self.method == 'swag-diag'), None)
        if self.method == 'sgld':
            return Model(
                payload.particles[self._particle_index(i, n_draws)], None)
        if self.method == 'mc-dropout':
            masks = draw_dropout_masks(self.spec, n_rows, self.keep_prob, rng)
            return Model(payload, masks)
        if self.method == 'deep-ensemble':
            return Model(payload[i], None)
        raise ValueError(f'Unrecognized method "{self.method}".')

    def probs(self, i, X, rng, n_draws=1):
        model = self.draw(i, len(X), rng, n_draws)
        logits = mlp_forward(self.spec, model.params, X, model.masks)
        return softmax(logits, axis=1)


def check_payload(method, payload):
    """Raise ``TypeError`` if ``payload`` is not what ``method`` produces."""
    expected = {
        'sgvb': GaussianPosterior,
        'sgvb-lrt': GaussianPosterior,
        'swag': SwagStats,
        'swag-diag': SwagStats,
        'sgld': ParticleSet,
        'deep-ensemble': list}
    kind = expected.get(method)
    if kind is not None and not isinstance(payload, kind):
        raise TypeError(
            f'payload of type {type(payload).__name__} does not match '
            f'method "{method}"')


def ensemble_predict(sampler, X, n_samples, rng):
    """Average the softmax probabilities of models drawn from ``sampler``.

    Parameters
    ----------
    sampler : PosteriorSampler
        Anything with ``n_draws(n_samples)`` and ``probs(i, X, rng, n_draws)``.

    X : ndarray, (n, d)
        Inputs.

    n_samples : int
        Requested number of models.

    rng : numpy.random.Generator
        Source of sampling noise.

    Returns
    -------
    ndarray, (n, n_classes)
        Mean predictive probabilities, accumulated in draw order.
    """
    if len(X) == 0:
        raise ValueError('cannot predict on an empty dataset')
    n_draws = sampler.n_draws(n_samples)
    total = None
    for i in range(n_draws):
        probs = sampler.probs(i, X, rng, n_draws)
        total = probs if total is None else total + probs
    return total / n_draws


def accuracy(probs, labels):
    preds = np.argmax(probs, axis=1)
    return float(np.mean(preds == np.asarray(labels)))


def nll(probs, labels):
    probs = as_tensor(probs)
    p = probs[np.arange(len(probs)), np.asarray(labels)]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def ece(probs, labels, n_bins=20):
    """Expected calibration error and its reliability table.

    Parameters
    ----------
    probs : ndarray, (n, n_classes)
        Predictive probabilities.

    labels : ndarray, (n,)
        True labels.

    n_bins : int, optional
        Number of equal-width confidence bins; confidence 1.0 falls in the
        last bin.
        (Default: 20)

    Returns
    -------
    ece : float
        ``sum_b (count_b / n) |acc_b - conf_b|``.

    table : pandas.DataFrame
        One row per bin with columns ``RELIABILITY_COLUMNS``; empty bins have
        zero mean confidence, accuracy and gap.
    """
    if n_bins < 1:
        raise ValueError(f'n_bins must be >= 1, got {n_bins}')
    probs = as_tensor(probs)
    conf = probs.max(axis=1)
    correct = (np.argmax(probs, axis=1) == np.asarray(labels)).astype(float)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    bins = np.digitize(conf, edges[1:-1], right=True)
    counts = np.bincount(bins, minlength=n_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(bins, weights=correct, minlength=n_bins)
    nonempty = counts > 0
    mean_conf = np.zeros(n_bins)
    bin_acc = np.zeros(n_bins)
    mean_conf[nonempty] = conf_sum[nonempty] / counts[nonempty]
    bin_acc[nonempty] = acc_sum[nonempty] / counts[nonempty]
    gap = np.abs(bin_acc - mean_conf)
    value = float(np.sum(counts / len(conf) * gap))
    table = pd.DataFrame({
        'bin_lo': edges[:-1],
        'bin_hi': edges[1:],
        'count': counts,
        'mean_conf': mean_conf,
        'accuracy': bin_acc,
        'gap': gap})
    return value, table[RELIABILITY_COLUMNS]


def write_reliability_csv(table, path):
    table.to_csv(path, index=False, float_format='%.12g')


def evaluate(sampler, X, y, n_samples, rng, n_bins=20):
    """Ensemble-predict and score; returns an ``EvalReport``."""
    probs = ensemble_predict(sampler, X, n_samples, rng)
    value, table = ece(probs, y, n_bins)
    return EvalReport(accuracy(probs, y), nll(probs, y), value, table,
                      sampler.n_draws(n_samples))


def model_sharpness(spec, model, X, y, rho, ascent_steps=10):
    """Sharpness of one drawn model on ``(X, y)``, masks held fixed."""
    loss_and_grad = mlp_loss_and_grad(spec, X, y, model.masks)
    return sharpness(loss_and_grad, model.params.values, rho, ascent_steps)


def sampled_sharpness(sampler, X, y, rho, n_models=5, ascent_steps=10,
                      rng=None):
    """Sharpness of each of ``n_models`` drawn models, in draw order."""
    rng = np.random.default_rng(0) if rng is None else rng
    n_draws = sampler.n_draws(n_models)
    values = []
    for i in range(n_draws):
        model = sampler.draw(i, len(X), rng, n_draws)
        values.append(
            model_sharpness(sampler.spec, model, X, y, rho, ascent_steps))
    return values


def center_models(method, payload):
    """Models at which the Hessian spectrum is reported.

    The posterior mean for SGVB, the SWA mean for SWAG, the last SGLD
    particle, the MC-dropout weights and every deep-ensemble member.
    """
    if method in {'sgvb', 'sgvb-lrt'}:
        return [payload.mean_params()]
    if method in {'swag', 'swag-diag'}:
        return [payload.mean_params()]
    if method == 'sgld':
        return [payload.particles[-1]]
    if method == 'mc-dropout':
        return [payload]
    if method == 'deep-ensemble':
        return list(payload)
    raise ValueError(f'Unrecognized method "{method}".')


def _deflate(v, basis):
    for u in basis:
        v = v - (u @ v) * u
    return v


def top_eigenvalues(grad_fn, params, k_eigs=5, iters=100, rng=None,
                    tol=1e-6):
    """Dominant Hessian eigenvalues by deflated power iteration.

    Power iteration finds eigenvalues in order of magnitude, so with an
    indefinite Hessian a large negative eigenvalue is returned ahead of
    smaller positive ones. The result is then sorted by signed value.

    Parameters
    ----------
    grad_fn : callable
        ``grad_fn(params) -> (loss, grad)``.

    params : ndarray
        Point at which the Hessian is taken.

    k_eigs : int, optional
        Number of eigenvalues.
        (Default: 5)

    iters : int, optional
        Maximum power iterations per eigenvalue.
        (Default: 100)

    rng : numpy.random.Generator, optional
        Source of starting vectors.

    tol : float, optional
        Stop once the Rayleigh quotient changes by less than ``tol``
        relative to its previous value.
        (Default: 1e-6)

    Returns
    -------
    eigenvalues : ndarray, (k_eigs,)
        The ``k_eigs`` largest-magnitude estimates, in descending signed
        order.

    ratio : float
        ``eigenvalues[0] / eigenvalues[-1]``.
    """
    params = as_tensor(params)
    if k_eigs < 1:
        raise ValueError(f'k_eigs must be >= 1, got {k_eigs}')
    if k_eigs > params.size:
        raise ValueError(
            f'cannot estimate {k_eigs} eigenvalues of a {params.size}x'
            f'{params.size} Hessian')
    if iters < 10:
        raise ValueError(f'iters must be >= 10, got {iters}')
    rng = np.random.default_rng(0) if rng is None else rng

    basis = []
    eigenvalues = []
    for j in range(k_eigs):
        v = _deflate(rng.standard_normal(params.size), basis)
        v /= np.linalg.norm(v)
        value = None
        for _ in range(iters):
            hv = _deflate(hessian_vector_product(grad_fn, params, v), basis)
            new_value = float(v @ hv)
            norm = np.linalg.norm(hv)
            if norm == 0:
                value = new_value
                break
            v = hv / norm
            converged = (value is not None and
                         abs(new_value - value) < tol * abs(value))
            value = new_value
            if converged:
                break
        else:
            warning(f'power iteration for eigenvalue {j + 1} did not '
                    f'converge in {iters} iterations')
        # Re-orthogonalise against earlier vectors before storing.
        v = _deflate(v, basis)
        basis.append(v / np.linalg.norm(v))
        eigenvalues.append(value)
    eigenvalues = np.sort(np.array(eigenvalues))[::-1]
    last = eigenvalues[-1]
    ratio = float(eigenvalues[0] / last) if last != 0 else float('inf')
    return eigenvalues, ratio
