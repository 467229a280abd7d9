"""Dense MLPs over flat parameter vectors and their Gaussian posteriors.

Parameters of an MLP live in one flat vector. The layout maps consecutive
slices of that vector to the weight matrix and bias of each layer, in layer
order (``W0, b0, W1, b1, ...``). Every stochastic forward pass takes its RNG
explicitly.
"""
from collections import namedtuple

import numpy as np

from diffcore import Tape, as_tensor, value_and_grad


VALID_ACTIVATIONS = {'relu', 'tanh'}

# Range log(sigma) is clamped to.
LOG_SIGMA_MIN = -20.0
LOG_SIGMA_MAX = 3.0


class LayoutError(ValueError):
    pass


MlpSpec = namedtuple('MlpSpec', ['widths', 'activations'])

LayerSlot = namedtuple('LayerSlot', ['name', 'shape', 'offset'])

PriorSpec = namedtuple('PriorSpec', ['tau'])


def make_mlp_spec(widths, activation='relu'):
    """Return a validated ``MlpSpec``.

    Parameters
    ----------
    widths : iterable of int
        Layer widths ``(input, hidden..., output)``.

    activation : str or iterable of str, optional
        Activation of every hidden layer, or one per hidden layer.
        (Default: 'relu')
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise LayoutError(
            f'an MLP needs at least input and output widths, got {widths}')
    if min(widths) < 1:
        raise LayoutError(f'all widths must be >= 1, got {widths}')
    n_hidden = len(widths) - 2
    if isinstance(activation, str):
        activations = (activation,) * n_hidden
    else:
        activations = tuple(activation)
    if len(activations) != n_hidden:
        raise LayoutError(
            f'{len(activations)} activations for {n_hidden} hidden layers')
    for act in activations:
        if act not in VALID_ACTIVATIONS:
            raise LayoutError(
                f'Unrecognized activation "{act}". Valid activations: '
                f'{VALID_ACTIVATIONS}.')
    return MlpSpec(widths, activations)


def parse_mlp_spec(text, activation='relu'):
    """Parse an architecture string such as ``2-16-16-2``."""
    try:
        widths = [int(w) for w in text.split('-')]
    except ValueError:
        raise LayoutError(f'malformed architecture "{text}"')
    return make_mlp_spec(widths, activation)


def make_prior(tau=1.0):
    """Zero-mean isotropic Gaussian prior N(0, tau^2 I)."""
    if not tau > 0:
        raise ValueError(f'prior std must be positive, got {tau}')
    return PriorSpec(float(tau))


def mlp_layout(spec):
    """Return the ``LayerSlot`` records of an MLP, in vector order."""
    slots = []
    offset = 0
    for i, (d_in, d_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        slots.append(LayerSlot(f'W{i}', (d_in, d_out), offset))
        offset += d_in * d_out
        slots.append(LayerSlot(f'b{i}', (d_out,), offset))
        offset += d_out
    return tuple(slots)


def layout_size(layout):
    return sum(int(np.prod(slot.shape)) for slot in layout)


class FlatParams:
    """Flat real parameter vector plus the layer layout it follows."""
    def __init__(self, values, layout):
        values = as_tensor(values)
        layout = tuple(layout)
        if values.ndim != 1 or values.size != layout_size(layout):
            raise LayoutError(
                f'{values.size} values do not fit a layout of '
                f'{layout_size(layout)} parameters')
        self.values = values
        self._layout = layout

    @property
    def layout(self):
        return self._layout

    @property
    def size(self):
        return self.values.size

    def arrays(self):
        """Return ``{name: array}`` views into the vector."""
        out = {}
        for slot in self._layout:
            size = int(np.prod(slot.shape))
            out[slot.name] = self.values[
                slot.offset:slot.offset + size].reshape(slot.shape)
        return out

    def with_values(self, values):
        return FlatParams(values, self._layout)

    def __repr__(self):
        return f'FlatParams(size={self.size})'


def _check_layout(spec, layout):
    if tuple(layout) != mlp_layout(spec):
        raise LayoutError(
            f'parameter layout does not match architecture {spec.widths}')


def init_params(spec, rng):
    """Glorot-uniform weights, zero biases."""
    layout = mlp_layout(spec)
    values = np.zeros(layout_size(layout))
    for slot in layout:
        if slot.name.startswith('W'):
            fan_in, fan_out = slot.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            size = fan_in * fan_out
            values[slot.offset:slot.offset + size] = rng.uniform(
                -limit, limit, size=size)
    return FlatParams(values, layout)


def _activate(tape, spec, i, h):
    if spec.activations[i] == 'relu':
        return tape.relu(h)
    return tape.tanh(h)


def mlp_logits(tape, spec, params_node, x_node, masks=None):
    """Record a deterministic forward pass; return the logits node.

    ``masks``, if given, holds one (batch, width) multiplier per hidden layer
    and is applied after the activation.
    """
    layout = mlp_layout(spec)
    n_layers = len(spec.widths) - 1
    h = x_node
    for i in range(n_layers):
        w_slot, b_slot = layout[2 * i], layout[2 * i + 1]
        W = tape.view(params_node, w_slot.offset, w_slot.shape)
        b = tape.view(params_node, b_slot.offset, b_slot.shape)
        h = tape.add_bias(tape.matmul(h, W), b)
        if i < n_layers - 1:
            h = _activate(tape, spec, i, h)
            if masks is not None:
                h = tape.mul(h, tape.constant(masks[i]))
    return h


def _cross_entropy(tape, logits, labels):
    return tape.reduce_mean(tape.softmax_cross_entropy(logits, labels))


def mlp_program(spec, masks=None):
    """Tape program for the mean cross-entropy of a deterministic MLP."""
    def program(tape, params_node, batch):
        X, y = batch
        logits = mlp_logits(tape, spec, params_node, tape.constant(X), masks)
        return _cross_entropy(tape, logits, y)
    return program


def mlp_loss_and_grad(spec, X, y, masks=None):
    """Return ``f(values) -> (mean cross-entropy, gradient)`` on ``(X, y)``."""
    return value_and_grad(mlp_program(spec, masks), (X, y))


def mlp_forward(spec, params, X, masks=None):
    """Logits of the MLP at ``params`` for a batch of shape (n, input width).

    Parameters
    ----------
    spec : MlpSpec
        Architecture.

    params : FlatParams
        Parameters; their layout must match ``spec``.

    X : ndarray, (n, widths[0])
        Batch of inputs.

    masks : list of ndarray, optional
        Hidden-layer multipliers (see ``mlp_logits``).

    Returns
    -------
    ndarray, (n, widths[-1])
        Raw logits.
    """
    _check_layout(spec, params.layout)
    tape = Tape()
    p = tape.leaf(params.values)
    logits = mlp_logits(tape, spec, p, tape.constant(X), masks)
    return tape.value(logits)


class GaussianPosterior:
    """Fully factorised Gaussian over a flat parameter vector.

    ``sigma = exp(log_sigma)`` with ``log_sigma`` clamped to
    ``[LOG_SIGMA_MIN, LOG_SIGMA_MAX]``.
    """
    def __init__(self, mu, log_sigma, layout):
        mu = as_tensor(mu).copy()
        log_sigma = np.clip(as_tensor(log_sigma), LOG_SIGMA_MIN, LOG_SIGMA_MAX)
        if mu.shape != log_sigma.shape:
            raise LayoutError(
                f'mu has {mu.size} entries but log_sigma has {log_sigma.size}')
        FlatParams(mu, layout)  # Validates the layout.
        self.mu = mu
        self.log_sigma = log_sigma
        self.layout = tuple(layout)

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    @property
    def size(self):
        return self.mu.size

    def mean_params(self):
        return FlatParams(self.mu, self.layout)


def init_posterior(spec, rng, log_sigma_init=-5.0):
    params = init_params(spec, rng)
    return GaussianPosterior(
        params.values, np.full(params.size, float(log_sigma_init)),
        params.layout)


def sample_weights_reparam(posterior, rng):
    """Draw ``mu + sigma * eps``; return the sample and ``eps``."""
    eps = rng.standard_normal(posterior.size)
    values = posterior.mu + posterior.sigma * eps
    return FlatParams(values, posterior.layout), eps


def reparam_program(spec, eps):
    """Tape program over ``(mu, log_sigma)`` with the weight noise fixed."""
    def program(tape, leaves, batch):
        mu, log_sigma = leaves
        X, y = batch
        noise = tape.mul(tape.exp(log_sigma), tape.constant(eps))
        w = tape.add(mu, noise)
        logits = mlp_logits(tape, spec, w, tape.constant(X))
        return _cross_entropy(tape, logits, y)
    return program


def draw_lrt_noise(spec, n, rng):
    """Standard-normal pre-activation noise, one (n, width) array per layer."""
    return [rng.standard_normal((n, width)) for width in spec.widths[1:]]


def lrt_logits(tape, spec, mu, log_sigma, x_node, noise):
    """Record a local-reparameterisation forward pass.

    Each layer's pre-activation is drawn from its induced Gaussian:
    mean ``x mu_W + mu_b``, variance ``(x*x)(sigma_W^2) + sigma_b^2``.
    """
    layout = mlp_layout(spec)
    n_layers = len(spec.widths) - 1
    h = x_node
    for i in range(n_layers):
        w_slot, b_slot = layout[2 * i], layout[2 * i + 1]
        mu_W = tape.view(mu, w_slot.offset, w_slot.shape)
        mu_b = tape.view(mu, b_slot.offset, b_slot.shape)
        sigma_W = tape.exp(tape.view(log_sigma, w_slot.offset, w_slot.shape))
        sigma_b = tape.exp(tape.view(log_sigma, b_slot.offset, b_slot.shape))
        mean = tape.add_bias(tape.matmul(h, mu_W), mu_b)
        var = tape.add_bias(
            tape.matmul(tape.mul(h, h), tape.mul(sigma_W, sigma_W)),
            tape.mul(sigma_b, sigma_b))
        h = tape.add(mean, tape.mul(tape.sqrt(var), tape.constant(noise[i])))
        if i < n_layers - 1:
            h = _activate(tape, spec, i, h)
    return h


def local_reparam_program(spec, noise):
    def program(tape, leaves, batch):
        mu, log_sigma = leaves
        X, y = batch
        logits = lrt_logits(
            tape, spec, mu, log_sigma, tape.constant(X), noise)
        return _cross_entropy(tape, logits, y)
    return program


def local_reparam_forward(posterior, spec, X, rng):
    """Logits with pre-activations sampled by local reparameterisation."""
    _check_layout(spec, posterior.layout)
    noise = draw_lrt_noise(spec, len(X), rng)
    tape = Tape()
    mu = tape.leaf(posterior.mu)
    log_sigma = tape.leaf(posterior.log_sigma)
    logits = lrt_logits(tape, spec, mu, log_sigma, tape.constant(X), noise)
    return tape.value(logits)


def check_keep_prob(keep_prob):
    if not 0 < keep_prob <= 1:
        raise ValueError(f'keep_prob must lie in (0, 1], got {keep_prob}')


def draw_dropout_masks(spec, n, keep_prob, rng):
    """Inverted-dropout multipliers for each hidden layer.

    Returns None when ``keep_prob == 1``; no random numbers are consumed then.
    """
    check_keep_prob(keep_prob)
    if keep_prob == 1:
        return None
    return [(rng.random((n, width)) < keep_prob) / keep_prob
            for width in spec.widths[1:-1]]


def dropout_forward(spec, params, X, keep_prob, rng):
    """Logits with a fresh Bernoulli(keep_prob) mask on every hidden unit."""
    masks = draw_dropout_masks(spec, len(X), keep_prob, rng)
    return mlp_forward(spec, params, X, masks)


def kl_diag_gaussian(posterior, prior):
    """KL(N(mu, diag sigma^2) || N(0, tau^2 I))."""
    tau2 = prior.tau ** 2
    sigma2 = np.exp(2 * posterior.log_sigma)
    log_ratio = posterior.log_sigma - np.log(prior.tau)
    return 0.5 * float(np.sum(
        (sigma2 + posterior.mu ** 2) / tau2 - 1.0 - 2.0 * log_ratio))


def kl_diag_gaussian_grad(posterior, prior):
    """Gradient of ``kl_diag_gaussian`` w.r.t. ``(mu, log_sigma)``."""
    tau2 = prior.tau ** 2
    return posterior.mu / tau2, np.exp(2 * posterior.log_sigma) / tau2 - 1.0
