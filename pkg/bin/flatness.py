"""Sharpness-aware perturbations, the sharpness metric, Gibbs posteriors on
finite grids and the numeric PAC-Bayes bound evaluator.

Everything here is a pure function of its arguments.
"""
from collections import namedtuple
import math

import numpy as np
from scipy.special import logsumexp

from diffcore import as_tensor


GEOMETRY_KINDS = ('identity', 'mu-over-sigma')

# Floor on |mu|/sigma so no coordinate is frozen out of the perturbation.
GEOMETRY_FLOOR = 1e-12

# Gradients with a smaller Euclidean norm are treated as zero.
ZERO_GRAD_NORM = 1e-12

# The grid oracle is only run on this many points or fewer.
MAX_ORACLE_POINTS = 4


class GridError(ValueError):
    pass


class AscentError(RuntimeError):
    """Non-finite loss during sharpness ascent.

    ``step`` is 0 for the starting point and ``i`` for the i-th ascent step.
    """
    def __init__(self, step, msg):
        self.step = step
        super(AscentError, self).__init__(msg)


GibbsGrid = namedtuple('GibbsGrid', ['points', 'loss', 'prior_mass'])

BoundInputs = namedtuple(
    'BoundInputs', ['k', 'n', 'R', 'rho', 'delta', 'omega'],
    defaults=(0.0,))

CoveringBound = namedtuple('CoveringBound', ['log_value', 'value', 'overflow'])

BoundComponents = namedtuple(
    'BoundComponents',
    ['log_covering', 'sigma', 'inv_sqrt_n', 'omega_term', 'sqrt_term',
     'total'])


def geometry_diag(mu, sigma, kind='identity'):
    """Diagonal of the perturbation geometry T.

    ``identity`` gives the standard sharpness-aware update; ``mu-over-sigma``
    scales each coordinate by ``|mu_j| / sigma_j`` (floored at 1e-12).
    """
    mu = as_tensor(mu)
    if kind == 'identity':
        return np.ones_like(mu)
    if kind == 'mu-over-sigma':
        sigma = as_tensor(sigma)
        if np.any(sigma <= 0):
            raise ValueError('sigma must be positive everywhere')
        return np.maximum(np.abs(mu) / sigma, GEOMETRY_FLOOR)
    raise ValueError(
        f'Unrecognized geometry "{kind}". Valid geometries: {GEOMETRY_KINDS}.')


def sam_perturb(mu, grad, rho, t_diag=None):
    """One-step ascent ``mu + rho * T g / sqrt(g^T T g)``.

    Parameters
    ----------
    mu : ndarray
        Current point.

    grad : ndarray
        Gradient at ``mu``.

    rho : float
        Radius; the step has T-norm ``sqrt(v^T T^-1 v)`` exactly ``rho``.

    t_diag : ndarray, optional
        Diagonal of T. Identity if omitted.

    Returns
    -------
    ndarray
        Perturbed point. Equals ``mu`` when ``rho == 0`` or the gradient
        vanishes.
    """
    if rho < 0:
        raise ValueError(f'rho must be non-negative, got {rho}')
    mu, g = as_tensor(mu), as_tensor(grad)
    if mu.shape != g.shape:
        raise ValueError(
            f'gradient of shape {g.shape} for a point of shape {mu.shape}')
    if rho == 0 or np.linalg.norm(g) < ZERO_GRAD_NORM:
        return mu.copy()
    t = np.ones_like(g) if t_diag is None else as_tensor(t_diag)
    tg = t * g
    return mu + rho * tg / np.sqrt(np.dot(g, tg))


def sharpness(grad_fn, params, rho, ascent_steps=10):
    """Estimate ``max_{|eps| <= rho} L(theta + eps) - L(theta)``.

    Runs ``ascent_steps`` normalized-gradient steps of length ``rho``, each
    followed by projection onto the ball, and keeps the largest loss seen
    (``theta`` itself included, so the result is never negative). A vanishing
    gradient is replaced by the direction ``ones / sqrt(k)``.

    Parameters
    ----------
    grad_fn : callable
        ``grad_fn(params) -> (loss, grad)``.

    params : ndarray
        Point at which sharpness is measured.

    rho : float
        Radius of the ball.

    ascent_steps : int, optional
        Number of ascent steps.
        (Default: 10)
    """
    if not rho > 0:
        raise ValueError(f'rho must be positive, got {rho}')
    if ascent_steps < 1:
        raise ValueError(f'ascent_steps must be >= 1, got {ascent_steps}')
    theta = as_tensor(params)
    base, g = grad_fn(theta)
    if not np.isfinite(base):
        raise AscentError(0, 'non-finite loss at the starting point')
    fallback = np.ones_like(theta) / np.sqrt(theta.size)
    best = base
    eps = np.zeros_like(theta)
    for step in range(ascent_steps):
        norm = np.linalg.norm(g)
        direction = fallback if norm < ZERO_GRAD_NORM else g / norm
        eps = eps + rho * direction
        eps_norm = np.linalg.norm(eps)
        if eps_norm > rho:
            eps = eps * (rho / eps_norm)
        loss, g = grad_fn(theta + eps)
        if not np.isfinite(loss):
            raise AscentError(
                step + 1, f'non-finite loss at ascent step {step + 1}')
        best = max(best, loss)
    return best - base


def make_gibbs_grid(points, loss, prior_mass=None, normalize=False):
    """Validated ``GibbsGrid``; a missing prior is uniform."""
    loss = as_tensor(loss)
    points = list(points)
    if loss.ndim != 1 or len(points) != loss.size or loss.size == 0:
        raise GridError(
            f'{len(points)} points but {loss.size} losses')
    if not np.all(np.isfinite(loss)):
        raise GridError('grid losses must be finite')
    if prior_mass is None:
        prior_mass = np.full(loss.size, 1.0 / loss.size)
    prior_mass = as_tensor(prior_mass)
    if prior_mass.shape != loss.shape or np.any(prior_mass < 0):
        raise GridError('prior mass must be one non-negative value per point')
    if normalize:
        total = prior_mass.sum()
        if total <= 0:
            raise GridError('all prior mass is zero')
        prior_mass = prior_mass / total
    if abs(prior_mass.sum() - 1.0) > 1e-12:
        raise GridError(
            f'prior mass sums to {prior_mass.sum():.15g}, expected 1')
    return GibbsGrid(points, loss, prior_mass)


def gibbs_posterior_grid(grid, lam):
    """Closed-form minimiser ``q_i ∝ exp(-lam * L_i) p_i`` over the grid."""
    if lam < 0:
        raise ValueError(f'lambda must be non-negative, got {lam}')
    p = as_tensor(grid.prior_mass)
    if not np.any(p > 0):
        raise GridError('all prior mass is zero')
    with np.errstate(divide='ignore'):
        log_p = np.log(p)
    logits = -lam * as_tensor(grid.loss) + log_p
    return np.exp(logits - logsumexp(logits))


def _mass_cost(q, loss, p, lam):
    """Per-point objective ``lam*q*L + q*log(q/p)`` with ``0 log 0 = 0``."""
    q = as_tensor(q)
    cost = lam * q * loss
    positive = q > 0
    if p > 0:
        cost[positive] += q[positive] * np.log(q[positive] / p)
    else:
        cost[positive] = np.inf
    return cost


def gibbs_objective(q, grid, lam):
    """``lam * sum_i q_i L_i + KL(q || p)``."""
    q = as_tensor(q)
    return float(sum(
        _mass_cost(q[i:i + 1], grid.loss[i], grid.prior_mass[i], lam)[0]
        for i in range(q.size)))


def gibbs_oracle(grid, lam, resolution=1e-3):
    """Minimise the Gibbs objective over the simplex lattice of step
    ``resolution``.

    The objective is separable, so the search over every lattice point is
    carried out exactly by dynamic programming over the points (min-plus
    convolution of the per-point costs) instead of explicit enumeration.
    Ties go to the first minimiser found.

    Parameters
    ----------
    grid : GibbsGrid
        At most ``MAX_ORACLE_POINTS`` points.

    lam : float
        Inverse temperature.

    resolution : float, optional
        Lattice step; ``1/resolution`` is rounded to the nearest integer.
        (Default: 1e-3)

    Returns
    -------
    ndarray
        Lattice distribution minimising the objective.
    """
    k = len(grid.loss)
    if k > MAX_ORACLE_POINTS:
        raise GridError(
            f'grid oracle supports at most {MAX_ORACLE_POINTS} points, got {k}')
    if not 0 < resolution <= 1:
        raise ValueError(f'resolution must lie in (0, 1], got {resolution}')
    if lam < 0:
        raise ValueError(f'lambda must be non-negative, got {lam}')
    M = max(1, int(round(1.0 / resolution)))
    levels = np.arange(M + 1) / M
    costs = [_mass_cost(levels, grid.loss[i], grid.prior_mass[i], lam)
             for i in range(k)]

    # best[t]: lowest cost of spreading t units over the points seen so far.
    best = costs[0]
    choices = []
    t = np.arange(M + 1)[:, None]
    m = np.arange(M + 1)[None, :]
    feasible = m <= t
    for cost in costs[1:]:
        prev = np.where(feasible, best[np.clip(t - m, 0, M)], np.inf)
        total = prev + cost[None, :]
        arg = np.argmin(total, axis=1)
        choices.append(arg)
        best = total[np.arange(M + 1), arg]
    if not np.isfinite(best[M]):
        raise GridError('all prior mass is zero')

    units = np.zeros(k, dtype=int)
    remaining = M
    for i in range(k - 1, 0, -1):
        units[i] = choices[i - 1][remaining]
        remaining -= units[i]
    units[0] = remaining
    return units / M


def total_variation(p, q):
    return 0.5 * float(np.abs(as_tensor(p) - as_tensor(q)).sum())


def sharpness_aware_grid(grid, coords, rho):
    """Replace each loss by its max over grid points within ``rho``.

    The closed form applied to this grid is the sharpness-aware Gibbs
    posterior restricted to the grid.
    """
    coords = as_tensor(coords)
    if coords.ndim == 1:
        coords = coords[:, None]
    if len(coords) != len(grid.loss):
        raise GridError(
            f'{len(coords)} coordinate rows for {len(grid.loss)} points')
    if rho < 0:
        raise ValueError(f'rho must be non-negative, got {rho}')
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    near = dist <= rho + 1e-12
    loss = as_tensor(grid.loss)
    sharpened = np.array([loss[row].max() for row in near])
    return GibbsGrid(grid.points, sharpened, grid.prior_mass)


def make_bound_inputs(k, n, R, rho, delta, omega=0.0):
    if k < 1 or n < 1:
        raise ValueError(f'k and n must be >= 1, got k={k}, n={n}')
    if not (R > 0 and rho > 0):
        raise ValueError(f'R and rho must be positive, got R={R}, rho={rho}')
    if not 0 < delta <= 1:
        raise ValueError(f'delta must lie in (0, 1], got {delta}')
    if omega < 0:
        raise ValueError(f'omega must be non-negative, got {omega}')
    return BoundInputs(int(k), int(n), float(R), float(rho), float(delta),
                       float(omega))


def covering_number_bound(R, k, eps):
    """Upper bound ``(2 R sqrt(k) / eps)^k`` on the covering number.

    Returns
    -------
    CoveringBound
        ``log_value`` always; ``value`` is None and ``overflow`` True when the
        linear value is not representable as a double.
    """
    if not (R > 0 and k > 0 and eps > 0):
        raise ValueError(
            f'R, k and eps must be positive, got R={R}, k={k}, eps={eps}')
    log_value = k * (math.log(2 * R / eps) + 0.5 * math.log(k))
    if log_value > math.log(np.finfo(np.float64).max):
        return CoveringBound(log_value, None, True)
    # Factored so that even k gives exact integers, e.g. R=1, k=2, eps=1 -> 8.
    value = (2 * R / eps) ** k * k ** (k / 2)
    if not (math.isfinite(value) and value > 0):
        value = math.exp(log_value)
    return CoveringBound(log_value, value, False)


def sigma_from_log_cover(rho, k, log_N, n):
    """``sigma_from_rho`` with the covering number given as ``log N``."""
    log_term = 2 * log_N + math.log(n)
    return rho / (math.sqrt(k) * (1 + math.sqrt(log_term / k)))


def sigma_from_rho(rho, k, N, n):
    """``rho / (sqrt(k) (1 + sqrt(log(N^2 n) / k)))``."""
    if not (rho > 0 and k > 0):
        raise ValueError(f'rho and k must be positive, got rho={rho}, k={k}')
    if N < 1 or n < 1:
        raise ValueError(f'N and n must be >= 1, got N={N}, n={n}')
    return sigma_from_log_cover(rho, k, math.log(N), n)


def _sqrt_term(inputs):
    k, n, R, rho, delta = (inputs.k, inputs.n, inputs.R, inputs.rho,
                           inputs.delta)
    inner = 1 + 2 * math.log(2 * R * math.sqrt(k)) + (2 / k) * math.log(n)
    arg = 1 + (2 * R ** 2 / rho ** 2) * inner
    if arg <= 0:
        raise ValueError(
            f'bound undefined for R={R}, k={k}, n={n}: log argument {arg:.6g}')
    complexity = k * (1 + math.log(arg)) + 2 * math.log(n / delta)
    return math.sqrt(complexity / (4 * (n - 1)))


def pac_bayes_bound_term(inputs):
    """Residual ``1/sqrt(n) + 2 omega + sqrt(...)`` of the bound.

    ``omega`` (the modulus-of-continuity contribution) is a caller-supplied
    constant, 0 by default. All logarithms are natural.
    """
    if inputs.n < 2:
        raise ValueError(f'the bound needs n >= 2, got {inputs.n}')
    return (1 / math.sqrt(inputs.n) + 2 * inputs.omega + _sqrt_term(inputs))


def bound_components(inputs):
    """Every printed piece of the bound for ``inputs``.

    The covering number is taken at the radius ``n^(-1/(2k))`` used in the
    bound, and clamped at 1 from below.
    """
    if inputs.n < 2:
        raise ValueError(f'the bound needs n >= 2, got {inputs.n}')
    eps = inputs.n ** (-1.0 / (2 * inputs.k))
    cover = covering_number_bound(inputs.R, inputs.k, eps)
    log_N = max(cover.log_value, 0.0)
    sigma = sigma_from_log_cover(inputs.rho, inputs.k, log_N, inputs.n)
    inv_sqrt_n = 1 / math.sqrt(inputs.n)
    omega_term = 2 * inputs.omega
    sqrt_term = _sqrt_term(inputs)
    return BoundComponents(log_N, sigma, inv_sqrt_n, omega_term, sqrt_term,
                           inv_sqrt_n + omega_term + sqrt_term)
