"""Reverse-mode automatic differentiation for scalar losses over MLP parameters.

A ``Tape`` records primitive operations eagerly: every call computes its output
immediately and appends a node holding the inputs, the output value and
whatever the backward pass needs. ``gradient`` then walks the nodes in exact
reverse order, so accumulation order (and therefore every bit of the result)
is fixed by the order of the forward pass.

Tensors are plain double-precision NumPy arrays.

The finite-difference oracles at the bottom of the module are used to test the
tape and to form Hessian-vector products for power iteration.
"""
from collections import namedtuple

import numpy as np
from scipy.special import logsumexp


Node = namedtuple('Node', ['op', 'inputs', 'value', 'cache'])


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the operation."""
    def __init__(self, op, msg):
        self.op = op
        super(ShapeError, self).__init__(f'{op}: {msg}')


class TapeError(RuntimeError):
    pass


class NonFiniteError(RuntimeError):
    """A non-finite value appeared at coordinate ``index``."""
    def __init__(self, index, msg):
        self.index = index
        super(NonFiniteError, self).__init__(msg)


def as_tensor(x):
    """Return ``x`` as a double-precision array."""
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Ordered record of primitive operations."""
    def __init__(self):
        self.nodes = []
        self.leaves = []
        self.loss = None

    def __len__(self):
        return len(self.nodes)

    def value(self, node_id):
        return self.nodes[node_id].value

    def shape(self, node_id):
        return self.nodes[node_id].value.shape

    def _record(self, op, inputs, value, cache=None):
        self.nodes.append(Node(op, tuple(inputs), value, cache))
        return len(self.nodes) - 1

    # Leaves.
    def leaf(self, x):
        """Register a differentiable input."""
        node_id = self._record('leaf', (), as_tensor(x).copy())
        self.leaves.append(node_id)
        return node_id

    def constant(self, x):
        return self._record('const', (), as_tensor(x))

    # Structural.
    def view(self, src, offset, shape):
        """Reshaped slice ``[offset, offset + prod(shape))`` of a flat node."""
        x = self.value(src)
        size = int(np.prod(shape))
        if x.ndim != 1 or offset < 0 or offset + size > x.size:
            raise ShapeError(
                'view', f'cannot take {size} values at offset {offset} from '
                        f'a node of shape {x.shape}')
        value = x[offset:offset + size].reshape(shape)
        return self._record('view', (src,), value, (offset, size))

    # Linear algebra.
    def matmul(self, a, b):
        x, w = self.value(a), self.value(b)
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(
                'matmul', f'cannot multiply {x.shape} by {w.shape}')
        return self._record('matmul', (a, b), x @ w)

    def add_bias(self, a, b):
        x, bias = self.value(a), self.value(b)
        if x.ndim != 2 or bias.shape != (x.shape[1],):
            raise ShapeError(
                'add_bias', f'bias of shape {bias.shape} does not match '
                            f'activations of shape {x.shape}')
        return self._record('add_bias', (a, b), x + bias)

    # Elementwise.
    def _check_same(self, op, a, b):
        if self.shape(a) != self.shape(b):
            raise ShapeError(
                op, f'operand shapes differ: {self.shape(a)} vs '
                    f'{self.shape(b)}')

    def add(self, a, b):
        self._check_same('add', a, b)
        return self._record('add', (a, b), self.value(a) + self.value(b))

    def mul(self, a, b):
        self._check_same('mul', a, b)
        return self._record('mul', (a, b), self.value(a) * self.value(b))

    def scale(self, a, c):
        c = float(c)
        return self._record('scale', (a,), self.value(a) * c, c)

    def relu(self, a):
        x = self.value(a)
        return self._record('relu', (a,), np.maximum(x, 0.0))

    def tanh(self, a):
        return self._record('tanh', (a,), np.tanh(self.value(a)))

    def exp(self, a):
        return self._record('exp', (a,), np.exp(self.value(a)))

    def sqrt(self, a):
        x = self.value(a)
        assert np.all(x >= 0), 'sqrt of a negative value'
        return self._record('sqrt', (a,), np.sqrt(x))

    # Reductions.
    def reduce_mean(self, a):
        return self._record('reduce_mean', (a,), np.asarray(self.value(a).mean()))

    def softmax_cross_entropy(self, logits, labels):
        """Per-example cross-entropy of integer ``labels`` under ``logits``."""
        z = self.value(logits)
        labels = np.asarray(labels)
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise ShapeError(
                'softmax_cross_entropy',
                f'{labels.shape[0] if labels.ndim else 0} labels for logits of '
                f'shape {z.shape}')
        if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
            raise ShapeError(
                'softmax_cross_entropy',
                f'labels must lie in [0, {z.shape[1]})')
        lse = logsumexp(z, axis=1)
        rows = np.arange(z.shape[0])
        value = lse - z[rows, labels]
        probs = np.exp(z - lse[:, None])
        return self._record(
            'softmax_cross_entropy', (logits,), value, (probs, labels))


def _backward_rule(tape, node, g):
    """Return ``[(input_id, grad), ...]`` for one node."""
    op = node.op
    if op == 'view':
        src, = node.inputs
        offset, size = node.cache
        full = np.zeros_like(tape.value(src))
        full[offset:offset + size] = g.ravel()
        return [(src, full)]
    if op == 'matmul':
        a, b = node.inputs
        return [(a, g @ tape.value(b).T), (b, tape.value(a).T @ g)]
    if op == 'add_bias':
        a, b = node.inputs
        return [(a, g), (b, g.sum(axis=0))]
    if op == 'add':
        a, b = node.inputs
        return [(a, g), (b, g)]
    if op == 'mul':
        a, b = node.inputs
        return [(a, g * tape.value(b)), (b, g * tape.value(a))]
    if op == 'scale':
        return [(node.inputs[0], g * node.cache)]
    if op == 'relu':
        a, = node.inputs
        # Subgradient at exactly 0 is 0.
        return [(a, g * (tape.value(a) > 0))]
    if op == 'tanh':
        return [(node.inputs[0], g * (1.0 - node.value ** 2))]
    if op == 'exp':
        return [(node.inputs[0], g * node.value)]
    if op == 'sqrt':
        y = node.value
        safe = np.where(y > 0, y, 1.0)
        return [(node.inputs[0], np.where(y > 0, 0.5 * g / safe, 0.0))]
    if op == 'reduce_mean':
        a, = node.inputs
        x = tape.value(a)
        return [(a, np.full(x.shape, float(g) / x.size))]
    if op == 'softmax_cross_entropy':
        probs, labels = node.cache
        d = probs.copy()
        d[np.arange(len(labels)), labels] -= 1.0
        return [(node.inputs[0], g[:, None] * d)]
    raise TapeError(f'no backward rule for "{op}"')


def forward(program, params, batch):
    """Run ``program`` on a fresh tape.

    Parameters
    ----------
    program : callable
        ``program(tape, leaves, batch)`` records operations and returns the id
        of a scalar loss node. ``leaves`` is a node id, or a tuple of node ids
        when ``params`` is a tuple.

    params : ndarray or tuple of ndarray
        Flat parameter vector(s).

    batch : object
        Whatever ``program`` consumes; usually ``(X, y)``.

    Returns
    -------
    tape : Tape
        Tape with every activation cached.

    loss : float
        Value of the loss node.
    """
    tape = Tape()
    if isinstance(params, tuple):
        leaves = tuple(tape.leaf(p) for p in params)
    else:
        leaves = tape.leaf(params)
    loss = program(tape, leaves, batch)
    if tape.shape(loss) != ():
        raise ShapeError(
            'forward', f'program returned a node of shape {tape.shape(loss)}, '
                       f'expected a scalar')
    tape.loss = loss
    return tape, float(tape.value(loss))


def gradient(tape, loss=None, wrt=None):
    """Reverse-mode gradient of a scalar node.

    Parameters
    ----------
    tape : Tape
        Tape filled by ``forward``.

    loss : int, optional
        Scalar node; defaults to the tape's loss node.

    wrt : int or tuple of int, optional
        Leaves to differentiate with respect to. Defaults to all leaves (a
        single array when there is exactly one).

    Returns
    -------
    ndarray or tuple of ndarray
        Gradient(s) shaped like the corresponding leaves.
    """
    if loss is None:
        loss = tape.loss
    if loss is None or not tape.nodes:
        raise TapeError('gradient requested before forward')
    if tape.shape(loss) != ():
        raise TapeError(f'node {loss} is not a scalar')
    grads = [None] * len(tape.nodes)
    grads[loss] = np.asarray(1.0)
    for node_id in range(loss, -1, -1):
        g = grads[node_id]
        node = tape.nodes[node_id]
        if g is None or not node.inputs:
            continue
        for input_id, input_grad in _backward_rule(tape, node, g):
            if tape.nodes[input_id].op == 'const':
                continue
            if grads[input_id] is None:
                grads[input_id] = input_grad
            else:
                grads[input_id] = grads[input_id] + input_grad

    def _leaf_grad(leaf):
        g = grads[leaf]
        return np.zeros_like(tape.value(leaf)) if g is None else g

    if wrt is None:
        wrt = tape.leaves[0] if len(tape.leaves) == 1 else tuple(tape.leaves)
    if isinstance(wrt, tuple):
        return tuple(_leaf_grad(leaf) for leaf in wrt)
    return _leaf_grad(wrt)


def value_and_grad(program, batch):
    """Return ``f(params) -> (loss, grad)`` for a fixed batch."""
    def f(params):
        tape, loss = forward(program, params, batch)
        return loss, gradient(tape)
    return f


def finite_difference_gradient(loss_fn, params, step=1e-5):
    """Central-difference gradient of a scalar function."""
    if step <= 0:
        raise ValueError(f'step must be positive, got {step}')
    params = as_tensor(params)
    flat = params.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        up = loss_fn((flat + e).reshape(params.shape))
        down = loss_fn((flat - e).reshape(params.shape))
        grad[i] = (up - down) / (2 * step)
    return grad.reshape(params.shape)


def _check_finite(x, what):
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise NonFiniteError(
            int(bad[0]), f'non-finite {what} at coordinate {int(bad[0])}')


def hessian_vector_product(grad_fn, params, v, step=1e-4):
    """Central difference of gradients along ``v``.

    Parameters
    ----------
    grad_fn : callable
        ``grad_fn(params) -> (loss, grad)``.

    params, v : ndarray
        Point and direction; same length.

    step : float, optional
        Finite-difference step.

    Returns
    -------
    ndarray
        ``(grad(params + step*v) - grad(params - step*v)) / (2*step)``.
    """
    if step <= 0:
        raise ValueError(f'step must be positive, got {step}')
    params, v = as_tensor(params), as_tensor(v)
    if params.shape != v.shape:
        raise ShapeError(
            'hessian_vector_product',
            f'direction of shape {v.shape} for parameters of shape '
            f'{params.shape}')
    _, g_up = grad_fn(params + step * v)
    _check_finite(g_up, 'gradient at params + step*v')
    _, g_down = grad_fn(params - step * v)
    _check_finite(g_down, 'gradient at params - step*v')
    hv = (g_up - g_down) / (2 * step)
    _check_finite(hv, 'Hessian-vector product')
    return hv
