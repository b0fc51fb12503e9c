"""
================================================================================
Dense Stack
================================================================================
| Fully connected layers with relu, sigmoid or identity activations and a
| hand written adjoint. Inputs are batches of row vectors.

"""
from collections import OrderedDict
import numpy as np
from scipy.special import expit
from ..ernf_core import _get_logger, ParameterModule, ContractError

# module globals
logger = _get_logger(__name__)
ACTIVATIONS = ('relu', 'sigmoid', 'none')
SIGMOID_SATURATION = 30.0


def sigmoid(z):
    r"""
    Logistic function that returns exactly 0 or 1 beyond +-30
    """
    out = expit(z)
    out = np.where(z > SIGMOID_SATURATION, 1.0, out)
    return np.where(z < -SIGMOID_SATURATION, 0.0, out)


def activate(z, kind):
    r"""applies a named activation"""
    if kind == 'relu':
        return np.maximum(z, 0.0)
    elif kind == 'sigmoid':
        return sigmoid(z)
    return z


def activate_backward(z, y, upstream, kind):
    r"""adjoint of activate given the pre-activation z and output y"""
    if kind == 'relu':
        return upstream * (z > 0.0)
    elif kind == 'sigmoid':
        return upstream * y * (1.0 - y)
    return upstream


class DenseStack(ParameterModule):
    r"""
    Chain of dense layers y = act(x W + b)

    Parameters
    ----------
    dims : sequence of int
        layer widths, input first
    activations : sequence of str
        one activation per layer, each of relu, sigmoid or none
    rng : numpy.random.Generator, optional
        weights are drawn from a fan-in scaled uniform distribution, biases
        start at zero

    Examples
    --------
    >>> mlp = DenseStack([4, 8, 2], ['relu', 'none'])
    >>> y, cache = mlp.forward(np.ones((3, 4)))
    >>> y.shape
    (3, 2)
    """
    def __init__(self, dims, activations, rng=None):
        super().__init__()
        dims = [int(dim) for dim in dims]
        if len(dims) < 2 or len(activations) != len(dims) - 1:
            raise ContractError('dense stack needs one activation per layer')
        for kind in activations:
            if kind not in ACTIVATIONS:
                raise ContractError('unknown activation: ' + str(kind))
        #
        rng = np.random.default_rng(0) if rng is None else rng
        self.dims = dims
        self.activations = list(activations)
        names = []
        for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            gain = np.sqrt(2.0) if activations[layer] == 'relu' else 1.0
            bound = gain * np.sqrt(3.0 / fan_in)
            setattr(self, 'W{:d}'.format(layer), rng.uniform(-bound, bound, (fan_in, fan_out)))
            setattr(self, 'b{:d}'.format(layer), np.zeros(fan_out))
            names += ['W{:d}'.format(layer), 'b{:d}'.format(layer)]
        self._param_names = tuple(names)

    @property
    def num_layers(self):
        return len(self.activations)

    @property
    def input_dim(self):
        return self.dims[0]

    @property
    def output_dim(self):
        return self.dims[-1]

    def layer(self, index):
        r"""returns the (weight, bias) arrays of a layer"""
        return getattr(self, 'W{:d}'.format(index)), getattr(self, 'b{:d}'.format(index))

    def forward(self, x):
        r"""
        Evaluates the stack on x (B, input_dim)

        Returns
        -------
        y : (B, output_dim) array
        cache : list of (input, pre-activation, output) per layer
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.input_dim:
            msg = 'dense stack expects {:d} inputs, got {:d}'
            raise ContractError(msg.format(self.input_dim, x.shape[-1]))
        #
        cache = []
        for index, kind in enumerate(self.activations):
            weight, bias = self.layer(index)
            z = x @ weight + bias
            y = activate(z, kind)
            cache.append((x, z, y))
            x = y
        #
        return x, cache

    def backward(self, cache, upstream, grads=None):
        r"""
        Adjoint of forward.

        Returns
        -------
        grads : OrderedDict of parameter gradients, accumulated into the
            given dict when supplied
        dx : (B, input_dim) input gradient
        """
        if grads is None:
            grads = self.zero_grads()
        grad = np.asarray(upstream, dtype=float)
        for index in reversed(range(self.num_layers)):
            x, z, y = cache[index]
            dz = activate_backward(z, y, grad, self.activations[index])
            grads['W{:d}'.format(index)] += x.T @ dz
            grads['b{:d}'.format(index)] += dz.sum(axis=0)
            grad = dz @ self.layer(index)[0].T
        #
        return grads, grad

    def describe(self):
        r"""returns a summary dict used in checkpoints and reports"""
        return OrderedDict(dims=list(self.dims), activations=list(self.activations))
