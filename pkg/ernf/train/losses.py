"""
================================================================================
Losses
================================================================================
| Photometric losses of the two training stages. The coarse stage uses the
| summed squared error over sampled rays. The fine stage works on image
| patches and adds a perceptual term computed from a fixed bank of zero-mean
| derivative filters, which ignores constant offsets.

"""
from collections import OrderedDict
import numpy as np
from scipy import signal as sp_signal
from ..ernf_core import _get_logger, ContractError

# module globals
logger = _get_logger(__name__)
SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])


def coarse_loss(pred, target):
    r"""sum of squared color errors over rays"""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ContractError('prediction and target shapes differ')
    return float(np.sum((pred - target)**2))


def coarse_loss_grad(pred, target):
    r"""gradient of coarse_loss with respect to pred"""
    return 2.0 * (np.asarray(pred, dtype=float) - np.asarray(target, dtype=float))


def gaussian_derivative_kernel(sigma):
    r"""
    Returns the x-derivative of a sampled 2-d gaussian with radius 3 sigma,
    shifted to zero mean
    """
    radius = int(np.ceil(3.0 * sigma))
    ticks = np.arange(-radius, radius + 1, dtype=float)
    grid_x, grid_y = np.meshgrid(ticks, ticks)
    gauss = np.exp(-(grid_x**2 + grid_y**2) / (2.0 * sigma**2))
    kernel = -grid_x / sigma**2 * gauss
    kernel -= kernel.mean()
    return kernel / np.abs(kernel).sum()


class PerceptualMetric(object):
    r"""
    Fixed filter bank distance between two patches: the weighted sum of
    squared filter responses of their difference. The default bank holds a
    Sobel pair and gaussian derivative pairs at two scales.

    Parameters
    ----------
    sigmas : sequence of float
        gaussian derivative scales
    weights : sequence of float, optional
        one weight per scale, the Sobel pair comes first
    """
    def __init__(self, sigmas=(1.0, 2.0), weights=None):
        super().__init__()
        self.kernels = OrderedDict()
        self.kernels['sobel_x'] = SOBEL_X / 8.0
        self.kernels['sobel_y'] = SOBEL_X.T / 8.0
        scale_names = ['sobel']
        for sigma in sigmas:
            kernel = gaussian_derivative_kernel(sigma)
            self.kernels['gauss{:g}_x'.format(sigma)] = kernel
            self.kernels['gauss{:g}_y'.format(sigma)] = kernel.T
            scale_names.append('gauss{:g}'.format(sigma))
        #
        weights = [1.0] * len(scale_names) if weights is None else list(weights)
        if len(weights) != len(scale_names):
            raise ContractError('perceptual metric needs one weight per scale')
        self.weights = OrderedDict(zip(scale_names, weights))

    def _kernel_weight(self, name):
        return self.weights[name.rsplit('_', 1)[0]]

    def _responses(self, diff):
        r"""yields (name, kernel, channel, response) for valid filter windows"""
        for name, kernel in self.kernels.items():
            if diff.shape[0] < kernel.shape[0] or diff.shape[1] < kernel.shape[1]:
                continue
            for channel in range(diff.shape[2]):
                response = sp_signal.correlate2d(diff[:, :, channel], kernel, mode='valid')
                yield name, kernel, channel, response

    def __call__(self, pred, target):
        r"""returns the non-negative distance between two (H, W, 3) patches"""
        diff = _patch_diff(pred, target)
        total = 0.0
        for name, _, _, response in self._responses(diff):
            total += self._kernel_weight(name) * float(np.sum(response**2))
        return total

    def grad(self, pred, target):
        r"""gradient of the distance with respect to pred"""
        diff = _patch_diff(pred, target)
        grad = np.zeros(diff.shape)
        for name, kernel, channel, response in self._responses(diff):
            weight = 2.0 * self._kernel_weight(name)
            grad[:, :, channel] += weight * sp_signal.convolve2d(response, kernel, mode='full')
        return grad


def _patch_diff(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 3:
        raise ContractError('patches must share an (H, W, C) shape')
    return pred - target


def fine_loss(pred, target, weight=0.01, metric=None):
    r"""
    Patch loss: summed squared error plus weight times the perceptual
    distance
    """
    metric = PerceptualMetric() if metric is None else metric
    loss = coarse_loss(pred, target)
    if weight:
        loss += weight * metric(pred, target)
    return loss


def fine_loss_grad(pred, target, weight=0.01, metric=None):
    r"""gradient of fine_loss with respect to pred"""
    metric = PerceptualMetric() if metric is None else metric
    grad = coarse_loss_grad(pred, target)
    if weight:
        grad += weight * metric.grad(pred, target)
    return grad
