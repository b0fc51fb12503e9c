"""
================================================================================
Optimizer
================================================================================
| Adam with decoupled weight decay. Parameters are updated in place, each
| with the learning rate of its group (hash tables or networks).

"""
from collections import OrderedDict
import numpy as np
from ..ernf_core import _get_logger, ContractError

# module globals
logger = _get_logger(__name__)


class AdamW(object):
    r"""
    Decoupled weight decay Adam.

    Parameters
    ----------
    params : OrderedDict
        name -> live parameter array
    groups : OrderedDict
        name -> group label, see ParameterModule.parameter_groups
    lrs : dict
        group label -> learning rate
    betas : (float, float)
        moment decay rates
    eps : float
        denominator offset
    weight_decay : float
        decay factor, applied as p <- p * (1 - lr * weight_decay) before the
        Adam update

    Examples
    --------
    >>> opt = AdamW(field.parameters(), field.parameter_groups(),
    ...             {'grid': 0.01, 'mlp': 0.001})
    >>> opt.step(grads)
    True
    """
    def __init__(self, params, groups, lrs, betas=(0.9, 0.99), eps=1e-8, weight_decay=1e-4):
        super().__init__()
        self.params = params
        self.groups = groups
        self.lrs = dict(lrs)
        self.betas = tuple(betas)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        missing = set(groups.values()) - set(self.lrs)
        if missing:
            raise ContractError('no learning rate for groups: ' + ', '.join(sorted(missing)))
        self.step_count = 0
        self.skipped_steps = 0
        self.first_moment = OrderedDict((key, np.zeros_like(val)) for key, val in params.items())
        self.second_moment = OrderedDict((key, np.zeros_like(val)) for key, val in params.items())

    def step(self, grads):
        r"""
        Applies one update. Returns False without touching the parameters
        when any gradient is non-finite.
        """
        for key, param in self.params.items():
            if grads[key].shape != param.shape:
                msg = 'gradient for {} has shape {}, expected {}'
                raise ContractError(msg.format(key, grads[key].shape, param.shape))
        if not all(np.all(np.isfinite(grad)) for grad in grads.values()):
            self.skipped_steps += 1
            logger.warning('skipping optimizer step with non-finite gradients '
                           '(%d skipped so far)', self.skipped_steps)
            return False
        #
        self.step_count += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1**self.step_count
        correction2 = 1.0 - beta2**self.step_count
        for key, param in self.params.items():
            lr = self.lrs[self.groups[key]]
            grad = grads[key]
            m = self.first_moment[key]
            v = self.second_moment[key]
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad**2
            if self.weight_decay:
                param *= 1.0 - lr * self.weight_decay
            param -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        #
        return True


def optimizer_step(state, params, grads, lrs=None):
    r"""
    Functional form of AdamW.step. state is an AdamW instance built for
    params; lrs optionally replaces its per group learning rates.
    """
    if state.params is not params:
        raise ContractError('optimizer state was built for other parameters')
    if lrs is not None:
        state.lrs.update(lrs)
    state.step(grads)
    return params
