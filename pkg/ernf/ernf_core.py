"""
This stores the basic classes and function dependencies of the
ernf module: loggers, the error hierarchy, worker handling and the
parameter container shared by every learnable component.
#
"""
#
########################################################################
#
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import numpy as np
#
########################################################################
#  Errors
########################################################################


class ErnfError(Exception):
    r"""
    Base class of all errors raised by the ernf package
    """
    pass


class ContractError(ErnfError, ValueError):
    r"""
    Raised when an input violates a documented precondition, such as a
    dimension mismatch or unsorted ray samples.
    """
    pass


class DegeneratePoseError(ErnfError):
    r"""
    Raised when a key point lands too close to the camera plane to be
    projected.
    """
    pass


class NonFiniteError(ErnfError, ArithmeticError):
    r"""
    Raised when a non-finite value appears inside a field evaluation. The
    stage attribute names where it was detected.
    """
    def __init__(self, stage):
        self.stage = stage
        super().__init__('non-finite values produced at stage: ' + stage)


class DatasetError(ErnfError):
    r"""
    Raised when a dataset directory fails validation
    """
    pass


class CheckpointError(ErnfError):
    r"""
    Raised when a checkpoint file can not be read or does not match the model
    """
    pass


class TrainingAbort(ErnfError):
    r"""
    Raised when the training loss becomes non-finite
    """
    def __init__(self, stage, iteration, loss):
        self.stage = stage
        self.iteration = iteration
        msg = 'training aborted: loss {} at stage {} iteration {:d}'
        super().__init__(msg.format(loss, stage, iteration))


#
########################################################################
#  Basic classes
########################################################################


class ParameterModule(object):
    r"""
    Mixin for learnable components. Subclasses list their parameter arrays
    in ``_param_names`` and child modules in ``_child_names``; every
    parameter also belongs to an optimizer group, ``grid`` for hash tables
    and ``mlp`` for everything else.
    """
    _param_names = ()
    _child_names = ()
    param_group = 'mlp'

    def parameters(self, prefix=''):
        r"""
        Returns an OrderedDict of name -> array. The arrays are the live
        storage so in-place updates change the module.
        """
        params = OrderedDict()
        for name in self._param_names:
            params[prefix + name] = getattr(self, name)
        for name in self._child_names:
            child = getattr(self, name)
            if child is None:
                continue
            params.update(child.parameters(prefix + name + '.'))
        #
        return params

    def parameter_groups(self, prefix=''):
        r"""
        Returns an OrderedDict of name -> optimizer group label
        """
        groups = OrderedDict()
        for name in self._param_names:
            groups[prefix + name] = self.param_group
        for name in self._child_names:
            child = getattr(self, name)
            if child is None:
                continue
            groups.update(child.parameter_groups(prefix + name + '.'))
        #
        return groups

    def zero_grads(self, prefix=''):
        r"""
        Returns an OrderedDict of zeroed gradient buffers matching parameters
        """
        return OrderedDict((key, np.zeros_like(val))
                           for key, val in self.parameters(prefix).items())

    def load_parameters(self, params, prefix=''):
        r"""
        Copies values from a name -> array mapping into the live parameters.
        Shapes must match exactly.
        """
        for key, value in self.parameters(prefix).items():
            if key not in params:
                raise CheckpointError('missing parameter: ' + key)
            new_value = np.asarray(params[key], dtype=value.dtype)
            if new_value.shape != value.shape:
                msg = 'parameter {} has shape {}, expected {}'
                raise CheckpointError(msg.format(key, new_value.shape, value.shape))
            value[...] = new_value

    def num_parameters(self):
        r"""returns the total count of learnable scalars"""
        return int(sum(val.size for val in self.parameters().values()))


#
########################################################################
#  Basic functions
########################################################################


def _get_logger(module_name):
    r"""
    Fetches a module level logger, setting ERNF as the parent logger
    """
    #
    name = module_name.replace('ernf', 'ERNF', 1)
    name = name.replace('_', '')
    #
    return logging.getLogger(name)


def set_main_logger_level(level_name):
    r"""
    Sets the logging level of the top level module logger by providing one
    of the predefined logger levels DEBUG, INFO, WARNING, ERROR, CRITICAL.
    If a number is passed in it is used directly
    """
    #
    main_logger = _get_logger(__name__.split('.')[0])
    try:
        level_name = level_name.upper()
        main_logger.setLevel(logging.getLevelName(level_name))
    except AttributeError:
        main_logger.setLevel(level_name)


def get_num_workers(deterministic=False):
    r"""
    Returns the number of worker threads to use. The ERNF_THREADS
    environment variable caps the count and deterministic mode forces a
    single worker.
    """
    if deterministic:
        return 1
    #
    num_workers = os.cpu_count() or 1
    cap = os.environ.get('ERNF_THREADS')
    if cap:
        try:
            num_workers = min(num_workers, max(1, int(cap)))
        except ValueError:
            logger.warning('Ignoring invalid ERNF_THREADS value: %s', cap)
    #
    return num_workers


def ordered_map(func, items, num_workers=1):
    r"""
    Applies func to every item and returns the results in input order.
    With more than one worker a thread pool is used; numpy releases the
    GIL inside its kernels so array heavy work items overlap.
    """
    items = list(items)
    if num_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    #
    with ThreadPoolExecutor(max_workers=num_workers) as pool:
        return list(pool.map(func, items))


def chunk_slices(count, chunk_size):
    r"""
    Splits range(count) into consecutive slices of at most chunk_size. The
    chunking only depends on count so reductions over chunks are identical
    for any worker count.
    """
    chunk_size = max(1, int(chunk_size))
    return [slice(start, min(start + chunk_size, count))
            for start in range(0, count, chunk_size)]


def reduce_grads(grad_list):
    r"""
    Sums a list of gradient dicts in list order into a new dict
    """
    total = OrderedDict()
    for grads in grad_list:
        for key, value in grads.items():
            if key in total:
                total[key] = total[key] + value
            else:
                total[key] = np.array(value, copy=True)
    #
    return total


def sub_grads(grads, prefix):
    r"""
    Returns the entries of a gradient dict under prefix with the prefix
    stripped. The arrays are shared so a child module accumulating into the
    result updates the parent buffers.
    """
    return OrderedDict((key[len(prefix):], value) for key, value in grads.items()
                       if key.startswith(prefix))


def check_overwrite(filename, overwrite=False):
    r"""
    Raises FileExistsError when a file would be clobbered
    """
    if not overwrite and os.path.exists(filename):
        msg = 'There is already a file at {},'
        msg += ' specify "overwrite=True" to replace it.'
        raise FileExistsError(msg.format(filename))


def make_rng(seed, *stream):
    r"""
    Returns a numpy Generator seeded from the base seed plus optional
    integer stream identifiers, giving independent reproducible streams.
    """
    seq = np.random.SeedSequence([int(seed)] + [int(val) for val in stream])
    return np.random.default_rng(seq)


def check_finite(array, stage):
    r"""
    Raises NonFiniteError naming the stage when array holds NaN or inf
    """
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(stage)


# setting up core logger
logger = _get_logger(__name__)
