"""
================================================================================
Tri-Plane Encoder
================================================================================
| Factorizes a 3-D point into its projections on the XY, YZ and XZ planes,
| encodes each with its own 2-D hash grid and concatenates the results in
| that order. A plain 3-D hash grid is provided behind the same interface
| as a baseline backbone.

"""
from collections import OrderedDict
import numpy as np
from ..ernf_core import _get_logger, ParameterModule, ContractError
from .hash_grid import HashGrid, HashGridConfig, clamp_unit

# module globals
logger = _get_logger(__name__)
PLANE_AXES = OrderedDict([('plane_xy', (0, 1)),
                          ('plane_yz', (1, 2)),
                          ('plane_xz', (0, 2))])
BACKBONES = ('trihash', 'hash3d')


class TriPlaneEncoder(ParameterModule):
    r"""
    Three orthogonal 2-D hash grids sharing one configuration

    Parameters
    ----------
    config : HashGridConfig
        shared plane layout, dims must be 2
    rng : numpy.random.Generator, optional
        initialization source, planes are drawn in XY, YZ, XZ order
    """
    _child_names = tuple(PLANE_AXES)

    def __init__(self, config, rng=None):
        super().__init__()
        if config.dims != 2:
            raise ContractError('tri-plane encoder requires a 2-d grid config')
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.plane_xy = HashGrid(config, rng)
        self.plane_yz = HashGrid(config, rng)
        self.plane_xz = HashGrid(config, rng)

    @property
    def output_dim(self):
        return 3 * self.config.output_dim

    def planes(self):
        r"""yields (name, axes, grid) in concatenation order"""
        for name, axes in PLANE_AXES.items():
            yield name, axes, getattr(self, name)

    def encode(self, x):
        r"""
        Encodes normalized points x (B, 3) into f_x (B, 3*L*F)
        """
        x, outside = clamp_unit(x, 3)
        blocks = []
        plane_caches = []
        for _, axes, grid in self.planes():
            feat, cache = grid.encode(x[:, axes])
            blocks.append(feat)
            plane_caches.append(cache)
        #
        cache = {'x': x, 'outside': outside, 'planes': plane_caches,
                 'clamped': bool(np.any(outside))}
        return np.concatenate(blocks, axis=1), cache

    def encode_backward(self, cache, upstream, grads=None):
        r"""
        Adjoint of encode. Each coordinate collects the input gradients of
        the two planes it appears on.
        """
        upstream = np.asarray(upstream, dtype=float)
        width = self.config.output_dim
        if grads is None:
            grads = self.zero_grads()
        dx = np.zeros(cache['x'].shape)
        for index, (name, axes, grid) in enumerate(self.planes()):
            plane_grads = OrderedDict(tables=grads[name + '.tables'])
            block = upstream[:, index*width:(index+1)*width]
            _, du = grid.encode_backward(cache['planes'][index], block, plane_grads)
            dx[:, axes] += du
        #
        dx[cache['outside']] = 0.0
        return grads, dx


class Hash3DEncoder(ParameterModule):
    r"""
    Single 3-D hash grid exposing the tri-plane encoder interface
    """
    _child_names = ('grid',)

    def __init__(self, config, rng=None):
        super().__init__()
        if config.dims != 3:
            raise ContractError('3-d hash encoder requires a 3-d grid config')
        self.config = config
        self.grid = HashGrid(config, rng)

    @property
    def output_dim(self):
        return self.config.output_dim

    def encode(self, x):
        return self.grid.encode(x)

    def encode_backward(self, cache, upstream, grads=None):
        if grads is None:
            grads = self.zero_grads()
        grid_grads = OrderedDict(tables=grads['grid.tables'])
        _, dx = self.grid.encode_backward(cache, upstream, grid_grads)
        return grads, dx


#
########################################################################
#  Functions
########################################################################


def triplane_encode(enc, x):
    r"""returns f_x for normalized points x (B, 3)"""
    return enc.encode(x)[0]


def triplane_encode_backward(enc, x, upstream):
    r"""returns (grads, dx) for normalized points x and upstream dL/df_x"""
    _, cache = enc.encode(x)
    return enc.encode_backward(cache, upstream)


def build_encoder(backbone, levels=14, features=1, table_size_log2=14,
                  res_min=64, res_max=512, equal_budget=False, rng=None):
    r"""
    Builds the geometry encoder for a backbone name.

    With equal_budget the tri-plane tables are sized 2**b / 3 each so that
    both backbones hold the same number of table entries.
    """
    if backbone == 'trihash':
        divisor = 3 if equal_budget else 1
        config = HashGridConfig(levels, features, table_size_log2, res_min,
                                res_max, dims=2, table_divisor=divisor)
        return TriPlaneEncoder(config, rng)
    elif backbone == 'hash3d':
        config = HashGridConfig(levels, features, table_size_log2, res_min,
                                res_max, dims=3)
        return Hash3DEncoder(config, rng)
    #
    msg = 'unknown backbone {}, expected one of {}'
    raise ContractError(msg.format(backbone, ', '.join(BACKBONES)))
