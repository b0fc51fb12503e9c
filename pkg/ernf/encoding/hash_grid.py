"""
================================================================================
Hash Grid
================================================================================
| Multiresolution hashed feature grids in two or three dimensions. Each level
| scales the normalized coordinate by its resolution, hashes the corners of
| the enclosing lattice cell into a fixed size table and interpolates the
| corner entries multilinearly. Level outputs are concatenated level-major.

| Every level is hashed, there is no dense storage for coarse levels.

"""
from collections import namedtuple, OrderedDict
import numpy as np
from ..ernf_core import _get_logger, ParameterModule, ContractError

# module globals
logger = _get_logger(__name__)
HASH_PRIMES = np.array([1, 2654435761, 805459861], dtype=np.uint64)
INIT_SCALE = 1e-4


class HashGridConfig(namedtuple('HashGridConfig',
                                ['levels', 'features', 'table_size_log2',
                                 'res_min', 'res_max', 'dims', 'table_divisor'])):
    r"""
    Layout of a multiresolution hash grid.

    Parameters
    ----------
    levels : int
        number of resolution levels L
    features : int
        features per table entry F
    table_size_log2 : int
        log2 of the nominal table size
    res_min, res_max : int
        coarsest and finest lattice resolution
    dims : int
        2 or 3
    table_divisor : int
        the table holds round(2**table_size_log2 / table_divisor) entries,
        used to split a parameter budget across tri-plane tables
    """
    __slots__ = ()

    def __new__(cls, levels=14, features=1, table_size_log2=14, res_min=64,
                res_max=512, dims=2, table_divisor=1):
        if levels < 1 or features < 1:
            raise ContractError('hash grid needs at least one level and feature')
        if not 1 <= res_min <= res_max:
            raise ContractError('hash grid resolutions must satisfy 1 <= min <= max')
        if dims not in (2, 3):
            raise ContractError('hash grid dims must be 2 or 3')
        if table_divisor < 1:
            raise ContractError('table_divisor must be positive')
        return super().__new__(cls, int(levels), int(features), int(table_size_log2),
                               int(res_min), int(res_max), int(dims),
                               int(table_divisor))

    @property
    def table_size(self):
        r"""number of entries in each level table"""
        return int(round(2**self.table_size_log2 / self.table_divisor))

    @property
    def growth(self):
        r"""per level resolution growth factor b"""
        if self.levels == 1:
            return 1.0
        return float(np.exp(np.log(self.res_max / self.res_min) / (self.levels - 1)))

    @property
    def resolutions(self):
        r"""integer lattice resolution N_l of every level"""
        scale = self.res_min * self.growth**np.arange(self.levels)
        return np.floor(scale + 1e-9).astype(np.int64)

    @property
    def output_dim(self):
        r"""length of the encoded feature vector"""
        return self.levels * self.features

    def to_dict(self):
        r"""returns a plain dict for YAML serialization"""
        return OrderedDict(zip(self._fields, self))


#
########################################################################
#  Functions
########################################################################


def hash_vertex(v, table_size):
    r"""
    Spatial hash of integer lattice coordinates v (..., dims): the XOR of
    v_k times a fixed per-axis prime, reduced modulo the table size.
    Arithmetic is uint64 so results are identical on every platform.
    """
    v = np.asarray(v)
    if np.any(v < 0):
        raise ContractError('lattice coordinates must be non-negative')
    v = v.astype(np.uint64)
    dims = v.shape[-1]
    #
    key = v[..., 0] * HASH_PRIMES[0]
    for axis in range(1, dims):
        key = np.bitwise_xor(key, v[..., axis] * HASH_PRIMES[axis])
    #
    return (key % np.uint64(table_size)).astype(np.int64)


def corner_offsets(dims):
    r"""
    Returns the (2**dims, dims) 0/1 offsets of a lattice cell's corners,
    bit k of the corner index selects the upper side along axis k
    """
    corners = np.arange(2**dims)[:, None]
    return (corners >> np.arange(dims)[None, :]) & 1


def lattice_corners(u, resolution):
    r"""
    Locates normalized points u (B, dims) on a lattice of the given
    resolution.

    Returns
    -------
    corners : (B, 2**dims, dims) integer vertex coordinates
    frac : (B, dims) position inside the cell, in [0, 1]
    """
    pos = u * resolution
    base = np.minimum(np.floor(pos), resolution - 1)
    frac = pos - base
    offsets = corner_offsets(u.shape[-1])
    corners = base.astype(np.int64)[:, None, :] + offsets[None, :, :]
    return corners, frac


def corner_weights(frac, derivatives=True):
    r"""
    Multilinear interpolation weights (B, 2**dims) and their derivatives
    with respect to frac (B, 2**dims, dims), None when derivatives is False
    """
    dims = frac.shape[-1]
    offsets = corner_offsets(dims)
    # per axis factor is frac on the upper side and 1 - frac on the lower
    factors = np.where(offsets[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    weights = np.prod(factors, axis=-1)
    if not derivatives:
        return weights, None
    #
    signs = np.where(offsets == 1, 1.0, -1.0)
    dweights = np.empty(factors.shape)
    for axis in range(dims):
        others = np.delete(factors, axis, axis=-1)
        dweights[..., axis] = signs[None, :, axis] * np.prod(others, axis=-1)
    #
    return weights, dweights


def clamp_unit(u, dims):
    r"""
    Checks the point array shape and clamps coordinates into [0, 1].
    Returns the clamped array and a per-coordinate mask of clamped entries.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[-1] != dims:
        msg = 'expected {:d}-d coordinates, got shape {}'
        raise ContractError(msg.format(dims, u.shape))
    outside = (u < 0.0) | (u > 1.0)
    if np.any(outside):
        logger.debug('clamped %d coordinates into the unit cube', int(outside.sum()))
        u = np.clip(u, 0.0, 1.0)
    return u, outside


#
########################################################################
#  Grid class
########################################################################


class HashGrid(ParameterModule):
    r"""
    Learnable multiresolution hash grid

    Parameters
    ----------
    config : HashGridConfig
        grid layout
    rng : numpy.random.Generator, optional
        source for the uniform table initialization

    Examples
    --------
    >>> grid = HashGrid(HashGridConfig(levels=2, features=2, dims=2))
    >>> features, cache = grid.encode([[0.25, 0.5]])
    >>> features.shape
    (1, 4)
    """
    _param_names = ('tables',)
    param_group = 'grid'

    def __init__(self, config, rng=None):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(0) if rng is None else rng
        shape = (config.levels, config.table_size, config.features)
        self.tables = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    @property
    def output_dim(self):
        r"""length of the encoded feature vector"""
        return self.config.output_dim

    def level_slots(self, u):
        r"""
        Yields (level, resolution, slots, frac) for normalized points u,
        slots has shape (B, 2**dims)
        """
        table_size = self.config.table_size
        for level, res in enumerate(self.config.resolutions):
            corners, frac = lattice_corners(u, res)
            yield level, res, hash_vertex(corners, table_size), frac

    def encode(self, u):
        r"""
        Encodes normalized points u (B, dims), clamping into [0, 1].

        Returns
        -------
        features : (B, L*F) array, level-major
        cache : dict needed by encode_backward
        """
        u, outside = clamp_unit(u, self.config.dims)
        num_feat = self.config.features
        features = np.empty((u.shape[0], self.output_dim))
        levels = []
        for level, res, slots, frac in self.level_slots(u):
            weights, _ = corner_weights(frac, derivatives=False)
            entries = self.tables[level][slots]
            block = np.einsum('bc,bcf->bf', weights, entries)
            features[:, level*num_feat:(level+1)*num_feat] = block
            levels.append((res, slots, weights, frac, entries))
        #
        cache = {'u': u, 'outside': outside, 'levels': levels,
                 'clamped': bool(np.any(outside))}
        return features, cache

    def encode_backward(self, cache, upstream, grads=None):
        r"""
        Adjoint of encode. Table gradients are accumulated into grads when
        given, otherwise a fresh buffer is returned.

        Returns
        -------
        grads : OrderedDict with the 'tables' gradient
        du : (B, dims) gradient with respect to the normalized input, zero
            along clamped coordinates
        """
        upstream = np.asarray(upstream, dtype=float)
        num_feat = self.config.features
        table_size = self.config.table_size
        if grads is None:
            grads = self.zero_grads()
        dtables = grads['tables']
        du = np.zeros(cache['u'].shape)
        #
        for level, (res, slots, weights, frac, entries) in enumerate(cache['levels']):
            dweights = corner_weights(frac)[1]
            g_level = upstream[:, level*num_feat:(level+1)*num_feat]
            flat_slots = slots.ravel()
            for feat in range(num_feat):
                contrib = (weights * g_level[:, feat:feat+1]).ravel()
                dtables[level, :, feat] += np.bincount(flat_slots, weights=contrib,
                                                       minlength=table_size)
            #
            # d(feature)/d(frac) contracted with upstream, chain rule through pos = u * N
            corner_dot = np.einsum('bcf,bf->bc', entries, g_level)
            du += res * np.einsum('bc,bcd->bd', corner_dot, dweights)
        #
        du[cache['outside']] = 0.0
        return grads, du
