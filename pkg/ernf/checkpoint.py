"""
================================================================================
Checkpoints
================================================================================
| Binary model checkpoints. A file starts with the 8 byte magic ERNFCKPT, a
| little-endian uint32 format version and a uint32 section count, followed
| by the sections in order. Each section is::

    uint16  name length, then the utf-8 name
    uint8   kind: 0 float32 array, 1 uint8 array, 2 utf-8 text
    uint8   ndim, then ndim uint32 dimensions
    uint64  payload length in bytes, then the payload

| The first section, meta, holds the YAML model description. Parameter
| sections follow in model order, the occupancy bitmap is stored bit
| packed.

"""
from collections import namedtuple, OrderedDict
import struct
import numpy as np
import yaml
from .ernf_core import _get_logger, CheckpointError, check_overwrite
from .encoding.occupancy import OccupancyGrid
from .geom import Aabb

# module globals
logger = _get_logger(__name__)
MAGIC = b'ERNFCKPT'
FORMAT_VERSION = 1
KIND_F32, KIND_U8, KIND_TEXT = 0, 1, 2
OCCUPANCY_SECTION = 'occupancy.bitmap'


class Checkpoint(namedtuple('Checkpoint', ['meta', 'params', 'occupancy'])):
    r"""
    Loaded checkpoint: meta dict, name -> float64 parameter arrays and the
    boolean occupancy bitmap or None
    """
    __slots__ = ()

    @property
    def kind(self):
        return self.meta.get('kind')

    def module_params(self, prefix):
        r"""returns the parameters under prefix with the prefix stripped"""
        return OrderedDict((key[len(prefix):], val) for key, val in self.params.items()
                           if key.startswith(prefix))


#
########################################################################
#  Writing
########################################################################


def _pack_section(name, kind, payload, shape=()):
    encoded = name.encode('utf-8')
    header = struct.pack('<H', len(encoded)) + encoded
    header += struct.pack('<BB', kind, len(shape))
    header += struct.pack('<{:d}I'.format(len(shape)), *shape)
    header += struct.pack('<Q', len(payload))
    return header + payload


def save_checkpoint(filename, meta, modules, occupancy=None, overwrite=False):
    r"""
    Writes a checkpoint.

    Parameters
    ----------
    filename : str
        output path
    meta : dict
        plain data describing the model, stored as YAML
    modules : OrderedDict
        section prefix -> ParameterModule, e.g. {'head': field}
    occupancy : OccupancyGrid, optional
        stored as a bit packed bitmap with its settings in meta
    """
    check_overwrite(filename, overwrite)
    meta = dict(meta)
    if occupancy is not None:
        meta['occupancy'] = {'resolution': occupancy.resolution,
                             'threshold': occupancy.threshold,
                             'decay': occupancy.decay,
                             'update_interval': occupancy.update_interval,
                             'initialized': occupancy.initialized,
                             'aabb': [occupancy.aabb.min.tolist(),
                                      occupancy.aabb.max.tolist()]}
    #
    sections = [_pack_section('meta', KIND_TEXT,
                              yaml.safe_dump(meta, default_flow_style=False).encode('utf-8'))]
    for prefix, module in modules.items():
        for name, value in module.parameters(prefix + '.').items():
            data = np.ascontiguousarray(value, dtype='<f4')
            sections.append(_pack_section(name, KIND_F32, data.tobytes(), data.shape))
    if occupancy is not None:
        bits = np.packbits(occupancy.occupied.ravel())
        sections.append(_pack_section(OCCUPANCY_SECTION, KIND_U8, bits.tobytes(), bits.shape))
    #
    with open(filename, 'wb') as outfile:
        outfile.write(MAGIC + struct.pack('<II', FORMAT_VERSION, len(sections)))
        for section in sections:
            outfile.write(section)
    logger.info('checkpoint saved as: %s', filename)


#
########################################################################
#  Reading
########################################################################


def load_checkpoint(filename):
    r"""
    Reads a checkpoint written by save_checkpoint. Raises CheckpointError
    on a bad magic, an unsupported version or a truncated file.
    """
    try:
        with open(filename, 'rb') as infile:
            content = infile.read()
    except OSError as err:
        raise CheckpointError('could not read checkpoint {}: {}'.format(filename, err))
    #
    if content[:len(MAGIC)] != MAGIC:
        raise CheckpointError('{} is not an ernf checkpoint'.format(filename))
    try:
        version, num_sections = struct.unpack_from('<II', content, len(MAGIC))
        if version != FORMAT_VERSION:
            msg = 'checkpoint version {:d} is not supported (expected {:d})'
            raise CheckpointError(msg.format(version, FORMAT_VERSION))
        pos = len(MAGIC) + 8
        sections = OrderedDict()
        for _ in range(num_sections):
            name, kind, shape, payload, pos = _unpack_section(content, pos)
            sections[name] = (kind, shape, payload)
    except struct.error:
        raise CheckpointError('checkpoint {} is truncated'.format(filename))
    #
    if 'meta' not in sections:
        raise CheckpointError('checkpoint {} has no meta section'.format(filename))
    meta = yaml.safe_load(sections.pop('meta')[2].decode('utf-8')) or {}
    occupancy = None
    params = OrderedDict()
    for name, (kind, shape, payload) in sections.items():
        if name == OCCUPANCY_SECTION:
            resolution = meta['occupancy']['resolution']
            bits = np.frombuffer(payload, dtype=np.uint8)
            occupancy = np.unpackbits(bits)[:resolution**3].astype(bool)
            occupancy = occupancy.reshape((resolution,)*3)
        elif kind == KIND_F32:
            params[name] = np.frombuffer(payload, dtype='<f4').reshape(shape).astype(float)
        else:
            raise CheckpointError('unexpected section kind for ' + name)
    #
    return Checkpoint(meta, params, occupancy)


def _unpack_section(content, pos):
    (name_len,) = struct.unpack_from('<H', content, pos)
    pos += 2
    name = content[pos:pos + name_len].decode('utf-8')
    pos += name_len
    kind, ndim = struct.unpack_from('<BB', content, pos)
    pos += 2
    shape = struct.unpack_from('<{:d}I'.format(ndim), content, pos)
    pos += 4 * ndim
    (length,) = struct.unpack_from('<Q', content, pos)
    pos += 8
    payload = content[pos:pos + length]
    if len(payload) != length:
        raise struct.error('truncated payload')
    return name, kind, tuple(shape), payload, pos + length


def restore_occupancy(ckpt):
    r"""rebuilds the OccupancyGrid stored in a checkpoint, or None"""
    if ckpt.occupancy is None:
        return None
    settings = ckpt.meta['occupancy']
    grid = OccupancyGrid(settings['resolution'], settings['threshold'], settings['decay'],
                         settings['update_interval'], Aabb(*settings['aabb']))
    grid.set_bitmap(ckpt.occupancy)
    grid.initialized = settings['initialized']
    return grid


def restore_fields(ckpt):
    r"""
    Rebuilds the fields stored in a checkpoint.

    Returns
    -------
    head : HeadField
    torso : TorsoField or None
    occupancy : OccupancyGrid or None
    """
    from .train.config import ModelConfig
    if 'model' not in ckpt.meta:
        raise CheckpointError('checkpoint meta has no model description')
    try:
        model = ModelConfig(**ckpt.meta['model'])
    except (TypeError, ValueError) as err:
        raise CheckpointError('invalid model description: {}'.format(err))
    head = model.build_head_field()
    head.load_parameters(ckpt.module_params('head.'))
    torso = None
    if any(key.startswith('torso.') for key in ckpt.params):
        torso = model.build_torso_field()
        torso.load_parameters(ckpt.module_params('torso.'))
    return head, torso, restore_occupancy(ckpt)
