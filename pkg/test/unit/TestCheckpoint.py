"""
Handles testing of checkpoint writing and reading
#
"""
from collections import OrderedDict
import os
import struct
import pytest
import numpy as np
import ernf
from ernf.checkpoint import (FORMAT_VERSION, MAGIC, load_checkpoint, restore_fields,
                             restore_occupancy, save_checkpoint)
from ernf.encoding import OccupancyGrid


def write_checkpoint(config, name, occupancy=None, torso=False):
    head = config.model.build_head_field(seed=1)
    modules = OrderedDict([('head', head)])
    if torso:
        modules['torso'] = config.model.build_torso_field(seed=1)
    meta = {'kind': 'full' if torso else 'head', 'model': config.model.to_dict()}
    filename = os.path.join(TEMP_DIR, name)
    save_checkpoint(filename, meta, modules, occupancy, overwrite=True)
    return filename, modules


class TestCheckpoint:
    r"""
    Tests the binary checkpoint format and field restoration
    """

    def test_round_trip(self, tiny_config):
        occupancy = OccupancyGrid(resolution=4)
        bitmap = np.zeros((4, 4, 4), dtype=bool)
        bitmap[1:3, 0, 2] = True
        occupancy.set_bitmap(bitmap)
        filename, modules = write_checkpoint(tiny_config, 'round-trip.ckpt', occupancy,
                                             torso=True)
        ckpt = load_checkpoint(filename)
        assert ckpt.kind == 'full'
        assert ckpt.meta['occupancy']['resolution'] == 4
        assert np.array_equal(ckpt.occupancy, bitmap)
        for prefix, module in modules.items():
            for key, value in module.parameters(prefix + '.').items():
                assert np.array_equal(ckpt.params[key], value.astype(np.float32))
        #
        head, torso, grid = restore_fields(ckpt)
        assert head.num_parameters() == modules['head'].num_parameters()
        assert np.allclose(head.density_mlp.W0, modules['head'].density_mlp.W0, rtol=1e-6)
        assert torso is not None
        assert grid.initialized and np.array_equal(grid.occupied, bitmap)
        #
        with pytest.raises(FileExistsError):
            save_checkpoint(filename, {}, modules)

    def test_without_occupancy(self, tiny_config):
        filename, _ = write_checkpoint(tiny_config, 'no-grid.ckpt')
        ckpt = load_checkpoint(filename)
        assert ckpt.occupancy is None and restore_occupancy(ckpt) is None
        _, torso, _ = restore_fields(ckpt)
        assert torso is None

    def test_bad_magic(self):
        filename = os.path.join(TEMP_DIR, 'bad-magic.ckpt')
        with open(filename, 'wb') as outfile:
            outfile.write(b'NOTACKPT' + bytes(16))
        with pytest.raises(ernf.CheckpointError):
            load_checkpoint(filename)
        with pytest.raises(ernf.CheckpointError):
            load_checkpoint(os.path.join(TEMP_DIR, 'absent.ckpt'))

    def test_version(self, tiny_config):
        filename, _ = write_checkpoint(tiny_config, 'version.ckpt')
        with open(filename, 'rb') as infile:
            content = bytearray(infile.read())
        content[len(MAGIC):len(MAGIC) + 4] = struct.pack('<I', FORMAT_VERSION + 1)
        with open(filename, 'wb') as outfile:
            outfile.write(content)
        with pytest.raises(ernf.CheckpointError) as err:
            load_checkpoint(filename)
        assert 'version' in str(err.value)

    def test_truncated(self, tiny_config):
        filename, _ = write_checkpoint(tiny_config, 'truncated.ckpt')
        with open(filename, 'rb') as infile:
            content = infile.read()
        with open(filename, 'wb') as outfile:
            outfile.write(content[:-10])
        with pytest.raises(ernf.CheckpointError) as err:
            load_checkpoint(filename)
        assert 'truncated' in str(err.value)

    def test_restore_errors(self, tiny_config):
        filename, modules = write_checkpoint(tiny_config, 'restore.ckpt')
        ckpt = load_checkpoint(filename)
        with pytest.raises(ernf.CheckpointError):
            restore_fields(ckpt._replace(meta={'kind': 'head'}))
        params = OrderedDict(ckpt.params)
        params.pop('head.density_mlp.W0')
        with pytest.raises(ernf.CheckpointError):
            restore_fields(ckpt._replace(params=params))
        # a different architecture does not fit the stored tensors
        meta = dict(ckpt.meta, model=dict(ckpt.meta['model'], hidden_dim=16))
        with pytest.raises(ernf.CheckpointError):
            restore_fields(ckpt._replace(meta=meta))
