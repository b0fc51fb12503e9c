"""
Handles testing of the head and torso training loops
#
"""
import json
import os
import pytest
import numpy as np
import ernf
from ernf.checkpoint import load_checkpoint, restore_fields
from ernf.train import MetricsLog, train_head, train_torso
from ernf.train.trainer import RayTable, trend_ok


class TestTrainer:
    r"""
    Tests the training loops on a tiny synthetic dataset
    """

    def test_ray_table(self, tiny_dataset):
        rays = RayTable(tiny_dataset, tiny_dataset.train_frames)
        assert rays.rays_per_frame == 256
        assert rays.targets.shape == (10 * 256, 3)
        rng = np.random.default_rng(0)
        (origins, directions, targets, audio, eye), shape = rays.random_patch(4, rng)
        assert shape == (4, 4)
        assert origins.shape == (16, 3) and audio.shape == (16, 32)
        assert np.allclose(np.linalg.norm(directions, axis=1), 1.0)
        # a patch never spans two frames
        assert np.unique(eye).size == 1

    def test_trend_ok(self):
        assert trend_ok([5.0, 4.0, 3.0, 2.0, 1.0])
        assert not trend_ok([1.0, 2.0, 3.0, 4.0, 5.0])
        assert trend_ok([1.0])

    def test_metrics_log(self):
        filename = os.path.join(TEMP_DIR, 'metrics-test.jsonl')
        log = MetricsLog(filename, deterministic=True, overwrite=True)
        log.record(0, 'coarse', 0.5)
        log.record(1, 'fine', 0.25, 21.5)
        with open(filename) as infile:
            lines = [json.loads(line) for line in infile]
        assert [list(entry) for entry in lines] == [['iter', 'stage', 'loss', 'psnr_val',
                                                     'wall_ms']] * 2
        assert lines[1]['psnr_val'] == 21.5 and lines[1]['wall_ms'] is None
        assert log.losses('fine') == [0.25]
        with pytest.raises(FileExistsError):
            MetricsLog(filename)

    def test_zero_iterations(self, tiny_dataset, tiny_config):
        tiny_config.train.update(coarse_iters=0, fine_iters=0)
        out_dir = os.path.join(TEMP_DIR, 'train-zero')
        ckpt_path, metrics = train_head(tiny_dataset, tiny_config, out_dir,
                                        deterministic=True, overwrite=True)
        assert metrics.records == []
        ckpt = load_checkpoint(ckpt_path)
        assert ckpt.kind == 'head'
        fresh = tiny_config.model.build_head_field(tiny_config.train.seed)
        for key, value in fresh.parameters('head.').items():
            assert np.array_equal(ckpt.params[key], value.astype(np.float32))
        #
        with pytest.raises(FileExistsError):
            train_head(tiny_dataset, tiny_config, out_dir)

    def test_head_training(self, tiny_dataset, tiny_config):
        outputs = []
        for run in ('a', 'b'):
            out_dir = os.path.join(TEMP_DIR, 'train-head-' + run)
            ckpt_path, metrics = train_head(tiny_dataset, tiny_config, out_dir,
                                            deterministic=True, overwrite=True)
            with open(ckpt_path, 'rb') as infile:
                ckpt_bytes = infile.read()
            with open(metrics.filename) as infile:
                metric_lines = infile.read()
            outputs.append((ckpt_bytes, metric_lines))
        assert outputs[0] == outputs[1]
        #
        records = metrics.records
        assert [entry['stage'] for entry in records] == ['coarse'] * 3 + ['fine'] * 2
        assert all(np.isfinite(entry['loss']) for entry in records)
        assert records[1]['psnr_val'] is not None
        assert records[0]['psnr_val'] is None
        #
        head, torso, occupancy = restore_fields(load_checkpoint(ckpt_path))
        assert torso is None
        assert occupancy is not None and occupancy.resolution == 4
        assert head.describe()['attention'] == 'channel'

    def test_torso_training(self, tiny_dataset, tiny_config):
        out_dir = os.path.join(TEMP_DIR, 'train-torso')
        tiny_config.train.update(coarse_iters=1, fine_iters=0)
        head_ckpt, _ = train_head(tiny_dataset, tiny_config, out_dir, deterministic=True,
                                  overwrite=True)
        ckpt_path, metrics = train_torso(tiny_dataset, head_ckpt, tiny_config, out_dir,
                                         deterministic=True, overwrite=True)
        assert [entry['stage'] for entry in metrics.records] == ['torso'] * 3
        ckpt = load_checkpoint(ckpt_path)
        assert ckpt.kind == 'full'
        assert ckpt.meta['torso_iterations'] == 3
        # the head is held fixed
        head_params = load_checkpoint(head_ckpt).module_params('head.')
        for key, value in ckpt.module_params('head.').items():
            assert np.array_equal(value, head_params[key])
        _, torso, _ = restore_fields(ckpt)
        assert torso is not None

    def test_missing_head_checkpoint(self, tiny_dataset, tiny_config):
        with pytest.raises(ernf.CheckpointError):
            train_torso(tiny_dataset, os.path.join(TEMP_DIR, 'no-such.ckpt'), tiny_config,
                        os.path.join(TEMP_DIR, 'train-torso-missing'), overwrite=True)
