"""
Handles testing of checkpoint evaluation, ablation summaries and the
diagnostics
#
"""
from collections import OrderedDict
import json
import os
import pytest
import numpy as np
import yaml
import ernf
from ernf.encoding import OccupancyGrid
from ernf.evaluation import (attention_localization, evaluate, mouth_mse, occupancy_image,
                             summarize_ablation, torso_alignment_error, write_ablation,
                             write_report)
from ernf.train import train_head


def ablation_row(backbone, attention, seed, psnr_val, mouth):
    return OrderedDict([('backbone', backbone), ('attention', attention), ('seed', seed),
                        ('num_parameters', 100), ('psnr_val', psnr_val),
                        ('mouth_mse', mouth)])


class TestEvaluation:
    r"""
    Tests the evaluation report and the experiment summaries
    """

    def test_evaluate(self, tiny_dataset, tiny_config):
        tiny_config.train.update(coarse_iters=1, fine_iters=0)
        out_dir = os.path.join(TEMP_DIR, 'eval-run')
        ckpt_path, _ = train_head(tiny_dataset, tiny_config, out_dir, deterministic=True,
                                  overwrite=True)
        report = evaluate(ckpt_path, tiny_dataset, 'val')
        assert [entry['index'] for entry in report['frames']] == [0, 10]
        assert report['kind'] == 'head'
        assert np.isfinite(report['mean_psnr'])
        assert len(evaluate(ckpt_path, tiny_dataset, 'all')['frames']) == 12
        with pytest.raises(ernf.ContractError):
            evaluate(ckpt_path, tiny_dataset, 'test')
        #
        filename = os.path.join(out_dir, 'eval.json')
        write_report(report, filename, overwrite=True)
        with open(filename) as infile:
            assert json.load(infile)['split'] == 'val'

    def test_mouth_mse(self):
        rendered = np.zeros((2, 2, 3))
        target = np.zeros((2, 2, 3))
        target[0, 0] = 0.5
        mask = np.array([[True, False], [False, False]])
        assert mouth_mse(rendered, target, mask) == 0.25
        assert mouth_mse(rendered, target, ~mask) == 0.0
        assert np.isnan(mouth_mse(rendered, target, np.zeros((2, 2), dtype=bool)))

    def test_summarize_ablation(self):
        rows = [ablation_row('trihash', 'channel', 0, 30.0, 0.01),
                ablation_row('hash3d', 'concat', 0, 30.3, 0.02),
                ablation_row('trihash', 'channel', 1, 28.0, 0.01),
                ablation_row('hash3d', 'concat', 1, 29.0, 0.02),
                ablation_row('trihash', 'channel', 2, 30.0, 0.03),
                ablation_row('hash3d', 'concat', 2, 29.0, 0.02)]
        summary = summarize_ablation(rows)
        assert [entry['passed'] for entry in summary['comparisons']] == [True, False, False]
        assert summary['seeds_passed'] == 1
        assert np.isclose(summary['mean_psnr']['trihash_channel'], 88.0 / 3.0)
        assert summary['best'] == 'trihash_channel'
        #
        csv_file, yaml_file = write_ablation(rows, summary, TEMP_DIR, overwrite=True)
        with open(csv_file) as infile:
            lines = infile.read().splitlines()
        assert lines[0] == 'backbone,attention,seed,num_parameters,psnr_val,mouth_mse'
        assert len(lines) == 7
        with open(yaml_file) as infile:
            assert yaml.safe_load(infile)['seeds_passed'] == 1
        with pytest.raises(FileExistsError):
            write_ablation(rows, summary, TEMP_DIR)

    def test_occupancy_image(self):
        grid = OccupancyGrid(resolution=4)
        bitmap = np.zeros((4, 4, 4), dtype=bool)
        bitmap[1, 2, 3] = True
        grid.set_bitmap(bitmap)
        image = occupancy_image(grid, axis=2)
        assert (image.width, image.height) == (4, 4)
        assert np.allclose(image.rgb[2, 1], 0.15)
        assert np.isclose(image.rgb.sum(), 3 * (15 * 1.0 + 0.15))
        with pytest.raises(ernf.ContractError):
            occupancy_image(grid, axis=3)

    def test_attention_localization(self, tiny_dataset, small_head_field):
        report = attention_localization(small_head_field(mode='channel'), tiny_dataset)
        assert set(report) == {'audio_inside', 'audio_outside', 'eye_inside', 'eye_outside',
                               'audio_ratio', 'eye_ratio'}
        assert report['audio_outside'] >= 0.0
        assert 0.0 < report['eye_outside'] < 1.0
        with pytest.raises(ernf.ContractError):
            attention_localization(small_head_field(mode='concat'), tiny_dataset)

    def test_torso_alignment(self, tiny_dataset, tiny_config):
        torso = tiny_config.model.build_torso_field()
        torso.head_mlp.b1[3] = -100.0
        assert torso_alignment_error(torso, tiny_dataset) == float('inf')
        torso.head_mlp.b1[3] = 100.0
        error = torso_alignment_error(torso, tiny_dataset)
        assert np.isfinite(error) and error > 1.0
