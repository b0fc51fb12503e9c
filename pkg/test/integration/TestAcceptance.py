"""
Handles testing of a complete desk scale run on the synthetic scene
#
"""
import os
import time
import pytest
import numpy as np
import ernf
from ernf.evaluation import attention_localization, evaluate, torso_alignment_error
from ernf.scene import generate_default_dataset
from ernf.train import RunConfig, SceneConfig, train_head, train_torso

DESK_BUDGET_SECONDS = 20 * 60


@pytest.fixture(scope='module')
def desk_run(setup_temp_directory):
    r"""
    Generates the default 128 x 128 pose varying dataset and trains the head
    field with the desk profile once for the whole module
    """
    data_dir = os.path.join(setup_temp_directory, 'desk-data')
    run_dir = os.path.join(setup_temp_directory, 'desk-run')
    num_workers = ernf.get_num_workers()
    dataset = generate_default_dataset(data_dir, SceneConfig(), seed=7, overwrite=True,
                                       num_workers=num_workers)
    config = RunConfig('desk', train={'seed': 7})
    start = time.perf_counter()
    head_ckpt, metrics = train_head(dataset, config, run_dir, overwrite=True)
    elapsed = time.perf_counter() - start
    return {'dataset': dataset, 'config': config, 'run_dir': run_dir,
            'head_ckpt': head_ckpt, 'metrics': metrics, 'elapsed': elapsed}


@pytest.mark.slow
class TestAcceptance:
    r"""
    Trains the desk profile end to end and checks the quality thresholds
    """

    def test_head_quality(self, desk_run):
        assert desk_run['elapsed'] <= DESK_BUDGET_SECONDS
        report = evaluate(desk_run['head_ckpt'], desk_run['dataset'], 'val',
                          num_workers=ernf.get_num_workers())
        assert report['mean_psnr'] >= 28.0
        #
        stages = [entry['stage'] for entry in desk_run['metrics'].records]
        assert stages.count('coarse') == 2000 and stages.count('fine') == 500

    def test_zero_gates_on_trained_field(self, desk_run):
        ckpt = ernf.load_checkpoint(desk_run['head_ckpt'])
        head, _, _ = ernf.restore_fields(ckpt)
        rng = np.random.default_rng(11)
        x = rng.uniform(0.3, 0.7, (64, 3))
        d = np.tile([0.0, 0.0, 1.0], (64, 1))
        head.zero_gates = True
        first = head.forward(x, d, rng.normal(size=32), 0.1)
        second = head.forward(x, d, rng.normal(size=32), 0.9)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])

    def test_attention_localization(self, desk_run):
        ckpt = ernf.load_checkpoint(desk_run['head_ckpt'])
        head, _, _ = ernf.restore_fields(ckpt)
        report = attention_localization(head, desk_run['dataset'])
        assert report['audio_ratio'] >= 2.0
        assert report['eye_ratio'] >= 2.0

    def test_torso_alignment(self, desk_run):
        full_ckpt, _ = train_torso(desk_run['dataset'], desk_run['head_ckpt'],
                                   desk_run['config'], desk_run['run_dir'], overwrite=True)
        _, torso, _ = ernf.restore_fields(ernf.load_checkpoint(full_ckpt))
        assert torso is not None
        assert torso_alignment_error(torso, desk_run['dataset']) <= 2.0
