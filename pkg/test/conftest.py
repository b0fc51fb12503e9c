from os import path, mkdir
import pytest
from shutil import rmtree
import numpy as np
import ernf
from ernf.encoding.tri_plane import build_encoder
from ernf.networks.head_field import HeadField
from ernf.scene import SyntheticScene, generate_dataset, pose_trajectory, condition_trajectory
from ernf.train import RunConfig


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False,
                     help='runs the full desk scale training tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def test_root_directory(request):
    r"""
    Defines TEST_ROOT global
    """
    test_root = path.dirname(path.realpath(__file__))
    request.function.__globals__['TEST_ROOT'] = test_root


@pytest.fixture(autouse=True)
def fixtures_directory(request):
    r"""
    Defines FIXTURE_DIR global for loading files
    """
    fixture_dir = path.join(path.dirname(path.realpath(__file__)), 'fixtures')
    request.function.__globals__['FIXTURE_DIR'] = fixture_dir


@pytest.fixture(scope='session')
def setup_temp_directory(request):
    r"""
    Defines TEMP_DIR global for saving files
    """
    temp_dir = path.join(path.dirname(path.realpath(__file__)), 'temp')
    try:
        mkdir(temp_dir)
    except FileExistsError:
        pass

    def clean():
        rmtree(temp_dir, ignore_errors=True)

    request.addfinalizer(clean)
    #
    return temp_dir


@pytest.fixture(scope='function', autouse=True)
def temp_directory(request, setup_temp_directory):
    r"""
    Defines TEMP_DIR global for saving files
    """
    request.function.__globals__['TEMP_DIR'] = setup_temp_directory


@pytest.fixture(scope='session')
def tiny_dataset(setup_temp_directory):
    r"""
    Renders a 12 frame 16 x 16 synthetic dataset once per session, frames 0
    and 10 are validation frames
    """
    out_dir = path.join(setup_temp_directory, 'tiny-dataset')
    cam = ernf.CameraIntrinsics.centered(16, 16, 30.0)
    poses = pose_trajectory(12, seed=3)
    conditions = condition_trajectory(12, seed=3)
    return generate_dataset(SyntheticScene(), 12, poses, conditions, out_dir, cam,
                            overwrite=True)


@pytest.fixture
def tiny_config():
    r"""
    Returns a RunConfig small enough to train in a few seconds
    """
    train = {'coarse_iters': 3, 'fine_iters': 2, 'torso_iters': 3, 'rays_per_batch': 32,
             'patch_size': 4, 'num_samples': 4, 'val_interval': 2, 'val_frames': 1,
             'log_interval': 1, 'grad_chunk': 16, 'occupancy_resolution': 4,
             'occupancy_interval': 2, 'occupancy_conditions': 2}
    model = {'levels': 2, 'features': 1, 'table_size_log2': 8, 'res_min': 2, 'res_max': 8,
             'hidden_dim': 8, 'latent_dim': 4, 'audio_hidden': 4, 'eye_hidden': 4,
             'torso_levels': 2, 'torso_features': 1, 'torso_res_min': 2,
             'torso_res_max': 8, 'torso_hidden': 8}
    return RunConfig('desk', train=train, model=model)


@pytest.fixture
def small_head_field():
    r"""
    Returns a factory building small randomized head fields
    """
    def factory(backbone='trihash', mode='channel', seed=0, table_scale=1.0):
        rng = np.random.default_rng(seed)
        encoder = build_encoder(backbone, levels=2, features=2, table_size_log2=6,
                                res_min=2, res_max=6, rng=rng)
        field = HeadField(encoder, mode, hidden_dim=8, latent_dim=4, audio_hidden=6,
                          eye_hidden=4, rng=rng)
        for name, value in field.parameters().items():
            if name.endswith('tables'):
                value[...] = rng.uniform(-table_scale, table_scale, value.shape)
        return field

    return factory
