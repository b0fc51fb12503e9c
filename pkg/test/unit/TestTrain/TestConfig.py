"""
Handles testing of the run configuration
#
"""
import os
import pytest
import yaml
import ernf
from ernf.train import RunConfig, TrainConfig, ModelConfig, load_config


class TestConfig:
    r"""
    Tests defaults, profiles, validation and the file loader
    """

    def test_defaults(self):
        config = RunConfig()
        assert config.profile == 'desk'
        assert config.train.coarse_iters == 2000
        assert config.model.backbone == 'trihash'
        assert config.model.attention == 'channel'
        assert config.scene.width == 128
        assert set(config.to_dict()) == {'profile', 'train', 'model', 'scene'}

    def test_profiles(self):
        config = RunConfig('full')
        assert config.train.coarse_iters == 100000
        assert config.train.rays_per_batch == 65536
        config = RunConfig('full', train={'coarse_iters': 10})
        assert config.train.coarse_iters == 10
        with pytest.raises(ernf.ContractError):
            RunConfig('huge')

    def test_validation(self):
        section = TrainConfig(coarse_iters='7')
        assert section.coarse_iters == 7
        with pytest.raises(ernf.ContractError):
            TrainConfig(num_iters=3)
        with pytest.raises(ernf.ContractError):
            TrainConfig(lr_grid='fast')
        with pytest.raises(ernf.ContractError):
            TrainConfig(rays_per_batch=0)
        with pytest.raises(ernf.ContractError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ernf.ContractError):
            ModelConfig(backbone='mlp')
        with pytest.raises(ernf.ContractError):
            ModelConfig(attention='spatial')
        with pytest.raises(AttributeError):
            ModelConfig().missing_key

    def test_load_config(self):
        filename = os.path.join(TEMP_DIR, 'run-config.toml')
        with open(filename, 'w') as outfile:
            outfile.write('profile = "full"\n\n'
                          '[train]\nfine_iters = 5\nlr_mlp = 0.002\n\n'
                          '[model]\nbackbone = "hash3d"\nattention = "concat"\n')
        #
        config = load_config(filename)
        assert config.profile == 'full'
        assert config.train.coarse_iters == 100000
        assert config.train.fine_iters == 5
        assert config.train.lr_mlp == 0.002
        assert config.model.backbone == 'hash3d'
        assert load_config(filename, profile='desk').train.coarse_iters == 2000
        assert load_config().profile == 'desk'
        #
        with open(filename, 'w') as outfile:
            outfile.write('[optimizer]\nlr = 1.0\n')
        with pytest.raises(ernf.ContractError):
            load_config(filename)
        with open(filename, 'w') as outfile:
            outfile.write('[train\ncoarse_iters = 3\n')
        with pytest.raises(ernf.ContractError):
            load_config(filename)
        with pytest.raises(ernf.ContractError):
            load_config(os.path.join(TEMP_DIR, 'missing.toml'))

    def test_partial_toml_defaults(self):
        filename = os.path.join(TEMP_DIR, 'partial.toml')
        with open(filename, 'w') as outfile:
            outfile.write('[train]\nrays_per_batch = 512\n\n[scene]\nframes = 12\n')
        config = load_config(filename)
        assert config.profile == 'desk'
        assert config.train.rays_per_batch == 512
        assert config.train.coarse_iters == 2000
        assert config.train.fine_iters == 500
        assert config.model.to_dict() == ModelConfig().to_dict()
        assert config.scene.frames == 12
        assert config.scene.width == 128
        #
        with open(filename, 'w') as outfile:
            outfile.write('[train]\nbeta1 = 1.5\n')
        with pytest.raises(ernf.ContractError):
            load_config(filename)

    def test_yaml_config(self):
        filename = os.path.join(TEMP_DIR, 'run-config.yaml')
        with open(filename, 'w') as outfile:
            yaml.safe_dump({'model': {'attention': 'feature'}}, outfile)
        config = load_config(filename)
        assert config.model.attention == 'feature'
        assert config.train.coarse_iters == 2000
        with open(filename, 'w') as outfile:
            outfile.write('- just\n- a list\n')
        with pytest.raises(ernf.ContractError):
            load_config(filename)

    def test_fixture_file(self):
        config = load_config(os.path.join(FIXTURE_DIR, 'desk-run.toml'))
        assert config.profile == 'desk'
        assert config.model.levels == 4
        assert config.scene.frames == 20

    def test_builders(self, tiny_config):
        field = tiny_config.model.build_head_field(seed=2)
        again = tiny_config.model.build_head_field(seed=2)
        for key, value in field.parameters().items():
            assert (value == again.parameters()[key]).all()
        assert tiny_config.train.build_occupancy().resolution == 4
        assert TrainConfig(use_occupancy=False).build_occupancy() is None
        torso = tiny_config.model.build_torso_field()
        assert torso.tex_grid.config.levels == 2
