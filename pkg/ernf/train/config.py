"""
================================================================================
Configuration
================================================================================
| Structured run configuration read from TOML. Every field is optional and
| falls back to the documented default of its section. A profile selects a
| set of defaults for training scale: desk (minutes on a workstation) or
| full (the long schedule, far too slow for a CPU). Files ending in .yaml or
| .yml are read with PyYAML and hold the same tables.

| Example file::

    profile = "desk"

    [train]
    coarse_iters = 1000
    lr_grid = 0.01

    [model]
    backbone = "trihash"
    attention = "channel"

    [scene]
    width = 96

"""
from collections import OrderedDict
import os
import sys
import yaml
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from ..ernf_core import _get_logger, ContractError, make_rng
from ..encoding.hash_grid import HashGridConfig
from ..encoding.occupancy import OccupancyGrid
from ..encoding.tri_plane import build_encoder, BACKBONES
from ..networks.head_field import HeadField
from ..networks.region_attention import ATTENTION_MODES
from ..networks.torso_field import TorsoField

# module globals
logger = _get_logger(__name__)
PROFILES = OrderedDict([
    ('desk', {'train': {}}),
    ('full', {'train': {'coarse_iters': 100000, 'fine_iters': 25000,
                         'torso_iters': 100000, 'rays_per_batch': 65536}}),
])
SEED_STREAMS = {'head_init': 0, 'torso_init': 1, 'batches': 2, 'jitter': 3,
                'occupancy': 4, 'scene': 5}


class ConfigSection(OrderedDict):
    r"""
    Ordered mapping of configuration values with attribute access. Keys are
    restricted to those of DEFAULTS and values are coerced to the type of
    their default.
    """
    name = 'section'
    DEFAULTS = OrderedDict()

    def __init__(self, **kwargs):
        super().__init__()
        for key, value in self.DEFAULTS.items():
            self[key] = value
        self.update(kwargs)

    def __getattr__(self, key):
        try:
            return self[key]
        except KeyError:
            raise AttributeError(key)

    def update(self, values=None, **kwargs):
        r"""
        Sets values after checking the keys and converting types
        """
        values = dict(values or {}, **kwargs)
        for key, value in values.items():
            if key not in self.DEFAULTS:
                msg = 'unknown {} config key: {}'
                raise ContractError(msg.format(self.name, key))
            default = self.DEFAULTS[key]
            try:
                if isinstance(default, bool):
                    value = bool(value)
                elif isinstance(default, (int, float)):
                    value = type(default)(value)
                elif isinstance(default, str):
                    value = str(value)
            except (TypeError, ValueError):
                msg = 'invalid value for {}.{}: {!r}'
                raise ContractError(msg.format(self.name, key, value))
            self[key] = value
        #
        self.validate()

    def validate(self):
        r"""checks value ranges, overridden by sections"""
        pass

    def to_dict(self):
        r"""returns a plain dict for serialization"""
        return dict(self)


class TrainConfig(ConfigSection):
    r"""
    Optimization schedule and sampling parameters. The defaults are the desk
    profile.
    """
    name = 'train'
    DEFAULTS = OrderedDict([
        ('coarse_iters', 2000),
        ('fine_iters', 500),
        ('torso_iters', 1000),
        ('rays_per_batch', 1024),
        ('patch_size', 32),
        ('lr_grid', 0.01),
        ('lr_mlp', 0.001),
        ('perceptual_weight', 0.01),
        ('weight_decay', 1e-4),
        ('beta1', 0.9),
        ('beta2', 0.99),
        ('eps', 1e-8),
        ('num_samples', 16),
        ('seed', 0),
        ('log_interval', 50),
        ('val_interval', 250),
        ('val_frames', 2),
        ('grad_chunk', 128),
        ('use_occupancy', True),
        ('occupancy_resolution', 32),
        ('occupancy_threshold', 0.01),
        ('occupancy_decay', 0.95),
        ('occupancy_interval', 16),
        ('occupancy_conditions', 2),
    ])

    def validate(self):
        for key in ('coarse_iters', 'fine_iters', 'torso_iters', 'seed'):
            if self[key] < 0:
                raise ContractError('train.{} must be >= 0'.format(key))
        for key in ('rays_per_batch', 'patch_size', 'num_samples', 'log_interval',
                    'val_interval', 'grad_chunk', 'occupancy_resolution',
                    'occupancy_interval', 'occupancy_conditions'):
            if self[key] < 1:
                raise ContractError('train.{} must be >= 1'.format(key))
        for key in ('lr_grid', 'lr_mlp', 'perceptual_weight', 'weight_decay', 'eps'):
            if self[key] < 0:
                raise ContractError('train.{} must be >= 0'.format(key))
        if not (0.0 <= self['beta1'] < 1.0 and 0.0 <= self['beta2'] < 1.0):
            raise ContractError('train betas must lie in [0, 1)')

    def build_occupancy(self, aabb=None):
        r"""returns an OccupancyGrid or None when skipping is disabled"""
        if not self['use_occupancy']:
            return None
        return OccupancyGrid(self['occupancy_resolution'], self['occupancy_threshold'],
                             self['occupancy_decay'], self['occupancy_interval'], aabb)


class ModelConfig(ConfigSection):
    r"""
    Field architecture: backbone, attention mode, grid layout and widths
    """
    name = 'model'
    DEFAULTS = OrderedDict([
        ('backbone', 'trihash'),
        ('attention', 'channel'),
        ('levels', 14),
        ('features', 1),
        ('table_size_log2', 14),
        ('res_min', 64),
        ('res_max', 512),
        ('equal_budget', False),
        ('hidden_dim', 64),
        ('latent_dim', 32),
        ('audio_hidden', 64),
        ('eye_hidden', 16),
        ('detach_geometry', False),
        ('torso_levels', 8),
        ('torso_features', 2),
        ('torso_res_min', 16),
        ('torso_res_max', 256),
        ('torso_hidden', 64),
    ])

    def validate(self):
        if self['backbone'] not in BACKBONES:
            msg = 'model.backbone must be one of {}'
            raise ContractError(msg.format(', '.join(BACKBONES)))
        if self['attention'] not in ATTENTION_MODES:
            msg = 'model.attention must be one of {}'
            raise ContractError(msg.format(', '.join(ATTENTION_MODES)))

    def build_head_field(self, seed=0):
        r"""returns a freshly initialized HeadField"""
        rng = make_rng(seed, SEED_STREAMS['head_init'])
        encoder = build_encoder(self['backbone'], self['levels'], self['features'],
                                self['table_size_log2'], self['res_min'], self['res_max'],
                                self['equal_budget'], rng)
        return HeadField(encoder, self['attention'], self['hidden_dim'], self['latent_dim'],
                         self['audio_hidden'], self['eye_hidden'], self['detach_geometry'],
                         rng)

    def build_torso_field(self, seed=0):
        r"""returns a freshly initialized TorsoField"""
        rng = make_rng(seed, SEED_STREAMS['torso_init'])
        grid = HashGridConfig(self['torso_levels'], self['torso_features'],
                              self['table_size_log2'], self['torso_res_min'],
                              self['torso_res_max'], dims=2)
        return TorsoField(grid, self['torso_hidden'], rng=rng)


class SceneConfig(ConfigSection):
    r"""
    Synthetic dataset parameters
    """
    name = 'scene'
    DEFAULTS = OrderedDict([
        ('width', 128),
        ('height', 128),
        ('fov', 30.0),
        ('frames', 60),
        ('pose_varying', True),
        ('max_angle', 8.0),
        ('max_shift', 0.08),
    ])

    def validate(self):
        if self['width'] < 1 or self['height'] < 1:
            raise ContractError('scene image size must be positive')
        if self['frames'] < 2:
            raise ContractError('scene.frames must be >= 2')


class RunConfig(object):
    r"""
    Complete configuration: profile name plus train, model and scene
    sections
    """
    sections = OrderedDict([('train', TrainConfig), ('model', ModelConfig),
                            ('scene', SceneConfig)])

    def __init__(self, profile='desk', **sections):
        super().__init__()
        if profile not in PROFILES:
            msg = 'unknown profile {}, expected one of {}'
            raise ContractError(msg.format(profile, ', '.join(PROFILES)))
        self.profile = profile
        for name, section_class in self.sections.items():
            values = dict(PROFILES[profile].get(name, {}))
            values.update(sections.get(name) or {})
            setattr(self, name, section_class(**values))

    def to_dict(self):
        r"""returns the configuration as plain nested dicts"""
        content = {'profile': self.profile}
        for name in self.sections:
            content[name] = getattr(self, name).to_dict()
        return content


#
########################################################################
#  Functions
########################################################################


def read_config_file(filename):
    r"""
    Parses a TOML configuration file, or a YAML one when the name ends in
    .yaml or .yml, and returns its content as a dict
    """
    if not os.path.isfile(filename):
        raise ContractError('config file not found: ' + filename)
    if os.path.splitext(filename)[1].lower() in ('.yaml', '.yml'):
        with open(filename, 'r') as infile:
            try:
                return yaml.safe_load(infile) or {}
            except yaml.YAMLError as err:
                raise ContractError('could not parse {}: {}'.format(filename, err))
    #
    with open(filename, 'rb') as infile:
        try:
            return tomllib.load(infile)
        except tomllib.TOMLDecodeError as err:
            raise ContractError('could not parse {}: {}'.format(filename, err))


def load_config(filename=None, profile=None):
    r"""
    Reads a configuration file. Missing sections and keys take their
    defaults, an explicit profile argument overrides the file's.
    """
    content = {}
    if filename:
        content = read_config_file(filename)
        if not isinstance(content, dict):
            raise ContractError('config file must hold a mapping: ' + filename)
        logger.debug('read configuration from %s', filename)
    #
    unknown = set(content) - set(RunConfig.sections) - {'profile'}
    if unknown:
        raise ContractError('unknown config sections: ' + ', '.join(sorted(unknown)))
    profile = profile or content.get('profile', 'desk')
    sections = {name: content.get(name) for name in RunConfig.sections}
    return RunConfig(profile, **sections)
