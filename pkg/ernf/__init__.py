"""
Imports the public classes and configures package logging.
#
"""
#
import logging.config as _logging_config
import os as _os
from .ernf_core import ErnfError, ContractError, DegeneratePoseError, NonFiniteError
from .ernf_core import DatasetError, CheckpointError, TrainingAbort
from .ernf_core import _get_logger, set_main_logger_level, get_num_workers
from .geom import Aabb, Ray, CameraIntrinsics, HeadPose, FrameBuffer, ray_for_pixel
from .geom import normalize_to_unit_cube, psnr
from . import encoding
from . import networks
from . import scene
from . import train
from .render import RaySamples, stratified_samples, composite, render_frame
from .checkpoint import save_checkpoint, load_checkpoint, restore_fields


__version__ = '0.1.0'


# reading logging config
_config_file = _os.path.join(_os.path.dirname(__file__), 'logging.conf')
_logging_config.fileConfig(_config_file, disable_existing_loggers=False)
