"""
================================================================================
Dataset
================================================================================
| Reading and writing synthetic datasets. A dataset directory holds::

    manifest.json
    frames/NNNN.ppm         full frame, torso over head
    frames/NNNN_head.ppm    head alone on white

| The manifest records the format version, camera intrinsics, scene box,
| scene parameters and per frame the image paths, camera pose, head pose,
| audio feature, eye value and split. Every 10th frame is held out for
| validation.

"""
from collections import namedtuple, OrderedDict
import json
import os
import numpy as np
from ..ernf_core import (_get_logger, ContractError, DatasetError, check_overwrite,
                         ordered_map)
from ..geom import Aabb, CameraIntrinsics, FrameBuffer, HeadPose
from .synthetic_scene import AUDIO_DIM, SyntheticScene, condition_trajectory, pose_trajectory

# module globals
logger = _get_logger(__name__)
MANIFEST_NAME = 'manifest.json'
MANIFEST_VERSION = 1
VAL_EVERY = 10


class Frame(namedtuple('Frame', ['index', 'image', 'head_image', 'camera_pose',
                                 'head_pose', 'audio', 'eye', 'split'])):
    r"""
    One dataset frame. Image paths are relative to the dataset root, the
    camera pose maps camera to canonical coordinates and the head pose is
    its inverse.
    """
    __slots__ = ()

    def to_dict(self):
        return OrderedDict([('index', self.index),
                            ('image', self.image),
                            ('head_image', self.head_image),
                            ('camera_pose', self.camera_pose.matrix().tolist()),
                            ('head_pose', self.head_pose.matrix().tolist()),
                            ('audio', [float(val) for val in self.audio]),
                            ('eye', float(self.eye)),
                            ('split', self.split)])


class Dataset(object):
    r"""
    Loaded dataset with lazily read, cached images

    Parameters
    ----------
    root : str
        dataset directory
    intrinsics : CameraIntrinsics
    aabb : Aabb
    frames : list of Frame
    scene_params : dict
        SyntheticScene description used to generate the frames
    """
    def __init__(self, root, intrinsics, aabb, frames, scene_params=None):
        super().__init__()
        self.root = root
        self.intrinsics = intrinsics
        self.aabb = aabb
        self.frames = list(frames)
        self.scene_params = dict(scene_params or {})
        self._images = {}

    def __len__(self):
        return len(self.frames)

    @property
    def train_frames(self):
        return [frame for frame in self.frames if frame.split == 'train']

    @property
    def val_frames(self):
        return [frame for frame in self.frames if frame.split == 'val']

    def scene(self):
        r"""rebuilds the oracle scene from the manifest"""
        return SyntheticScene.from_description(self.scene_params)

    def image(self, frame, head=False):
        r"""returns the (H, W, 3) float image of a frame"""
        path = frame.head_image if head else frame.image
        if path not in self._images:
            self._images[path] = FrameBuffer.read_ppm(os.path.join(self.root, path)).rgb
        return self._images[path]


#
########################################################################
#  Functions
########################################################################


def split_for(index):
    r"""validation holds every 10th frame starting with the first"""
    return 'val' if index % VAL_EVERY == 0 else 'train'


def generate_dataset(scene, n_frames, poses, conditions, out_dir, cam,
                     overwrite=False, num_workers=1):
    r"""
    Renders and writes a dataset.

    Parameters
    ----------
    scene : SyntheticScene
    n_frames : int
        number of frames, at least 2
    poses : sequence of HeadPose
        camera-to-canonical pose of every frame
    conditions : (audio (n, 32), eye (n,))
        condition trajectory
    out_dir : str
        target directory, created when missing
    cam : CameraIntrinsics

    Returns
    -------
    Dataset
    """
    if n_frames < 2:
        raise ContractError('a dataset needs at least 2 frames')
    audio, eye = (np.asarray(val, dtype=float) for val in conditions)
    if len(poses) < n_frames or audio.shape[0] < n_frames or eye.shape[0] < n_frames:
        raise ContractError('pose and condition trajectories are shorter than n_frames')
    if audio.shape[1] != AUDIO_DIM:
        raise ContractError('audio features must have {:d} channels'.format(AUDIO_DIM))
    #
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    check_overwrite(manifest_path, overwrite)
    try:
        os.makedirs(os.path.join(out_dir, 'frames'), exist_ok=True)
    except OSError as err:
        raise DatasetError('could not create dataset directory {}: {}'.format(out_dir, err))
    #
    frames = []
    for index in range(n_frames):
        frames.append(Frame(index, 'frames/{:04d}.ppm'.format(index),
                            'frames/{:04d}_head.ppm'.format(index), poses[index],
                            poses[index].inverse(), audio[index], float(eye[index]),
                            split_for(index)))
    #
    def write_frame(frame):
        head_rgb, _ = scene.head_rgb(cam, frame.camera_pose, frame.audio, frame.eye)
        torso_rgb, alpha = scene.torso_rgba(cam, frame.camera_pose)
        full_rgb = alpha[..., None] * torso_rgb + (1.0 - alpha[..., None]) * head_rgb
        for path, rgb in ((frame.image, full_rgb), (frame.head_image, head_rgb)):
            filename = os.path.join(out_dir, path)
            try:
                FrameBuffer(cam.width, cam.height, rgb).write_ppm(filename, overwrite=overwrite)
            except OSError as err:
                raise DatasetError('could not write {}: {}'.format(filename, err))
    #
    ordered_map(write_frame, frames, num_workers)
    #
    manifest = OrderedDict([
        ('version', MANIFEST_VERSION),
        ('intrinsics', OrderedDict(zip(cam._fields, cam))),
        ('aabb', OrderedDict([('min', scene.aabb.min.tolist()),
                              ('max', scene.aabb.max.tolist())])),
        ('scene', scene.describe()),
        ('frames', [frame.to_dict() for frame in frames]),
    ])
    with open(manifest_path, 'w') as outfile:
        json.dump(manifest, outfile, indent=1)
        outfile.write('\n')
    logger.info('wrote %d frames to %s', n_frames, out_dir)
    return Dataset(out_dir, cam, scene.aabb, frames, scene.describe())


def generate_default_dataset(out_dir, scene_config, seed=0, overwrite=False, num_workers=1):
    r"""
    Generates the synthetic dataset described by a SceneConfig
    """
    cam = CameraIntrinsics.centered(scene_config.width, scene_config.height,
                                    scene_config.fov)
    n_frames = scene_config.frames
    poses = pose_trajectory(n_frames, scene_config.max_angle, scene_config.max_shift,
                            scene_config.pose_varying, seed)
    conditions = condition_trajectory(n_frames, seed)
    return generate_dataset(SyntheticScene(), n_frames, poses, conditions, out_dir, cam,
                            overwrite, num_workers)


def _pose_from(values, label):
    matrix = np.asarray(values, dtype=float)
    if matrix.shape != (4, 4) or not np.all(np.isfinite(matrix)):
        raise DatasetError('{} must be a finite 4x4 matrix'.format(label))
    try:
        return HeadPose.from_matrix(matrix)
    except ContractError as err:
        raise DatasetError('{}: {}'.format(label, err))


def load_dataset(root):
    r"""
    Loads and validates a dataset directory. The error names the first
    violation found.
    """
    manifest_path = os.path.join(root, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise DatasetError('manifest not found: ' + manifest_path)
    try:
        with open(manifest_path, 'r') as infile:
            manifest = json.load(infile)
    except (OSError, ValueError) as err:
        raise DatasetError('could not read {}: {}'.format(manifest_path, err))
    #
    if manifest.get('version') != MANIFEST_VERSION:
        msg = 'unsupported manifest version {} in {}'
        raise DatasetError(msg.format(manifest.get('version'), manifest_path))
    try:
        cam = CameraIntrinsics(**manifest['intrinsics'])
        aabb = Aabb(manifest['aabb']['min'], manifest['aabb']['max'])
    except (KeyError, TypeError, ContractError) as err:
        raise DatasetError('invalid intrinsics or aabb in {}: {}'.format(manifest_path, err))
    #
    frames = []
    for entry in manifest.get('frames', []):
        label = 'frame {}'.format(entry.get('index'))
        for key in ('image', 'head_image'):
            path = os.path.join(root, entry.get(key, ''))
            if not os.path.isfile(path):
                raise DatasetError('{}: missing image file {}'.format(label, path))
        audio = np.asarray(entry.get('audio', []), dtype=float)
        if audio.shape != (AUDIO_DIM,):
            msg = '{}: audio feature has dimension {:d}, expected {:d}'
            raise DatasetError(msg.format(label, audio.size, AUDIO_DIM))
        if not np.all(np.isfinite(audio)):
            raise DatasetError('{}: audio feature is not finite'.format(label))
        eye = float(entry.get('eye', float('nan')))
        if not 0.0 <= eye <= 1.0:
            raise DatasetError('{}: eye value {} outside [0, 1]'.format(label, eye))
        camera_pose = _pose_from(entry.get('camera_pose'), label + ' camera_pose')
        head_pose = _pose_from(entry.get('head_pose'), label + ' head_pose')
        split = entry.get('split')
        if split not in ('train', 'val'):
            raise DatasetError('{}: unknown split {}'.format(label, split))
        frames.append(Frame(int(entry['index']), entry['image'], entry['head_image'],
                            camera_pose, head_pose, audio, eye, split))
    #
    if len(frames) < 2:
        raise DatasetError('dataset {} holds fewer than 2 frames'.format(root))
    if not any(frame.split == 'val' for frame in frames):
        raise DatasetError('dataset {} has no validation frame'.format(root))
    logger.debug('loaded %d frames from %s', len(frames), root)
    return Dataset(root, cam, aabb, frames, manifest.get('scene'))
