"""
================================================================================
Torso Field
================================================================================
| Two dimensional deformable field of the torso. Trainable key points are
| carried from the canonical head space into the camera frame, projected on
| the plane z = 1 and fed with the pixel coordinate to a deformation network.
| The deformed coordinate is hash encoded and decoded into a color and an
| alpha value.

"""
import numpy as np
from ..ernf_core import (_get_logger, ParameterModule, DegeneratePoseError,
                         check_finite, sub_grads)
from ..encoding.hash_grid import HashGrid, HashGridConfig
from .dense import DenseStack

# module globals
logger = _get_logger(__name__)
MIN_KEY_DEPTH = 1e-4
DEFORM_RANGE = (-0.5, 1.5)
DEFAULT_KEYS = ((0.0, -0.5, 0.3),
                (-0.2, -0.6, 0.3),
                (0.2, -0.6, 0.3))


class KeyPoints(ParameterModule):
    r"""
    Trainable canonical key points and projection scale gamma. Only the
    ordinary coordinates are stored, the homogeneous coordinate is fixed
    at one.
    """
    _param_names = ('X_keys', 'gamma')

    def __init__(self, points=DEFAULT_KEYS, gamma=1.0):
        super().__init__()
        self.X_keys = np.array(points, dtype=float).reshape(-1, 3)
        self.gamma = np.array([gamma], dtype=float)

    @property
    def num_keys(self):
        return self.X_keys.shape[0]

    def homogeneous(self):
        r"""returns the 4 x N matrix of homogeneous key point columns"""
        return np.vstack([self.X_keys.T, np.ones(self.num_keys)])

    def project(self, pose):
        r"""
        Adaptive pose encoding.

        Parameters
        ----------
        pose : HeadPose
            pose of the camera in canonical head space, the key points are
            carried into the camera frame by its inverse

        Returns
        -------
        xbar : (2, N) projected key points
        cache : tape for project_backward
        """
        offset = self.X_keys - pose.t
        x_hat = offset @ pose.R
        depth = x_hat[:, 2]
        if np.any(np.abs(depth) <= MIN_KEY_DEPTH):
            msg = 'key point depth {:.3g} is too close to the projection plane'
            raise DegeneratePoseError(msg.format(np.min(np.abs(depth))))
        xbar = self.gamma[0] * (x_hat[:, :2] / depth[:, None]).T
        return xbar, {'pose': pose, 'offset': offset, 'x_hat': x_hat}

    def project_backward(self, cache, d_xbar, grads=None):
        r"""
        Adjoint of project.

        Returns
        -------
        grads : gradients of X_keys and gamma
        d_pose : (dR, dt) gradients with respect to the pose
        """
        if grads is None:
            grads = self.zero_grads()
        pose, offset, x_hat = cache['pose'], cache['offset'], cache['x_hat']
        d_xbar = np.asarray(d_xbar, dtype=float).T
        gamma = self.gamma[0]
        depth = x_hat[:, 2:3]
        planar = x_hat[:, :2] / depth
        #
        grads['gamma'] += np.sum(d_xbar * planar)
        d_hat = np.empty(x_hat.shape)
        d_hat[:, :2] = gamma * d_xbar / depth
        d_hat[:, 2] = -gamma * np.sum(d_xbar * planar, axis=1) / depth[:, 0]
        #
        d_keys = d_hat @ pose.R.T
        grads['X_keys'] += d_keys
        d_R = offset.T @ d_hat
        d_t = -d_keys.sum(axis=0)
        return grads, (d_R, d_t)


def adaptive_pose_encoding(keys, pose):
    r"""returns the (2, N) projected key points for a pose"""
    return keys.project(pose)[0]


class TorsoField(ParameterModule):
    r"""
    Torso field F^T

    Parameters
    ----------
    grid_config : HashGridConfig, optional
        2-d texture grid layout
    hidden_dim : int
        hidden width of the deformation and output networks
    keys : KeyPoints, optional
        key points, defaults to three points below the head
    rng : numpy.random.Generator, optional
        initialization source
    """
    _child_names = ('keys', 'deform_mlp', 'tex_grid', 'head_mlp')

    def __init__(self, grid_config=None, hidden_dim=64, keys=None, rng=None):
        super().__init__()
        rng = np.random.default_rng(0) if rng is None else rng
        if grid_config is None:
            grid_config = HashGridConfig(levels=8, features=2, table_size_log2=14,
                                         res_min=16, res_max=256, dims=2)
        self.keys = KeyPoints() if keys is None else keys
        key_dim = 2 * self.keys.num_keys
        self.deform_mlp = DenseStack([2 + key_dim, hidden_dim, 2], ['relu', 'none'], rng)
        self.tex_grid = HashGrid(grid_config, rng)
        self.head_mlp = DenseStack([grid_config.output_dim, hidden_dim, 4],
                                   ['relu', 'sigmoid'], rng)

    def forward(self, x_pixel, xbar):
        r"""
        Evaluates the torso at normalized pixel coordinates.

        Parameters
        ----------
        x_pixel : (B, 2) pixel coordinates in [0, 1]
        xbar : (2, N) projected key points shared by all pixels

        Returns
        -------
        rgb : (B, 3), alpha : (B,), cache
        """
        x_pixel = np.atleast_2d(np.asarray(x_pixel, dtype=float))
        count = x_pixel.shape[0]
        keys_in = np.broadcast_to(np.asarray(xbar, dtype=float).ravel(),
                                  (count, self.deform_mlp.input_dim - 2))
        offset, deform_cache = self.deform_mlp.forward(np.concatenate([x_pixel, keys_in], axis=1))
        check_finite(offset, 'torso_field.deform_mlp')
        deformed = x_pixel + offset
        low, high = DEFORM_RANGE
        outside = (deformed < low) | (deformed > high)
        if np.any(outside):
            logger.debug('clamped %d deformed torso coordinates', int(outside.sum()))
            deformed = np.clip(deformed, low, high)
        #
        features, tex_cache = self.tex_grid.encode((deformed - low) / (high - low))
        out, head_cache = self.head_mlp.forward(features)
        check_finite(out, 'torso_field.head_mlp')
        cache = {'deform': deform_cache, 'tex': tex_cache, 'head': head_cache,
                 'outside': outside, 'clamped': bool(np.any(outside))}
        return out[:, :3], out[:, 3], cache

    def backward(self, cache, d_rgb, d_alpha, grads=None):
        r"""
        Adjoint of forward.

        Returns
        -------
        grads : gradients of the networks and texture grid
        d_xbar : (2, N) gradient with respect to the projected key points
        """
        if grads is None:
            grads = self.zero_grads()
        d_out = np.concatenate([d_rgb, np.asarray(d_alpha, dtype=float).reshape(-1, 1)], axis=1)
        _, d_features = self.head_mlp.backward(cache['head'], d_out, sub_grads(grads, 'head_mlp.'))
        _, d_unit = self.tex_grid.encode_backward(cache['tex'], d_features,
                                                  sub_grads(grads, 'tex_grid.'))
        low, high = DEFORM_RANGE
        d_deformed = d_unit / (high - low)
        d_deformed[cache['outside']] = 0.0
        _, d_in = self.deform_mlp.backward(cache['deform'], d_deformed,
                                           sub_grads(grads, 'deform_mlp.'))
        d_xbar = d_in[:, 2:].sum(axis=0).reshape(2, -1)
        return grads, d_xbar

    def forward_pose(self, x_pixel, pose):
        r"""
        Projects the key points for pose and evaluates the torso, the cache
        covers the key point projection too
        """
        xbar, key_cache = self.keys.project(pose)
        rgb, alpha, cache = self.forward(x_pixel, xbar)
        cache['keys'] = key_cache
        return rgb, alpha, cache

    def backward_pose(self, cache, d_rgb, d_alpha, grads=None):
        r"""adjoint of forward_pose including the key point parameters"""
        grads, d_xbar = self.backward(cache, d_rgb, d_alpha, grads)
        self.keys.project_backward(cache['keys'], d_xbar, sub_grads(grads, 'keys.'))
        return grads


def torso_field_forward(tf, x_pixel, xbar):
    r"""returns (rgb, alpha) of the torso field"""
    rgb, alpha, _ = tf.forward(x_pixel, xbar)
    return rgb, alpha
