"""
================================================================================
Synthetic Scene
================================================================================
| Condition driven stand-in for a portrait video. The head is a signed
| distance sphere in its canonical frame with two localized deformers: a
| mouth bump driven by the projection of the audio feature on a fixed weight
| vector and two eye bumps driven by the blink value. Both also darken the
| surface color inside their region. A flat textured torso hangs below the
| head and follows its translation.

| Canonical frame: x to the viewer's left, y up, the face looks along -z.
| A frame's head placement maps canonical points into the camera frame.

"""
from collections import OrderedDict
import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.spatial.transform import Rotation
from ..ernf_core import _get_logger, ContractError, make_rng
from ..geom import Aabb, FrameBuffer, HeadPose, camera_rays

# module globals
logger = _get_logger(__name__)
AUDIO_DIM = 32
DRIVEN_CHANNELS = 16
BUMP_SLOPE = 1.7174
HEAD_DISTANCE = 2.5
# canonical -> camera for the unperturbed head, a half turn about the view axis
BASE_ROTATION = np.diag([-1.0, -1.0, 1.0])
# direction toward the light in the camera frame
LIGHT_DIR = np.array([0.3, -0.4, -1.0]) / np.linalg.norm([0.3, -0.4, -1.0])


def bump(s):
    r"""smooth compact kernel (1 - s^2)^3 on s < 1"""
    return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)**2)**3, 0.0)


def mouth_weights():
    r"""
    Fixed weight vector projecting the audio feature onto the mouth opening.
    Only the first 16 channels are used.
    """
    w = np.zeros(AUDIO_DIM)
    w[:DRIVEN_CHANNELS] = 0.25 * np.cos(0.7 * np.arange(DRIVEN_CHANNELS))
    return w


class SyntheticScene(object):
    r"""
    Analytic head and torso scene.

    Parameters
    ----------
    radius : float
        head sphere radius
    mouth_center, mouth_radius : 3-vector, float
        mouth region ball in canonical coordinates
    eye_centers, eye_radius : sequence of 3-vectors, float
        eye region balls
    torso_offset : 3-vector
        torso quad center relative to the head center in the camera frame
    torso_size : (float, float)
        torso quad width and height
    """
    def __init__(self, radius=0.5, mouth_center=(0.0, -0.22, -0.45), mouth_radius=0.15,
                 eye_centers=((0.17, 0.15, -0.44), (-0.17, 0.15, -0.44)), eye_radius=0.1,
                 torso_offset=(0.0, 1.0, 0.3), torso_size=(1.4, 0.9)):
        super().__init__()
        self.radius = float(radius)
        self.mouth_center = np.array(mouth_center, dtype=float)
        self.mouth_radius = float(mouth_radius)
        self.eye_centers = np.array(eye_centers, dtype=float).reshape(-1, 3)
        self.eye_radius = float(eye_radius)
        self.torso_offset = np.array(torso_offset, dtype=float)
        self.torso_size = tuple(float(val) for val in torso_size)
        self.w = mouth_weights()
        # amplitude limits keep the sdf gradient norm <= 1.1
        self.mouth_amp_max = 0.1 * self.mouth_radius / BUMP_SLOPE
        self.eye_amp_max = 0.1 * self.eye_radius / BUMP_SLOPE
        self.aabb = Aabb()
        #
        gap = np.linalg.norm(self.eye_centers - self.mouth_center, axis=1)
        if np.any(gap <= self.mouth_radius + self.eye_radius):
            raise ContractError('mouth and eye regions must not overlap')

    def describe(self):
        r"""returns the scene parameters as plain data"""
        return OrderedDict(radius=self.radius,
                           mouth_center=self.mouth_center.tolist(),
                           mouth_radius=self.mouth_radius,
                           eye_centers=self.eye_centers.tolist(),
                           eye_radius=self.eye_radius,
                           torso_offset=self.torso_offset.tolist(),
                           torso_size=list(self.torso_size))

    @classmethod
    def from_description(cls, params):
        r"""rebuilds a scene from describe() output"""
        return cls(**params)

    #
    # condition response

    def mouth_opening(self, a):
        r"""mouth opening in [0, 1] driven by w . a"""
        return float(np.clip(np.dot(self.w, np.asarray(a, dtype=float)), 0.0, 1.0))

    def _region_kernels(self, x):
        s_mouth = np.linalg.norm(x - self.mouth_center, axis=-1) / self.mouth_radius
        k_mouth = bump(s_mouth)
        k_eye = np.zeros(x.shape[:-1])
        for center in self.eye_centers:
            k_eye = k_eye + bump(np.linalg.norm(x - center, axis=-1) / self.eye_radius)
        return k_mouth, k_eye

    def sdf(self, x, a, e):
        r"""signed distance of canonical points (..., 3)"""
        x = np.asarray(x, dtype=float)
        k_mouth, k_eye = self._region_kernels(x)
        amp_mouth = self.mouth_amp_max * self.mouth_opening(a)
        amp_eye = self.eye_amp_max * float(e)
        return np.linalg.norm(x, axis=-1) - self.radius - amp_mouth * k_mouth - amp_eye * k_eye

    def albedo(self, x, a, e):
        r"""surface color of canonical points (..., 3)"""
        x = np.asarray(x, dtype=float)
        base = np.stack([0.85 + 0.08 * x[..., 0],
                         0.62 + 0.15 * x[..., 1],
                         0.50 + 0.10 * x[..., 2]], axis=-1)
        k_mouth, k_eye = self._region_kernels(x)
        shade = (1.0 - 0.7 * self.mouth_opening(a) * k_mouth) * (1.0 - 0.8 * float(e) * k_eye)
        return np.clip(base * shade[..., None], 0.0, 1.0)

    def in_mouth(self, x):
        r"""mask of canonical points inside the mouth region"""
        return np.linalg.norm(np.asarray(x) - self.mouth_center, axis=-1) < self.mouth_radius

    def in_eyes(self, x):
        r"""mask of canonical points inside either eye region"""
        dist = np.linalg.norm(np.asarray(x)[..., None, :] - self.eye_centers, axis=-1)
        return np.any(dist < self.eye_radius, axis=-1)

    #
    # rendering

    def trace(self, origins, directions, a, e, max_steps=96, tol=1e-7):
        r"""
        Sphere traces canonical rays against the head.

        Returns
        -------
        points : (B, 3) hit points, hit : (B,) boolean
        """
        bound = self.radius + max(self.mouth_amp_max, self.eye_amp_max) + 1e-3
        # entry into the bounding sphere
        b = np.einsum('ij,ij->i', origins, directions)
        c = np.einsum('ij,ij->i', origins, origins) - bound**2
        disc = b**2 - c
        hit = disc > 0.0
        t = np.where(hit, -b - np.sqrt(np.maximum(disc, 0.0)), 0.0)
        t = np.maximum(t, 0.0)
        t_exit = np.where(hit, -b + np.sqrt(np.maximum(disc, 0.0)), 0.0)
        #
        done = ~hit
        for _ in range(max_steps):
            active = ~done
            if not np.any(active):
                break
            points = origins[active] + t[active, None] * directions[active]
            dist = self.sdf(points, a, e)
            t[active] += dist / 1.1
            converged = np.abs(dist) < tol
            escaped = t[active] > t_exit[active]
            index = np.nonzero(active)[0]
            done[index[converged | escaped]] = True
            hit[index[escaped & ~converged]] = False
        #
        points = origins + t[:, None] * directions
        hit &= np.abs(self.sdf(points, a, e)) < 1e-4
        return points, hit

    def normals(self, x, a, e, step=1e-5):
        r"""unit sdf gradients by central differences"""
        grad = np.empty(x.shape)
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = step
            grad[:, axis] = self.sdf(x + offset, a, e) - self.sdf(x - offset, a, e)
        return grad / np.linalg.norm(grad, axis=1, keepdims=True)

    def head_rgb(self, cam, pose, a, e, background=(1.0, 1.0, 1.0)):
        r"""
        Renders the head alone.

        Returns
        -------
        rgb : (H, W, 3), mask : (H, W) boolean
        """
        pixels = cam.pixel_centers().reshape(-1, 2)
        origins, directions = camera_rays(cam, pose, pixels)
        points, hit = self.trace(origins, directions, a, e)
        rgb = np.tile(np.asarray(background, dtype=float), (pixels.shape[0], 1))
        if np.any(hit):
            normals = self.normals(points[hit], a, e)
            # light fixed in the camera frame
            light = pose.rotate(LIGHT_DIR)
            lambert = np.maximum(0.0, normals @ light)
            rgb[hit] = self.albedo(points[hit], a, e) * (0.35 + 0.65 * lambert)[:, None]
        shape = (cam.height, cam.width)
        return np.clip(rgb, 0.0, 1.0).reshape(shape + (3,)), hit.reshape(shape)

    def torso_quad(self, pose):
        r"""
        Returns the camera frame center of the torso quad. pose is the
        camera-to-canonical pose, the torso follows the head translation.
        """
        return pose.inverse().t + self.torso_offset

    def torso_rgba(self, cam, pose):
        r"""
        Renders the torso quad.

        Returns
        -------
        rgb : (H, W, 3), alpha : (H, W) in {0, 1}
        """
        center = self.torso_quad(pose)
        pixels = cam.pixel_centers()
        ray_x = (pixels[..., 0] - cam.cx) / cam.fx
        ray_y = (pixels[..., 1] - cam.cy) / cam.fy
        local_x = (ray_x * center[2] - center[0]) / self.torso_size[0]
        local_y = (ray_y * center[2] - center[1]) / self.torso_size[1]
        alpha = ((np.abs(local_x) <= 0.5) & (np.abs(local_y) <= 0.5)).astype(float)
        rgb = np.stack([0.25 + 0.10 * np.sin(2.0 * np.pi * local_x),
                        0.35 + 0.15 * local_y,
                        0.60 + 0.10 * np.cos(2.0 * np.pi * local_x)], axis=-1)
        return np.clip(rgb, 0.0, 1.0), alpha

    def torso_mask(self, cam, pose):
        r"""boolean torso coverage of the image"""
        return self.torso_rgba(cam, pose)[1] > 0.5

    def region_mask(self, cam, pose, region='mouth', dilate=0):
        r"""
        Pixels whose center ray passes through the mouth or eye region,
        optionally dilated by whole pixels
        """
        if region == 'mouth':
            centers, radius = self.mouth_center[None, :], self.mouth_radius
        elif region == 'eyes':
            centers, radius = self.eye_centers, self.eye_radius
        else:
            raise ContractError('unknown region: ' + str(region))
        pixels = cam.pixel_centers().reshape(-1, 2)
        origins, directions = camera_rays(cam, pose, pixels)
        mask = np.zeros(pixels.shape[0], dtype=bool)
        for center in centers:
            rel = center - origins
            along = np.einsum('ij,ij->i', rel, directions)
            dist2 = np.einsum('ij,ij->i', rel, rel) - along**2
            mask |= (dist2 < radius**2) & (along > 0.0)
        mask = mask.reshape(cam.height, cam.width)
        for _ in range(int(dilate)):
            grown = mask.copy()
            grown[1:, :] |= mask[:-1, :]
            grown[:-1, :] |= mask[1:, :]
            grown[:, 1:] |= mask[:, :-1]
            grown[:, :-1] |= mask[:, 1:]
            mask = grown
        return mask

    def surface_points(self, cam, pose, a, e):
        r"""canonical surface points seen through every pixel center"""
        origins, directions = camera_rays(cam, pose, cam.pixel_centers().reshape(-1, 2))
        points, hit = self.trace(origins, directions, a, e)
        return points[hit]

    def render(self, cam, pose, a, e, torso=True, background=(1.0, 1.0, 1.0)):
        r"""
        Returns the (H, W, 3) frame with the torso composited over the head
        """
        rgb, _ = self.head_rgb(cam, pose, a, e, background)
        if torso:
            torso_rgb, alpha = self.torso_rgba(cam, pose)
            rgb = alpha[..., None] * torso_rgb + (1.0 - alpha[..., None]) * rgb
        return rgb


#
########################################################################
#  Functions
########################################################################


def oracle_render(scene, cam, pose, a, e, torso=True):
    r"""
    Ground truth frame of the synthetic scene for a camera-to-canonical pose
    """
    return FrameBuffer(cam.width, cam.height, scene.render(cam, pose, a, e, torso))


def head_placement(angles_deg=(0.0, 0.0, 0.0), shift=(0.0, 0.0, 0.0)):
    r"""
    Canonical-to-camera pose of a head rotated by yaw, pitch, roll degrees
    and shifted from its rest position
    """
    jitter = Rotation.from_euler('yxz', angles_deg, degrees=True).as_matrix()
    center = np.array([0.0, 0.0, HEAD_DISTANCE]) + np.asarray(shift, dtype=float)
    return HeadPose(jitter @ BASE_ROTATION, center)


def pose_trajectory(n_frames, max_angle=8.0, max_shift=0.08, varying=True, seed=0):
    r"""
    Smooth head motion: every angle and shift component is a sinusoid with a
    seeded phase. Returns camera-to-canonical poses.
    """
    if not varying:
        return [head_placement().inverse() for _ in range(n_frames)]
    rng = make_rng(seed, 11)
    phases = rng.uniform(0.0, 2.0 * np.pi, 6)
    periods = rng.uniform(0.6, 1.4, 6) * max(n_frames, 2)
    frames = np.arange(n_frames)[:, None]
    waves = np.sin(2.0 * np.pi * frames / periods + phases)
    poses = []
    for wave in waves:
        placement = head_placement(max_angle * wave[:3], max_shift * wave[3:] * [1.0, 1.0, 0.5])
        poses.append(placement.inverse())
    return poses


def condition_trajectory(n_frames, seed=0, smoothing=2.0, blink_every=15):
    r"""
    Pseudo audio features and blink values.

    Audio channels are band limited random walks: gaussian smoothed white
    noise rescaled to unit deviation. Blinks are gaussian pulses placed at
    jittered intervals.

    Returns
    -------
    audio : (n_frames, 32), eye : (n_frames,) in [0, 1]
    """
    rng = make_rng(seed, 12)
    noise = rng.normal(size=(n_frames, AUDIO_DIM))
    audio = gaussian_filter1d(noise, smoothing, axis=0, mode='nearest')
    scale = audio.std(axis=0)
    audio = audio / np.where(scale > 0.0, scale, 1.0)
    #
    frames = np.arange(n_frames, dtype=float)
    starts = np.arange(blink_every / 2.0, n_frames, blink_every)
    starts = starts + rng.uniform(-0.3, 0.3, starts.size) * blink_every
    eye = np.zeros(n_frames)
    for start in starts:
        eye = np.maximum(eye, np.exp(-0.5 * ((frames - start) / 1.5)**2))
    return audio, np.clip(eye, 0.0, 1.0)
