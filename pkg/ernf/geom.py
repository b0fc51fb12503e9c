"""
================================================================================
Geometry
================================================================================
| Core geometric and image types shared by the package: bounding box, rays,
| pinhole camera, rigid poses and frame buffers.

| The camera frame is right handed with x to the right, y down and z along
| the viewing direction. Pixel (i, j) covers [i, i+1) x [j, j+1) so its
| center is at (i + 0.5, j + 0.5).

"""
from collections import namedtuple
import os
import numpy as np
from PIL import Image
from .ernf_core import _get_logger, ContractError, check_overwrite

# module globals
logger = _get_logger(__name__)
PPM_MAXVAL = 255
PSNR_CAP = 99.0


class Aabb(namedtuple('Aabb', ['min', 'max'])):
    r"""
    Axis aligned bounding box in scene units. Normalization maps the box
    onto the unit cube.
    """
    __slots__ = ()

    def __new__(cls, min=(-1.0, -1.0, -1.0), max=(1.0, 1.0, 1.0)):
        lo = np.array(min, dtype=float)
        hi = np.array(max, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(lo < hi):
            raise ContractError('Aabb requires min < max on all three axes')
        lo.flags.writeable = False
        hi.flags.writeable = False
        return super().__new__(cls, lo, hi)

    @property
    def extent(self):
        r"""returns the edge lengths of the box"""
        return self.max - self.min

    @property
    def center(self):
        r"""returns the box center"""
        return 0.5 * (self.min + self.max)

    def contains(self, points, tol=0.0):
        r"""returns a boolean mask of points inside the box"""
        points = np.asarray(points, dtype=float)
        inside = (points >= self.min - tol) & (points <= self.max + tol)
        return np.all(inside, axis=-1)


class Ray(namedtuple('Ray', ['origin', 'direction', 't_near', 't_far'])):
    r"""
    A ray segment r(t) = o + t d restricted to [t_near, t_far]
    """
    __slots__ = ()

    def __new__(cls, origin, direction, t_near, t_far):
        origin = np.array(origin, dtype=float)
        direction = np.array(direction, dtype=float)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ContractError('ray direction must be a unit vector')
        if not 0.0 <= t_near < t_far:
            raise ContractError('ray bounds must satisfy 0 <= t_near < t_far')
        return super().__new__(cls, origin, direction, float(t_near), float(t_far))

    def at(self, t):
        r"""returns the point(s) at parameter t"""
        t = np.asarray(t, dtype=float)
        return self.origin + t[..., None] * self.direction


class CameraIntrinsics(namedtuple('CameraIntrinsics',
                                  ['fx', 'fy', 'cx', 'cy', 'width', 'height'])):
    r"""
    Pinhole intrinsics in pixels
    """
    __slots__ = ()

    def __new__(cls, fx, fy, cx, cy, width, height):
        if fx <= 0 or fy <= 0:
            raise ContractError('focal lengths must be positive')
        if not (0 <= cx < width and 0 <= cy < height):
            raise ContractError('principal point must lie inside the image')
        return super().__new__(cls, float(fx), float(fy), float(cx), float(cy),
                               int(width), int(height))

    @classmethod
    def centered(cls, width, height, fov_degrees=30.0):
        r"""
        Builds intrinsics with the principal point at the image center and
        the given horizontal field of view.
        """
        focal = 0.5 * width / np.tan(np.radians(fov_degrees) / 2.0)
        return cls(focal, focal, width / 2.0, height / 2.0, width, height)

    def scaled(self, factor):
        r"""returns intrinsics for an image resampled by factor"""
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                self.cx * factor, self.cy * factor,
                                int(round(self.width * factor)),
                                int(round(self.height * factor)))

    def pixel_centers(self, supersample=1):
        r"""
        Returns a (height*s, width*s, 2) array of sub-pixel center coordinates
        in row major order
        """
        step = 1.0 / supersample
        xs = (np.arange(self.width * supersample) + 0.5) * step
        ys = (np.arange(self.height * supersample) + 0.5) * step
        grid_x, grid_y = np.meshgrid(xs, ys)
        return np.stack([grid_x, grid_y], axis=-1)


class HeadPose(namedtuple('HeadPose', ['R', 't'])):
    r"""
    Rigid transform x -> R x + t. The same type describes camera-to-scene
    transforms.
    """
    __slots__ = ()

    def __new__(cls, R=None, t=None):
        R = np.eye(3) if R is None else np.array(R, dtype=float)
        t = np.zeros(3) if t is None else np.array(t, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ContractError('HeadPose needs a 3x3 rotation and 3-vector')
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-8, rtol=0.0):
            raise ContractError('HeadPose rotation is not orthonormal')
        if abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ContractError('HeadPose rotation must have determinant 1')
        if not np.all(np.isfinite(t)):
            raise ContractError('HeadPose translation must be finite')
        return super().__new__(cls, R, t)

    @classmethod
    def from_matrix(cls, matrix):
        r"""builds a pose from a 4x4 homogeneous matrix"""
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def look_at(cls, eye, target, up=(0.0, -1.0, 0.0)):
        r"""
        Camera-to-scene pose for a camera at eye looking at target. The
        camera y axis points away from up, matching the y-down image
        convention.
        """
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=float))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward], axis=1)
        return cls(R, eye)

    def matrix(self):
        r"""returns the 4x4 homogeneous matrix"""
        mat = np.eye(4)
        mat[:3, :3] = self.R
        mat[:3, 3] = self.t
        return mat

    def apply(self, points):
        r"""maps points (..., 3) through the pose"""
        return np.asarray(points, dtype=float) @ self.R.T + self.t

    def rotate(self, vectors):
        r"""rotates direction vectors (..., 3)"""
        return np.asarray(vectors, dtype=float) @ self.R.T

    def inverse(self):
        r"""returns the inverse rigid transform"""
        return HeadPose(self.R.T, -self.R.T @ self.t)

    def compose(self, other):
        r"""returns self o other, i.e. other is applied first"""
        return HeadPose(self.R @ other.R, self.R @ other.t + self.t)


class FrameBuffer(object):
    r"""
    RGB image with channels kept in [0, 1]. Values are clamped on write.

    Parameters
    ----------
    width, height : int
        image size in pixels
    rgb : ndarray, optional
        (height, width, 3) initial data, zeros when omitted
    """
    def __init__(self, width, height, rgb=None):
        super().__init__()
        self.width = int(width)
        self.height = int(height)
        self._rgb = np.zeros((self.height, self.width, 3))
        if rgb is not None:
            self.rgb = rgb

    @property
    def rgb(self):
        r"""returns the (height, width, 3) pixel array"""
        return self._rgb

    @rgb.setter
    def rgb(self, data):
        data = np.asarray(data, dtype=float)
        if data.shape != self._rgb.shape:
            msg = 'frame data has shape {}, expected {}'
            raise ContractError(msg.format(data.shape, self._rgb.shape))
        if not np.all(np.isfinite(data)):
            raise ContractError('frame data must be finite')
        self._rgb = np.clip(data, 0.0, 1.0)

    def to_bytes(self):
        r"""
        Quantizes to 8 bits, rounding half up
        """
        return np.floor(self._rgb * PPM_MAXVAL + 0.5).astype(np.uint8)

    def write_ppm(self, filename, overwrite=False):
        r"""
        Writes a binary P6 PPM file with maxval 255
        """
        check_overwrite(filename, overwrite)
        header = 'P6\n{:d} {:d}\n{:d}\n'.format(self.width, self.height, PPM_MAXVAL)
        with open(filename, 'wb') as fp:
            fp.write(header.encode('ascii'))
            fp.write(self.to_bytes().tobytes())

    def save_png(self, filename, overwrite=False):
        r"""
        Writes a PNG file using Pillow
        """
        check_overwrite(filename, overwrite)
        Image.fromarray(self.to_bytes(), mode='RGB').save(filename, format='PNG')

    def save(self, filename, overwrite=False):
        r"""
        Writes PNG when the extension is .png and PPM otherwise
        """
        if os.path.splitext(filename)[1].lower() == '.png':
            self.save_png(filename, overwrite=overwrite)
        else:
            self.write_ppm(filename, overwrite=overwrite)

    @classmethod
    def read_ppm(cls, filename):
        r"""
        Reads a binary P6 PPM file written by write_ppm
        """
        with open(filename, 'rb') as fp:
            content = fp.read()
        #
        # header is four whitespace separated tokens
        tokens = []
        pos = 0
        while len(tokens) < 4:
            while content[pos:pos+1].isspace():
                pos += 1
            start = pos
            while not content[pos:pos+1].isspace():
                pos += 1
            tokens.append(content[start:pos])
        pos += 1
        #
        if tokens[0] != b'P6':
            raise ValueError('{} is not a binary PPM file'.format(filename))
        width, height, maxval = (int(tok) for tok in tokens[1:])
        data = np.frombuffer(content, dtype=np.uint8, count=width*height*3,
                             offset=pos)
        rgb = data.reshape(height, width, 3).astype(float) / maxval
        return cls(width, height, rgb)

    def psnr(self, other, cap=PSNR_CAP):
        r"""returns the PSNR against another frame"""
        return psnr(self._rgb, other.rgb, cap)


#
########################################################################
#  Functions
########################################################################


def psnr(pred, target, cap=PSNR_CAP):
    r"""
    Peak signal to noise ratio of float images with peak value 1, the mean
    squared error is taken over all pixels and channels. Identical images
    give cap.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        msg = 'images differ in shape: {} and {}'
        raise ContractError(msg.format(pred.shape, target.shape))
    mse = float(np.mean((pred - target)**2))
    if mse <= 0.0:
        return float(cap)
    return float(min(cap, 10.0 * np.log10(1.0 / mse)))


def normalize_to_unit_cube(x, aabb):
    r"""
    Affine map of points from the box onto [0, 1]^3. Points outside are
    clamped and the returned flag is set.

    Returns
    -------
    (normalized points, clamped flag)
    """
    u = (np.asarray(x, dtype=float) - aabb.min) / aabb.extent
    clamped = bool(np.any((u < 0.0) | (u > 1.0)))
    if clamped:
        u = np.clip(u, 0.0, 1.0)
    #
    return u, clamped


def intersect_aabb(origins, directions, aabb):
    r"""
    Slab test for a batch of rays.

    Returns
    -------
    t_near, t_far, hit : (n,) arrays; t_near is clipped to be non-negative.
    """
    origins = np.atleast_2d(origins)
    directions = np.atleast_2d(directions)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = 1.0 / directions
        t_lo = (aabb.min - origins) * inv
        t_hi = (aabb.max - origins) * inv
    t_min = np.minimum(t_lo, t_hi)
    t_max = np.maximum(t_lo, t_hi)
    #
    # axes parallel to the slab either always or never overlap it
    parallel = directions == 0.0
    outside = parallel & ((origins < aabb.min) | (origins > aabb.max))
    t_min = np.where(parallel, -np.inf, t_min)
    t_max = np.where(parallel, np.inf, t_max)
    t_max = np.where(outside, -np.inf, t_max)
    #
    t_near = np.maximum(np.max(t_min, axis=-1), 0.0)
    t_far = np.min(t_max, axis=-1)
    hit = t_far > t_near
    return t_near, t_far, hit


def camera_rays(cam, pose, pixels):
    r"""
    Back projects continuous pixel coordinates (..., 2) through a pinhole
    camera with the camera-to-scene pose.

    Returns
    -------
    origins, directions : (..., 3) arrays with unit directions
    """
    pixels = np.asarray(pixels, dtype=float)
    dirs = np.stack([(pixels[..., 0] - cam.cx) / cam.fx,
                     (pixels[..., 1] - cam.cy) / cam.fy,
                     np.ones(pixels.shape[:-1])], axis=-1)
    dirs = pose.rotate(dirs)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.t, dirs.shape).copy()
    return origins, dirs


def ray_for_pixel(cam, pose, px, aabb):
    r"""
    Returns the Ray through image point px clipped to the box, or None when
    the ray misses it. Use (i + 0.5, j + 0.5) for the center of pixel (i, j).
    """
    px = np.asarray(px, dtype=float)
    if not (0 <= px[0] <= cam.width and 0 <= px[1] <= cam.height):
        raise ContractError('pixel coordinate outside the image')
    #
    origin, direction = camera_rays(cam, pose, px[None, :])
    t_near, t_far, hit = intersect_aabb(origin, direction, aabb)
    if not hit[0]:
        return None
    return Ray(origin[0], direction[0], t_near[0], t_far[0])
