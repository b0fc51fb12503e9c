"""
================================================================================
Volume Rendering
================================================================================
| Quadrature volume rendering along camera rays: stratified sampling,
| transmittance accumulation, compositing over a background and the adjoint
| of the compositing step. Frames are rendered in fixed size chunks of rays,
| the torso is composited over the rendered head.

"""
from collections import namedtuple
import numpy as np
from .ernf_core import (_get_logger, ContractError, chunk_slices, ordered_map)
from .geom import Aabb, FrameBuffer, camera_rays, intersect_aabb
from .networks.torso_field import TorsoField

# module globals
logger = _get_logger(__name__)
WHITE = np.ones(3)
DEFAULT_SAMPLES = 16
RENDER_CHUNK = 4096


class RaySamples(namedtuple('RaySamples', ['t', 'delta', 'rgb', 'sigma'])):
    r"""
    Samples of one ray: sorted t-values, interval lengths and the field
    values at every sample
    """
    __slots__ = ()

    def __new__(cls, t, delta, rgb, sigma):
        t = np.asarray(t, dtype=float)
        delta = np.asarray(delta, dtype=float)
        rgb = np.asarray(rgb, dtype=float).reshape(-1, 3)
        sigma = np.asarray(sigma, dtype=float)
        if not (t.shape == delta.shape == sigma.shape and rgb.shape[0] == t.size):
            raise ContractError('ray sample arrays have inconsistent lengths')
        if np.any(np.diff(t) < 0.0):
            raise ContractError('ray samples must be sorted by t')
        if np.any(delta < 0.0) or np.any(sigma < 0.0):
            raise ContractError('ray sample deltas and densities must be >= 0')
        return super().__new__(cls, t, delta, rgb, sigma)

    @classmethod
    def from_t(cls, t, t_far, rgb, sigma):
        r"""builds samples with deltas t_{i+1} - t_i and t_far - t_N"""
        t = np.asarray(t, dtype=float)
        delta = np.append(np.diff(t), t_far - t[-1]) if t.size else t.copy()
        return cls(t, delta, rgb, sigma)


#
########################################################################
#  Sampling
########################################################################


def stratified_batch(t_near, t_far, num_samples, rng=None):
    r"""
    Stratified t-values for a batch of ray segments. Sample i lies in the
    i-th of num_samples equal bins, at its midpoint without rng.

    Returns
    -------
    t, delta : (B, num_samples) arrays
    """
    if num_samples < 1:
        raise ContractError('number of samples must be >= 1')
    t_near = np.atleast_1d(np.asarray(t_near, dtype=float))
    t_far = np.atleast_1d(np.asarray(t_far, dtype=float))
    jitter = 0.5 if rng is None else rng.random((t_near.size, num_samples))
    strata = (np.arange(num_samples) + jitter) / num_samples
    t = t_near[:, None] + strata * (t_far - t_near)[:, None]
    delta = np.concatenate([np.diff(t, axis=1), t_far[:, None] - t[:, -1:]], axis=1)
    return t, delta


def stratified_samples(ray, num_samples, rng=None):
    r"""returns the stratified t-values of a single ray"""
    return stratified_batch(ray.t_near, ray.t_far, num_samples, rng)[0][0]


#
########################################################################
#  Compositing
########################################################################


def composite_batch(rgb, sigma, delta, background):
    r"""
    Alpha composites (B, N) samples front to back.

    Returns
    -------
    color : (B, 3), opacity : (B,), weights : (B, N), cache
    """
    tau = sigma * delta
    cum_tau = np.cumsum(tau, axis=1)
    trans = np.exp(-np.concatenate([np.zeros((tau.shape[0], 1)), cum_tau[:, :-1]], axis=1))
    trans_next = np.exp(-cum_tau)
    weights = trans - trans_next
    trans_final = trans_next[:, -1]
    background = np.broadcast_to(background, (tau.shape[0], 3))
    color = np.einsum('bn,bnc->bc', weights, rgb) + trans_final[:, None] * background
    cache = {'rgb': rgb, 'delta': delta, 'weights': weights, 'trans_next': trans_next,
             'trans_final': trans_final, 'background': background}
    return color, 1.0 - trans_final, weights, cache


def composite(samples, background=WHITE):
    r"""
    Composites a single ray.

    Returns
    -------
    color : 3-vector, opacity : scalar, weights : (N,) array
    """
    if samples.t.size == 0:
        return np.array(background, dtype=float), 0.0, np.empty(0)
    color, opacity, weights, _ = composite_batch(samples.rgb[None], samples.sigma[None],
                                                 samples.delta[None], background)
    return color[0], float(opacity[0]), weights[0]


def composite_backward(cache, d_color, d_opacity=None):
    r"""
    Adjoint of composite_batch.

    Returns
    -------
    d_rgb : (B, N, 3), d_sigma : (B, N), d_background : (B, 3)
    """
    weights = cache['weights']
    rgb = cache['rgb']
    trans_final = cache['trans_final']
    g_c = np.einsum('bnc,bc->bn', rgb, d_color)
    g_bg = np.einsum('bc,bc->b', cache['background'], d_color)
    #
    # sum over later samples of w_i (g . c_i)
    later = np.cumsum((weights * g_c)[:, ::-1], axis=1)[:, ::-1]
    later = np.concatenate([later[:, 1:], np.zeros((later.shape[0], 1))], axis=1)
    d_tau = cache['trans_next'] * g_c - later - (trans_final * g_bg)[:, None]
    if d_opacity is not None:
        d_tau += (trans_final * np.asarray(d_opacity, dtype=float))[:, None]
    #
    d_rgb = weights[:, :, None] * d_color[:, None, :]
    d_sigma = d_tau * cache['delta']
    d_background = trans_final[:, None] * d_color
    return d_rgb, d_sigma, d_background


#
########################################################################
#  Ray and frame rendering
########################################################################


def render_rays(field, origins, directions, a, e, aabb=None, occupancy=None,
                num_samples=DEFAULT_SAMPLES, background=WHITE, rng=None):
    r"""
    Renders a batch of rays through the head field.

    Parameters
    ----------
    field : HeadField
        any object with forward(x, d, a, e) -> (rgb, sigma, cache)
    origins, directions : (B, 3) scene rays
    a : (32,) or (B, 32) audio conditions per ray
    e : scalar or (B,) eye conditions per ray
    occupancy : OccupancyGrid, optional
        restricts samples to occupied cells

    Returns
    -------
    color : (B, 3), opacity : (B,), cache
    """
    aabb = Aabb() if aabb is None else aabb
    origins = np.atleast_2d(origins)
    directions = np.atleast_2d(directions)
    num_rays = origins.shape[0]
    a = np.broadcast_to(np.asarray(a, dtype=float), (num_rays, 32))
    e = np.broadcast_to(np.asarray(e, dtype=float).ravel(), (num_rays,))
    color = np.array(np.broadcast_to(background, (num_rays, 3)), dtype=float)
    opacity = np.zeros(num_rays)
    #
    t_near, t_far, hit = intersect_aabb(origins, directions, aabb)
    active = np.nonzero(hit)[0]
    if occupancy is None:
        t, delta = stratified_batch(t_near[active], t_far[active], num_samples, rng)
    else:
        t, delta, valid = occupancy.sample_rays(origins[active], directions[active],
                                                t_near[active], t_far[active],
                                                num_samples, rng)
        active, t, delta = active[valid], t[valid], delta[valid]
    cache = {'active': active, 'field': None}
    if active.size == 0:
        return color, opacity, cache
    #
    points = origins[active, None, :] + t[:, :, None] * directions[active, None, :]
    unit = np.clip((points - aabb.min) / aabb.extent, 0.0, 1.0).reshape(-1, 3)
    dirs = np.repeat(directions[active], num_samples, axis=0)
    rgb, sigma, field_cache = field.forward(unit, dirs,
                                            np.repeat(a[active], num_samples, axis=0),
                                            np.repeat(e[active], num_samples))
    rgb = rgb.reshape(active.size, num_samples, 3)
    sigma = sigma.reshape(active.size, num_samples)
    col, opa, _, comp_cache = composite_batch(rgb, sigma, delta, color[active])
    color[active] = col
    opacity[active] = opa
    cache.update(field=field_cache, composite=comp_cache)
    return color, opacity, cache


def render_rays_backward(field, cache, d_color, grads=None):
    r"""
    Back propagates pixel color gradients through compositing and the field.
    Returns the field gradients.
    """
    if grads is None:
        grads = field.zero_grads()
    active = cache['active']
    if active.size == 0:
        return grads
    d_rgb, d_sigma, _ = composite_backward(cache['composite'], np.asarray(d_color)[active])
    field.backward(cache['field'], d_rgb.reshape(-1, 3), d_sigma.ravel(), grads)
    return grads


def _downsample(image, factor):
    r"""box filters an (H*f, W*f, ...) image by factor"""
    if factor == 1:
        return image
    height, width = image.shape[0] // factor, image.shape[1] // factor
    shape = (height, factor, width, factor) + image.shape[2:]
    return image.reshape(shape).mean(axis=(1, 3))


def render_head_image(field, cam, pose, a, e, aabb=None, occupancy=None,
                      num_samples=DEFAULT_SAMPLES, background=WHITE, supersample=1,
                      num_workers=1, chunk_size=RENDER_CHUNK):
    r"""
    Renders the head field for every pixel of a camera.

    Returns
    -------
    rgb : (H, W, 3), opacity : (H, W)
    """
    pixels = cam.pixel_centers(supersample).reshape(-1, 2)
    origins, directions = camera_rays(cam, pose, pixels)
    #
    def render_chunk(chunk):
        color, opacity, _ = render_rays(field, origins[chunk], directions[chunk], a, e,
                                        aabb, occupancy, num_samples, background)
        return color, opacity
    #
    results = ordered_map(render_chunk, chunk_slices(pixels.shape[0], chunk_size), num_workers)
    shape = (cam.height * supersample, cam.width * supersample)
    rgb = np.concatenate([res[0] for res in results]).reshape(shape + (3,))
    opacity = np.concatenate([res[1] for res in results]).reshape(shape)
    return _downsample(rgb, supersample), _downsample(opacity, supersample)


def normalized_pixels(cam, supersample=1):
    r"""returns (H*W, 2) pixel centers scaled into [0, 1]"""
    centers = cam.pixel_centers(supersample).reshape(-1, 2)
    return centers / np.array([cam.width, cam.height], dtype=float)


def render_torso_image(torso, cam, pose, supersample=1):
    r"""
    Evaluates the torso field on every pixel for the camera pose used by
    the key point projection.

    Returns
    -------
    rgb : (H, W, 3), alpha : (H, W)
    """
    rgb, alpha, _ = torso.forward_pose(normalized_pixels(cam, supersample), pose)
    shape = (cam.height * supersample, cam.width * supersample)
    return (_downsample(rgb.reshape(shape + (3,)), supersample),
            _downsample(alpha.reshape(shape), supersample))


def composite_torso(head_rgb, torso_rgb, alpha):
    r"""final = alpha * torso + (1 - alpha) * head"""
    alpha = np.asarray(alpha)[..., None]
    return alpha * torso_rgb + (1.0 - alpha) * head_rgb


def render_frame(field, cam, pose, conditions=(None, None), background=WHITE, torso=None,
                 aabb=None, occupancy=None, num_samples=DEFAULT_SAMPLES, supersample=1,
                 num_workers=1):
    r"""
    Renders one frame.

    Parameters
    ----------
    field : HeadField or TorsoField
        head field, or a torso field to render it over the background alone
    cam : CameraIntrinsics
    pose : HeadPose
        camera-to-scene pose, also used for the key point projection
    conditions : (a, e)
        audio and eye conditions of the frame
    torso : TorsoField, optional
        composited over the head when given

    Returns
    -------
    FrameBuffer
    """
    background = np.asarray(background, dtype=float)
    if isinstance(field, TorsoField):
        torso, image = field, np.broadcast_to(background, (cam.height, cam.width, 3))
    else:
        a, e = conditions
        a = np.zeros(32) if a is None else a
        e = 0.0 if e is None else e
        image, _ = render_head_image(field, cam, pose, a, e, aabb, occupancy, num_samples,
                                     background, supersample, num_workers)
    #
    if torso is not None:
        torso_rgb, alpha = render_torso_image(torso, cam, pose, supersample)
        image = composite_torso(image, torso_rgb, alpha)
    #
    return FrameBuffer(cam.width, cam.height, image)
