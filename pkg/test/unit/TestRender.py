"""
Handles testing of ray sampling, compositing and frame rendering
#
"""
import pytest
import numpy as np
from scipy import ndimage
import ernf
from ernf.render import (WHITE, composite_backward, composite_batch, normalized_pixels,
                         render_head_image, render_rays, render_rays_backward,
                         stratified_batch)


class SphereField(object):
    r"""
    Opaque black sphere of radius 0.25 around the center of the unit cube
    """
    def forward(self, x, d, a, e):
        inside = np.linalg.norm(x - 0.5, axis=1) < 0.25
        return np.zeros((x.shape[0], 3)), np.where(inside, 1e3, 0.0), None


class SmoothField(object):
    r"""
    Gaussian density blob colored by position
    """
    def forward(self, x, d, a, e):
        sigma = 5.0 * np.exp(-np.sum((x - 0.5)**2, axis=1) / 0.05)
        return x.copy(), sigma, None


class TestRender:
    r"""
    Tests the volume rendering quadrature and its adjoint
    """

    def test_stratified_samples(self):
        ray = ernf.Ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.0, 1.0)
        assert np.allclose(ernf.stratified_samples(ray, 2), [0.25, 0.75])
        assert np.allclose(ernf.stratified_samples(ray, 1), [0.5])
        #
        first = ernf.stratified_samples(ray, 8, np.random.default_rng(3))
        second = ernf.stratified_samples(ray, 8, np.random.default_rng(3))
        assert np.array_equal(first, second)
        bins = np.floor(first * 8)
        assert np.all(bins == np.arange(8))
        #
        t, delta = stratified_batch([0.0, 1.0], [2.0, 3.0], 4)
        assert np.allclose(delta.sum(axis=1) + t[:, 0], [2.0, 3.0])
        with pytest.raises(ernf.ContractError):
            stratified_batch(0.0, 1.0, 0)

    def test_ray_samples(self):
        samples = ernf.RaySamples.from_t([0.2, 0.5], 1.0, np.zeros((2, 3)), [0.0, 0.0])
        assert np.allclose(samples.delta, [0.3, 0.5])
        with pytest.raises(ernf.ContractError):
            ernf.RaySamples([0.5, 0.2], [0.1, 0.1], np.zeros((2, 3)), [0.0, 0.0])
        with pytest.raises(ernf.ContractError):
            ernf.RaySamples([0.2], [0.1], np.zeros((1, 3)), [-1.0])

    def test_composite(self):
        rgb = np.array([[0.2, 0.4, 0.6], [0.9, 0.1, 0.3]])
        empty = ernf.RaySamples([0.2, 0.5], [0.3, 0.5], rgb, [0.0, 0.0])
        color, opacity, weights = ernf.composite(empty)
        assert np.allclose(color, WHITE) and opacity == 0.0
        assert np.all(weights == 0.0)
        #
        half = ernf.RaySamples([0.5], [1.0], rgb[:1], [np.log(2.0)])
        color, opacity, weights = ernf.composite(half, background=np.zeros(3))
        assert np.isclose(weights[0], 0.5) and np.isclose(opacity, 0.5)
        assert np.allclose(color, 0.5 * rgb[0])
        #
        opaque = ernf.RaySamples([0.2, 0.5], [0.3, 0.5], rgb, [1e4, 1.0])
        color, _, _ = ernf.composite(opaque)
        assert np.allclose(color, rgb[0], atol=1e-6)
        #
        no_samples = ernf.RaySamples([], [], np.zeros((0, 3)), [])
        color, opacity, _ = ernf.composite(no_samples, background=np.zeros(3))
        assert np.all(color == 0.0) and opacity == 0.0

    def test_conservation(self):
        rng = np.random.default_rng(8)
        rgb = rng.random((100000, 8, 3))
        sigma = rng.exponential(2.0, (100000, 8))
        delta = rng.random((100000, 8)) * 0.5
        _, opacity, weights, cache = composite_batch(rgb, sigma, delta, WHITE)
        total = weights.sum(axis=1) + cache['trans_final']
        assert np.max(np.abs(total - 1.0)) <= 1e-6
        assert np.allclose(opacity, 1.0 - cache['trans_final'])
        #
        background = np.array([0.1, 0.7, 0.3])
        color, _, _, _ = composite_batch(rgb, np.zeros_like(sigma), delta, background)
        assert np.all(color == background)

    def test_composite_backward(self):
        rgb = np.array([[[0.2, 0.4, 0.6]]])
        background = np.array([1.0, 0.5, 0.0])
        sigma, delta = np.array([[0.7]]), np.array([[0.4]])
        upstream = np.array([[1.0, -2.0, 0.5]])
        _, _, _, cache = composite_batch(rgb, sigma, delta, background)
        d_rgb, d_sigma, d_bg = composite_backward(cache, upstream)
        closed = delta[0, 0] * np.exp(-0.7 * 0.4) * np.dot(rgb[0, 0] - background, upstream[0])
        assert np.isclose(d_sigma[0, 0], closed)
        assert np.allclose(d_rgb[0, 0], (1.0 - np.exp(-0.28)) * upstream[0])
        assert np.allclose(d_bg[0], np.exp(-0.28) * upstream[0])
        #
        zero = composite_backward(cache, np.zeros((1, 3)))
        assert all(np.all(val == 0.0) for val in zero)

    def test_composite_backward_finite_difference(self):
        rng = np.random.default_rng(4)
        rgb = rng.random((3, 6, 3))
        sigma = rng.random((3, 6)) * 3.0
        delta = rng.random((3, 6)) * 0.3
        upstream = rng.normal(size=(3, 3))
        up_opacity = rng.normal(size=3)
        _, _, _, cache = composite_batch(rgb, sigma, delta, WHITE)
        _, d_sigma, _ = composite_backward(cache, upstream, up_opacity)
        #
        def loss(values):
            color, opacity, _, _ = composite_batch(rgb, values, delta, WHITE)
            return float(np.sum(color * upstream) + np.sum(opacity * up_opacity))
        #
        step = 1e-6
        for index in [(0, 0), (1, 3), (2, 5)]:
            plus, minus = sigma.copy(), sigma.copy()
            plus[index] += step
            minus[index] -= step
            numeric = (loss(plus) - loss(minus)) / (2.0 * step)
            assert np.isclose(d_sigma[index], numeric, rtol=1e-5, atol=1e-9)

    def test_empty_field_renders_background(self, small_head_field):
        field = small_head_field()
        field.density_mlp.b2[0] = -100.0
        cam = ernf.CameraIntrinsics.centered(8, 8, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -3.0])
        frame = ernf.render_frame(field, cam, pose, (np.zeros(32), 0.0), num_samples=4)
        assert np.allclose(frame.rgb, 1.0, atol=1e-9)

    def test_sphere_silhouette(self):
        cam = ernf.CameraIntrinsics.centered(32, 32, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -3.0])
        _, opacity = render_head_image(SphereField(), cam, pose, np.zeros(32), 0.0,
                                       num_samples=64)
        rendered = opacity > 0.5
        #
        pixels = cam.pixel_centers()
        rays = np.stack([(pixels[..., 0] - cam.cx) / cam.fx,
                         (pixels[..., 1] - cam.cy) / cam.fy,
                         np.ones(pixels.shape[:2])], axis=-1)
        rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
        # distance of the sphere center (0, 0, 0) from each ray
        center = np.array([0.0, 0.0, 3.0])
        along = rays @ center
        dist = np.sqrt(np.maximum(center @ center - along**2, 0.0))
        analytic = dist < 0.5
        assert np.all(rendered[ndimage.binary_erosion(analytic)])
        assert not np.any(rendered[~ndimage.binary_dilation(analytic)])

    def test_supersampling_consistency(self):
        cam = ernf.CameraIntrinsics.centered(16, 16, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -3.0])
        single, _ = render_head_image(SmoothField(), cam, pose, np.zeros(32), 0.0,
                                      num_samples=64)
        double, _ = render_head_image(SmoothField(), cam, pose, np.zeros(32), 0.0,
                                      num_samples=64, supersample=2)
        assert single.shape == double.shape == (16, 16, 3)
        assert ernf.psnr(single, double) >= 30.0

    def test_chunked_rendering(self, small_head_field):
        field = small_head_field()
        cam = ernf.CameraIntrinsics.centered(6, 6, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -3.0])
        whole, _ = render_head_image(field, cam, pose, np.zeros(32), 0.5, num_samples=4)
        chunked, _ = render_head_image(field, cam, pose, np.zeros(32), 0.5, num_samples=4,
                                       num_workers=3, chunk_size=5)
        assert np.allclose(whole, chunked, rtol=0.0, atol=1e-12)

    def test_render_rays_backward(self, small_head_field):
        field = small_head_field()
        origins = np.array([[0.0, 0.0, -3.0], [5.0, 5.0, -3.0]])
        directions = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        color, opacity, cache = render_rays(field, origins, directions, np.zeros(32), 0.5,
                                            num_samples=4)
        # the second ray misses the box
        assert np.allclose(color[1], WHITE) and opacity[1] == 0.0
        assert list(cache['active']) == [0]
        grads = render_rays_backward(field, cache, np.ones((2, 3)))
        assert set(grads) == set(field.parameters())
        assert any(np.any(val != 0.0) for val in grads.values())

    def test_torso_composite(self):
        from ernf.networks import TorsoField
        cam = ernf.CameraIntrinsics.centered(8, 8, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -2.5])
        torso = TorsoField(ernf.encoding.HashGridConfig(levels=2, features=1, res_min=2,
                                                        res_max=4), hidden_dim=4)
        torso.head_mlp.b1[3] = 100.0
        torso.head_mlp.b1[:3] = -100.0
        frame = ernf.render_frame(torso, cam, pose)
        assert np.allclose(frame.rgb, 0.0)
        assert normalized_pixels(cam).shape == (64, 2)
