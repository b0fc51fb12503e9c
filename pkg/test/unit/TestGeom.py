"""
Handles testing of the geometric types, camera rays and frame buffers
#
"""
import os
import pytest
import numpy as np
import ernf
from ernf.geom import intersect_aabb, camera_rays


class TestGeom:
    r"""
    Tests the box, pose, camera and image helpers
    """

    def test_aabb(self):
        box = ernf.Aabb()
        assert np.all(box.extent == 2.0)
        assert np.all(box.center == 0.0)
        assert np.all(box.contains([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]) == [True, False])
        #
        with pytest.raises(ernf.ContractError):
            ernf.Aabb((0.0, 0.0, 0.0), (1.0, 0.0, 1.0))

    def test_normalize_to_unit_cube(self):
        box = ernf.Aabb()
        u, clamped = ernf.normalize_to_unit_cube(box.min, box)
        assert np.allclose(u, 0.0) and not clamped
        u, _ = ernf.normalize_to_unit_cube([0.0, 0.0, 0.0], box)
        assert np.allclose(u, 0.5)
        u, _ = ernf.normalize_to_unit_cube([0.5, -0.5, 0.0], box)
        assert np.allclose(u, [0.75, 0.25, 0.5])
        #
        u, clamped = ernf.normalize_to_unit_cube([3.0, 0.0, 0.0], box)
        assert clamped
        assert np.allclose(u, [1.0, 0.5, 0.5])

    def test_head_pose(self):
        with pytest.raises(ernf.ContractError):
            ernf.HeadPose(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ernf.ContractError):
            ernf.HeadPose(np.ones((3, 3)))
        #
        angle = 0.3
        R = np.array([[np.cos(angle), -np.sin(angle), 0.0],
                      [np.sin(angle), np.cos(angle), 0.0],
                      [0.0, 0.0, 1.0]])
        pose = ernf.HeadPose(R, [0.1, 0.2, 0.3])
        points = np.random.default_rng(0).normal(size=(5, 3))
        assert np.allclose(pose.inverse().apply(pose.apply(points)), points)
        assert np.allclose(pose.compose(pose.inverse()).matrix(), np.eye(4))
        assert np.allclose(ernf.HeadPose.from_matrix(pose.matrix()).R, R)

    def test_ray_for_pixel(self):
        cam = ernf.CameraIntrinsics.centered(32, 32, 40.0)
        pose = ernf.HeadPose(t=[0.0, 0.0, -3.0])
        box = ernf.Aabb()
        #
        ray = ernf.ray_for_pixel(cam, pose, (cam.cx, cam.cy), box)
        assert np.allclose(ray.direction, [0.0, 0.0, 1.0])
        assert np.isclose(ray.t_near, 2.0) and np.isclose(ray.t_far, 4.0)
        assert np.allclose(ray.at(ray.t_near), [0.0, 0.0, -1.0])
        #
        # 45 degree azimuth one focal length off center
        _, direction = camera_rays(cam, pose, np.array([[cam.cx + cam.fx, cam.cy]]))
        assert np.isclose(np.degrees(np.arctan2(direction[0, 0], direction[0, 2])), 45.0)
        #
        # box behind the camera
        behind = ernf.HeadPose(t=[0.0, 0.0, 3.0])
        assert ernf.ray_for_pixel(cam, behind, (cam.cx, cam.cy), box) is None
        #
        with pytest.raises(ernf.ContractError):
            ernf.ray_for_pixel(cam, pose, (-1.0, 0.0), box)

    def test_intersect_aabb_parallel(self):
        box = ernf.Aabb()
        origins = np.array([[0.0, 0.0, -3.0], [2.0, 0.0, -3.0]])
        directions = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        t_near, t_far, hit = intersect_aabb(origins, directions, box)
        assert list(hit) == [True, False]
        assert np.isclose(t_near[0], 2.0) and np.isclose(t_far[0], 4.0)

    def test_camera_intrinsics(self):
        cam = ernf.CameraIntrinsics.centered(20, 10, 30.0)
        assert (cam.cx, cam.cy) == (10.0, 5.0)
        centers = cam.pixel_centers()
        assert centers.shape == (10, 20, 2)
        assert np.allclose(centers[0, 0], [0.5, 0.5])
        assert cam.pixel_centers(2).shape == (20, 40, 2)
        assert cam.scaled(2.0).width == 40
        #
        with pytest.raises(ernf.ContractError):
            ernf.CameraIntrinsics(-1.0, 1.0, 0.0, 0.0, 4, 4)
        with pytest.raises(ernf.ContractError):
            ernf.CameraIntrinsics(1.0, 1.0, 5.0, 0.0, 4, 4)

    def test_psnr(self):
        white = np.ones((4, 4, 3))
        black = np.zeros((4, 4, 3))
        assert ernf.psnr(white, white) == 99.0
        assert np.isclose(ernf.psnr(black, white), 0.0)
        assert np.isclose(ernf.psnr(white * 0.9, white), 20.0)
        with pytest.raises(ernf.ContractError):
            ernf.psnr(white, np.ones((4, 3, 3)))

    def test_frame_buffer(self):
        rng = np.random.default_rng(1)
        frame = ernf.FrameBuffer(6, 4, rng.random((4, 6, 3)))
        #
        filename = os.path.join(TEMP_DIR, 'geom-frame.ppm')
        frame.write_ppm(filename, overwrite=True)
        with open(filename, 'rb') as infile:
            assert infile.read(11) == b'P6\n6 4\n255\n'
        copy = ernf.FrameBuffer.read_ppm(filename)
        assert np.array_equal(copy.to_bytes(), frame.to_bytes())
        assert copy.psnr(frame) > 45.0
        with pytest.raises(FileExistsError):
            frame.write_ppm(filename)
        #
        png = os.path.join(TEMP_DIR, 'geom-frame.png')
        frame.save(png, overwrite=True)
        with open(png, 'rb') as infile:
            assert infile.read(8) == b'\x89PNG\r\n\x1a\n'
        #
        # clamped on write
        frame.rgb = np.full((4, 6, 3), 2.0)
        assert np.all(frame.rgb == 1.0)
        with pytest.raises(ernf.ContractError):
            frame.rgb = np.zeros((2, 2, 3))
        with pytest.raises(ernf.ContractError):
            frame.rgb = np.full((4, 6, 3), np.nan)
