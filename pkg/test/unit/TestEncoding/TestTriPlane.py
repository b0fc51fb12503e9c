"""
Handles testing of the tri-plane encoder and the 3-d baseline
#
"""
import pytest
import numpy as np
import ernf
from ernf.encoding import (HashGridConfig, TriPlaneEncoder, Hash3DEncoder, build_encoder,
                           triplane_encode, triplane_encode_backward)


class TestTriPlane:
    r"""
    Tests the plane factorization and its adjoint
    """

    def test_output_dim(self):
        enc = TriPlaneEncoder(HashGridConfig(levels=14, features=1))
        assert enc.output_dim == 42
        assert triplane_encode(enc, np.full((2, 3), 0.5)).shape == (2, 42)
        #
        with pytest.raises(ernf.ContractError):
            TriPlaneEncoder(HashGridConfig(dims=3))
        with pytest.raises(ernf.ContractError):
            Hash3DEncoder(HashGridConfig(dims=2))

    def test_zero_tables(self):
        enc = TriPlaneEncoder(HashGridConfig(levels=3, features=2, res_min=2, res_max=8))
        for value in enc.parameters().values():
            value[...] = 0.0
        assert np.all(triplane_encode(enc, np.random.default_rng(0).random((4, 3))) == 0.0)

    def test_projection_independence(self):
        rng = np.random.default_rng(1)
        config = HashGridConfig(levels=3, features=2, table_size_log2=8, res_min=2, res_max=8)
        enc = TriPlaneEncoder(config, rng)
        for value in enc.parameters().values():
            value[...] = rng.uniform(-1.0, 1.0, value.shape)
        x = rng.random((5, 3))
        moved = x.copy()
        moved[:, 2] = rng.random(5)
        width = config.output_dim
        first, second = triplane_encode(enc, x), triplane_encode(enc, moved)
        assert np.array_equal(first[:, :width], second[:, :width])
        assert not np.array_equal(first[:, width:], second[:, width:])

    def test_backward_plane_isolation(self):
        rng = np.random.default_rng(2)
        config = HashGridConfig(levels=2, features=1, table_size_log2=8, res_min=2, res_max=6)
        enc = TriPlaneEncoder(config, rng)
        for value in enc.parameters().values():
            value[...] = rng.uniform(-1.0, 1.0, value.shape)
        x = rng.random((4, 3))
        upstream = np.zeros((4, enc.output_dim))
        assert all(np.all(val == 0.0) for val in
                   triplane_encode_backward(enc, x, upstream)[0].values())
        #
        upstream[:, :config.output_dim] = rng.normal(size=(4, config.output_dim))
        grads, dx = triplane_encode_backward(enc, x, upstream)
        assert np.all(dx[:, 2] == 0.0)
        assert np.all(grads['plane_yz.tables'] == 0.0)
        assert np.any(grads['plane_xy.tables'] != 0.0)

    def test_backward_finite_difference(self):
        rng = np.random.default_rng(3)
        enc = build_encoder('trihash', levels=2, features=2, table_size_log2=6, res_min=2,
                            res_max=6, rng=rng)
        for value in enc.parameters().values():
            value[...] = rng.uniform(-1.0, 1.0, value.shape)
        x = rng.uniform(0.05, 0.95, (3, 3))
        upstream = rng.normal(size=(3, enc.output_dim))
        _, dx = triplane_encode_backward(enc, x, upstream)
        step = 1e-6
        for row in range(3):
            for axis in range(3):
                plus, minus = x.copy(), x.copy()
                plus[row, axis] += step
                minus[row, axis] -= step
                numeric = np.sum((triplane_encode(enc, plus) -
                                  triplane_encode(enc, minus)) * upstream) / (2.0 * step)
                assert np.isclose(dx[row, axis], numeric, rtol=1e-4, atol=1e-6)

    def test_build_encoder(self):
        enc = build_encoder('trihash', levels=2, table_size_log2=9, res_min=2, res_max=4,
                            equal_budget=True)
        base = build_encoder('hash3d', levels=2, table_size_log2=9, res_min=2, res_max=4)
        assert isinstance(enc, TriPlaneEncoder)
        assert isinstance(base, Hash3DEncoder)
        # equal table budgets up to rounding
        assert abs(enc.num_parameters() - base.num_parameters()) <= 3 * 2
        assert set(enc.parameter_groups().values()) == {'grid'}
        with pytest.raises(ernf.ContractError):
            build_encoder('dense')
