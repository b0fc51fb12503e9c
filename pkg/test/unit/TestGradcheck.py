"""
Handles testing of the finite difference gradient checker
#
"""
from collections import OrderedDict
import pytest
import numpy as np
import ernf
from ernf.gradcheck import (CASES, TOLERANCE, GradCase, check_case, gradcheck_module,
                            relative_error, run_gradchecks, same_state, tape_state)


class TestGradcheck:
    r"""
    Tests the checker itself and runs every adjoint through it
    """

    def test_relative_error(self):
        assert relative_error(1.0, 1.0) == 0.0
        assert np.isclose(relative_error(2.0, 1.0), 0.5)
        # tiny values are measured against the floor
        assert np.isclose(relative_error(1e-9, 0.0), 1e-5)

    def test_tape_state(self):
        first = tape_state({'mask': np.array([True, False]), 'values': np.ones(2)})
        second = tape_state({'mask': np.array([True, True]), 'values': np.ones(2)})
        assert same_state(first, first)
        assert not same_state(first, second)

    def test_detects_wrong_gradient(self):
        x = np.array([0.3, -0.7])
        arrays = OrderedDict([('x', x)])
        right = GradCase(arrays, lambda: (float(np.sum(x**3)), []), lambda: {'x': 3.0 * x**2})
        wrong = GradCase(arrays, lambda: (float(np.sum(x**3)), []), lambda: {'x': 2.0 * x**2})
        rng = np.random.default_rng(0)
        error, compared, kinks = check_case(right, rng)
        assert error < TOLERANCE and compared > 0 and kinks == 0
        error, _, _ = check_case(wrong, rng)
        assert error > 0.1
        bad_shape = GradCase(arrays, right.evaluate, lambda: {'x': np.zeros(3)})
        with pytest.raises(ernf.ContractError):
            check_case(bad_shape, rng)

    def test_all_modules(self):
        results = run_gradchecks('all', seed=1, instances=3)
        assert [res.module for res in results] == list(CASES)
        for res in results:
            assert res.passed, res.to_dict()
            assert res.entries > 0

    def test_deterministic(self):
        first = gradcheck_module('compositor', seed=4, instances=2)
        second = gradcheck_module('compositor', seed=4, instances=2, num_workers=2)
        assert first == second
        with pytest.raises(ernf.ContractError):
            gradcheck_module('unknown')
