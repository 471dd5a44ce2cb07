import math

import numpy as np
import pytest

from torusgas.geometry import TorusDomain
from torusgas.testfunctions import TestFunction


def test_bump_shape_and_support():
    dom = TorusDomain(1, 20.0)
    f = TestFunction.bump([10.0], 2.0, 1.5)
    assert math.isclose(float(f([10.0], dom)), 1.5)
    assert float(f([12.0], dom)) == 0.0
    assert float(f([12.1], dom)) == 0.0
    mid = float(f([11.0], dom))
    assert math.isclose(mid, 1.5 * math.cos(math.pi / 4) ** 2, rel_tol=1e-12)
    # periodic wrap: support can cross the origin
    g = TestFunction.bump([0.5], 1.0, 1.0)
    assert float(g([19.9], dom)) > 0


def test_step_and_sum():
    dom = TorusDomain(1, 20.0)
    f = TestFunction.step([3.0], [5.0], 2.0)
    assert float(f([4.0], dom)) == 2.0
    assert float(f([5.2], dom)) == 0.0
    s = TestFunction.sum_of(f, TestFunction.bump([4.0], 0.5, -1.0))
    assert math.isclose(float(s([4.0], dom)), 1.0)
    assert s.max_abs() == 3.0
    assert list(s.breakpoints_1d()) == sorted([3.0, 5.0, 3.5, 4.0, 4.5])


def test_pairing():
    dom = TorusDomain(1, 20.0)
    f = TestFunction.step([3.0], [5.0], 1.0)
    pts = np.array([[3.5], [4.8], [10.0]])
    assert f.pairing(pts, dom) == 2.0
    assert f.pairing(np.empty((0, 1)), dom) == 0.0


def test_validation():
    with pytest.raises(ValueError):
        TestFunction.bump([0.0], -1.0, 1.0)
    with pytest.raises(ValueError):
        TestFunction.step([1.0], [1.0], 1.0)
    big = TestFunction.bump([5.0], 6.0, 1.0)
    with pytest.raises(ValueError, match="L/4"):
        big.check_support(TorusDomain(1, 20.0))
    # spread-out sums count the union radius
    spread = TestFunction.sum_of(TestFunction.bump([2.0], 1.0, 1.0),
                                 TestFunction.bump([12.0], 1.0, 1.0))
    with pytest.raises(ValueError, match="L/4"):
        spread.check_support(TorusDomain(1, 20.0))
    ok = TestFunction.sum_of(TestFunction.bump([2.0], 1.0, 1.0),
                             TestFunction.bump([9.0], 1.0, 1.0))
    ok.check_support(TorusDomain(1, 20.0))  # union radius 4.5 < 5
    with pytest.raises(ValueError):
        TestFunction.sum_of(*[TestFunction.bump([float(i)], 0.3, 1.0)
                              for i in range(6)])


def test_zero_height_allowed_for_generator_boundary_case():
    dom = TorusDomain(1, 20.0)
    f = TestFunction.bump([5.0], 1.0, 0.0)
    assert float(f([5.0], dom)) == 0.0


def test_2d_support():
    dom = TorusDomain(2, 16.0)
    f = TestFunction.bump([8.0, 8.0], 2.0, 1.0)
    assert float(f([8.0, 8.0], dom)) == 1.0
    assert float(f([8.0, 10.5], dom)) == 0.0
    st = TestFunction.step([4.0, 4.0], [6.0, 7.0], 1.0)
    assert float(st([5.0, 6.0], dom)) == 1.0
    assert float(st([5.0, 7.5], dom)) == 0.0
