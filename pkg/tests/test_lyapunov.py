import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from globlin.exceptions import DegenerateLevel, NotHurwitzError, ValidationFailed
from globlin.lyapunov import DomainBox, LyapunovFunction, choose_level, quadratic_lyapunov_from_jacobian, validate
from globlin.ode import VectorField
from globlin.zoo import get_zoo, list_zoo


def half_square(n):
    return LyapunovFunction(lambda x: 0.5 * float(np.dot(x, x)), np.zeros(n))


class TestDomainBox:
    def test_invalid(self):
        with pytest.raises(ValueError):
            DomainBox([1.0], [0.0])
        with pytest.raises(ValueError):
            DomainBox([0.0, 0.0], [1.0])

    def test_samples_are_deterministic_and_inside(self):
        box = DomainBox([-1.0, 0.0], [1.0, 2.0])
        a, b = box.sample(200, seed=5), box.sample(200, seed=5)
        assert np.array_equal(a, b)
        assert all(box.contains(p) for p in a)
        assert not np.array_equal(a, box.sample(200, seed=6))

    def test_exclusion_ball(self):
        box = DomainBox([-1.0, -1.0], [1.0, 1.0])
        pts = box.sample(500, center=[0.0, 0.0], exclude_radius=0.3)
        assert len(pts) == 500 and np.linalg.norm(pts, axis=1).min() >= 0.3

    def test_boundary_samples_include_face_centres(self):
        pts = DomainBox([-1.0, -1.0], [1.0, 1.0]).boundary_samples(4)
        assert any(np.allclose(p, [1.0, 0.0]) for p in pts)
        assert all(np.isclose(np.abs(p).max(), 1.0) for p in pts)

    def test_distance_along(self):
        box = DomainBox([-1.0, -2.0], [1.0, 2.0])
        assert box.distance_along([0.0, 0.0], np.array([0.0, 1.0])) == 2.0
        assert box.distance_along([0.0, 0.0], np.array([1.0, 1.0]) / np.sqrt(2)) == pytest.approx(np.sqrt(2))


class TestQuadratic:
    def test_identity(self):
        V = quadratic_lyapunov_from_jacobian(VectorField(lambda x: -x, [0.0, 0.0]))
        np.testing.assert_allclose(V.matrix, np.eye(2) / 2, atol=1e-15)
        assert V([3.0, 4.0]) == pytest.approx(12.5)
        np.testing.assert_allclose(V.gradient([1.0, 2.0]), [1.0, 2.0])

    def test_jordan(self):
        J = np.array([[-1.0, 1.0], [0.0, -1.0]])
        V = quadratic_lyapunov_from_jacobian(VectorField(lambda x: J @ x, [0.0, 0.0], jacobian=lambda x: J))
        np.testing.assert_allclose(V.matrix, [[0.5, 0.25], [0.25, 0.75]], atol=1e-14)

    def test_nonhyperbolic(self):
        with pytest.raises(NotHurwitzError):
            quadratic_lyapunov_from_jacobian(VectorField(lambda x: -x**3, [0.0]))

    def test_off_origin_centre(self):
        V = quadratic_lyapunov_from_jacobian(VectorField(lambda x: 1.0 - x, [1.0]))
        assert V([1.0]) == 0.0 and V([2.0]) == pytest.approx(0.5)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_derivative_identity(self, a, b):
        J = np.array([[-1.0, 2.0], [-0.5, -3.0]])
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        V = quadratic_lyapunov_from_jacobian(VectorField(lambda x: J @ x, [0.0, 0.0], jacobian=lambda x: J), Q)
        x = np.array([a, b])
        assert abs(V.gradient(x) @ (J @ x) + x @ Q @ x) <= 1e-8

    def test_gradient_fallback(self):
        V = LyapunovFunction(lambda x: float(x[0] ** 4 / 4 + x[1] ** 2), [0.0, 0.0])
        np.testing.assert_allclose(V.gradient([1.0, 2.0]), [1.0, 4.0], rtol=1e-8)


class TestValidate:
    def test_pass_with_margins(self):
        report = validate(half_square(1), VectorField(lambda x: -x, [0.0]), DomainBox([-2.0], [2.0]))
        assert report.passed and report.samples >= 1000
        assert report.worst_decrease_margin < 0
        doc = json.loads(report.to_json())
        assert {"passed", "worst_positive_margin", "worst_decrease_margin", "violations"} <= set(doc)

    def test_anti_lyapunov(self):
        with pytest.raises(ValidationFailed) as info:
            validate(half_square(1), VectorField(lambda x: x, [0.0]), DomainBox([-2.0], [2.0]))
        assert info.value.report.violations

    def test_report_without_raising(self):
        rep = validate(half_square(1), VectorField(lambda x: x, [0.0]), DomainBox([-2.0], [2.0]),
                       raise_on_failure=False)
        assert not rep.passed and len(rep.violations) == rep.samples

    def test_quartic(self):
        e = get_zoo("quartic_2d")
        assert validate(e.lyapunov, e.field, DomainBox([-1.5, -1.5], [1.5, 1.5])).passed

    def test_box_beyond_basin(self):
        e = get_zoo("bistable_1d")
        with pytest.raises(ValidationFailed):
            validate(e.lyapunov, e.field, DomainBox([-1.5], [1.5]))

    @pytest.mark.parametrize("name", [n for n, _ in list_zoo()])
    def test_sub_boxes(self, name):
        e = get_zoo(name)
        for shrink in (1.0, 0.7, 0.3):
            sub = DomainBox(e.box.lower * shrink, e.box.upper * shrink)
            assert validate(e.lyapunov, e.field, sub, seed=3).passed


class TestChooseLevel:
    def test_interval(self):
        assert choose_level(half_square(1), DomainBox([-2.0], [2.0])) == 1.0

    def test_square(self):
        assert choose_level(half_square(2), DomainBox([-1.0, -1.0], [1.0, 1.0])) == 0.25

    def test_box_excluding_centre(self):
        with pytest.raises(DegenerateLevel):
            choose_level(half_square(1), DomainBox([1.0], [2.0]))

    @pytest.mark.parametrize("name", [n for n, _ in list_zoo()])
    def test_boundary_stays_above_level(self, name):
        e = get_zoo(name)
        c = choose_level(e.lyapunov, e.box)
        assert all(e.lyapunov(p) > c for p in e.box.boundary_samples())
