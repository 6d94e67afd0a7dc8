import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from globlin.conjugacy import (
    GlobalLinearizer,
    HurwitzTarget,
    SphereChart,
    check_star_shaped,
    delinearize,
    linearize,
    restrict_to_sublevel,
    retarget,
    sphere_forward,
    sphere_inverse,
    tau_rho,
    verify_conjugacy,
    verify_conjugacy_targets,
)
from globlin.exceptions import (
    AtEquilibrium,
    MultipleCrossings,
    NotHurwitzError,
    NotOnLevelSet,
    NotStarShaped,
    OutOfDomain,
    TimeCapExceeded,
)
from globlin.lyapunov import DomainBox, LyapunovFunction
from globlin.ode import IntegratorConfig, VectorField
from globlin.zoo import get_zoo


def half_square(n, level=0.5):
    return LyapunovFunction(lambda x: 0.5 * float(np.dot(x, x)), np.zeros(n),
                            gradient=lambda x: np.asarray(x, dtype=float), level=level)


def quartic(level=0.25):
    return LyapunovFunction(lambda x: 0.25 * float(x[0] ** 4 + x[1] ** 4), [0.0, 0.0], level=level)


def dumbbell():
    # Two lobes joined by a neck; seen from the centre of one lobe some rays
    # leave through the neck region and re-enter the other lobe.
    return LyapunovFunction(lambda x: float((x[0] ** 2 - 1.0) ** 2 + x[1] ** 2), [1.0, 0.0], level=1.2)


@pytest.fixture(scope="module")
def decay_1d():
    field = VectorField(lambda x: -x, [0.0])
    return GlobalLinearizer(field, half_square(1), box=DomainBox([-3.0], [3.0])).fit()


@pytest.fixture(scope="module")
def cubic():
    e = get_zoo("cubic_1d")
    return GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()


@pytest.fixture(scope="module")
def identity():
    e = get_zoo("linear_identity")
    return GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()


class TestTauRho:
    def test_linear(self, decay_1d):
        tau, rho = tau_rho(decay_1d, [math.e])
        assert tau == pytest.approx(1.0, abs=1e-10) and rho[0] == pytest.approx(1.0, abs=1e-10)

    def test_on_level(self, decay_1d):
        tau, rho = tau_rho(decay_1d, [-1.0])
        assert tau == 0.0 and rho[0] == -1.0

    def test_cubic(self, cubic):
        tau, rho = tau_rho(cubic, [0.5])
        assert tau == pytest.approx(-1.5, abs=1e-10) and rho[0] == pytest.approx(1.0, abs=1e-10)

    def test_at_equilibrium(self, cubic):
        with pytest.raises(AtEquilibrium):
            tau_rho(cubic, [1e-15])


class TestSphereChart:
    def test_forward_circle(self):
        chart = SphereChart(half_square(2))
        np.testing.assert_allclose(sphere_forward(chart, [0.6, 0.8]), [0.6, 0.8])

    def test_forward_off_level(self):
        chart = SphereChart(half_square(2))
        with pytest.raises(NotOnLevelSet):
            sphere_forward(chart, [0.0, 0.0])
        with pytest.raises(NotOnLevelSet):
            sphere_forward(chart, [0.3, 0.4])

    def test_inverse_circle(self):
        np.testing.assert_allclose(sphere_inverse(SphereChart(half_square(2)), np.array([0.6, 0.8])),
                                   [0.6, 0.8], atol=1e-15)

    def test_inverse_quartic(self):
        chart = SphereChart(quartic(), DomainBox([-1.5, -1.5], [1.5, 1.5]))
        np.testing.assert_allclose(sphere_inverse(chart, np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-15)
        u = np.array([1.0, 1.0]) / math.sqrt(2.0)
        ell = sphere_inverse(chart, u)
        assert np.linalg.norm(ell) == pytest.approx(2 ** 0.25, abs=1e-12)
        np.testing.assert_allclose(ell, [0.8408964152537145] * 2, atol=1e-12)
        assert abs(chart.lyapunov(ell) - 0.25) <= 1e-12 * 1.25
        np.testing.assert_allclose(sphere_forward(chart, ell), u, atol=1e-12)

    def test_inverse_needs_unit_vector(self):
        with pytest.raises(ValueError):
            sphere_inverse(SphereChart(half_square(2)), np.array([1.0, 1.0]))

    def test_multiple_crossings(self):
        chart = SphereChart(dumbbell(), DomainBox([-3.0, -3.0], [3.0, 3.0]))
        u = np.array([-1.0, 0.5]) / math.hypot(1.0, 0.5)
        with pytest.raises(MultipleCrossings):
            chart.inverse(u)

    @given(st.floats(0, 2 * math.pi))
    def test_round_trip(self, angle):
        chart = SphereChart(quartic(), DomainBox([-1.5, -1.5], [1.5, 1.5]))
        u = np.array([math.cos(angle), math.sin(angle)])
        np.testing.assert_allclose(chart.forward(chart.inverse(u)), u, atol=1e-9)


class TestStarShape:
    def test_round(self):
        rep = check_star_shaped(SphereChart(half_square(2), DomainBox([-2, -2], [2, 2])), 64)
        assert rep.passed and set(rep.counts) == {1}

    def test_quartic(self):
        assert check_star_shaped(SphereChart(quartic(), DomainBox([-1.5, -1.5], [1.5, 1.5])), 64).passed

    def test_dumbbell(self):
        rep = check_star_shaped(SphereChart(dumbbell(), DomainBox([-3.0, -3.0], [3.0, 3.0])), 256)
        assert not rep.passed and 3 in rep.counts

    def test_direction_count(self):
        with pytest.raises(ValueError):
            check_star_shaped(SphereChart(half_square(2)), 3)

    def test_fit_rejects(self):
        field = VectorField(lambda x: np.array([1.0 - x[0], -x[1]]), [1.0, 0.0])
        lin = GlobalLinearizer(field, dumbbell(), box=DomainBox([0.5, -3.0], [3.0, 3.0]), check=False)
        lin.check = True
        lin.n_directions = 256
        with pytest.raises((NotStarShaped, Exception)):
            lin.fit()


class TestLinearize:
    def test_identity_point(self, identity):
        np.testing.assert_allclose(linearize(identity, [0.3, 0.4]), [0.3, 0.4], atol=1e-10)

    def test_equilibrium(self, identity, cubic):
        assert np.array_equal(linearize(identity, [0.0, 0.0]), [0.0, 0.0])
        assert np.array_equal(linearize(cubic, [0.0]), [0.0])

    def test_cubic_closed_form(self, cubic):
        assert linearize(cubic, [0.5])[0] == pytest.approx(math.exp(-1.5), rel=1e-9)
        assert linearize(cubic, [0.5])[0] == pytest.approx(0.2231302, abs=1e-7)
        assert linearize(cubic, [-0.5])[0] == pytest.approx(-math.exp(-1.5), rel=1e-9)

    def test_on_level_has_unit_norm(self):
        e = get_zoo("quartic_2d")
        lin = GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()
        for u in np.array([[1.0, 0.0], [0.6, -0.8], [-1.0, 1.0] / np.sqrt(2)]):
            assert np.linalg.norm(lin.linearize(lin.chart_.inverse(u))) == pytest.approx(1.0, abs=1e-9)

    def test_norm_law(self, cubic):
        for x in (0.2, 0.7, 1.6, -1.1):
            y, tau, _ = cubic.evaluate([x])
            assert abs(np.linalg.norm(y) - math.exp(tau)) <= 1e-12 * math.exp(tau)

    def test_nonhyperbolic_needs_lyapunov(self):
        e = get_zoo("quartic_2d")
        with pytest.raises(NotHurwitzError):
            GlobalLinearizer(e.field, box=e.box).fit()

    def test_auto_level(self):
        e = get_zoo("spiral_2d")
        lin = GlobalLinearizer(e.field, box=e.box, level="auto").fit()
        assert lin.level_ == pytest.approx(0.5625)


class TestDelinearize:
    def test_zero(self, identity):
        assert np.array_equal(delinearize(identity, [0.0, 0.0]), [0.0, 0.0])

    def test_identity(self, identity):
        np.testing.assert_allclose(delinearize(identity, [0.3, 0.4]), [0.3, 0.4], atol=1e-10)

    def test_cubic(self, cubic):
        assert delinearize(cubic, [math.exp(-1.5)])[0] == pytest.approx(0.5, abs=1e-9)

    def test_tiny_image_round_trip(self, cubic):
        # |h(x)| ~ 1e-160 here; a naive norm squares it into the subnormal range
        x = -0.036911592416249306
        y = cubic.linearize([x])
        assert abs(y[0]) < 1e-150
        assert cubic.delinearize(y)[0] == pytest.approx(x, rel=1e-7)

    def test_time_cap(self):
        e = get_zoo("cubic_1d")
        lin = GlobalLinearizer(e.field, e.lyapunov, box=e.box, integrator=IntegratorConfig(t_max=10.0)).fit()
        with pytest.raises(TimeCapExceeded):
            lin.delinearize([1e-6])

    @pytest.mark.parametrize("name", ["cubic_1d", "spiral_2d", "vdp_reversed", "quartic_2d"])
    def test_round_trips(self, name):
        e = get_zoo(name)
        lin = GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()
        for x in e.box.sample(8, seed=1, center=lin.lyapunov_.center, exclude_radius=0.1):
            np.testing.assert_allclose(lin.delinearize(lin.linearize(x)), x, atol=1e-7 * (1 + np.linalg.norm(x)))
        for y in e.box.sample(8, seed=2, center=np.zeros(e.dimension), exclude_radius=0.1) * 0.5:
            np.testing.assert_allclose(lin.linearize(lin.delinearize(y)), y, atol=1e-7 * (1 + np.linalg.norm(y)))


class TestTargets:
    def test_coerce(self):
        assert HurwitzTarget.coerce(None, 2).is_minus_identity
        assert HurwitzTarget.coerce("minus_identity", 3).dimension == 3
        with pytest.raises(NotHurwitzError):
            HurwitzTarget.coerce(np.diag([1.0, -1.0]), 2)

    def test_minus_two_identity(self, identity):
        lin = retarget(identity, -2.0 * np.eye(2))
        for x in identity.box_.sample(20, seed=4, center=[0, 0], exclude_radius=0.05):
            np.testing.assert_allclose(lin.linearize(x), x * np.linalg.norm(x), atol=1e-6)

    def test_retarget_leaves_original(self, identity):
        retarget(identity, -2.0 * np.eye(2))
        assert identity.target_.is_minus_identity

    @given(st.floats(-2, 2), st.floats(-2, 2))
    def test_standard_frame_round_trip(self, a, b):
        T = HurwitzTarget(np.array([[-1.0, 1.0], [0.0, -2.0]]))
        y = np.array([a, b])
        if np.linalg.norm(y) < 1e-6:
            return
        np.testing.assert_allclose(T.from_standard(T.to_standard(y)), y, rtol=1e-10, atol=1e-12)

    @given(st.floats(0.1, 2), st.floats(0, 2 * math.pi), st.floats(-2, 2))
    def test_standard_frame_conjugates(self, r, angle, t):
        T = HurwitzTarget(np.array([[-1.0, 1.0], [0.0, -2.0]]))
        y = r * np.array([math.cos(angle), math.sin(angle)])
        lhs = T.to_standard(T.propagator(t) @ y)
        np.testing.assert_allclose(lhs, math.exp(-t) * T.to_standard(y), rtol=1e-9, atol=1e-12)


class TestRestrict:
    def test_same_level(self, cubic):
        r = restrict_to_sublevel(cubic, cubic.level_)
        assert r.linearize([0.5])[0] == cubic.linearize([0.5])[0]

    def test_local_values_unchanged(self, cubic):
        r = restrict_to_sublevel(cubic, 1.0 / 8.0)
        assert r.linearize([0.4])[0] == pytest.approx(cubic.linearize([0.4])[0], rel=1e-12)
        with pytest.raises(OutOfDomain):
            r.linearize([0.6])

    def test_bad_level(self, cubic):
        with pytest.raises(ValueError):
            restrict_to_sublevel(cubic, 2 * cubic.level_)


class TestVerify:
    def test_identity(self, identity):
        assert verify_conjugacy(identity, samples=30).max_residual <= 1e-9

    def test_cubic(self, cubic):
        rep = verify_conjugacy(cubic, box=DomainBox([0.2], [1.5]), times=(-1.0, 0.5, 2.0), samples=30)
        assert rep.max_residual <= 1e-6 and rep.evaluated > 0 and not rep.failures

    def test_van_der_pol(self):
        e = get_zoo("vdp_reversed")
        lin = GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()
        rep = verify_conjugacy(lin, samples=30)
        assert rep.max_residual <= 1e-5 and rep.max_tau_defect <= 1e-8 and rep.max_rho_defect <= 1e-7

    def test_deterministic(self, cubic):
        a = verify_conjugacy(cubic, samples=10, seed=3).to_json(diagnostics=True)
        b = verify_conjugacy(cubic, samples=10, seed=3).to_json(diagnostics=True)
        assert a == b

    def test_targets_share_samples(self, identity):
        reps = verify_conjugacy_targets(identity, [None, -2.0 * np.eye(2)], samples=10)
        assert len(reps) == 2 and reps[0].evaluated == reps[1].evaluated
        assert reps[1].max_residual <= 1e-6

    def test_contraction_image(self):
        e = get_zoo("vdp_reversed")
        lin = GlobalLinearizer(e.field, e.lyapunov, box=e.box).fit()
        pts = e.box.sample(6, seed=9, center=[0, 0], exclude_radius=0.1)
        for x, xp in zip(pts[:3], pts[3:]):
            d0 = np.linalg.norm(lin.linearize(x) - lin.linearize(xp))
            for t in (0.5, 1.5):
                dt = np.linalg.norm(lin.linearize(lin.flow(x, t)) - lin.linearize(lin.flow(xp, t)))
                assert dt == pytest.approx(math.exp(-t) * d0, rel=1e-6)


class TestEstimator:
    def test_params_and_clone(self, identity):
        params = identity.get_params()
        assert {"field", "lyapunov", "level", "target", "box", "integrator"} <= set(params)
        c = clone(identity)
        assert not hasattr(c, "chart_")

    def test_transform_shapes(self, identity):
        X = np.array([[0.3, 0.4], [-0.5, 0.1], [0.0, 0.0]])
        Y = identity.transform(X)
        assert Y.shape == (3, 2)
        np.testing.assert_allclose(identity.inverse_transform(Y), X, atol=1e-9)

    def test_feature_mismatch(self, identity):
        with pytest.raises(ValueError):
            identity.transform(np.zeros((2, 3)))

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            GlobalLinearizer().linearize([0.0])
