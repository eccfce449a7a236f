import numpy as np
import pytest
from conftest import X0_AGV, agv_model, scalar_lti
from hypothesis import given, settings
from hypothesis import strategies as st

from fbdeopt import (
    AgvParams,
    InvalidArgumentError,
    LtiModel,
    NumericalDivergenceError,
    make_agv_model,
    make_lti_model,
    rollout,
    self_check_derivatives,
    total_cost,
)
from fbdeopt.model import as_controls, stack_controls, unstack_controls

finite = st.floats(-3.0, 3.0, allow_nan=False)


class TestRollout:
    def test_scalar_chain(self):
        x = rollout(scalar_lti(), [0.0], np.array([[1.0], [1.0], [0.0]]))
        np.testing.assert_array_equal(x[:, 0], [0.0, 1.0, 2.0])

    def test_agv_zero_control_fixed_point(self):
        model = agv_model(20)
        x = rollout(model, X0_AGV, np.zeros((21, 2)))
        np.testing.assert_array_equal(x, np.tile(X0_AGV, (21, 1)))

    def test_agv_single_step(self):
        model = agv_model(1)
        x = rollout(model, X0_AGV, np.array([[2.3, 0.0], [2.3, 0.0]]))
        np.testing.assert_allclose(x[1], [0.115, -1.0, 0.0], atol=1e-15)

    def test_shape_checks(self):
        with pytest.raises(InvalidArgumentError):
            rollout(scalar_lti(), [0.0, 1.0], np.zeros((2, 1)))
        with pytest.raises(InvalidArgumentError):
            rollout(scalar_lti(), [0.0], np.zeros((2, 2)))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_names_step(self):
        model = make_lti_model([[1e200]], [[1.0]], [[1.0]], [[1.0]])
        with pytest.raises(NumericalDivergenceError) as err:
            rollout(model, [1e200], np.zeros((4, 1)))
        assert err.value.step == 1


class TestTotalCost:
    def test_single_term(self):
        model = make_lti_model([[0.0]], [[0.0]], [[0.0]], [[1.0]])
        assert total_cost(model, np.zeros((1, 1)), np.array([[3.0]])) == 9.0

    def test_scalar_closed_form(self):
        model = scalar_lti()
        u = np.zeros((2, 1))
        assert total_cost(model, rollout(model, [1.0], u), u) == 2.0

    def test_agv_zero_at_reference(self):
        model = agv_model(30)
        u = model.nominal_controls(30)
        x = rollout(model, X0_AGV, u)
        np.testing.assert_allclose(x, model.x_ref, atol=1e-12)
        assert total_cost(model, x, u) == pytest.approx(0.0, abs=1e-20)


class TestAgvModel:
    def test_control_jacobian_at_zero_heading(self):
        model = agv_model(5)
        _, fu = model.dynamics_jacobians(np.array([1.0, 2.0, 0.0]), np.array([2.0, 0.3]))
        np.testing.assert_allclose(fu, [[0.05, 0.0], [0.0, 0.0], [0.0, 0.05]], atol=1e-17)

    def test_state_jacobian_at_rest(self):
        model = agv_model(5)
        fx, _ = model.dynamics_jacobians(np.array([1.0, 2.0, 0.7]), np.array([0.0, 0.3]))
        np.testing.assert_array_equal(fx, np.eye(3))

    def test_zero_weight_curvature(self):
        model = agv_model(5)
        h = model.dynamics_curvature(np.array([1.0, 2.0, 0.7]), np.array([2.0, 0.3]), np.zeros(3))
        np.testing.assert_array_equal(h, np.zeros((5, 5)))

    def test_reference_is_rolled_out(self):
        model = agv_model(160)
        assert model.x_ref.shape == (161, 3)
        np.testing.assert_allclose(model.x_ref[-1], [18.4, -1.0, 0.0], atol=1e-12)

    def test_reference_window_clamps(self):
        model = agv_model(10).with_reference_offset(8)
        np.testing.assert_array_equal(model.nominal_controls(5), np.tile([2.3, 0.0], (6, 1)))
        ref, _ = model.reference(5)
        np.testing.assert_array_equal(ref, model.x_ref[-1])

    def test_bad_params(self):
        with pytest.raises(InvalidArgumentError):
            AgvParams(0.0, 2.3, 0.0)
        with pytest.raises(InvalidArgumentError):
            AgvParams(0.05, 2.3, 0.0, R=np.diag([1.0, -1.0]))
        with pytest.raises(InvalidArgumentError):
            make_agv_model(AgvParams(0.05, 2.3, 0.0), -1)

    def test_self_check(self):
        rep = self_check_derivatives(agv_model(10), samples=10, seed=0, k_max=10)
        assert rep.passed, rep.errors


class TestLtiModel:
    def test_cost_hessian_scalar(self):
        from fbdeopt import AugmentedProblem, hessian

        ap = AugmentedProblem.unconstrained(scalar_lti(), 1, [1.0])
        np.testing.assert_allclose(hessian(ap, np.zeros((2, 1))), [[4.0, 0.0], [0.0, 2.0]], atol=1e-12)

    def test_decoupled_gradient(self):
        from fbdeopt import AugmentedProblem, gradient

        Rq = np.array([[2.0, 0.5], [0.5, 1.0]])
        model = make_lti_model(np.eye(2), np.zeros((2, 2)), np.eye(2), Rq)
        u = np.random.default_rng(3).standard_normal((5, 2))
        g, _, _ = gradient(AugmentedProblem.unconstrained(model, 4, [0.3, -0.2]), u)
        np.testing.assert_allclose(g, (2.0 * u @ Rq).reshape(-1), atol=1e-12)

    def test_reset_dynamics_zero_optimum(self):
        from fbdeopt import AugmentedProblem, solve_subproblem

        model = make_lti_model([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        rep = solve_subproblem(AugmentedProblem.unconstrained(model, 4, [2.5]), np.ones((5, 1)))
        assert rep.converged
        # stopping at |g|^2 < 1e-8 leaves errors of order 1e-4 / (2 Rq)
        np.testing.assert_allclose(rep.final_u, 0.0, atol=1e-4)

    def test_self_check_rounding_level(self):
        model = make_lti_model([[1.0, 0.1], [0.0, 1.0]], [[0.0], [0.1]], np.eye(2), [[0.5]])
        rep = self_check_derivatives(model, samples=10, seed=1)
        assert max(rep.errors.values()) <= 1e-9

    def test_dimension_errors(self):
        with pytest.raises(InvalidArgumentError):
            make_lti_model(np.eye(2), np.ones((3, 1)), np.eye(2), [[1.0]])
        with pytest.raises(InvalidArgumentError):
            make_lti_model(np.eye(2), np.ones((2, 1)), np.eye(2), [[0.0]])
        with pytest.raises(InvalidArgumentError):
            make_lti_model(np.eye(2), np.ones((2, 1)), np.eye(2), [[1.0]], x_ref=np.zeros((4, 2)), N=5)


class WrongControlJacobian(LtiModel):
    """Negative control: reports ``B + 0.01`` instead of ``B``."""

    def dynamics_jacobians(self, x, u):
        fx, fu = super().dynamics_jacobians(x, u)
        return fx, fu + 0.01


def test_self_check_flags_wrong_derivative():
    model = WrongControlJacobian([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    rep = self_check_derivatives(model, samples=3)
    assert rep.failures == ["dfdu"]


def test_control_packing_round_trip():
    u = np.arange(12.0).reshape(6, 2)
    np.testing.assert_array_equal(unstack_controls(stack_controls(u), 2), u)
    np.testing.assert_array_equal(as_controls(agv_model(5), stack_controls(u)), u)
    with pytest.raises(InvalidArgumentError):
        as_controls(agv_model(5), np.zeros(5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8), finite, finite)
def test_agv_rollout_matches_loop(us, y0, th0):
    """Vectorised step against the textbook update, for arbitrary controls."""
    model = agv_model(10)
    u = np.array(us + [(0.0, 0.0)])
    x = rollout(model, [0.0, y0, th0], u)
    px, py, pth = 0.0, y0, th0
    for k, (v, w) in enumerate(us):
        px, py, pth = px + 0.05 * v * np.cos(pth), py + 0.05 * v * np.sin(pth), pth + 0.05 * w
        np.testing.assert_allclose(x[k + 1], [px, py, pth], rtol=1e-12, atol=1e-12)
