"""Tests for the differentiable substrate: networks, gradients, Adam, special functions."""

import numpy as np
import pytest

from dine.core.exceptions import ConfigurationError, DomainError, TrainingError
from dine.ml import autodiff as ad
from dine.ml.nn import MLP, ParameterVector, mlp_forward
from dine.ml.optim import Adam, OptimizerState, optimizer_step
from dine.ml.special import (LOG_SQRT_2PI, log_sum_exp, std_normal_cdf, std_normal_icdf,
                             std_normal_pdf)


def scalar_params(value: float) -> ParameterVector:
    return ParameterVector(np.array([value]), (("theta", (1,)),))


def central_difference(objective, params: ParameterVector, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros(params.size)
    for j in range(params.size):
        plus, minus = params.copy(), params.copy()
        plus.values[j] += h
        minus.values[j] -= h
        grad[j] = (float(objective(plus.bind(False)).data) - float(objective(minus.bind(False)).data)) / (2 * h)
    return grad


class TestParameterVector:

    def test_views_are_writable_slices(self):
        params = ParameterVector.zeros((("a", (2, 2)), ("b", (3,))))
        params.view("b")[...] = [1.0, 2.0, 3.0]
        assert params.size == 7
        assert params.values[4:].tolist() == [1.0, 2.0, 3.0]

    def test_layout_size_mismatch(self):
        with pytest.raises(ConfigurationError):
            ParameterVector(np.zeros(3), (("a", (2, 2)),))

    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigurationError):
            ParameterVector.zeros((("a", (1,)), ("a", (1,))))

    def test_select_and_assign(self):
        joint = ParameterVector.concat([
            ParameterVector(np.array([1.0, 2.0]), (("x.w", (2,)),)),
            ParameterVector(np.array([3.0]), (("y.w", (1,)),)),
        ])
        target = ParameterVector.zeros((("y.w", (1,)),))
        target.assign(joint.select("y."))
        assert target.values.tolist() == [3.0]
        assert joint.select("x.").names() == ["x.w"]


class TestMLP:

    def test_zero_network_linear_head(self):
        net = MLP("net", 3, 4, 2)
        params = ParameterVector.zeros(net.layout())
        assert mlp_forward(net, params, [0.3, -1.0, 2.0]).tolist() == [0.0, 0.0]

    def test_zero_network_softmax_head_is_uniform(self):
        net = MLP("net", 3, 4, 5, "softmax")
        params = ParameterVector.zeros(net.layout())
        np.testing.assert_allclose(mlp_forward(net, params, [1.0, 2.0, 3.0]), np.full(5, 0.2))

    def test_matches_hand_unrolled_evaluation(self):
        rng = np.random.default_rng(3)
        net = MLP("net", 2, 3, 2)
        params = ParameterVector(rng.normal(size=ParameterVector.zeros(net.layout()).size), net.layout())
        x = np.array([0.7, -1.3])
        w1, b1 = params.view("net.W1"), params.view("net.b1")
        w2, b2 = params.view("net.W2"), params.view("net.b2")
        hidden = [max(0.0, sum(x[a] * w1[a, j] for a in range(2)) + b1[j]) for j in range(3)]
        expected = [sum(hidden[j] * w2[j, c] for j in range(3)) + b2[c] for c in range(2)]
        np.testing.assert_allclose(mlp_forward(net, params, x), expected, rtol=1e-12)

    def test_wrong_input_length(self):
        net = MLP("net", 2, 3, 2)
        with pytest.raises(ConfigurationError):
            mlp_forward(net, ParameterVector.zeros(net.layout()), [1.0, 2.0, 3.0])

    def test_invalid_dimensions(self):
        with pytest.raises(ConfigurationError):
            MLP("net", 0, 3, 2)


class TestGradient:

    def test_square(self):
        value, grad = ad.gradient(lambda w: (w["theta"] * w["theta"]).sum(), scalar_params(3.0))
        assert value == pytest.approx(9.0)
        assert grad.values[0] == pytest.approx(6.0)

    def test_log_cdf_at_zero(self):
        _, grad = ad.gradient(lambda w: ad.log_ndtr(w["theta"]).sum(), scalar_params(0.0))
        assert grad.values[0] == pytest.approx(2 * std_normal_pdf(0.0), rel=1e-10)
        assert grad.values[0] == pytest.approx(0.7979, abs=1e-4)

    def test_network_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        net = MLP("net", 3, 5, 4, "softmax")
        params = ParameterVector(rng.normal(size=ParameterVector.zeros(net.layout()).size), net.layout())
        inputs = ad.Tensor(rng.normal(size=(6, 3)))
        target = rng.dirichlet(np.ones(4), size=6)

        def objective(w):
            probs = net(w, inputs)
            return (ad.log(probs) * target).sum() * -1.0 + (ad.exp(net.logits(w, inputs) * 0.1)).mean()

        _, grad = ad.gradient(objective, params)
        np.testing.assert_allclose(grad.values, central_difference(objective, params), rtol=1e-4, atol=1e-7)

    def test_row_functions_match_finite_differences(self):
        rng = np.random.default_rng(5)
        params = ParameterVector(rng.normal(size=12), (("a", (3, 4)),))

        def objective(w):
            a = w["a"]
            mixed = ad.logsumexp(ad.log_softmax(a) + ad.ndtr(a), axis=1)
            return mixed.sum() + ad.concat([a[:, :2], ad.clip(a, -0.5, 0.5)], axis=1).mean() + (a ** 3).sum()

        _, grad = ad.gradient(objective, params)
        np.testing.assert_allclose(grad.values, central_difference(objective, params), rtol=1e-4, atol=1e-7)

    def test_non_finite_objective(self):
        with pytest.raises(TrainingError):
            ad.gradient(lambda w: ad.log(w["theta"] * 0.0).sum(), scalar_params(1.0))


class TestOptimizer:

    def test_zero_gradient_is_fixed_point(self):
        params = scalar_params(1.5)
        state = OptimizerState.initial(params)
        updated, new_state = optimizer_step(params, params.like(np.zeros(1)), state)
        assert updated.values[0] == 1.5
        assert new_state.step_count == 1

    def test_converges_on_quadratic(self):
        optimizer = Adam(scalar_params(0.0))
        for _ in range(2000):
            theta = optimizer.params.values[0]
            optimizer.step(optimizer.params.like(np.array([2 * (theta - 2.0)])))
        assert abs(optimizer.params.values[0] - 2.0) < 1e-2

    def test_deterministic(self):
        params = scalar_params(0.3)
        grads = params.like(np.array([0.7]))
        state = OptimizerState.initial(params)
        first, s1 = optimizer_step(params, grads, state)
        second, s2 = optimizer_step(params, grads, state)
        assert first.values.tobytes() == second.values.tobytes()
        assert s1.first_moment.tobytes() == s2.first_moment.tobytes()
        assert params.values[0] == 0.3

    def test_non_finite_gradient(self):
        params = scalar_params(0.0)
        with pytest.raises(TrainingError):
            optimizer_step(params, params.like(np.array([np.nan])), OptimizerState.initial(params))

    def test_non_finite_parameters_after_step(self):
        params = ParameterVector(np.array([0.0, np.inf]), (("theta", (2,)),))
        assert not params.is_finite()
        with pytest.raises(TrainingError):
            optimizer_step(params, params.like(np.array([0.5, 0.5])), OptimizerState.initial(params))


class TestSpecialFunctions:

    def test_cdf_values(self):
        assert std_normal_cdf(0.0) == 0.5
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
        xs = np.linspace(-8, 8, 101)
        np.testing.assert_allclose(std_normal_cdf(xs) + std_normal_cdf(-xs), 1.0, atol=1e-12)

    def test_cdf_rejects_non_finite(self):
        with pytest.raises(DomainError):
            std_normal_cdf(np.nan)

    def test_icdf_values(self):
        assert std_normal_icdf(0.5) == 0.0
        assert std_normal_icdf(0.975) == pytest.approx(1.959964, abs=1e-5)

    def test_icdf_round_trip(self):
        xs = np.linspace(-6, 6, 1000)
        assert np.max(np.abs(std_normal_icdf(std_normal_cdf(xs)) - xs)) < 1e-6

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_icdf_domain(self, p):
        with pytest.raises(DomainError):
            std_normal_icdf(p)

    def test_log_sum_exp(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(np.log(2.0))
        assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + np.log(2.0))
        terms = np.random.default_rng(0).normal(size=16)
        assert log_sum_exp(terms) == pytest.approx(np.log(np.sum(np.exp(terms))), abs=1e-12)

    def test_log_sum_exp_empty(self):
        with pytest.raises(DomainError):
            log_sum_exp([])

    def test_log_normaliser(self):
        assert LOG_SQRT_2PI == pytest.approx(0.9189385332, abs=1e-10)
