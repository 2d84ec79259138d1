"""
Adam with bias correction over a flat ParameterVector
"""

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from dine.core.exceptions import ConfigurationError, TrainingError
from dine.ml.nn import ParameterVector


@dataclass(frozen=True, eq=False)
class OptimizerState:
    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, params: ParameterVector, learning_rate: float = 1e-2, beta1: float = 0.9,
                beta2: float = 0.999, epsilon: float = 1e-8) -> "OptimizerState":
        return cls(0, np.zeros(params.size), np.zeros(params.size),
                   learning_rate, beta1, beta2, epsilon)


def optimizer_step(params: ParameterVector, grads: ParameterVector,
                   state: OptimizerState) -> Tuple[ParameterVector, OptimizerState]:
    """One Adam update; returns new parameters and state, inputs untouched"""
    if grads.layout != params.layout or state.first_moment.shape != params.values.shape:
        raise ConfigurationError("Gradient/optimizer layout does not match the parameters")
    g = grads.values
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise TrainingError(f"Non-finite gradient at scalar {bad}", value=float(g[bad]))

    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    updated = params.like(params.values - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
    if not updated.is_finite():
        raise TrainingError("Parameters became non-finite after an optimizer step")
    return updated, replace(state, step_count=t, first_moment=m, second_moment=v)


class Adam:
    """Stateful wrapper used by the training loop"""

    def __init__(self, params: ParameterVector, learning_rate: float = 1e-2, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.state = OptimizerState.initial(params, learning_rate, beta1, beta2, epsilon)

    def step(self, grads: ParameterVector) -> ParameterVector:
        self.params, self.state = optimizer_step(self.params, grads, self.state)
        return self.params
