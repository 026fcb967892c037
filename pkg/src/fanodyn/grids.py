"""Uniform time grid; composite trapezoid is the single quadrature rule."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = t0 + n*h for n = 0..steps.

    Every integral in the solver stack (phases, memory integrals, the
    correlation double integrals) uses composite trapezoid on these nodes,
    so the whole pipeline shares one second-order error model.
    """

    t0: float
    t_final: float
    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("TimeGrid needs steps >= 2")
        if not self.t_final > self.t0:
            raise ValueError("TimeGrid needs t_final > t0")

    @property
    def h(self) -> float:
        return (self.t_final - self.t0) / self.steps

    @property
    def n_nodes(self) -> int:
        return self.steps + 1

    def node(self, n: int) -> float:
        return self.t0 + n * self.h

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)

    def trapezoid_weights(self, n: int) -> np.ndarray:
        """Weights w_k for int_{t0}^{t_n} f dt ~= sum_k w_k f(t_k)."""
        if n == 0:
            return np.zeros(1)
        w = np.full(n + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def halved(self) -> "TimeGrid":
        """Same interval at half the step (convergence studies)."""
        return TimeGrid(self.t0, self.t_final, 2 * self.steps)
