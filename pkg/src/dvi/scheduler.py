"""Timestep grid and the linearly decaying visual-modulation weight."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_STEPS = 25
DEFAULT_LAMBDA_BASE = 1.0
DEFAULT_ALPHA = 0.8


@dataclass(frozen=True)
class ScheduleGrid:
    steps: int
    t_values: tuple[float, ...]
    lambda_base: float
    alpha_per_layer: tuple[float, ...]

    @property
    def lambdas(self) -> tuple[float, ...]:
        return tuple(self.lambda_base * t for t in self.t_values)

    @property
    def step_sizes(self) -> tuple[float, ...]:
        t = self.t_values
        return tuple(t[i + 1] - t[i] for i in range(self.steps))

    def rows(self):
        """``(step, t, lambda)`` for every grid point, terminal one included."""
        return [(i, t, self.lambda_base * t) for i, t in enumerate(self.t_values)]


def build_grid(
    T: int = DEFAULT_STEPS,
    lambda_base: float = DEFAULT_LAMBDA_BASE,
    L: int = 4,
    alpha: float | Sequence[float] = DEFAULT_ALPHA,
) -> ScheduleGrid:
    """Uniform grid ``t_i = (T - i) / T`` for ``i = 0..T``."""
    if T < 1:
        raise ValueError(f"need at least one step, got T={T}")
    if L < 1:
        raise ValueError(f"need at least one layer, got L={L}")
    if lambda_base < 0 or not np.isfinite(lambda_base):
        raise ValueError(f"lambda_base must be finite and >= 0, got {lambda_base}")
    if np.ndim(alpha) == 0:
        alphas = (float(alpha),) * L
    else:
        alphas = tuple(float(a) for a in alpha)
        if len(alphas) != L:
            raise ValueError(f"got {len(alphas)} per-layer alphas for L={L} layers")
    if any(not 0.0 <= a <= 2.0 for a in alphas):
        raise ValueError(f"alpha values must lie in [0, 2], got {alphas}")
    t_values = tuple((T - i) / T for i in range(T + 1))
    return ScheduleGrid(steps=T, t_values=t_values, lambda_base=float(lambda_base), alpha_per_layer=alphas)


def lambda_at(grid: ScheduleGrid, i: int) -> float:
    if not 0 <= i <= grid.steps:
        raise IndexError(f"step index {i} outside [0, {grid.steps}]")
    return grid.lambda_base * grid.t_values[i]
