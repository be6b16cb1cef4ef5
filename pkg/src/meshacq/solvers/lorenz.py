"""Lorenz-96 lattice dynamics with a fixed-step classical Runge-Kutta integrator."""

import numpy as np

from ..core import Lorenz96Params


def lorenz96_rhs(x, forcing: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 4:
        raise ValueError("Lorenz-96 needs N >= 4")
    return (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) * np.roll(x, 1, axis=-1) - x + forcing


def lorenz96_solve(x0, params: Lorenz96Params = Lorenz96Params(), dt: float | None = None) -> np.ndarray:
    """State at the horizon. Works on a single state or a stack along axis 0."""
    x = np.array(x0, dtype=np.float64)
    if x.shape[-1] < 4:
        raise ValueError("Lorenz-96 needs N >= 4")
    dt = params.dt if dt is None else dt
    steps = int(round(params.horizon / dt))
    if not np.isclose(steps * dt, params.horizon, rtol=1e-9, atol=0):
        raise ValueError("horizon must be a whole number of steps")
    F = params.forcing
    for _ in range(steps):
        k1 = lorenz96_rhs(x, F)
        k2 = lorenz96_rhs(x + 0.5 * dt * k1, F)
        k3 = lorenz96_rhs(x + 0.5 * dt * k2, F)
        k4 = lorenz96_rhs(x + dt * k3, F)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x
