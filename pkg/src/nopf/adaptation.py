"""Delay-estimate update law and its ingredients.

The unknown actuator delay is estimated online by a normalized gradient rule
with projection onto a known interval [d_min, d_max].  The update signal is
assembled from the backstepping residual w(x) = u(x) - kappa(P(x)), the
sensitivity profile q1(x) = dkappa/dP(P(x)) * Phi(x, 0) * f(P(0), u(0)), and
weighted quadratures over the unit interval; the normalization keeps the
denominator at 1 or above so the estimator rate is always well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .delay_line import SpatialGrid
from .dynamics import PlantModel, model_feedback_gradient, model_jacobian
from .predictor import PredictorProfile


@dataclass(frozen=True)
class AdaptiveState:
    """Delay estimate with its projection bounds and gains."""

    d_hat: float
    d_min: float
    d_max: float
    gamma: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.d_min <= self.d_max):
            raise ValueError("need 0 < d_min <= d_max")
        if not (self.d_min <= self.d_hat <= self.d_max):
            raise ValueError(f"d_hat={self.d_hat!r} outside [{self.d_min}, {self.d_max}]")
        if self.gamma < 0 or self.b <= 0:
            raise ValueError("gamma must be >= 0 and b > 0")


@dataclass(frozen=True)
class UpdateSignals:
    """Per-step profiles and scalars feeding the delay update."""

    w_profile: np.ndarray
    q1_profile: np.ndarray
    phi: float
    n_value: float  # normalization denominator, always >= 1


def project(d_hat: float, phi: float, d_min: float, d_max: float) -> float:
    """Zero the rate when it points out of [d_min, d_max] at a boundary."""
    if not (d_min <= d_hat <= d_max):
        raise ValueError(f"d_hat={d_hat!r} outside [{d_min}, {d_max}]")
    if d_hat >= d_max and phi > 0:
        return 0.0
    if d_hat <= d_min and phi < 0:
        return 0.0
    return phi


def step_delay_estimate(state: AdaptiveState, phi: float, dt: float) -> AdaptiveState:
    """One explicit Euler step of the projected update law.

    The clamp after the step guards against overshoot of the discretization
    at large gamma*dt; the continuous-time projection alone cannot.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = state.gamma * project(state.d_hat, phi, state.d_min, state.d_max)
    d_new = min(max(state.d_hat + dt * rate, state.d_min), state.d_max)
    return replace(state, d_hat=d_new)


def _jacobians_along(model: PlantModel, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    if model.jacobian_vec is not None:
        return np.asarray(model.jacobian_vec(states, u), dtype=float)
    return np.array([model_jacobian(model, states[j], float(u[j]))
                     for j in range(states.shape[0])], dtype=float)


def _feedback_gradients_along(model: PlantModel, states: np.ndarray) -> np.ndarray:
    if model.feedback_gradient_vec is not None:
        return np.asarray(model.feedback_gradient_vec(states), dtype=float)
    return np.array([model_feedback_gradient(model, states[j])
                     for j in range(states.shape[0])], dtype=float)


def _feedback_along(model: PlantModel, states: np.ndarray) -> np.ndarray:
    if model.feedback_vec is not None:
        return np.asarray(model.feedback_vec(states), dtype=float)
    return np.array([model.feedback(states[j]) for j in range(states.shape[0])],
                    dtype=float)


def transition_matrices(model: PlantModel, profile: PredictorProfile,
                        input_profile: np.ndarray, d_hat: float) -> np.ndarray:
    """Fundamental matrices Phi(x_j, 0) of dPhi/dx = d_hat*J(x)*Phi.

    J(x_j) is the state Jacobian at (P[j], u[j]).  Integration uses the same
    scheme the profile was marched with, so the sensitivity is consistent
    with the predictor discretization.
    """
    values = profile.values
    u = np.asarray(input_profile, dtype=float)
    if values.shape[0] != u.shape[0]:
        raise ValueError("profile and input must share the grid")
    m = values.shape[0] - 1
    n = values.shape[1]
    h = d_hat * profile.grid.dx
    jac = _jacobians_along(model, values, u)
    phis = np.empty((m + 1, n, n))
    phis[0] = np.eye(n)
    if profile.scheme == "euler":
        for j in range(m):
            phis[j + 1] = phis[j] + h * (jac[j] @ phis[j])
    else:
        # Half-node Jacobians from interpolated state/input, as in the RK4 march.
        p_half = 0.5 * (values[:-1] + values[1:])
        u_half = 0.5 * (u[:-1] + u[1:])
        jac_half = _jacobians_along(model, p_half, u_half)
        for j in range(m):
            k1 = jac[j] @ phis[j]
            k2 = jac_half[j] @ (phis[j] + 0.5 * h * k1)
            k3 = jac_half[j] @ (phis[j] + 0.5 * h * k2)
            k4 = jac[j + 1] @ (phis[j] + h * k3)
            phis[j + 1] = phis[j] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(phis)):
        raise ValueError("transition matrices are not finite")
    return phis


def q1_profile(model: PlantModel, profile: PredictorProfile,
               input_profile: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Sensitivity q1[j] = dkappa/dP(P[j]) . Phi(x_j, 0) f(P[0], u[0])."""
    values = profile.values
    u = np.asarray(input_profile, dtype=float)
    f0 = np.asarray(model.rhs(values[0], float(u[0])), dtype=float)
    grads = _feedback_gradients_along(model, values)
    return np.einsum("jn,jnk,k->j", grads, phis, f0)


def w_profile(input_profile: np.ndarray, profile: PredictorProfile,
              model: PlantModel) -> np.ndarray:
    """Backstepping residual w[j] = u[j] - kappa(P[j])."""
    u = np.asarray(input_profile, dtype=float)
    return u - _feedback_along(model, profile.values)


def phi_update(w: np.ndarray, q1: np.ndarray, v_value: float, b: float,
               grid: SpatialGrid) -> tuple[float, float]:
    """Normalized update signal and its denominator.

    phi = -int (1+x) q1 w dx / (1 + V + b int (1+x) w^2 dx), both integrals
    by the trapezoid rule on the grid.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    if v_value < 0:
        raise ValueError("v_value must be nonnegative")
    weight = 1.0 + grid.points
    num = grid.integrate(weight * q1 * w)
    w_energy = grid.integrate(weight * w * w)
    n_value = 1.0 + v_value + b * w_energy
    return -num / n_value, n_value


def _sensitivity_euler_fast(jac: np.ndarray, f0: np.ndarray, h: float) -> np.ndarray:
    """z[j] = Phi(x_j, 0) f0 by the vector recursion z <- z + h*J[j] z.

    Same arithmetic as applying the Euler transition matrices to f0, without
    forming the matrices; the simulator hot loop uses this.
    """
    m = jac.shape[0] - 1
    n = f0.size
    out = np.empty((m + 1, n))
    out[0] = f0
    if n == 2:
        z0, z1 = float(f0[0]), float(f0[1])
        rows = jac.reshape(m + 1, 4).tolist()
        for j in range(m):
            a, bb, c, d = rows[j]
            z0, z1 = z0 + h * (a * z0 + bb * z1), z1 + h * (c * z0 + d * z1)
            out[j + 1, 0] = z0
            out[j + 1, 1] = z1
    elif n == 1:
        z = float(f0[0])
        col = jac.reshape(m + 1).tolist()
        for j in range(m):
            z = z + h * col[j] * z
            out[j + 1, 0] = z
    else:
        z = f0.astype(float)
        for j in range(m):
            z = z + h * (jac[j] @ z)
            out[j + 1] = z
    return out


def update_signals(model: PlantModel, profile_values: np.ndarray,
                   input_profile: np.ndarray, d_hat: float, v_value: float,
                   b: float, grid: SpatialGrid) -> UpdateSignals:
    """Assemble w, q1, phi and the normalization for one controller step.

    ``profile_values`` is whatever predictor backend is deployed (exact march
    or learned surrogate); the sensitivity is always integrated with the
    Euler recursion along that profile.
    """
    u = np.asarray(input_profile, dtype=float)
    w = u - _feedback_along(model, profile_values)
    f0 = np.asarray(model.rhs(profile_values[0], float(u[0])), dtype=float)
    if np.all(f0 == 0.0):
        q1 = np.zeros(profile_values.shape[0])
    else:
        jac = _jacobians_along(model, profile_values, u)
        z = _sensitivity_euler_fast(jac, f0, d_hat * grid.dx)
        grads = _feedback_gradients_along(model, profile_values)
        q1 = np.einsum("jn,jn->j", grads, z)
    phi, n_value = phi_update(w, q1, v_value, b, grid)
    return UpdateSignals(w_profile=w, q1_profile=q1, phi=phi, n_value=n_value)
