"""Exact numerical predictor: future-state profile by marching in space.

Given the current state X, the measured distributed input u(., t) and a delay
estimate, the predicted state P(x) solves the initial-value problem

    dP/dx = delay_estimate * f(P(x), u(x)),   P(0) = X,

so P(1) is the state one (estimated) delay ahead and feeds the control law
kappa(P(1)).  Explicit Euler is the production scheme; classical RK4 is kept
for reference solutions and convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay_line import SpatialGrid
from .dynamics import PlantModel

BLOWUP_LIMIT = 1e12


class PredictorBlowUpError(RuntimeError):
    """Marching produced a non-finite or absurdly large state."""

    def __init__(self, node: int, message: str):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class PredictorQuery:
    """One predictor evaluation request: state, input profile, delay estimate."""

    state: np.ndarray
    input_profile: np.ndarray  # values on grid.points
    delay_estimate: float
    grid: SpatialGrid

    def __post_init__(self):
        if self.delay_estimate <= 0:
            raise ValueError("delay_estimate must be positive")
        if len(self.input_profile) != self.grid.m + 1:
            raise ValueError(
                f"input_profile has {len(self.input_profile)} samples, "
                f"grid expects {self.grid.m + 1}"
            )


@dataclass(frozen=True)
class PredictorProfile:
    """Predicted-state grid function on [0, 1]; values[0] is the query state."""

    values: np.ndarray  # (m + 1, n)
    scheme: str
    grid: SpatialGrid


def _check_node(vals, j):
    arr = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > BLOWUP_LIMIT):
        raise PredictorBlowUpError(
            j, f"predictor state blew up at node {j}: {arr};"
               " delay estimate or input profile outside the plant's"
               " forward-complete domain")


def _march_euler_fast(rhs_fast, state, u, scale):
    m = u.size - 1
    ul = u.tolist()
    n = len(state)
    if n == 2:  # dominant case in the closed loop; avoid tuple rebuild overhead
        p0, p1 = state
        out = [state]
        append = out.append
        for j in range(m):
            d0, d1 = rhs_fast((p0, p1), ul[j])
            p0 += scale * d0
            p1 += scale * d1
            append((p0, p1))
        return out
    if n == 1:
        (p0,) = state
        out = [state]
        append = out.append
        for j in range(m):
            p0 += scale * rhs_fast((p0,), ul[j])[0]
            append((p0,))
        return out
    out = [state]
    p = state
    for j in range(m):
        d = rhs_fast(p, ul[j])
        p = tuple(p[i] + scale * d[i] for i in range(n))
        out.append(p)
    return out


def half_node_values(u: np.ndarray) -> np.ndarray:
    """Input values at interval midpoints for the RK4 stages.

    Cubic 4-point interpolation (one-sided at the ends) keeps the midpoint
    error at O(dx^4) so it does not cap the scheme order; plain averaging
    of the bracketing nodes would drag RK4 down to second order.  Falls
    back to averaging when the grid is too coarse for the stencil.
    """
    m = u.size - 1
    if m < 4:
        return 0.5 * (u[:-1] + u[1:])
    mid = np.empty(m)
    mid[1:-1] = (-u[:-3] + 9.0 * u[1:-2] + 9.0 * u[2:-1] - u[3:]) / 16.0
    # One-sided cubic at xi = 0.5 and xi = m - 0.5.
    c = (0.3125, 0.9375, -0.3125, 0.0625)
    mid[0] = c[0] * u[0] + c[1] * u[1] + c[2] * u[2] + c[3] * u[3]
    mid[-1] = c[0] * u[-1] + c[1] * u[-2] + c[2] * u[-3] + c[3] * u[-4]
    return mid


def _march_rk4_fast(rhs_fast, state, u, scale):
    m = u.size - 1
    ul = u.tolist()
    um_list = half_node_values(u).tolist()
    n = len(state)
    half = scale / 2.0
    sixth = scale / 6.0
    if n == 2:
        p0, p1 = state
        out = [state]
        append = out.append
        for j in range(m):
            u0 = ul[j]
            u1 = ul[j + 1]
            um = um_list[j]
            a0, a1 = rhs_fast((p0, p1), u0)
            b0, b1 = rhs_fast((p0 + half * a0, p1 + half * a1), um)
            c0, c1 = rhs_fast((p0 + half * b0, p1 + half * b1), um)
            d0, d1 = rhs_fast((p0 + scale * c0, p1 + scale * c1), u1)
            p0 += sixth * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
            p1 += sixth * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            append((p0, p1))
        return out
    out = [state]
    p = state
    for j in range(m):
        u0 = ul[j]
        u1 = ul[j + 1]
        um = um_list[j]
        k1 = rhs_fast(p, u0)
        k2 = rhs_fast(tuple(p[i] + half * k1[i] for i in range(n)), um)
        k3 = rhs_fast(tuple(p[i] + half * k2[i] for i in range(n)), um)
        k4 = rhs_fast(tuple(p[i] + scale * k3[i] for i in range(n)), u1)
        p = tuple(p[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                  for i in range(n))
        out.append(p)
    return out


def predict(model: PlantModel, query: PredictorQuery, scheme: str = "euler") -> PredictorProfile:
    """March the predictor ODE across the grid.

    Euler: P[j+1] = P[j] + d_hat*dx*f(P[j], u[j]).  RK4 uses the classical
    stages with the grid-sampled input interpolated at half-nodes by
    :func:`half_node_values`.  Raises :class:`PredictorBlowUpError` naming
    the first bad node if the march leaves the forward-complete domain.
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    grid = query.grid
    if grid.m < 2:
        raise ValueError("predictor grid needs m >= 2")
    u = np.asarray(query.input_profile, dtype=float)
    state = np.asarray(query.state, dtype=float)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(u))):
        raise ValueError("state and input profile must be finite")
    scale = query.delay_estimate * grid.dx

    if model.rhs_fast is not None:
        march = _march_euler_fast if scheme == "euler" else _march_rk4_fast
        rows = march(model.rhs_fast, tuple(state.tolist()), u, scale)
        values = np.asarray(rows, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(np.abs(values) > BLOWUP_LIMIT):
            bad = np.flatnonzero(~np.all(
                np.isfinite(values) & (np.abs(values) <= BLOWUP_LIMIT), axis=1))
            _check_node(values[bad[0]], int(bad[0]))
        return PredictorProfile(values=values, scheme=scheme, grid=grid)

    n = state.size
    values = np.empty((grid.m + 1, n))
    values[0] = state
    p = state
    u_half = half_node_values(u) if scheme == "rk4" else None
    for j in range(grid.m):
        if scheme == "euler":
            p = p + scale * np.asarray(model.rhs(p, float(u[j])), dtype=float)
        else:
            um = float(u_half[j])
            k1 = np.asarray(model.rhs(p, float(u[j])), dtype=float)
            k2 = np.asarray(model.rhs(p + 0.5 * scale * k1, um), dtype=float)
            k3 = np.asarray(model.rhs(p + 0.5 * scale * k2, um), dtype=float)
            k4 = np.asarray(model.rhs(p + scale * k3, float(u[j + 1])), dtype=float)
            p = p + (scale / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_node(p, j + 1)
        values[j + 1] = p
    return PredictorProfile(values=values, scheme=scheme, grid=grid)


def _exp_guarded(exponent: float) -> float:
    if exponent > 700.0:
        raise OverflowError(
            f"exp({exponent:.3g}) out of double range; delay bound times"
            " Lipschitz constant is too large")
    return float(np.exp(exponent))


def lipschitz_constant(c_f: float, d_bar: float, x_bar: float, u_bar: float) -> float:
    """Lipschitz constant of the predictor operator on the declared box.

    C_P = exp(D_bar*C_f) * max{1, Xi, D_bar*C_f} with
    Xi = C_f * [U_bar + exp(D_bar*C_f) * (X_bar + C_f*D_bar*U_bar)].
    """
    if min(c_f, d_bar, x_bar, u_bar) <= 0:
        raise ValueError("all arguments must be positive")
    e = _exp_guarded(d_bar * c_f)
    xi = c_f * (u_bar + e * (x_bar + c_f * d_bar * u_bar))
    out = e * max(1.0, xi, d_bar * c_f)
    if not np.isfinite(out):
        raise OverflowError("Lipschitz constant overflowed double range")
    return out


def predictor_uniform_bound(c_f: float, d_bar: float, x_bar: float, u_bar: float) -> float:
    """Uniform bound exp(D_bar*C_f) * (X_bar + C_f*D_bar*U_bar) on predictor profiles."""
    if min(c_f, d_bar, x_bar, u_bar) <= 0:
        raise ValueError("all arguments must be positive")
    out = _exp_guarded(d_bar * c_f) * (x_bar + c_f * d_bar * u_bar)
    if not np.isfinite(out):
        raise OverflowError("uniform bound overflowed double range")
    return out
