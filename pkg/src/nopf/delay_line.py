"""Applied-control history and the transport delay line.

A constant actuator delay D turns the scalar control signal U into a
distributed state u(x, t) = U(t + D*(x - 1)) on the unit interval: x = 1 is
the control being applied right now, x = 0 is the value reaching the plant.
:class:`InputHistory` records U at a fixed rate and materializes u(., t) on a
:class:`SpatialGrid` by linear interpolation into the recorded past.
"""

from __future__ import annotations

import math

import numpy as np

_TIME_TOL = 1e-9


class SpatialGrid:
    """Uniform grid of m intervals (m + 1 nodes) on [0, 1]."""

    __slots__ = ("m", "dx", "points", "trapezoid_weights")

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("grid needs at least one interval")
        self.m = int(m)
        self.dx = 1.0 / self.m
        self.points = np.linspace(0.0, 1.0, self.m + 1)
        # Composite trapezoid weights: dot with sampled values integrates.
        w = np.full(self.m + 1, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        self.trapezoid_weights = w

    def __repr__(self):
        return f"SpatialGrid(m={self.m})"

    def __eq__(self, other):
        return isinstance(other, SpatialGrid) and other.m == self.m

    def __hash__(self):
        return hash(("SpatialGrid", self.m))

    def integrate(self, values: np.ndarray) -> float:
        """Trapezoid quadrature of node values over [0, 1]."""
        return float(self.trapezoid_weights @ values)


class InputHistory:
    """Sliding-window record of the applied control, sampled every ``dt``.

    Recording is strictly sequential: the k-th push carries timestamp
    ``t_start + (k + 1)*dt``.  Queries linearly interpolate between samples,
    return ``initial_value`` for times before recording began, and raise for
    times in the future or older than ``horizon`` before now (such entries
    count as evicted even though storage is kept flat for speed).  Single
    writer; reads are safe between pushes.
    """

    def __init__(self, dt: float, horizon: float, initial_value: float = 0.0,
                 t_start: float = 0.0):
        if dt <= 0 or horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        self.dt = float(dt)
        self.horizon = float(horizon)
        self.initial_value = float(initial_value)
        self.t_start = float(t_start)
        self._buf = np.empty(4096)
        self._count = 0

    @property
    def t_now(self) -> float:
        return self.t_start + self._count * self.dt

    def __len__(self) -> int:
        return self._count

    def push(self, t: float, value: float) -> "InputHistory":
        """Append the control applied at time t (must equal t_now + dt)."""
        expected = self.t_now + self.dt
        if abs(t - expected) > _TIME_TOL * max(1.0, abs(expected)):
            raise ValueError(f"non-sequential push at t={t!r}; expected {expected!r}")
        if self._count == self._buf.size:
            self._buf = np.concatenate([self._buf, np.empty(self._buf.size)])
        self._buf[self._count] = value
        self._count += 1
        return self

    def _bounds_check_scalar(self, t: float):
        t_now = self.t_now
        tol = _TIME_TOL * max(1.0, abs(t_now))
        if t > t_now + tol:
            raise ValueError(f"query at t={t!r} beyond the last recorded time {t_now!r}")
        if t < t_now - self.horizon - tol:
            raise ValueError(f"query at t={t!r} beyond the eviction horizon (stale)")

    def query(self, t: float) -> float:
        """Control value at time t, linearly interpolated."""
        self._bounds_check_scalar(t)
        count = self._count
        if count == 0:
            return self.initial_value
        rel = (t - self.t_start) / self.dt - 1.0
        snapped = round(rel)
        if abs(rel - snapped) < 1e-9:
            rel = snapped
        if rel < 0.0:
            return self.initial_value
        i0 = min(int(math.floor(rel)), count - 1)
        i1 = min(i0 + 1, count - 1)
        frac = min(rel - i0, 1.0)
        buf = self._buf
        return buf[i0] * (1.0 - frac) + buf[i1] * frac

    def query_many(self, times: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`query`; all times share the same validity checks."""
        times = np.asarray(times, dtype=float)
        t_now = self.t_now
        tol = _TIME_TOL * max(1.0, abs(t_now))
        t_min = float(times.min(initial=t_now))
        t_max = float(times.max(initial=t_now))
        if t_max > t_now + tol:
            raise ValueError(f"query beyond the last recorded time {t_now!r}")
        if t_min < t_now - self.horizon - tol:
            raise ValueError("query beyond the eviction horizon (stale)")
        count = self._count
        if count == 0:
            return np.full(times.shape, self.initial_value)
        rel = (times - self.t_start) / self.dt - 1.0
        snapped = np.round(rel)
        rel = np.where(np.abs(rel - snapped) < 1e-9, snapped, rel)
        before = rel < 0.0
        i0 = np.floor(rel).astype(np.int64)
        np.clip(i0, 0, count - 1, out=i0)
        i1 = np.minimum(i0 + 1, count - 1)
        frac = np.minimum(rel - i0, 1.0)
        buf = self._buf
        interp = buf[i0] * (1.0 - frac) + buf[i1] * frac
        return np.where(before, self.initial_value, interp)

    def sample_profile(self, t: float, delay: float, grid: SpatialGrid) -> np.ndarray:
        """Transport-line snapshot u[j] = U(t + delay*(x_j - 1)) on the grid."""
        if delay <= 0 or delay > self.horizon + _TIME_TOL:
            raise ValueError(f"delay {delay!r} outside (0, horizon={self.horizon!r}]")
        times = t + delay * (grid.points - 1.0)
        return self.query_many(times)
