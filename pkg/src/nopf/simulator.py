"""Closed-loop simulation with selectable predictor backends.

One simulation advances the plant under its true (hidden) input delay while
the controller sees only the current state, the measured transport-line
profile, and its own delay estimate.  Backends:

* ``numerical``     marching predictor, adaptive delay estimate
* ``surrogate``     DeepONet predictor from a weight file, adaptive estimate
* ``known_delay``   marching predictor evaluated at the true delay, no update
* ``none``          no predictor: delay-ignoring feedback kappa(X), or zero
                    input with ``open_loop`` (the plant then shows its
                    natural limit cycle)

Every run logs the regulation functional Gamma, the Lyapunov-Krasovskii
value W, the normalization N, and the delay error, all computed with
ground-truth access (simulation diagnostics only, never controller inputs).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import surrogate as sg
from .adaptation import AdaptiveState, step_delay_estimate, update_signals
from .delay_line import InputHistory, SpatialGrid
from .dynamics import PlantModel, make_plant
from .predictor import PredictorBlowUpError, PredictorQuery, predict

BACKENDS = ("numerical", "surrogate", "none", "known_delay")

CSV_COLUMNS = ("t", "x1", "x2", "u", "d_hat", "d_tilde", "phi", "gamma_fn",
               "w_fn", "n_fn", "pred_s1_1", "pred_s1_2", "ctrl_wall_ns")


class SimulationBlowUp(RuntimeError):
    """Plant or predictor escaped; carries the partial log for post-mortem."""

    def __init__(self, message, partial_log=None):
        super().__init__(message)
        self.partial_log = partial_log


@dataclass
class SimConfig:
    """Everything needed to reproduce one closed-loop run."""

    plant: str = "benchmark"
    plant_overrides: dict = field(default_factory=dict)
    true_delay: float = 1.0
    d_hat0: float = 2.0
    d_min: float = 0.5
    d_max: float = 3.0
    gamma: float = 1000.0
    b: float = 1.0
    dt: float = 1e-3
    t_final: float = 40.0
    dx: float = 0.005
    backend: str = "numerical"
    weights_path: str | None = None
    open_loop: bool = False
    x0: tuple | None = None  # defaults to the plant equilibrium
    seed: int = 0
    initial_input: float = 0.0
    integrator: str = "euler"  # plant stepper; rk4 for oracle runs only
    predictor_scheme: str = "euler"
    diagnostics: bool = True   # Gamma/W/N logging; dataset harvesting skips it

    def validate(self) -> "SimConfig":
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")
        if not (0.0 < self.dx <= 0.5):
            raise ValueError("dx must lie in (0, 0.5]")
        if not (0.0 < self.d_min <= self.true_delay <= self.d_max):
            raise ValueError("need 0 < d_min <= true_delay <= d_max")
        if not (self.d_min <= self.d_hat0 <= self.d_max):
            raise ValueError("d_hat0 must lie in [d_min, d_max]")
        if self.true_delay <= self.dt:
            raise ValueError("true_delay must exceed dt")
        if self.gamma < 0 or self.b <= 0:
            raise ValueError("gamma must be >= 0 and b > 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.backend == "surrogate" and not self.weights_path:
            raise ValueError("surrogate backend needs weights_path")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError("integrator must be euler or rk4")
        if self.predictor_scheme not in ("euler", "rk4"):
            raise ValueError("predictor_scheme must be euler or rk4")
        return self

    @property
    def grid_intervals(self) -> int:
        return max(2, int(round(1.0 / self.dx)))


@dataclass
class TrajectoryLog:
    """Per-step record of a closed-loop run plus run metadata."""

    t: np.ndarray
    states: np.ndarray       # (K, n)
    u: np.ndarray
    d_hat: np.ndarray
    d_tilde: np.ndarray
    phi: np.ndarray
    gamma_fn: np.ndarray
    w_fn: np.ndarray
    n_fn: np.ndarray
    pred_s1: np.ndarray      # (K, n), predictor value at s=1 used by the controller
    ctrl_wall_ns: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def summary(self) -> dict:
        eq = np.asarray(self.meta.get("equilibrium", np.zeros(self.states.shape[1])))
        resid = np.linalg.norm(self.states - eq, axis=1)
        return {
            "steps": int(self.t.size),
            "final_residual": float(resid[-1]),
            "max_late_residual": float(resid[int(0.8 * resid.size):].max()),
            "final_d_hat": float(self.d_hat[-1]),
            "min_gamma_fn": float(self.gamma_fn.min()),
        }

    def columns(self) -> dict:
        n = self.states.shape[1]
        cols = {"t": self.t}
        for i in range(n):
            cols[f"x{i + 1}"] = self.states[:, i]
        cols.update(u=self.u, d_hat=self.d_hat, d_tilde=self.d_tilde, phi=self.phi,
                    gamma_fn=self.gamma_fn, w_fn=self.w_fn, n_fn=self.n_fn)
        for i in range(n):
            cols[f"pred_s1_{i + 1}"] = self.pred_s1[:, i]
        cols["ctrl_wall_ns"] = self.ctrl_wall_ns
        return cols

    def write_csv(self, path, extra_meta: dict | None = None) -> None:
        """Export the log (17 significant digits) plus a sidecar .meta file."""
        cols = self.columns()
        names = list(cols)
        arrays = [cols[c] for c in names]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for k in range(self.t.size):
                fields = []
                for name, arr in zip(names, arrays):
                    v = arr[k]
                    fields.append(str(int(v)) if name == "ctrl_wall_ns" else f"{v:.17g}")
                fh.write(",".join(fields) + "\n")
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        write_meta(f"{path}.meta", meta)


def write_meta(path, meta: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key} = {_meta_str(meta[key])}\n")


def _meta_str(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ", ".join(_meta_str(v) for v in value)
    return str(value)


def read_trajectory_csv(path) -> dict:
    """Parse an exported trajectory back into column arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: row width does not match header")
    return {name: data[:, i] for i, name in enumerate(header)}


def diagnostics_step(state, equilibrium, history: InputHistory, t: float,
                     d_hat: float, d_true: float, w: np.ndarray,
                     grid: SpatialGrid, v_value: float, b: float,
                     gamma: float) -> tuple[float, float, float]:
    """Ground-truth diagnostics (Gamma, W, N) for one logged step.

    Gamma integrates the squared control over the trailing true-delay
    window (times before recording began contribute the initial input
    value).  W drops its delay-error term when gamma is zero, since that
    term is scaled by 1/gamma and a frozen estimator never uses it.
    """
    x_shift = np.asarray(state, dtype=float) - np.asarray(equilibrium, dtype=float)
    d_tilde = d_true - d_hat
    k = max(1, int(round(d_true / history.dt)))
    step = d_true / k
    times = (t - d_true) + step * np.arange(k + 1)
    sq = history.query_many(times)
    sq *= sq
    u_energy = step * (sq.sum() - 0.5 * (sq[0] + sq[-1]))
    gamma_fn = float(x_shift @ x_shift) + u_energy + d_tilde * d_tilde
    weight = 1.0 + grid.points
    n_value = 1.0 + v_value + b * grid.integrate(weight * w * w)
    w_fn = d_true * float(np.log(n_value))
    if gamma > 0:
        w_fn += (b / gamma) * d_tilde * d_tilde
    return gamma_fn, w_fn, n_value


def recommended_b(c2: float, d_max: float, c_f: float, lam: float) -> float:
    """Normalization weight threshold b* = C2^2 * D_max * C_f^2 / (4*lambda)."""
    if min(c2, d_max, c_f, lam) <= 0:
        raise ValueError("all arguments must be positive")
    return c2 * c2 * d_max * c_f * c_f / (4.0 * lam)


def _plant_step(model: PlantModel, state, u_now_fn, t, dt, integrator):
    if integrator == "euler":
        return state + dt * np.asarray(model.rhs(state, u_now_fn(t)), dtype=float)
    k1 = np.asarray(model.rhs(state, u_now_fn(t)), dtype=float)
    um = u_now_fn(t + 0.5 * dt)
    k2 = np.asarray(model.rhs(state + 0.5 * dt * k1, um), dtype=float)
    k3 = np.asarray(model.rhs(state + 0.5 * dt * k2, um), dtype=float)
    k4 = np.asarray(model.rhs(state + dt * k3, u_now_fn(t + dt)), dtype=float)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_closed_loop(config: SimConfig, model: PlantModel | None = None,
                    surrogate_params: "sg.SurrogateParams | None" = None) -> TrajectoryLog:
    """Simulate the delay system under the configured controller.

    Raises :class:`SimulationBlowUp` (carrying the partial log) if the plant
    state or a predictor march leaves the admissible range.
    """
    config.validate()
    if model is None:
        model = make_plant(config.plant, config.plant_overrides)
    n = model.state_dim
    if config.backend == "surrogate" and surrogate_params is None:
        surrogate_params = sg.load_params(config.weights_path)

    grid = SpatialGrid(config.grid_intervals)
    dt = config.dt
    d_true = config.true_delay
    steps = int(round(config.t_final / dt))
    x0 = np.asarray(config.x0, dtype=float) if config.x0 is not None \
        else model.equilibrium.copy()
    if x0.size != n:
        raise ValueError(f"x0 has {x0.size} components, plant has {n}")

    adaptive = config.backend in ("numerical", "surrogate")
    d_hat = d_true if config.backend == "known_delay" else config.d_hat0
    est = AdaptiveState(d_hat=d_hat, d_min=config.d_min, d_max=config.d_max,
                        gamma=config.gamma, b=config.b)
    history = InputHistory(dt=dt, horizon=config.d_max + 10.0 * dt,
                           initial_value=config.initial_input, t_start=-dt)

    basis = None
    if config.backend == "surrogate":
        basis = sg.trunk_basis(surrogate_params, grid.points)
        surrogate_grid = surrogate_params.architecture.input_grid_size

    log = TrajectoryLog(
        t=np.empty(steps), states=np.empty((steps, n)), u=np.empty(steps),
        d_hat=np.empty(steps), d_tilde=np.empty(steps), phi=np.empty(steps),
        gamma_fn=np.empty(steps), w_fn=np.empty(steps), n_fn=np.empty(steps),
        pred_s1=np.empty((steps, n)), ctrl_wall_ns=np.empty(steps),
        meta={
            "plant": model.name, "backend": config.backend, "dt": dt,
            "dx": grid.dx, "t_final": config.t_final, "true_delay": d_true,
            "d_hat0": config.d_hat0, "d_min": config.d_min, "d_max": config.d_max,
            "gamma": config.gamma, "b": config.b, "seed": config.seed,
            "x0": x0.tolist(), "equilibrium": model.equilibrium.tolist(),
            "integrator": config.integrator,
            "predictor_scheme": config.predictor_scheme,
            "open_loop": config.open_loop,
        },
    )

    def partial(k):
        return TrajectoryLog(**{name: getattr(log, name)[:k]
                                for name in ("t", "states", "u", "d_hat", "d_tilde",
                                             "phi", "gamma_fn", "w_fn", "n_fn",
                                             "pred_s1", "ctrl_wall_ns")},
                             meta=dict(log.meta, truncated_at_step=k))

    state = x0
    for k in range(steps):
        t = k * dt
        u_meas = history.sample_profile(history.t_now, d_true, grid)

        try:
            t0 = time.perf_counter_ns()
            if config.backend in ("numerical", "known_delay"):
                prof = predict(model, PredictorQuery(state, u_meas, est.d_hat, grid),
                               scheme=config.predictor_scheme)
                values = prof.values
            elif config.backend == "surrogate":
                prof_s = sg.resample_profile(u_meas, surrogate_grid)
                values = sg.forward(surrogate_params, state, prof_s, est.d_hat,
                                    grid.points, basis=basis)
            else:
                values = None
            if values is not None:
                u_cmd = float(model.feedback(values[-1]))
            elif config.open_loop:
                u_cmd = 0.0
            else:
                u_cmd = float(model.feedback(state))
            wall = time.perf_counter_ns() - t0

            # w/q1 from whichever profile the controller deployed; for the
            # predictor-free baselines, from the exact march at the frozen
            # estimate (diagnostics only).
            diag_values = values
            if diag_values is None:
                diag_values = predict(model,
                                      PredictorQuery(state, u_meas, est.d_hat, grid),
                                      scheme=config.predictor_scheme).values
            v_value = float(model.lyapunov(state))
            signals = update_signals(model, diag_values, u_meas, est.d_hat,
                                     v_value, est.b, grid)
        except (PredictorBlowUpError, FloatingPointError) as exc:
            raise SimulationBlowUp(f"controller failed at t={t:.6g}: {exc}",
                                   partial_log=partial(k)) from exc

        history.push(t, u_cmd)
        if config.diagnostics:
            gamma_fn, w_fn, n_fn = diagnostics_step(
                state, model.equilibrium, history, t, est.d_hat, d_true,
                signals.w_profile, grid, v_value, est.b, est.gamma)
        else:
            gamma_fn = w_fn = np.nan
            n_fn = signals.n_value

        log.t[k] = t
        log.states[k] = state
        log.u[k] = u_cmd
        log.d_hat[k] = est.d_hat
        log.d_tilde[k] = d_true - est.d_hat
        log.phi[k] = signals.phi
        log.gamma_fn[k] = gamma_fn
        log.w_fn[k] = w_fn
        log.n_fn[k] = n_fn
        log.pred_s1[k] = values[-1] if values is not None else state
        log.ctrl_wall_ns[k] = wall

        if adaptive:
            est = step_delay_estimate(est, signals.phi, dt)

        state = _plant_step(model, state, lambda tau: history.query(tau - d_true),
                            t, dt, config.integrator)
        if not np.all(np.isfinite(state)) or np.any(np.abs(state) > 1e12):
            raise SimulationBlowUp(
                f"plant state blew up at t={t + dt:.6g}: {state}",
                partial_log=partial(k + 1))
    return log


@dataclass(frozen=True)
class BenchReport:
    """Mean controller-evaluation times per (dx, backend) and speedups."""

    dx_values: tuple
    mean_seconds: dict      # backend -> tuple of means, aligned with dx_values
    repetitions: int
    pool_size: int

    def speedup(self, backend: str) -> tuple:
        base = self.mean_seconds["numerical"]
        return tuple(b0 / b1 for b0, b1 in zip(base, self.mean_seconds[backend]))

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("dx,numerical,surrogate,speedup\n")
            sp = self.speedup("surrogate")
            for i, dx in enumerate(self.dx_values):
                fh.write(f"{dx:.17g},{self.mean_seconds['numerical'][i]:.17g},"
                         f"{self.mean_seconds['surrogate'][i]:.17g},{sp[i]:.17g}\n")


def bench_predictors(config: SimConfig, dx_values, repetitions: int,
                     surrogate_params: "sg.SurrogateParams",
                     backends=("numerical", "surrogate"),
                     pool_size: int = 64) -> BenchReport:
    """Time predictor evaluations (profile in, full profile out) per backend.

    Queries come from a fixed pool recorded along a short numerical-backend
    run at each dx, so every backend sees identical inputs.  Surrogate
    timing includes resampling the measured profile onto its fixed grid;
    the trunk basis for the evaluation grid is precomputed once, as a
    deployed controller would.
    """
    if repetitions < 100:
        raise ValueError("repetitions must be >= 100")
    model = make_plant(config.plant, config.plant_overrides)
    results = {b: [] for b in backends}
    for dx in dx_values:
        cfg = replace(config, dx=float(dx), backend="numerical",
                      t_final=min(config.t_final, 0.75), weights_path=None,
                      diagnostics=False)
        log = run_closed_loop(cfg, model=model)
        grid = SpatialGrid(cfg.grid_intervals)
        stride = max(1, len(log) // pool_size)
        pool = []
        history = InputHistory(dt=cfg.dt, horizon=cfg.d_max + 10 * cfg.dt,
                               initial_value=cfg.initial_input, t_start=-cfg.dt)
        for k in range(len(log)):
            if k % stride == 0 and len(pool) < pool_size:
                pool.append((log.states[k].copy(),
                             history.sample_profile(history.t_now, cfg.true_delay, grid),
                             float(log.d_hat[k])))
            history.push(k * cfg.dt, float(log.u[k]))
        basis = sg.trunk_basis(surrogate_params, grid.points)
        g = surrogate_params.architecture.input_grid_size
        for backend in backends:
            start = time.perf_counter_ns()
            for rep in range(repetitions):
                state, u_meas, d_hat = pool[rep % len(pool)]
                if backend == "numerical":
                    predict(model, PredictorQuery(state, u_meas, d_hat, grid),
                            scheme="euler")
                else:
                    prof = sg.resample_profile(u_meas, g)
                    sg.forward(surrogate_params, state, prof, d_hat,
                               grid.points, basis=basis)
            results[backend].append(
                (time.perf_counter_ns() - start) / repetitions * 1e-9)
    return BenchReport(dx_values=tuple(float(d) for d in dx_values),
                       mean_seconds={b: tuple(v) for b, v in results.items()},
                       repetitions=repetitions, pool_size=pool_size)
