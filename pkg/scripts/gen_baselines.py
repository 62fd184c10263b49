#!/usr/bin/env python3
"""Regenerate the committed oracle baselines used by the acceptance suite.

Runs the reference configurations (fine-grid RK4 oracle, Euler step-size
sweep, open-loop limit cycle, known-delay run) and freezes their summary
numbers into tests/data/oracle_baselines.json.  Deterministic; rerunning
must reproduce the committed file except for the wall-time entries.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from nopf import SimConfig, benchmark_plant, run_closed_loop
from nopf import __version__

FIG1 = dict(x0=(0.03, 30.0), true_delay=1.0, d_hat0=2.0, d_min=0.5, d_max=3.0,
            gamma=1000.0, b=1.0, dt=1e-3, t_final=40.0)


def residuals(log, model):
    return np.linalg.norm(log.states - model.equilibrium, axis=1)


def summarize(log, model):
    resid = residuals(log, model)
    late = resid[log.t >= 30.0]
    gamma0 = float(log.gamma_fn[0])
    below = np.flatnonzero(log.gamma_fn <= gamma0 / 10.0)
    cross = float(log.t[below[0]]) if below.size else None
    out = {
        "initial_residual": float(resid[0]),
        "late_resid_max": float(late.max()),
        "final_residual": float(resid[-1]),
        "gamma0": gamma0,
        "gamma_cross_time": cross,
        "d_hat_final": float(log.d_hat[-1]),
        "d_hat_min": float(log.d_hat.min()),
        "d_hat_max": float(log.d_hat.max()),
        "x2_min": float(log.states[:, 1].min()),
        "d_hat_mean_first_2s": float(log.d_hat[log.t <= 2.0].mean()),
    }
    if cross is not None:
        tail = log.gamma_fn[log.t >= cross]
        out["gamma_tail_floor"] = float(tail.min())
        out["gamma_tail_max"] = float(tail.max())
    late = log.gamma_fn[log.t >= 0.8 * log.t[-1]]
    out["gamma_late_floor"] = float(late.min())
    out["gamma_late_max"] = float(late.max())
    quarter = log.t[-1] / 4.0
    out["d_hat_mean_first_quarter"] = float(log.d_hat[log.t <= quarter].mean())
    out["d_hat_mean_last_quarter"] = float(log.d_hat[log.t >= 3 * quarter].mean())
    return out


def main():
    model = benchmark_plant()
    t0 = time.perf_counter()
    baselines = {"code_version": __version__, "fig1_config": FIG1}

    oracle_cfg = SimConfig(**FIG1, dx=0.001, predictor_scheme="rk4",
                           integrator="rk4")
    log = run_closed_loop(oracle_cfg, model=model)
    baselines["fig1_rk4_oracle"] = summarize(log, model)
    print("oracle:", baselines["fig1_rk4_oracle"])

    sweep = {}
    for dx in (0.02, 0.01, 0.005):
        log = run_closed_loop(SimConfig(**FIG1, dx=dx), model=model)
        sweep[str(dx)] = summarize(log, model)
        print(f"euler dx={dx}: late max {sweep[str(dx)]['late_resid_max']:.5f}")
    baselines["euler_dx_sweep"] = sweep

    ol_cfg = SimConfig(**dict(FIG1, t_final=60.0), dx=0.02, backend="none",
                       open_loop=True)
    log = run_closed_loop(ol_cfg, model=model)
    resid = residuals(log, model)
    windows = {}
    for w0 in range(20, 60, 10):
        mask = (log.t >= w0) & (log.t < w0 + 10)
        windows[str(w0)] = {"max": float(resid[mask].max()),
                            "min": float(resid[mask].min())}
    baselines["open_loop_windows"] = windows
    print("open loop windows:", windows)

    kd_cfg = SimConfig(**FIG1, dx=0.001, backend="known_delay")
    log = run_closed_loop(kd_cfg, model=model)
    baselines["known_delay_dx001"] = summarize(log, model)
    print("known delay:", baselines["known_delay_dx001"]["late_resid_max"])

    baselines["generation_wall_seconds"] = round(time.perf_counter() - t0, 1)
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "oracle_baselines.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(baselines, indent=2, sort_keys=True) + "\n")
    print("wrote", out)


if __name__ == "__main__":
    main()
