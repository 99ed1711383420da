"""Double-well Schroedinger runs with frozen Gaussians.

Each sweep point integrates the parametric flow at fixed ``(eps, h)`` and
records the energy error ``|E(u(T)) - E(u(0))|``, the mass error
``| ||u(T)||^2 - 1 |`` (the initial state is normalized), the defects and
the distance at ``T`` to a split-step Fourier reference started from the
same initial state.  A
Richardson estimate of the time-discretization error comes from a second
run at ``h / 2``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..integrate import FixedSchedule, integrate, tableau_by_name
from ..schrodinger import (DoubleWellConfig, FourierPropagator, build_double_well, observables, strang_stepper,
                           velocity_function)
from .csvio import write_rows
from .lv import model_hash, steps_for

DW_COLUMNS = ["eps", "h", "N", "seed", "model_hash", "variant", "failed", "t_end", "energy_error", "mass_error",
              "defect_max", "defect_integral", "ref_error", "time_estimate", "bound", "bound_ok", "fit_error",
              "message"]
TRAJ_COLUMNS = ["t", "mass", "energy", "defect_max", "eps"]


def config_from(cfg_dw: dict) -> DoubleWellConfig:
    return DoubleWellConfig(M=cfg_dw["M"], grid=cfg_dw["grid"], alpha2=cfg_dw["alpha2"], alpha4=cfg_dw["alpha4"],
                            q_ell=cfg_dw["q_ell"], T=cfg_dw["T"], kinetic=cfg_dw["kinetic"],
                            node_scale=cfg_dw["node_scale"], eps_init=cfg_dw["eps_init"])


def method_order(cfg_dw: dict) -> int:
    order = tableau_by_name(cfg_dw["tableau"]).order
    return min(order, 2) if cfg_dw["variant"] == "strang" else order


def reference_state(cfg_dw: dict, setup=None) -> np.ndarray:
    """Fourier reference at ``T`` started from ``Phi(q0)``."""
    setup = setup or build_double_well(config_from(cfg_dw))
    prop = propagator(cfg_dw, setup)
    return prop.propagate(setup.model.eval(setup.q0), cfg_dw["T"])


def propagator(cfg_dw: dict, setup) -> FourierPropagator:
    return FourierPropagator(setup.problem.potential, cfg_dw["kinetic"], cfg_dw["reference.lo"],
                             cfg_dw["reference.hi"], cfg_dw["reference.n"], cfg_dw["reference.dt"])


@dataclass(frozen=True)
class DWPoint:
    cfg_dw: dict
    eps: float
    h: float
    seed: int = 0
    traj_path: str | None = None


def run_dw_trajectory(setup, cfg_dw: dict, eps: float, h: float, callback=None):
    model, problem = setup.model, setup.problem
    tableau = tableau_by_name(cfg_dw["tableau"])
    sched = FixedSchedule(eps, h, steps_for(cfg_dw["T"], h))
    if cfg_dw["variant"] == "strang":
        return integrate(model, setup.q0, None, sched, tableau, step=strang_stepper(model, problem, tableau),
                         callback=callback)
    vel = velocity_function(model, problem, cfg_dw["variant"])
    return integrate(model, setup.q0, problem.field, sched, tableau, velocity=vel, callback=callback)


def run_dw_point(pt: DWPoint) -> dict:
    """One double-well run; a failing run is returned as a flagged row."""
    cfg_dw = pt.cfg_dw
    setup = build_double_well(config_from(cfg_dw))
    model, problem = setup.model, setup.problem
    obs0 = observables(model, setup.q0, problem)
    series = [(0.0, obs0["mass"], obs0["energy"], 0.0)]

    def record(traj):
        o = observables(model, traj.q[-1], problem)
        series.append((traj.t[-1], o["mass"], o["energy"], traj.records[-1].defect_max))

    traj = run_dw_trajectory(setup, cfg_dw, pt.eps, pt.h, record)
    if pt.traj_path:
        write_rows(pt.traj_path, TRAJ_COLUMNS,
                   [dict(zip(TRAJ_COLUMNS, (*s, pt.eps))) for s in series])
    m = np.array([s[1] for s in series])
    e = np.array([s[2] for s in series])
    finite = np.all(np.isfinite(m)) and np.all(np.isfinite(e))
    failed = bool(traj.failed or not finite)
    nan = float("nan")
    return {
        "eps": pt.eps,
        "h": pt.h,
        "N": steps_for(cfg_dw["T"], pt.h),
        "seed": pt.seed,
        "model_hash": model_hash(model, setup.q0),
        "variant": cfg_dw["variant"],
        "failed": failed,
        "t_end": float(traj.t[-1]),
        "energy_error": nan if failed else float(abs(e[-1] - e[0])),
        "mass_error": nan if failed else float(abs(m[-1] - 1.0)),
        "defect_max": traj.defect_max,
        "defect_integral": traj.defect_integral,
        "fit_error": setup.fit_error,
        "message": (traj.error or ("non-finite observables" if not finite else "")).replace(",", ";"),
        "_q": np.asarray(traj.q[-1]).tolist(),
    }


def add_reference_errors(rows: list, extra: list, cfg_dw: dict) -> None:
    """``ref_error``, Richardson ``time_estimate`` and the bound ``defect_integral + time_estimate``."""
    setup = build_double_well(config_from(cfg_dw))
    prop = propagator(cfg_dw, setup)
    ref = reference_state(cfg_dw, setup)
    p = method_order(cfg_dw)
    factor = 2.0**p / (2.0**p - 1.0)
    runs = {(r["eps"], r["h"]): r for r in rows + extra}
    nan = float("nan")
    for r in rows:
        r["ref_error"] = r["time_estimate"] = r["bound"] = nan
        r["bound_ok"] = False
        if r["failed"]:
            continue
        u = setup.model.eval(np.array(r["_q"]))
        r["ref_error"] = prop.distance(u, ref)
        half = _find(runs, r["eps"], 0.5 * r["h"])
        if half is None or half["failed"]:
            continue
        uh = setup.model.eval(np.array(half["_q"]))
        r["time_estimate"] = factor * prop.distance(u, prop.sample(uh))
        r["bound"] = r["defect_integral"] + r["time_estimate"]
        r["bound_ok"] = bool(r["ref_error"] <= r["bound"])


def _find(runs: dict, eps: float, h: float):
    for (e, hh), r in runs.items():
        if e == eps and abs(hh - h) <= 1e-12 * h:
            return r
    return None


def dw_points(cfg_dw: dict, pairs, seed: int = 0, traj_dir: str | None = None) -> list:
    pts = []
    for e, h in pairs:
        path = os.path.join(traj_dir, f"dw_traj_eps{e:g}_h{h:g}.csv") if traj_dir else None
        pts.append(DWPoint(dict(cfg_dw), float(e), float(h), seed, path))
    return pts


def run_dw_experiment(cfg: dict, out_dir: str, threads: int = 1, seed: int | None = None) -> dict:
    """``(eps, h)`` sweep with per-run trajectories, summary CSV and SVG plots in ``out_dir``."""
    from .parallel import map_points
    from .plot import PlotSpec, emit_plot

    D = cfg["dw"]
    seed = cfg["run"]["seed"] if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    traj_dir = os.path.join(out_dir, "trajectories") if D["trajectories"] else None
    pairs = [(e, h) for e in D["eps"] for h in D["h"]]
    h_min = min(D["h"])
    extra_pairs = [(e, 0.5 * h_min) for e in D["eps"]]
    results = map_points(run_dw_point, dw_points(D, pairs, seed, traj_dir) + dw_points(D, extra_pairs, seed), threads)
    rows, extra = results[:len(pairs)], results[len(pairs):]
    add_reference_errors(rows, extra, D)
    csv_path = os.path.join(out_dir, "dw_sweep.csv")
    write_rows(csv_path, DW_COLUMNS, rows)
    emit_plot(csv_path, PlotSpec("h", "energy_error", "eps", title="energy drift"),
              os.path.join(out_dir, "dw_energy.svg"))
    emit_plot(csv_path, PlotSpec("eps", "mass_error", "h", title="mass drift"), os.path.join(out_dir, "dw_mass.svg"))
    emit_plot(csv_path, PlotSpec("h", "ref_error", "eps", title="error against the Fourier reference"),
              os.path.join(out_dir, "dw_ref_error.svg"))
    return {"rows": rows, "extra": extra}
