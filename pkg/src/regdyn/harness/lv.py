"""Lotka-Volterra flow map learned by a small network.

The flow-map ODE ``d/dt phi_t = f(phi_t)``, ``phi_0 = Id`` is posed on
``L^2(D)^2`` and sampled at composite Gauss-Legendre nodes; the network
parameters follow the regularized least-squares flow.  Errors are measured
against node-wise reference solutions of the planar ODE.
"""
from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..integrate import FixedSchedule, VectorField, integrate, tableau_by_name
from ..model import MLPModel, QuadratureSpace
from .csvio import read_rows, write_rows


@dataclass(frozen=True)
class LVProblem:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    domain: tuple = (0.5, 2.5)
    n_sub: int = 10
    n_nodes: int = 4

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.delta) <= 0:
            raise ValueError("Lotka-Volterra parameters must be positive")
        if not self.domain[0] < self.domain[1]:
            raise ValueError("domain must be a nonempty interval")

    @classmethod
    def from_config(cls, lv: dict) -> "LVProblem":
        return cls(lv["alpha"], lv["beta"], lv["gamma"], lv["delta"], tuple(lv["domain"]), lv["n_sub"], lv["n_nodes"])

    def space(self) -> QuadratureSpace:
        lo, hi = self.domain
        return QuadratureSpace.tensor_gauss_legendre(lo, hi, self.n_sub, self.n_nodes, dim=2, ncomp=2)

    def rhs(self, xy: np.ndarray) -> np.ndarray:
        """``(alpha x - beta x y, delta x y - gamma y)`` along the last axis."""
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([self.alpha * x - self.beta * x * y, self.delta * x * y - self.gamma * y], axis=-1)

    def invariant(self, xy: np.ndarray) -> np.ndarray:
        """First integral ``delta x - gamma log x + beta y - alpha log y``."""
        x, y = xy[..., 0], xy[..., 1]
        return self.delta * x - self.gamma * np.log(x) + self.beta * y - self.alpha * np.log(y)


def lv_vector_field(problem: LVProblem) -> VectorField:
    """Pointwise Lotka-Volterra field acting on node values of shape ``(n, 2)``."""
    return VectorField(problem.rhs)


def lv_reference(problem: LVProblem, y0: np.ndarray, t_end: float, tol: float = 1e-12) -> np.ndarray:
    """Node-wise solutions at ``t_end`` of the planar ODE started from the rows of ``y0``."""
    y0 = np.asarray(y0, dtype=float)
    n = y0.shape[0]

    def rhs(_t, z):
        return problem.rhs(z.reshape(n, 2)).ravel()

    sol = solve_ivp(rhs, (0.0, t_end), y0.ravel(), method="DOP853", rtol=tol, atol=tol)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return sol.y[:, -1].reshape(n, 2)


def identity_error(model, q) -> float:
    """``||Phi(q) - Id||`` in the discrete ``L^2(D)^2`` norm."""
    return model.space.norm(model.eval(q) - model.space.nodes)


@dataclass
class IdentityFit:
    q: np.ndarray
    error: float
    initial_error: float
    errors: list = field(default_factory=list)
    failed: bool = False
    message: str | None = None


def fit_identity(model, q_init, relax_T: float = 1.0, tableau="rk4", eps: float = 1e-6, N: int = 2000,
                 threshold: float = 1e-2) -> IdentityFit:
    """Relaxation flow ``u' = Id - u0`` from ``u0 = Phi(q_init)`` up to ``t = relax_T``.

    The right-hand side is constant, so the exact flow reaches the identity
    at ``t = relax_T = 1``.  A final error above ``threshold`` only warns.
    """
    if isinstance(tableau, str):
        tableau = tableau_by_name(tableau)
    u0 = model.eval(q_init)
    target = model.space.nodes
    rate = (target - u0) / relax_T

    def field_(_u):
        return rate

    errors = [identity_error(model, q_init)]
    traj = integrate(model, q_init, field_, FixedSchedule(eps, relax_T / N, N), tableau,
                     callback=lambda tr: errors.append(identity_error(model, tr.q[-1])))
    fit = IdentityFit(traj.q[-1], errors[-1], errors[0], errors, traj.failed, traj.error)
    if fit.failed or fit.error > threshold:
        warnings.warn(f"identity fit error {fit.error:.3g} exceeds {threshold:g}"
                      + (f" ({fit.message})" if fit.failed else ""), RuntimeWarning, stacklevel=2)
    return fit


def model_hash(model, q) -> str:
    h = hashlib.sha256()
    h.update(type(model).__name__.encode())
    h.update(repr(getattr(model, "sizes", getattr(model, "M", None))).encode())
    h.update(np.ascontiguousarray(q).tobytes())
    return h.hexdigest()[:16]


def build_model(cfg_lv: dict) -> tuple[LVProblem, MLPModel]:
    problem = LVProblem.from_config(cfg_lv)
    return problem, MLPModel(problem.space(), tuple(cfg_lv["sizes"]))


def initial_params(model, cfg_lv: dict, seed: int) -> np.ndarray:
    return model.init_params(seed, cfg_lv["init_scale"])


def load_params(path: str) -> np.ndarray:
    _, rows = read_rows(path)
    return np.array([float(r["value"]) for r in rows])


def save_params(path: str, q: np.ndarray) -> None:
    write_rows(path, ["index", "value"], [{"index": i, "value": float(v)} for i, v in enumerate(q)])


@dataclass(frozen=True)
class LVPoint:
    cfg_lv: dict
    q0: tuple
    eps: float
    h: float
    seed: int
    reference: tuple  # flattened node values at T


def steps_for(T: float, h: float) -> int:
    n = int(round(T / h))
    if n < 1 or abs(n * h - T) > 1e-9 * T:
        raise ValueError(f"step size {h:g} does not divide T={T:g}")
    return n


def run_lv_point(pt: LVPoint) -> dict:
    """One flow-map integration; a failing run is returned as a flagged row."""
    problem, model = build_model(pt.cfg_lv)
    q0 = np.array(pt.q0)
    T = pt.cfg_lv["T"]
    N = steps_for(T, pt.h)
    traj = integrate(model, q0, lv_vector_field(problem), FixedSchedule(pt.eps, pt.h, N),
                     tableau_by_name(pt.cfg_lv["tableau"]))
    ref = np.array(pt.reference).reshape(-1, 2)
    err = model.space.norm(model.eval(traj.q[-1]) - ref)
    return {
        "eps": pt.eps,
        "h": pt.h,
        "N": N,
        "seed": pt.seed,
        "model_hash": model_hash(model, q0),
        "failed": traj.failed,
        "t_end": float(traj.t[-1]),
        "error": err if not traj.failed else float("nan"),
        "defect_max": traj.defect_max,
        "defect_integral": traj.defect_integral,
        "aposteriori_sum": float(sum(r.aposteriori_local or 0.0 for r in traj.records)),
        "message": (traj.error or "").replace(",", ";"),
        "_u": model.eval(traj.q[-1]).tolist(),
    }


LV_COLUMNS = ["eps", "h", "N", "seed", "model_hash", "failed", "t_end", "error", "time_error", "defect_max",
              "defect_integral", "aposteriori_sum", "message"]


def lv_points(cfg_lv: dict, q0, seed: int, pairs) -> list:
    problem, model = build_model(cfg_lv)
    ref = lv_reference(problem, model.eval(q0), cfg_lv["T"], cfg_lv["oracle_tol"])
    ref_t = tuple(ref.ravel().tolist())
    return [LVPoint(dict(cfg_lv), tuple(np.asarray(q0).tolist()), float(e), float(h), seed, ref_t) for e, h in pairs]


def add_time_errors(rows: list, space) -> None:
    """``time_error``: distance to the finest-step run with the same ``eps``."""
    by_eps = {}
    for r in rows:
        by_eps.setdefault(r["eps"], []).append(r)
    for group in by_eps.values():
        finest = min(group, key=lambda r: r["h"])
        for r in group:
            if r is finest or r["failed"] or finest["failed"]:
                r["time_error"] = float("nan")
            else:
                r["time_error"] = space.norm(np.array(r["_u"]) - np.array(finest["_u"]))


def identity_params(cfg: dict, out_dir: str | None = None, seed: int | None = None):
    """Parameters from ``lv.params`` if set, otherwise from the relaxation fit."""
    L = cfg["lv"]
    seed = cfg["run"]["seed"] if seed is None else seed
    _, model = build_model(L)
    if L["params"]:
        q = load_params(L["params"])
        return model.check_params(q), None
    fit = fit_identity(model, initial_params(model, L, seed), L["fit.T"], L["fit.tableau"], L["fit.eps"], L["fit.N"],
                       L["fit.threshold"])
    if out_dir:
        save_params(os.path.join(out_dir, "lv_params.csv"), fit.q)
    return fit.q, fit


def run_lv_experiment(cfg: dict, out_dir: str, threads: int = 1, seed: int | None = None) -> dict:
    """Step-size sweep per ``eps`` and ``eps`` sweep at a fixed step; CSV and SVG into ``out_dir``."""
    from .parallel import map_points
    from .plot import PlotSpec, emit_plot

    L = cfg["lv"]
    seed = cfg["run"]["seed"] if seed is None else seed
    os.makedirs(out_dir, exist_ok=True)
    q0, fit = identity_params(cfg, out_dir, seed)
    problem, model = build_model(L)
    pairs = [(e, h) for e in L["eps"] for h in L["h"]]
    h_rows = map_points(run_lv_point, lv_points(L, q0, seed, pairs), threads)
    add_time_errors(h_rows, model.space)
    e_pairs = [(e, L["eps_sweep_h"]) for e in L["eps_sweep"]]
    e_rows = map_points(run_lv_point, lv_points(L, q0, seed, e_pairs), threads)
    for r in e_rows:
        r["time_error"] = float("nan")
    write_rows(os.path.join(out_dir, "lv_h_sweep.csv"), LV_COLUMNS, h_rows)
    write_rows(os.path.join(out_dir, "lv_eps_sweep.csv"), LV_COLUMNS, e_rows)
    emit_plot(os.path.join(out_dir, "lv_h_sweep.csv"), PlotSpec("h", "error", "eps", title="flow map error at T"),
              os.path.join(out_dir, "lv_h_error.svg"))
    emit_plot(os.path.join(out_dir, "lv_h_sweep.csv"), PlotSpec("h", "defect_max", "eps", title="projection term"),
              os.path.join(out_dir, "lv_h_projection.svg"))
    emit_plot(os.path.join(out_dir, "lv_eps_sweep.csv"), PlotSpec("eps", "error", "N", title="flow map error at T"),
              os.path.join(out_dir, "lv_eps_error.svg"))
    emit_plot(os.path.join(out_dir, "lv_eps_sweep.csv"), PlotSpec("eps", "defect_max", "N", title="projection term"),
              os.path.join(out_dir, "lv_eps_projection.svg"))
    return {"h_rows": h_rows, "eps_rows": e_rows, "fit": fit, "q0": q0, "problem": problem, "model": model}
