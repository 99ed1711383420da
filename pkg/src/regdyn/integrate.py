"""Time integrators driven by the regularized least-squares velocity.

At a parameter vector ``q`` the velocity ``qdot`` minimizes
``||Phi'(q) qdot - f(Phi(q))||^2 + eps^2 ||qdot||_Q^2``; its defect ``delta``
is the square root of that minimum.  The integrators below differ only in
how they combine such velocities over a step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import adapt
from .model.base import LocalProblem
from .reglsq import MetricQ, RegLsqResult


class StepFailure(ArithmeticError):
    """A step could not be completed."""


class ImplicitEulerError(StepFailure):
    pass


@dataclass
class VectorField:
    f: Callable
    lipschitz_hint: float | None = None

    def __call__(self, u):
        return self.f(u)


@dataclass(frozen=True)
class RKTableau:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    b_hat: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        s = b.size
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError("tableau shapes are inconsistent")
        if np.any(np.triu(a) != 0):
            raise ValueError("only explicit tableaus are supported")
        if abs(b.sum() - 1.0) > 1e-14:
            raise ValueError("weights must sum to one")
        if np.max(np.abs(a.sum(axis=1) - c)) > 1e-14:
            raise ValueError("nodes must equal the row sums of a")
        if self.order < 1:
            raise ValueError("order must be positive")
        if self.b_hat is not None:
            bh = np.asarray(self.b_hat, dtype=float)
            if bh.shape != (s,) or abs(bh.sum() - 1.0) > 1e-14:
                raise ValueError("embedded weights must have one entry per stage and sum to one")
            object.__setattr__(self, "b_hat", bh)

    @property
    def stages(self) -> int:
        return self.b.size


EULER = RKTableau([[0.0]], [1.0], [0.0], 1, name="euler")
RK4 = RKTableau(
    [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]],
    [1 / 6, 1 / 3, 1 / 3, 1 / 6],
    [0, 0.5, 0.5, 1],
    4,
    name="rk4",
)
# classical RK4 plus the stage at the new point; the third-order companion
# swaps the weight of the last classical stage onto it
RK43 = RKTableau(
    [[0, 0, 0, 0, 0], [0.5, 0, 0, 0, 0], [0, 0.5, 0, 0, 0], [0, 0, 1, 0, 0], [1 / 6, 1 / 3, 1 / 3, 1 / 6, 0]],
    [1 / 6, 1 / 3, 1 / 3, 1 / 6, 0],
    [0, 0.5, 0.5, 1, 1],
    4,
    b_hat=[1 / 6, 1 / 3, 1 / 3, 0, 1 / 6],
    name="rk43",
)
TABLEAUS = {t.name: t for t in (EULER, RK4, RK43)}


def tableau_by_name(name: str) -> RKTableau:
    try:
        return TABLEAUS[name]
    except KeyError:
        raise ValueError(f"unknown tableau {name!r}; choose from {sorted(TABLEAUS)}") from None


@dataclass
class StepRecord:
    t: float
    h: float
    eps: float
    stage_defects: list
    stage_times: list
    aposteriori_local: float | None = None
    restriction_satisfied: bool = True
    embedded_error: float | None = None
    delta_tol: float | None = None
    eps_clamped: bool = False
    rejected: int = 0
    fp_iterations: int | None = None
    realization_residual: float = 0.0

    @property
    def defect_max(self) -> float:
        return max(self.stage_defects) if self.stage_defects else 0.0

    def defect_integral(self) -> float:
        """Trapezoidal integral of the stage defects over the step.

        Stages sharing a time contribute their largest defect; the first and
        last stage values are extended to the step ends.
        """
        if self.h == 0.0 or not self.stage_defects:
            return 0.0
        times = np.asarray(self.stage_times)
        vals = np.asarray(self.stage_defects)
        ut = np.unique(times)
        uv = np.array([vals[times == s].max() for s in ut])
        if ut.size == 1:
            return float(self.h * uv[0])
        end = self.t + self.h
        total = uv[0] * (ut[0] - self.t) + uv[-1] * (end - ut[-1])
        return float(total + np.sum(0.5 * (uv[1:] + uv[:-1]) * np.diff(ut)))


def local_problem(model, q, f, metric: MetricQ | None = None) -> LocalProblem:
    return LocalProblem(model, q, f(model.eval(q)), metric)


def qdot(model, q, f, eps: float, metric: MetricQ | None = None) -> RegLsqResult:
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = model.check_params(q)
    return local_problem(model, q, f, metric).solve(eps)


def _restriction(h, delta, eps, c) -> bool:
    return bool(h * delta <= c * eps * eps)


def rk_step(model, q, f, eps: float, h: float, tableau: RKTableau = RK4, *, t: float = 0.0,
            c_restrict: float = 1.0, metric: MetricQ | None = None, first=None, velocity=None):
    """One explicit Runge-Kutta step; every stage velocity is a regularized least-squares solve.

    ``first`` may pass a ``(LocalProblem, RegLsqResult)`` already computed at
    ``q`` with this ``eps``.  ``velocity(q, eps) -> (qdot, defect, Phi'(q) qdot)``
    replaces the plain least-squares velocity (``f`` is then unused).
    """
    if h < 0:
        raise ValueError("step size must be nonnegative")
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = model.check_params(q)
    a, b = tableau.a, tableau.b
    qdots, tangents, defects = [], [], []
    for i in range(tableau.stages):
        qi = q
        if i > 0:
            incr = np.zeros_like(q)
            for j in range(i):
                if a[i, j] != 0.0:
                    incr = incr + a[i, j] * qdots[j]
            qi = q + h * incr
        if velocity is not None:
            qd, dd, tan = velocity(qi, eps)
        else:
            if i == 0 and first is not None:
                prob, res = first
            else:
                prob = local_problem(model, qi, f, metric)
                res = prob.solve(eps)
            qd, dd, tan = res.qdot, res.defect, prob.jac.apply(res.qdot)
        qdots.append(qd)
        tangents.append(tan)
        defects.append(dd)
    incr = np.zeros_like(q)
    for j in range(tableau.stages):
        if b[j] != 0.0:
            incr = incr + b[j] * qdots[j]
    q1 = q + h * incr

    space = model.space
    lin = None
    for j in range(tableau.stages):
        if b[j] != 0.0:
            term = tangents[j] * (h * b[j])
            lin = term if lin is None else lin + term
    apost = space.norm(model.eval(q1) - model.eval(q) - lin)
    emb = None
    if tableau.b_hat is not None:
        diff = None
        for j, w in enumerate(b - tableau.b_hat):
            if w != 0.0:
                term = tangents[j] * (h * w)
                diff = term if diff is None else diff + term
        emb = 0.0 if diff is None else space.norm(diff)
    rec = StepRecord(
        t=t,
        h=h,
        eps=eps,
        stage_defects=defects,
        stage_times=[float(s) for s in t + h * tableau.c],
        aposteriori_local=apost,
        restriction_satisfied=_restriction(h, max(defects), eps, c_restrict),
        embedded_error=emb,
    )
    return q1, rec


def euler_step(model, q, f, eps: float, h: float, *, t: float = 0.0, c_restrict: float = 1.0,
               metric: MetricQ | None = None):
    """Explicit regularized Euler step ``q + h qdot(q)``."""
    return rk_step(model, q, f, eps, h, EULER, t=t, c_restrict=c_restrict, metric=metric)


def _realify(x):
    return np.concatenate([x.real, x.imag]) if np.iscomplexobj(x) else x


def _complexify(x, like):
    if np.iscomplexobj(like):
        n = like.size
        return x[:n] + 1j * x[n:]
    return x


def implicit_euler_step(model, q, f, eps: float, h: float, fp_tol: float | None = None, fp_maxit: int = 50, *,
                        method: str = "fixed_point", t: float = 0.0, c_restrict: float = 1.0,
                        metric: MetricQ | None = None):
    """Implicit regularized Euler step ``q1 = q + h qdot(q1)``.

    ``method="fixed_point"`` iterates the map directly from the explicit Euler
    predictor; it contracts only when ``h`` is small relative to the
    regularization and the Lipschitz constant of ``f``.  ``method="newton"``
    solves the same equation by Newton's method with a finite-difference
    Jacobian, for stiff problems where the direct iteration cannot converge.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = model.check_params(q)
    met = model.metric() if metric is None else metric
    if fp_tol is None:
        fp_tol = 1e-12 * (1.0 + met.norm(q))

    def velocity(x):
        prob = local_problem(model, x, f, metric)
        return prob, prob.solve(eps)

    prob, res = velocity(q)
    x = q + h * res.qdot
    it = 0
    if method == "fixed_point":
        prev = np.inf
        growth = 0
        while True:
            it += 1
            prob, res = velocity(x)
            x_new = q + h * res.qdot
            d = met.norm(x_new - x)
            x = x_new
            if d <= fp_tol:
                break
            growth = growth + 1 if d > prev else 0
            prev = d
            if growth >= 3:
                raise ImplicitEulerError(
                    f"fixed-point iteration diverges at h={h:g}, eps={eps:g}; reduce h so that "
                    "h*(beta2*delta/eps^2 + beta1*L/eps) < 1 or use method='newton'"
                )
            if it >= fp_maxit:
                raise ImplicitEulerError(f"fixed-point iteration did not reach {fp_tol:.2e} in {fp_maxit} iterations")
    elif method == "newton":

        def residual(xr):
            xc = _complexify(xr, q)
            return _realify(xc - q - h * velocity(xc)[1].qdot)

        xr = _realify(x)
        while True:
            it += 1
            g = residual(xr)
            jac = np.empty((xr.size, xr.size))
            for k in range(xr.size):
                step = 1e-7 * (1.0 + abs(xr[k]))
                e = xr.copy()
                e[k] += step
                jac[:, k] = (residual(e) - g) / step
            dx = np.linalg.solve(jac, -g)
            xr = xr + dx
            if met.norm(_complexify(dx, q)) <= fp_tol:
                break
            if it >= fp_maxit:
                raise ImplicitEulerError(f"Newton iteration did not reach {fp_tol:.2e} in {fp_maxit} iterations")
        x = _complexify(xr, q)
        prob, res = velocity(x)
    else:
        raise ValueError(f"unknown implicit solver {method!r}")

    space = model.space
    apost = space.norm(model.eval(x) - model.eval(q) - prob.jac.apply(res.qdot) * h)
    rec = StepRecord(
        t=t,
        h=h,
        eps=eps,
        stage_defects=[res.defect],
        stage_times=[float(t + h)],
        aposteriori_local=apost,
        restriction_satisfied=_restriction(h, res.defect, eps, c_restrict),
        fp_iterations=it,
    )
    return x, rec


@dataclass
class FixedSchedule:
    eps: float
    h: float
    n_steps: int


@dataclass
class AdaptiveSchedule:
    t_end: float
    h0: float
    eps0: float | None = None
    config: adapt.AdaptConfig = field(default_factory=adapt.AdaptConfig)


@dataclass
class Trajectory:
    model: object
    t: list
    q: list
    records: list
    failed: bool = False
    error: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def cumulative_defect_integral(self) -> np.ndarray:
        return np.cumsum([r.defect_integral() for r in self.records])

    @property
    def defect_integral(self) -> float:
        return float(sum(r.defect_integral() for r in self.records))

    @property
    def defect_max(self) -> float:
        return max((r.defect_max for r in self.records), default=0.0)

    def state(self, i: int = -1):
        return self.model.eval(self.q[i])

    def write_csv(self, path) -> None:
        cum = self.cumulative_defect_integral
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "h", "eps", "defect_max", "aposteriori_local", "cumulative_defect_integral"])
            for rec, c in zip(self.records, cum):
                ap = "" if rec.aposteriori_local is None else f"{rec.aposteriori_local:.17g}"
                w.writerow([f"{rec.t + rec.h:.17g}", f"{rec.h:.17g}", f"{rec.eps:.17g}", f"{rec.defect_max:.17g}", ap, f"{c:.17g}"])


def read_csv(path) -> dict:
    """Columns of a trajectory CSV as float arrays (missing values become NaN)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows]) for k in rows[0]}


def integrate(model, q0, f, schedule, tableau: RKTableau = RK4, *, implicit: bool = False, t0: float = 0.0,
              c_restrict: float = 1.0, metric: MetricQ | None = None, callback=None, velocity=None,
              step=None, **implicit_opts) -> Trajectory:
    """Integrate from ``q0`` with a fixed or adaptive ``(eps, h)`` schedule.

    A failing step ends the run; the trajectory up to that point is returned
    with ``failed`` set and the reason in ``error``.  With a fixed schedule,
    ``velocity`` is passed on to :func:`rk_step`, and ``step(q, eps, h, t)``
    may replace the whole step (as for splitting methods).
    """
    q = model.check_params(q0)
    traj = Trajectory(model, [t0], [q], [])
    try:
        if isinstance(schedule, FixedSchedule):
            _run_fixed(model, q, f, schedule, tableau, implicit, t0, c_restrict, metric, traj, callback, implicit_opts,
                       velocity, step)
        elif isinstance(schedule, AdaptiveSchedule):
            if implicit or velocity is not None or step is not None:
                raise ValueError("the adaptive schedule drives plain explicit Runge-Kutta steps only")
            _run_adaptive(model, q, f, schedule, tableau, t0, c_restrict, metric, traj, callback)
        else:
            raise TypeError(f"unknown schedule {schedule!r}")
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        traj.failed = True
        traj.error = f"{type(exc).__name__} at t={traj.t[-1]:.6g}: {exc}"
    return traj


def _append(traj, q, rec, callback):
    traj.t.append(rec.t + rec.h)
    traj.q.append(q)
    traj.records.append(rec)
    if callback is not None:
        callback(traj)


def _run_fixed(model, q, f, sch, tableau, implicit, t, c_restrict, metric, traj, callback, implicit_opts,
               velocity=None, step=None):
    if sch.n_steps < 0:
        raise ValueError("number of steps must be nonnegative")
    for n in range(sch.n_steps):
        tn = t + n * sch.h
        if step is not None:
            q, rec = step(q, sch.eps, sch.h, tn)
        elif implicit:
            q, rec = implicit_euler_step(model, q, f, sch.eps, sch.h, t=tn, c_restrict=c_restrict, metric=metric, **implicit_opts)
        else:
            q, rec = rk_step(model, q, f, sch.eps, sch.h, tableau, t=tn, c_restrict=c_restrict, metric=metric,
                             velocity=velocity)
        _append(traj, q, rec, callback)


def _run_adaptive(model, q, f, sch, tableau, t, c_restrict, metric, traj, callback, max_rejects: int = 30):
    cfg = sch.config
    lo, hi = cfg.eps_bounds
    eps = hi if sch.eps0 is None else min(max(sch.eps0, lo), hi)
    h = sch.h0
    first = True
    t_end = sch.t_end
    while t_end - t > 1e-12 * max(1.0, abs(t_end)):
        prob = local_problem(model, q, f, metric)
        ch = adapt.choose_eps(model, q, f, cfg, eps, first=first, prob=prob)
        first = False
        eps = ch.eps
        h = adapt.choose_h(model, q, ch.qdot, ch.delta, h, cfg.h_bounds)
        h = min(h, t_end - t)
        rejected = 0
        while True:
            q1, rec = rk_step(model, q, f, eps, h, tableau, t=t, c_restrict=c_restrict, metric=metric, first=(prob, ch.result))
            est = rec.embedded_error if rec.embedded_error is not None else rec.aposteriori_local
            if est <= cfg.reject_factor * h * ch.delta or h <= cfg.h_bounds[0] or rejected >= max_rejects:
                break
            h = max(0.5 * h, cfg.h_bounds[0])
            rejected += 1
        rec.delta_tol = ch.delta_tol
        rec.eps_clamped = ch.clamped
        rec.rejected = rejected
        q = q1
        t = t + h
        _append(traj, q, rec, callback)
