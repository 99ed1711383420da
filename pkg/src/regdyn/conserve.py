"""Conserved quantities: drift monitoring and the constrained regularized Euler method.

A constraint ``g_i`` is real valued; its derivative acts as
``G_i(u) v = Re <grad_i(u), v>`` with a Riesz representer ``grad_i(u)`` in the
state space.  The real part makes the same formulas serve complex state
spaces, which are real Hilbert spaces under ``Re <., .>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrate import StepFailure, StepRecord, Trajectory, local_problem
from .model.base import gram_and_rhs
from .reglsq import MetricQ, factor

GPG_COND_LIMIT = 1e12


class ConstraintError(StepFailure):
    pass


@dataclass
class Constraint:
    name: str
    value: Callable  # u -> float
    grad: Callable  # u -> state


def l2_norm(space) -> Constraint:
    """``g(u) = ||u||^2``."""
    return Constraint("l2_norm", lambda u: space.norm_sq(u), lambda u: 2.0 * u)


def energy(space, H_apply) -> Constraint:
    """``g(u) = Re <u, H u>`` for a self-adjoint ``H``."""
    return Constraint(
        "energy",
        lambda u: float(np.real(space.inner(u, H_apply(u)))),
        lambda u: 2.0 * H_apply(u),
    )


def linear_functional(space, w, name: str = "tabulated") -> Constraint:
    """``g(u) = Re <w, u>`` for a tabulated state ``w``."""
    w = space.embed(w)
    return Constraint(name, lambda u: float(np.real(space.inner(w, u))), lambda u: w)


class ConstraintSet:
    def __init__(self, space, constraints: Sequence[Constraint]):
        if not constraints:
            raise ValueError("at least one constraint is required")
        self.space = space
        self.constraints = list(constraints)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def names(self) -> list:
        return [c.name for c in self.constraints]

    def g(self, u) -> np.ndarray:
        return np.array([c.value(u) for c in self.constraints], dtype=float)

    def grads(self, u) -> list:
        return [self.space.embed(c.grad(u)) for c in self.constraints]

    def G_apply(self, u, v) -> np.ndarray:
        return np.array([np.real(self.space.inner(gr, v)) for gr in self.grads(u)])

    def G_norm(self, u) -> float:
        """Operator norm of ``G(u)`` from the state space to ``R^m``."""
        gr = self.grads(u)
        gram = np.array([[np.real(self.space.inner(a, b)) for b in gr] for a in gr])
        return float(np.sqrt(max(np.linalg.eigvalsh(gram).max(), 0.0)))

    def consistency(self, u, fu) -> np.ndarray:
        """``|G(u) f(u)|`` relative to ``||grad_i|| ||f(u)||``; zero for conserved quantities."""
        gf = np.abs(self.G_apply(u, fu))
        scale = np.array([self.space.norm(gr) for gr in self.grads(u)]) * self.space.norm(fu)
        return np.where(scale > 0, gf / np.where(scale > 0, scale, 1.0), gf)


@dataclass
class MultiplierSolve:
    lam: np.ndarray
    newton_iters_used: int
    constraint_residual: np.ndarray
    unconstrained_defect: float
    gpg_cond: float


@dataclass
class GPGReport:
    matrix: np.ndarray
    cond: float
    singular: bool
    theta: float
    rho: float
    inverse_bound: float


def _constraint_columns(jac, grads) -> np.ndarray:
    return np.stack([jac.adjoint_apply(gr) for gr in grads], axis=1)


def gpg_matrix(model, q, constraints: ConstraintSet, eps: float, theta: float = 0.5,
               metric: MetricQ | None = None) -> GPGReport:
    """``G P_eps G^T = C M_eps^{-1} C^T`` with the eigenvalue-based inverse bound.

    With ``U_theta`` the eigenvectors of ``P_eps`` whose eigenvalues are at
    least ``theta`` and ``rho`` the smallest singular value of ``G U_theta``,
    ``||(G P_eps G^T)^{-1}|| <= 1 / (theta rho^2)``.
    """
    q = model.check_params(q)
    u = model.eval(q)
    jac = model.jacobian(q)
    met = model.metric() if metric is None else metric
    gs = gram_and_rhs(model, q, jac.space.zeros(complex if model.is_complex else float), met, eps, jac)
    C = _constraint_columns(jac, constraints.grads(u))
    X = factor(gs).solve(C)
    gpg = np.real(C.conj().T @ X)
    gpg = 0.5 * (gpg + gpg.T)
    cond = float(np.linalg.cond(gpg)) if np.any(gpg) else np.inf
    # eigenpairs of P_eps through the whitened Gram matrix
    _, qinv_half = met.sqrt_and_inverse()
    wg = qinv_half.conj().T @ gs.gram @ qinv_half
    s2, w = np.linalg.eigh(0.5 * (wg + wg.conj().T))
    s2 = np.clip(s2, 0.0, None)
    lam = s2 / (s2 + eps * eps)
    keep = (lam >= theta) & (s2 > 0)
    z = (C.conj().T @ (qinv_half @ w[:, keep])) / np.sqrt(s2[keep])
    # G applied to the eigenvectors A Q^{-1/2} w / sigma, and to i times them
    # when the state space is complex
    cols = [np.real(z)]
    if model.is_complex:
        cols.append(np.imag(z))
    GU = np.concatenate(cols, axis=1)
    if GU.shape[1] < constraints.m:
        rho = 0.0
    else:
        rho = float(np.linalg.svd(GU, compute_uv=False).min())
    bound = np.inf if rho == 0.0 else 1.0 / (theta * rho * rho)
    return GPGReport(gpg, cond, bool(cond > GPG_COND_LIMIT), float(theta), rho, bound)


def constrained_euler_step(model, q, f, eps: float, h: float, constraints: ConstraintSet, newton_tol: float | None = None,
                           newton_maxit: int = 25, *, t: float = 0.0, c_restrict: float = 1.0,
                           metric: MetricQ | None = None, target=None):
    """Regularized Euler step with ``g(u_{n+1}) = g(u_n)`` enforced by a multiplier.

    ``target`` replaces ``g(u_n)`` by a fixed value, typically ``g(u_0)``, so
    that Newton residuals do not accumulate over many steps.

    The multiplier solves ``g(Phi(q_tilde - h M^{-1} C^T lam)) = g(u_n)`` by the
    modified Newton iteration with the matrix ``-h C M^{-1} C^T`` frozen at
    ``q_n`` and ``lam = 0`` as starting value.
    """
    if h < 0:
        raise ValueError("step size must be nonnegative")
    q = model.check_params(q)
    u = model.eval(q)
    prob = local_problem(model, q, f, metric)
    fac = factor(prob.system(eps))
    base = prob.solve(eps, fac)
    qd0 = base.qdot
    C = _constraint_columns(prob.jac, constraints.grads(u))
    X = fac.solve(C)
    gpg = np.real(C.conj().T @ X)
    gpg = 0.5 * (gpg + gpg.T)
    cond = float(np.linalg.cond(gpg)) if np.any(gpg) else np.inf
    if cond > GPG_COND_LIMIT:
        raise ConstraintError(
            f"G P_eps G^T is numerically singular (condition {cond:.2e}); the constraint gradients are "
            "nearly orthogonal to the tangent directions with singular values above eps, so the "
            "matrix has no moderately bounded inverse"
        )
    g0 = constraints.g(u) if target is None else np.asarray(target, dtype=float)
    if newton_tol is None:
        newton_tol = 1e-12 * (1.0 + float(np.max(np.abs(g0))))
    q_tilde = q + h * qd0
    lam = np.zeros(constraints.m)
    prev = np.inf
    growth = 0
    it = 0
    while True:
        qk = q_tilde - h * (X @ lam)
        r = constraints.g(model.eval(qk)) - g0
        rn = float(np.max(np.abs(r)))
        if rn <= newton_tol:
            break
        if it >= newton_maxit:
            raise ConstraintError(
                f"multiplier iteration stalled at residual {rn:.2e} after {it} iterations; "
                "reduce h so that h*(delta + h) <= c*eps"
            )
        growth = growth + 1 if rn > prev else 0
        prev = rn
        if growth >= 3:
            raise ConstraintError(
                f"multiplier iteration diverges (residual {rn:.2e}); reduce h so that h*(delta + h) <= c*eps"
            )
        lam = lam + np.linalg.solve(h * gpg, r)
        it += 1
    qdot = qd0 - X @ lam
    q1 = q + h * qdot
    space = prob.jac.space
    lin = prob.jac.apply(qdot)
    res = space.norm(lin - prob.b)
    reg = eps * prob.gs.metric.norm(qdot)
    dhat = float(np.hypot(res, reg))
    apost = space.norm(model.eval(q1) - u - lin * h)
    rec = StepRecord(
        t=t,
        h=h,
        eps=eps,
        stage_defects=[dhat],
        stage_times=[float(t)],
        aposteriori_local=apost,
        restriction_satisfied=bool(h * dhat <= c_restrict * eps * eps),
    )
    ms = MultiplierSolve(lam, it, r, base.defect, cond)
    return q1, rec, ms


def integrate_constrained(model, q0, f, eps: float, h: float, n_steps: int, constraints: ConstraintSet,
                          newton_tol: float | None = None, newton_maxit: int = 25, *, t0: float = 0.0,
                          metric: MetricQ | None = None) -> Trajectory:
    """Fixed-step constrained Euler run; multipliers go to ``extras['multipliers']``."""
    q = model.check_params(q0)
    traj = Trajectory(model, [t0], [q], [])
    mults = traj.extras.setdefault("multipliers", [])
    g_init = constraints.g(model.eval(q))
    try:
        for n in range(n_steps):
            q, rec, ms = constrained_euler_step(model, q, f, eps, h, constraints, newton_tol, newton_maxit,
                                                t=t0 + n * h, metric=metric, target=g_init)
            traj.t.append(rec.t + rec.h)
            traj.q.append(q)
            traj.records.append(rec)
            mults.append(ms)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        traj.failed = True
        traj.error = f"{type(exc).__name__} at t={traj.t[-1]:.6g}: {exc}"
    return traj


@dataclass
class DriftReport:
    t: np.ndarray
    drift: np.ndarray  # (n_points, m): g(u_n) - g(u_0)
    defect_integral: np.ndarray  # cumulative, starting at 0
    K: float
    bound: np.ndarray = field(init=False)

    def __post_init__(self):
        self.bound = self.K * self.defect_integral

    @property
    def holds(self) -> bool:
        return bool(np.all(np.abs(self.drift).max(axis=1) <= self.bound * (1 + 1e-9) + 1e-14))


def drift_report(traj: Trajectory, constraints: ConstraintSet, K: float | None = None) -> DriftReport:
    """Exact drift of every constraint along ``traj`` and its bound ``K * int delta``.

    Without ``K``, the largest ``||G(u_n)||`` along the trajectory is used.
    """
    states = [traj.model.eval(q) for q in traj.q]
    g = np.array([constraints.g(u) for u in states])
    if K is None:
        K = max(constraints.G_norm(u) for u in states)
    cum = np.concatenate([[0.0], traj.cumulative_defect_integral])
    return DriftReport(np.asarray(traj.t, dtype=float), g - g[0], cum, float(K))
