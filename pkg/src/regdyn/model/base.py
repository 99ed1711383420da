"""Parametrization interface and the operations shared by all models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..reglsq import GramSystem, MetricQ, RegLsqResult, factor


class NoTangentLift(NotImplementedError):
    """The model's tangent space is not known to contain the Laplacian of its states."""


class JacobianMap:
    """Quasi-matrix ``A = Phi'(q)`` accessed through its space's inner product."""

    def __init__(self, space, columns):
        self.space = space
        self.columns = columns

    @property
    def k(self) -> int:
        return self.space.ncols(self.columns)

    def apply(self, v: np.ndarray):
        return self.space.apply(self.columns, v)

    def adjoint_apply(self, w) -> np.ndarray:
        return self.space.adjoint(self.columns, self.space.embed(w))

    def gram(self) -> np.ndarray:
        return self.space.gram(self.columns)

    def column(self, i: int):
        return self.space.column(self.columns, i)


class ParametricModel:
    """Map ``Phi`` from a parameter vector ``q`` to a state of ``self.space``."""

    nparams: int
    is_complex: bool = False
    space = None

    def check_params(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=complex if self.is_complex else float)
        if q.shape != (self.nparams,):
            raise ValueError(f"expected {self.nparams} parameters, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            bad = int(np.flatnonzero(~np.isfinite(q))[0])
            raise FloatingPointError(f"parameter {bad} is not finite")
        return q

    def eval(self, q: np.ndarray):
        raise NotImplementedError

    def jacobian(self, q: np.ndarray) -> JacobianMap:
        raise NotImplementedError

    def metric(self) -> MetricQ:
        return MetricQ.identity(self.nparams)

    # optional: exact Laplacian lift, or Laplacian of the state for a least-squares lift
    def laplacian_lift(self, q):
        raise NoTangentLift(f"{type(self).__name__} has no tangent lift of the Laplacian")

    def laplacian_state(self, q):
        raise NoTangentLift(f"{type(self).__name__} has no tangent lift of the Laplacian")

    def exact_free_flow(self, q, h, kinetic):
        return None


def gram_and_rhs(model, q, b, metric: MetricQ | None = None, eps: float = 1.0, jac: JacobianMap | None = None) -> GramSystem:
    """Assemble ``A*A`` and ``A*b`` (with ``||b||^2``) at ``q``."""
    jac = model.jacobian(q) if jac is None else jac
    space = jac.space
    b = space.embed(b)
    metric = model.metric() if metric is None else metric
    return GramSystem(jac.gram(), jac.adjoint_apply(b), eps, metric, space.norm_sq(b))


class LocalProblem:
    """The least-squares problem ``min ||Phi'(q) x - b||^2 + eps^2 ||x||_Q^2`` at one ``q``.

    Jacobian, Gram matrix and ``A*b`` are assembled once; :meth:`solve` may then
    be called for many values of ``eps``.  The residual is evaluated directly
    in the state space, which keeps small defects accurate where the
    quadratic form would cancel.
    """

    def __init__(self, model, q, b, metric: MetricQ | None = None, jac: JacobianMap | None = None):
        self.model = model
        self.q = q
        self.jac = model.jacobian(q) if jac is None else jac
        self.b = self.jac.space.embed(b)
        self.gs = gram_and_rhs(model, q, self.b, metric, 1.0, self.jac)

    @property
    def b_norm(self) -> float:
        return float(np.sqrt(self.gs.b_norm_sq))

    def system(self, eps: float) -> GramSystem:
        return GramSystem(self.gs.gram, self.gs.rhs, float(eps), self.gs.metric, self.gs.b_norm_sq)

    def solve(self, eps: float, fac=None) -> RegLsqResult:
        """Regularized solution at ``eps``; ``fac`` may reuse a factorization at that ``eps``."""
        fac = factor(self.system(eps)) if fac is None else fac
        x = fac.solve(self.gs.rhs)
        space = self.jac.space
        res = space.norm(self.jac.apply(x) - self.b)
        reg = float(eps) * self.gs.metric.norm(x)
        return RegLsqResult(x, float(np.hypot(res, reg)), res, reg, float(eps))


@dataclass
class TangentLift:
    q: np.ndarray
    residual: float
    exact: bool


def tangent_lift_laplacian(model, q, eps: float = 1e-10, metric: MetricQ | None = None) -> TangentLift:
    """Parameter vector ``q_lap`` with ``Phi'(q) q_lap = Laplacian Phi(q)``.

    Models whose tangent space is closed under the Laplacian return the exact
    lift.  Otherwise, when the Laplacian of the state is available, the
    regularized least-squares lift is returned together with its residual
    ``||Phi'(q) q_lap - Laplacian Phi(q)||``.
    """
    q = model.check_params(q)
    try:
        return TangentLift(model.laplacian_lift(q), 0.0, True)
    except NoTangentLift:
        pass
    r = LocalProblem(model, q, model.laplacian_state(q), metric).solve(eps)
    return TangentLift(r.qdot, r.residual_norm, False)


@dataclass
class FreeFlowResult:
    q: np.ndarray
    residual: float
    exact: bool


def free_flow_step(model, q, h: float, kinetic: float = 0.5, eps: float = 1e-10, max_substep: float = 0.01) -> FreeFlowResult:
    """Advance ``u' = i * kinetic * Laplacian u`` over time ``h``.

    Exact for models with a closed-form free flow.  Otherwise the lifted flow
    ``q' = i * kinetic * q_lap(q)`` is integrated with classical RK4 substeps
    of size at most ``max_substep``; ``residual`` then bounds the distance to
    the exact free evolution up to the substep time error, as the integral of
    the lift residual.
    """
    q = model.check_params(q)
    if h == 0.0:
        return FreeFlowResult(q.copy(), 0.0, True)
    exact = model.exact_free_flow(q, h, kinetic)
    if exact is not None:
        return FreeFlowResult(exact, 0.0, True)
    if not model.is_complex:
        raise NoTangentLift("free Schroedinger flow needs complex parameters")

    def rate(x):
        lift = tangent_lift_laplacian(model, x, eps)
        return 1j * kinetic * lift.q, abs(kinetic) * lift.residual

    n = max(1, int(np.ceil(abs(h) / max_substep)))
    dt = h / n
    resid = 0.0
    for _ in range(n):
        k1, r1 = rate(q)
        k2, r2 = rate(q + 0.5 * dt * k1)
        k3, r3 = rate(q + 0.5 * dt * k2)
        k4, r4 = rate(q + dt * k3)
        q = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        resid += abs(dt) / 6.0 * (r1 + 2 * r2 + 2 * r3 + r4)
    return FreeFlowResult(q, resid, False)
