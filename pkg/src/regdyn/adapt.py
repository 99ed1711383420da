"""Adaptive choice of the regularization parameter and the stepsize.

The target defect is ``delta_tol = max(target_factor * delta(eps_star), delta_min)``:
a modest multiple of the smallest defect the model can reliably attain at
the current state.  ``eps`` is then tuned so that ``delta(eps)`` sits near
that target, by Newton's method on ``alpha = eps^2`` or by a geometric
(Levenberg-Marquardt style) search.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from .model.base import LocalProblem
from .reglsq import RegLsqResult


@dataclass
class AdaptConfig:
    eps_star: float = 1e-8
    delta_min: float = 1e-12
    target_factor: float = 17.0
    newton_iters: int = 2
    first_newton_iters: int = 10
    lm_factor: float = 3.0
    eps_bounds: tuple = (1e-8, 1.0)
    h_bounds: tuple = (1e-6, 1.0)
    reject_factor: float = 5.0
    selector: str = "newton"

    def __post_init__(self):
        self.eps_bounds = tuple(float(v) for v in self.eps_bounds)
        self.h_bounds = tuple(float(v) for v in self.h_bounds)
        lo, hi = self.eps_bounds
        if not 0 < lo <= hi:
            raise ValueError(f"invalid eps_bounds {self.eps_bounds}")
        if not 0 < self.h_bounds[0] <= self.h_bounds[1]:
            raise ValueError(f"invalid h_bounds {self.h_bounds}")
        if not 0 < self.eps_star <= lo:
            raise ValueError("eps_star must be positive and not exceed the lower eps bound")
        if self.target_factor <= 1:
            raise ValueError("target_factor must exceed 1")
        if self.lm_factor <= 1:
            raise ValueError("lm_factor must exceed 1")
        if self.reject_factor <= 0:
            raise ValueError("reject_factor must be positive")
        if self.selector not in ("newton", "lm"):
            raise ValueError(f"unknown eps selector {self.selector!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "AdaptConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown adapt keys: {sorted(unknown)}")
        return cls(**values)


class EpsChoice(NamedTuple):
    eps: float
    delta: float
    qdot: np.ndarray
    result: RegLsqResult
    delta_tol: float
    clamped: bool
    solves: int


def _problem(model, q, f, metric=None) -> LocalProblem:
    return LocalProblem(model, q, f(model.eval(q)), metric)


def target_defect(prob: LocalProblem, cfg: AdaptConfig) -> float:
    d_star = prob.solve(cfg.eps_star).defect
    if not np.isfinite(d_star):
        raise FloatingPointError(f"defect at eps_star={cfg.eps_star:g} is not finite")
    return max(cfg.target_factor * d_star, cfg.delta_min)


def choose_eps_newton(model, q, f, cfg: AdaptConfig, eps_init: float, iters: int | None = None,
                      prob: LocalProblem | None = None) -> EpsChoice:
    """Newton iteration on ``alpha = eps^2`` for ``delta(eps) = delta_tol``.

    ``delta^2`` as a function of ``alpha`` is concave with derivative
    ``||qdot||_Q^2``, so the Newton update needs no extra solve.
    """
    prob = _problem(model, q, f) if prob is None else prob
    lo, hi = cfg.eps_bounds
    if not lo <= eps_init <= hi:
        raise ValueError(f"eps_init={eps_init:g} outside eps_bounds {cfg.eps_bounds}")
    tol = target_defect(prob, cfg)
    iters = cfg.newton_iters if iters is None else int(iters)
    eps = float(eps_init)
    res = prob.solve(eps)
    solves = 2
    clamped = False
    metric = prob.gs.metric
    for _ in range(iters):
        slope = metric.norm_sq(res.qdot)
        if slope == 0.0:
            # delta does not depend on eps at all
            res = prob.solve(hi)
            return EpsChoice(hi, res.defect, res.qdot, res, tol, False, solves + 1)
        alpha = eps * eps - (res.defect**2 - tol * tol) / slope
        new = float(np.sqrt(alpha)) if alpha > 0 else lo
        clamped = not lo <= new <= hi
        new = min(max(new, lo), hi)
        if new == eps:
            break
        eps = new
        res = prob.solve(eps)
        solves += 1
    return EpsChoice(eps, res.defect, res.qdot, res, tol, clamped, solves)


def choose_eps_lm(model, q, f, cfg: AdaptConfig, eps_init: float, prob: LocalProblem | None = None) -> EpsChoice:
    """Geometric search: grow ``eps`` while the defect stays below target, else shrink."""
    prob = _problem(model, q, f) if prob is None else prob
    lo, hi = cfg.eps_bounds
    if not lo <= eps_init <= hi:
        raise ValueError(f"eps_init={eps_init:g} outside eps_bounds {cfg.eps_bounds}")
    tol = target_defect(prob, cfg)
    eps = float(eps_init)
    res = prob.solve(eps)
    solves = 2
    if res.defect <= tol:
        while eps < hi:
            trial = min(eps * cfg.lm_factor, hi)
            r = prob.solve(trial)
            solves += 1
            if r.defect > tol:
                break
            eps, res = trial, r
        clamped = eps == hi
    else:
        while res.defect > tol and eps > lo:
            eps = max(eps / cfg.lm_factor, lo)
            res = prob.solve(eps)
            solves += 1
        clamped = res.defect > tol
    return EpsChoice(eps, res.defect, res.qdot, res, tol, clamped, solves)


def choose_eps(model, q, f, cfg: AdaptConfig, eps_init: float, first: bool = False,
               prob: LocalProblem | None = None) -> EpsChoice:
    if cfg.selector == "lm":
        return choose_eps_lm(model, q, f, cfg, eps_init, prob)
    iters = cfg.first_newton_iters if first else cfg.newton_iters
    return choose_eps_newton(model, q, f, cfg, eps_init, iters, prob)


def curvature_norm(model, q, qdot, h: float) -> float:
    """``||(Phi'(q + h qdot) - Phi'(q)) qdot||_H``."""
    j0 = model.jacobian(q)
    j1 = model.jacobian(q + h * qdot)
    return j0.space.norm(j1.apply(qdot) - j0.apply(qdot))


def choose_h(model, q, qdot, delta: float, h_init: float, h_bounds=(1e-6, 1.0)) -> float:
    """Stepsize for which the linearization error over one step is about ``h * delta``."""
    if not h_init > 0:
        raise ValueError("h_init must be positive")
    lo, hi = h_bounds
    denom = curvature_norm(model, q, qdot, h_init)
    if denom <= 1e-30 * delta:
        return float(hi)
    return float(min(max(h_init * delta / denom, lo), hi))
