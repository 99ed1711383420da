"""Regularized linear least squares.

Solves ``||A x - b||_H^2 + eps^2 ||x||_Q^2 = min`` through the normal
equations ``(A*A + eps^2 Q) x = A*b`` or, as an oracle, through the singular
value decomposition of a dense ``A``.  Complex scalars are handled natively
with Hermitian adjoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

ULP = np.finfo(float).eps
# relative slack for the roundoff clamp on squared defects
CLAMP_RTOL = 1e-12


class RegLsqError(ArithmeticError):
    """Raised when a regularized least-squares solve cannot be trusted."""


@dataclass(frozen=True)
class MetricQ:
    """Inner product on the parameter space.

    ``matrix=None`` stands for the identity and behaves exactly like the
    dense identity of size ``dim``.
    """

    dim: int
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("metric dimension must be positive")
        if self.matrix is not None:
            m = np.asarray(self.matrix)
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"metric matrix has shape {m.shape}, expected {(self.dim, self.dim)}")
            if not np.allclose(m, m.conj().T, rtol=1e-12, atol=0.0):
                raise ValueError("metric matrix is not Hermitian")
            if np.linalg.eigvalsh(m).min() <= 0.0:
                raise ValueError("metric matrix is not positive definite")
            object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, dim: int) -> "MetricQ":
        return cls(dim)

    @property
    def is_identity(self) -> bool:
        return self.matrix is None

    def dense(self) -> np.ndarray:
        return np.eye(self.dim) if self.matrix is None else self.matrix

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x if self.matrix is None else self.matrix @ x

    def norm_sq(self, x: np.ndarray) -> float:
        if self.matrix is None:
            return float(np.real(np.vdot(x, x)))
        return float(np.real(np.vdot(x, self.matrix @ x)))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self.norm_sq(x), 0.0)))

    def sqrt_and_inverse(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``Q^{1/2}`` and ``Q^{-1/2}`` from a Hermitian eigendecomposition."""
        if self.matrix is None:
            eye = np.eye(self.dim)
            return eye, eye
        w, v = np.linalg.eigh(self.matrix)
        s = np.sqrt(w)
        return (v * s) @ v.conj().T, (v / s) @ v.conj().T


@dataclass
class RegLsqResult:
    qdot: np.ndarray
    defect: float
    residual_norm: float
    reg_norm: float
    eps: float


@dataclass
class GramSystem:
    """Normal-equation data ``A*A``, ``A*b`` for one regularized solve."""

    gram: np.ndarray
    rhs: np.ndarray
    eps: float
    metric: MetricQ
    b_norm_sq: float | None = None

    def __post_init__(self):
        k = self.gram.shape[0]
        if self.gram.shape != (k, k):
            raise ValueError(f"Gram matrix must be square, got {self.gram.shape}")
        if self.rhs.shape != (k,):
            raise ValueError(f"rhs has shape {self.rhs.shape}, expected ({k},)")
        if self.metric.dim != k:
            raise ValueError(f"metric dimension {self.metric.dim} != parameter count {k}")

    def regularized_matrix(self, eps: float | None = None) -> np.ndarray:
        e = self.eps if eps is None else eps
        if self.metric.is_identity:
            m = self.gram.copy()
            m[np.diag_indices_from(m)] += e * e
            return m
        return self.gram + (e * e) * self.metric.matrix


@dataclass
class Factorization:
    """Factorized ``M_eps``; reused for several right-hand sides."""

    gs: GramSystem
    chol: tuple | None = None
    # spectral fallback: M_eps = V diag(lam) V^H
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None
    used_fallback: bool = field(default=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.chol is not None:
            return la.cho_solve(self.chol, rhs)
        v = self.eigvecs
        return v @ ((v.conj().T @ rhs) / self.eigvals[(...,) + (None,) * (rhs.ndim - 1)])


def factor(gs: GramSystem) -> Factorization:
    """Cholesky factorization of ``M_eps``; spectral fallback on failure."""
    if not gs.eps > 0.0:
        raise ValueError("normal-equation path requires eps > 0")
    m = gs.regularized_matrix()
    try:
        chol = la.cho_factor(m, lower=True, check_finite=True)
        if np.all(np.isfinite(chol[0])):
            return Factorization(gs, chol=chol)
    except la.LinAlgError:
        pass
    # M_eps numerically indefinite: whiten by Q^{-1/2} and diagonalize the Gram part
    _, qinv_half = gs.metric.sqrt_and_inverse()
    g = qinv_half.conj().T @ gs.gram @ qinv_half
    g = 0.5 * (g + g.conj().T)
    s2, w = np.linalg.eigh(g)
    s2 = np.clip(s2, 0.0, None)
    lam = s2 + gs.eps**2
    if lam.min() <= 0.0:
        raise RegLsqError(f"regularized matrix is singular at eps={gs.eps:g}; eps too small for the conditioning")
    # M^{-1} = Q^{-1/2} W diag(1/lam) W^H Q^{-1/2}
    vecs = qinv_half @ w
    return Factorization(gs, eigvals=lam, eigvecs=vecs, used_fallback=True)


def clamp_square(value: float, scale: float, what: str = "squared defect") -> float:
    """Clamp small negative roundoff in a squared norm; reject larger negatives."""
    if value >= 0.0:
        return value
    if value >= -CLAMP_RTOL * max(scale, 0.0):
        return 0.0
    raise RegLsqError(f"{what} is negative ({value:.3e}) beyond roundoff (scale {scale:.3e})")


def result_from_quadratic_form(gs: GramSystem, qdot: np.ndarray, b_norm_sq: float) -> RegLsqResult:
    """Defect from the quadratic form, for spaces with inner-product access only."""
    gq = gs.gram @ qdot
    res_sq = b_norm_sq - 2.0 * np.real(np.vdot(gs.rhs, qdot)) + np.real(np.vdot(qdot, gq))
    reg_sq = gs.eps**2 * gs.metric.norm_sq(qdot)
    res_sq = clamp_square(float(res_sq), b_norm_sq, "squared residual")
    return RegLsqResult(
        qdot=qdot,
        defect=float(np.sqrt(res_sq + reg_sq)),
        residual_norm=float(np.sqrt(res_sq)),
        reg_norm=float(np.sqrt(reg_sq)),
        eps=gs.eps,
    )


def solve_normal(gs: GramSystem, b_norm_sq: float | None = None, fac: Factorization | None = None) -> RegLsqResult:
    """Solve ``M_eps qdot = A*b``; the defect comes from the quadratic form.

    ``b_norm_sq`` is ``||b||_H^2`` (falls back to ``gs.b_norm_sq``).
    """
    if b_norm_sq is None:
        b_norm_sq = gs.b_norm_sq
    if b_norm_sq is None:
        raise ValueError("||b||^2 must be supplied with the Gram system")
    fac = factor(gs) if fac is None else fac
    qdot = fac.solve(gs.rhs)
    return result_from_quadratic_form(gs, qdot, float(b_norm_sq))


def _check_dense(A: np.ndarray, b: np.ndarray) -> None:
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"dimension mismatch: A {A.shape}, b {b.shape}")


def solve_svd(A: np.ndarray, b: np.ndarray, eps: float, metric: MetricQ | None = None) -> RegLsqResult:
    """Closed-form regularized solution from the SVD of ``A Q^{-1/2}``.

    Valid at ``eps = 0``, where it returns the minimum-norm solution.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    _check_dense(A, b)
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    metric = MetricQ.identity(A.shape[1]) if metric is None else metric
    if metric.dim != A.shape[1]:
        raise ValueError(f"metric dimension {metric.dim} != {A.shape[1]} columns")
    _, qinv_half = metric.sqrt_and_inverse()
    B = A @ qinv_half
    u, s, vh = np.linalg.svd(B, full_matrices=False)
    ub = u.conj().T @ b
    if eps > 0.0:
        gain = s / (s * s + eps * eps)
    else:
        tol = max(B.shape) * ULP * (s[0] if s.size else 0.0)
        gain = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    z = vh.conj().T @ (gain * ub)
    x = qinv_half @ z
    res = float(np.linalg.norm(A @ x - b))
    reg = float(eps * np.linalg.norm(z))
    return RegLsqResult(qdot=x, defect=float(np.hypot(res, reg)), residual_norm=res, reg_norm=reg, eps=eps)


def solve_dense(A: np.ndarray, b: np.ndarray, eps: float, metric: MetricQ | None = None) -> RegLsqResult:
    """Normal-equation solve for a dense ``A`` with the residual recomputed directly."""
    A = np.asarray(A)
    b = np.asarray(b)
    _check_dense(A, b)
    metric = MetricQ.identity(A.shape[1]) if metric is None else metric
    gs = GramSystem(A.conj().T @ A, A.conj().T @ b, eps, metric)
    qdot = factor(gs).solve(gs.rhs)
    res = float(np.linalg.norm(A @ qdot - b))
    reg = float(eps * metric.norm(qdot))
    return RegLsqResult(qdot=qdot, defect=float(np.hypot(res, reg)), residual_norm=res, reg_norm=reg, eps=eps)


def solve_truncated(A: np.ndarray, b: np.ndarray, eps: float) -> RegLsqResult:
    """Minimum-norm solution with singular values below ``eps`` set to zero.

    There is no penalty term, so ``reg_norm`` is 0 and the defect is the
    residual ``||A x - b||``.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    _check_dense(A, b)
    if not eps > 0.0:
        raise ValueError("truncation threshold must be positive")
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    keep = s >= eps
    gain = np.zeros_like(s)
    gain[keep] = 1.0 / s[keep]
    x = vh.conj().T @ (gain * (u.conj().T @ b))
    res = float(np.linalg.norm(A @ x - b))
    return RegLsqResult(qdot=x, defect=res, residual_norm=res, reg_norm=0.0, eps=eps)


def theta_and_derivative(A: np.ndarray, b: np.ndarray, alpha: float) -> tuple[float, float]:
    """Minimal value ``theta(alpha)`` of ``||Ax-b||^2 + alpha ||x||^2`` and its derivative.

    The derivative is ``||x(alpha)||^2``; no differencing is involved.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    r = solve_svd(A, b, float(np.sqrt(alpha)))
    xn2 = float(np.real(np.vdot(r.qdot, r.qdot)))
    return r.residual_norm**2 + alpha * xn2, xn2


def operator_norm_checks(A: np.ndarray, eps: float, ulps: float = 8.0) -> dict:
    """2-norms of ``A M^{-1} A*``, ``A M^{-1}``, ``M^{-1}`` against 1, 1/(2 eps), 1/eps^2."""
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    A = np.asarray(A)
    k = A.shape[1]
    m = A.conj().T @ A + eps * eps * np.eye(k)
    minv = la.solve(m, np.eye(k), assume_a="pos")
    norms = {
        "P": float(np.linalg.norm(A @ minv @ A.conj().T, 2)) if A.shape[0] else 0.0,
        "AMinv": float(np.linalg.norm(A @ minv, 2)) if A.shape[0] else 0.0,
        "Minv": float(np.linalg.norm(minv, 2)),
    }
    bounds = {"P": 1.0, "AMinv": 1.0 / (2.0 * eps), "Minv": 1.0 / (eps * eps)}
    slack = 1.0 + ulps * ULP
    ok = {key: norms[key] <= bounds[key] * slack for key in norms}
    return {"norms": norms, "bounds": bounds, "ok": ok, "passed": all(ok.values())}


def quasi_projection(A: np.ndarray, eps: float) -> np.ndarray:
    """Dense ``P_eps = A (A*A + eps^2 I)^{-1} A*``."""
    k = A.shape[1]
    m = A.conj().T @ A + eps * eps * np.eye(k)
    return A @ la.solve(m, A.conj().T, assume_a="pos")
