"""Property suites for the regularized least-squares core, run by ``regdyn selftest``."""
from __future__ import annotations

import numpy as np

from .. import _pykernels, kernels
from ..reglsq import GramSystem, MetricQ, operator_norm_checks, solve_normal, solve_svd, theta_and_derivative


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_solver_agreement(seed: int = 0, n: int = 50) -> tuple[bool, str]:
    """Normal equations against the SVD closed form on random complex instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        m = int(rng.integers(2, 21))
        k = int(rng.integers(1, min(m, 10) + 1))
        A, b = _crandn(rng, m, k), _crandn(rng, m)
        for eps in (1e-1, 1e-3, 1e-6):
            gs = GramSystem(A.conj().T @ A, A.conj().T @ b, eps, MetricQ.identity(k), float(np.vdot(b, b).real))
            x1 = solve_normal(gs).qdot
            x2 = solve_svd(A, b, eps).qdot
            worst = max(worst, float(np.linalg.norm(x1 - x2) / max(np.linalg.norm(x2), 1e-300)))
    return worst <= 1e-8, f"max relative difference {worst:.2e}"


def check_theta_derivative(seed: int = 1, n: int = 50) -> tuple[bool, str]:
    """``theta'(alpha) = ||x(alpha)||^2`` against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        A, b = _crandn(rng, 8, 5), _crandn(rng, 8)
        alpha = 10 ** rng.uniform(-2, 0)
        theta, dtheta = theta_and_derivative(A, b, alpha)
        h = 1e-6 * alpha
        fd = (theta_and_derivative(A, b, alpha + h)[0] - theta_and_derivative(A, b, alpha - h)[0]) / (2 * h)
        worst = max(worst, abs(fd - dtheta) / theta)
    return worst <= 1e-6, f"max relative mismatch {worst:.2e}"


def check_theta_shape(seed: int = 2) -> tuple[bool, str]:
    """``theta`` nondecreasing and ``theta / alpha`` nonincreasing on a grid."""
    rng = np.random.default_rng(seed)
    A, b = rng.standard_normal((10, 6)), rng.standard_normal(10)
    alphas = np.geomspace(1e-8, 1e2, 60)
    th = np.array([theta_and_derivative(A, b, a)[0] for a in alphas])
    mono = bool(np.all(np.diff(th) >= -1e-14 * th[1:]))
    ratio = th / alphas
    ratio_ok = bool(np.all(np.diff(ratio) <= 1e-12 * ratio[:-1]))
    return mono and ratio_ok, f"theta nondecreasing: {mono}, theta/alpha nonincreasing: {ratio_ok}"


def check_norm_bounds(seed: int = 3, n: int = 50) -> tuple[bool, str]:
    """Operator-norm bounds on random matrices and the attained case ``sigma = eps``."""
    rng = np.random.default_rng(seed)
    ok = all(operator_norm_checks(rng.standard_normal((10, 6)), eps)["passed"]
             for _ in range(n) for eps in (1.0, 1e-2, 1e-4))
    eps = 1e-2
    rep = operator_norm_checks(np.diag([eps, 3.0, 0.1]), eps)
    attained = rep["passed"] and abs(rep["norms"]["AMinv"] * 2 * eps - 1.0) <= 1e-13
    return ok and attained, f"random bounds hold: {ok}, 1/(2 eps) attained: {attained}"


def check_kernels(seed: int = 4) -> tuple[bool, str]:
    """Active kernel backend against the NumPy reference implementation."""
    from ..model import MLPModel, QuadratureSpace

    space = QuadratureSpace.tensor_gauss_legendre(0.5, 2.5, 3, 2, dim=2, ncomp=2)
    model = MLPModel(space, (2, 4, 4, 2))
    q = model.init_params(seed)
    out1, jac1 = kernels.mlp_forward_jacobian(q, model.sizes, space.nodes)
    out2, jac2 = _pykernels.mlp_forward_jacobian(q, model.sizes, space.nodes)
    diff = max(float(np.max(np.abs(np.asarray(out1) - out2))), float(np.max(np.abs(np.asarray(jac1) - jac2))))
    return diff <= 1e-12, f"backend {kernels.backend()}, max difference {diff:.1e}"


CHECKS = [
    ("normal equations vs SVD", check_solver_agreement),
    ("theta derivative", check_theta_derivative),
    ("theta monotone, theta/alpha nonincreasing", check_theta_shape),
    ("operator norm bounds", check_norm_bounds),
    ("kernel backend", check_kernels),
]


def run_selftest(out=print) -> bool:
    """Print one pass/fail line per check; True when all pass."""
    all_ok = True
    width = max(len(name) for name, _ in CHECKS)
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return all_ok
