"""Schroedinger dynamics ``i u' = H u`` with ``H = -a Laplacian + V``.

Three velocity choices are provided:

* ``plain``: the regularized least-squares velocity for ``f(u) = -i H u``.
  ``u' = P_eps f(u)`` with a self-adjoint ``P_eps``, so the energy is
  conserved by the continuous flow.
* ``modified1``: the kinetic part is lifted into the tangent space,
  ``qdot = i a q_lap + p``, and only the remainder is fitted by least squares.
  The free equation is then propagated exactly whenever the lift is exact.
* ``selfadjoint`` (alias ``modified2``): ``u' = -i (-a Laplacian + P V P) u``;
  mass is conserved.

For frozen Gaussians the Laplacian of a state leaves the tangent space, so
the lift is a least-squares one.  ``modified1`` then puts the lift residual
back into the fitted right-hand side, and ``selfadjoint`` uses the kinetic
part ``P (a Laplacian) P``, keeping the operator self-adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e

from .integrate import RK4, RKTableau, StepRecord, rk_step
from .model.base import LocalProblem, NoTangentLift, free_flow_step, tangent_lift_laplacian
from .model.gaussian import GaussianSumModel, wavepacket_to_params
from .model.spaces import GaussianSpace, GTerms
from .reglsq import RegLsqError, factor

VARIANTS = ("plain", "modified1", "selfadjoint", "modified2")


# ---------------------------------------------------------------------------
# potentials and the Hamiltonian
# ---------------------------------------------------------------------------

class PolynomialPotential:
    """``V(x) = sum_k coeffs[k] x^k``; multiplication is exact on Gaussian terms."""

    def __init__(self, coeffs):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        self.coeffs = c if c.size else np.zeros(1)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative(self, k: int = 1) -> "PolynomialPotential":
        return PolynomialPotential(np.polynomial.polynomial.polyder(self.coeffs, k))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def apply(self, u, space):
        if isinstance(u, GTerms):
            return u.mul_poly(self.coeffs)
        return self(space.nodes[:, 0])[:, None] * u


class GridPotential:
    """Pointwise potential given as a function of ``x``; quadrature states only."""

    def __init__(self, fn: Callable):
        self.fn = fn
        self.is_zero = False

    def __call__(self, x):
        return self.fn(x)

    def apply(self, u, space):
        if isinstance(u, GTerms):
            raise TypeError("a tabulated potential cannot act on analytic Gaussian states")
        return np.asarray(self.fn(space.nodes[:, 0]), dtype=float)[:, None] * u


def double_well_potential(alpha2: float = -0.125, alpha4: float = 0.015625) -> PolynomialPotential:
    return PolynomialPotential([0.0, 0.0, alpha2, 0.0, alpha4])


def harmonic_potential(omega: float = 1.0) -> PolynomialPotential:
    return PolynomialPotential([0.0, 0.0, 0.5 * omega * omega])


ZERO_POTENTIAL = PolynomialPotential([0.0])


def spectral_laplacian(u: np.ndarray, period: float) -> np.ndarray:
    n = u.shape[0]
    k = 2 * np.pi * np.fft.fftfreq(n, d=period / n)
    return np.fft.ifft(-(k**2)[:, None] * np.fft.fft(u, axis=0), axis=0)


@dataclass
class SchrodingerProblem:
    space: object
    potential: object = ZERO_POTENTIAL
    kinetic: float = 1.0

    def laplacian(self, u):
        if isinstance(u, GTerms):
            return u.d2()
        period = getattr(self.space, "period", None)
        if period is None:
            raise NoTangentLift("the Laplacian of sampled states needs a uniform periodic grid")
        return spectral_laplacian(np.asarray(u, dtype=complex), period)

    def V(self, u):
        return self.potential.apply(u, self.space)

    def H(self, u):
        return self.V(u) - self.kinetic * self.laplacian(u)

    def field(self, u):
        """``f(u) = -i H u``."""
        return -1j * self.H(u)

    def potential_field(self, u):
        """Potential-only flow ``u' = -i V u``."""
        return -1j * self.V(u)

    def mass(self, u) -> float:
        return self.space.norm_sq(u)

    def energy_complex(self, u) -> complex:
        return complex(self.space.inner(u, self.H(u)))

    def energy(self, u) -> float:
        return float(self.energy_complex(u).real)


def observables(model, q, problem: SchrodingerProblem, eps: float | None = None) -> dict:
    """Mass, energy and (optionally) the plain-variant defect at ``q``."""
    u = model.eval(q)
    e = problem.energy_complex(u)
    out = {"mass": problem.mass(u), "energy": e.real, "energy_imag": e.imag}
    if eps is not None:
        out["defect"] = qdot_plain(model, q, problem, eps).defect
    return out


# ---------------------------------------------------------------------------
# velocities
# ---------------------------------------------------------------------------

@dataclass
class Velocity:
    qdot: np.ndarray
    defect: float
    tangent: object  # Phi'(q) qdot
    p: np.ndarray | None = None
    lift_residual: float = 0.0
    extra: dict = field(default_factory=dict)


def qdot_plain(model, q, problem: SchrodingerProblem, eps: float) -> Velocity:
    u = model.eval(q)
    prob = LocalProblem(model, q, problem.field(u))
    r = prob.solve(eps)
    return Velocity(r.qdot, r.defect, prob.jac.apply(r.qdot))


def taylor_lift(model, q, potential: PolynomialPotential) -> np.ndarray:
    """Exact tangent vector for the first-order Taylor part of ``V`` around each centre.

    With frozen widths only the affine part of the local expansion multiplies
    a Gaussian back into the tangent space; the quadratic and higher parts
    stay in the least-squares remainder.
    """
    if not isinstance(model, GaussianSumModel) or not isinstance(potential, PolynomialPotential):
        raise NoTangentLift("a Taylor lift needs frozen Gaussians and a polynomial potential")
    x = model.centers(q)
    slope = potential.derivative()(x)
    offset = potential(x) - slope * x
    return model.affine_lift(q, slope, offset)


def qdot_modified1(model, q, problem: SchrodingerProblem, eps: float, taylor: bool = False,
                   lift_eps: float = 1e-10) -> Velocity:
    """``qdot = i a q_lap (- i q_U) + p`` with ``p`` from the least-squares fit of the remainder.

    ``defect^2 = ||Phi'(q) qdot - f(u)||^2 + eps^2 ||p||_Q^2``.
    """
    q = model.check_params(q)
    u = model.eval(q)
    lift = tangent_lift_laplacian(model, q, lift_eps)
    known = 1j * problem.kinetic * lift.q
    if taylor:
        known = known - 1j * taylor_lift(model, q, problem.potential)
    jac = model.jacobian(q)
    fu = problem.field(u)
    if problem.potential.is_zero and lift.exact and not taylor:
        p = np.zeros_like(known)
        tangent = jac.apply(known)
        res = jac.space.norm(tangent - fu)
        return Velocity(known, res, tangent, p, 0.0)
    b = fu - jac.apply(known)
    prob = LocalProblem(model, q, b, jac=jac)
    r = prob.solve(eps)
    qd = known + r.qdot
    return Velocity(qd, r.defect, jac.apply(qd), r.qdot, lift.residual)


def qdot_selfadjoint(model, q, problem: SchrodingerProblem, eps: float, lift_eps: float = 1e-10) -> Velocity:
    """Velocity of ``i u' = (-a Laplacian + P V P) u``; both projections share one factorization.

    The reported defect is ``||Phi'(q) qdot - f(u)||``.
    """
    q = model.check_params(q)
    u = model.eval(q)
    jac = model.jacobian(q)
    prob = LocalProblem(model, q, u, jac=jac)
    fac = factor(prob.system(eps))
    w = fac.solve(prob.gs.rhs)
    Pu = jac.apply(w)
    z = fac.solve(jac.adjoint_apply(problem.V(Pu)))
    lift = tangent_lift_laplacian(model, q, lift_eps)
    if lift.exact:
        kin = problem.kinetic * lift.q
    else:
        kin = fac.solve(jac.adjoint_apply(problem.laplacian(Pu) * problem.kinetic))
    qd = 1j * kin - 1j * z
    tangent = jac.apply(qd)
    defect = jac.space.norm(tangent - problem.field(u))
    return Velocity(qd, defect, tangent, None, lift.residual)


VELOCITIES = {"plain": qdot_plain, "modified1": qdot_modified1, "selfadjoint": qdot_selfadjoint,
              "modified2": qdot_selfadjoint}


def velocity_function(model, problem: SchrodingerProblem, variant: str, **opts):
    """``velocity(q, eps) -> (qdot, defect, tangent)`` for :func:`regdyn.integrate.rk_step`."""
    try:
        fn = VELOCITIES[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}") from None

    def velocity(q, eps):
        v = fn(model, q, problem, eps, **opts)
        return v.qdot, v.defect, v.tangent

    return velocity


def mass_derivative(model, q, vel: Velocity) -> float:
    """``d/dt ||u||^2 = 2 Re <u, u'>``."""
    return 2.0 * float(np.real(model.space.inner(model.eval(q), vel.tangent)))


def energy_derivative(model, q, problem: SchrodingerProblem, vel: Velocity) -> float:
    """``d/dt <u, H u> = 2 Re <H u, u'>``."""
    return 2.0 * float(np.real(model.space.inner(problem.H(model.eval(q)), vel.tangent)))


# ---------------------------------------------------------------------------
# Strang splitting
# ---------------------------------------------------------------------------

def strang_step(model, q, problem: SchrodingerProblem, eps: float, h: float, tableau: RKTableau = RK4, *,
                t: float = 0.0, max_substep: float = 0.01, lift_eps: float = 1e-10):
    """Half free flow, one regularized RK step of ``u' = -i V u``, half free flow."""
    if tableau.order < 2:
        raise ValueError("the potential substep needs a Runge-Kutta method of order at least 2")
    q = model.check_params(q)
    first = free_flow_step(model, q, 0.5 * h, problem.kinetic, lift_eps, max_substep)
    qm, rec = rk_step(model, first.q, problem.potential_field, eps, h, tableau, t=t)
    second = free_flow_step(model, qm, 0.5 * h, problem.kinetic, lift_eps, max_substep)
    rec.realization_residual = first.residual + second.residual
    # the a posteriori term compares against the potential substep only
    return second.q, rec


def strang_stepper(model, problem: SchrodingerProblem, tableau: RKTableau = RK4, **opts):
    """``step(q, eps, h, t)`` for :func:`regdyn.integrate.integrate`."""

    def step(q, eps, h, t):
        return strang_step(model, q, problem, eps, h, tableau, t=t, **opts)

    return step


# ---------------------------------------------------------------------------
# reference propagator
# ---------------------------------------------------------------------------

class FourierPropagator:
    """Split-step Fourier propagation on a uniform periodic grid.

    Strang splitting with half potential steps around an exact kinetic step,
    at time step ``dt``; an independent fine-grid oracle for the parametric
    runs.
    """

    def __init__(self, potential, kinetic: float = 0.5, lo: float = -12.0, hi: float = 12.0, n: int = 2048,
                 dt: float = 1e-4):
        self.x = lo + (hi - lo) * np.arange(n) / n
        self.dx = (hi - lo) / n
        self.dt = float(dt)
        self.kinetic = float(kinetic)
        self.potential = potential
        self.k = 2 * np.pi * np.fft.fftfreq(n, d=self.dx)
        self._vals = np.asarray(potential(self.x), dtype=float)

    def sample(self, u) -> np.ndarray:
        if isinstance(u, GTerms):
            return u.evaluate(self.x)
        return np.asarray(u, dtype=complex)

    def norm(self, psi) -> float:
        return float(np.sqrt(np.sum(np.abs(psi) ** 2) * self.dx))

    def propagate(self, psi, T: float) -> np.ndarray:
        psi = self.sample(psi).astype(complex)
        if T == 0:
            return psi
        n = max(1, int(np.ceil(abs(T) / self.dt - 1e-9)))
        dt = T / n
        half_v = np.exp(-0.5j * dt * self._vals)
        kin = np.exp(-1j * dt * self.kinetic * self.k**2)
        for _ in range(n):
            psi = half_v * psi
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi = half_v * psi
        return psi

    def trajectory(self, psi, times) -> list:
        """States at increasing ``times`` (starting from ``t = 0``)."""
        out = []
        t_prev = 0.0
        psi = self.sample(psi).astype(complex)
        for t in times:
            psi = self.propagate(psi, t - t_prev)
            t_prev = t
            out.append(psi.copy())
        return out

    def distance(self, u, psi) -> float:
        return self.norm(self.sample(u) - psi)


# ---------------------------------------------------------------------------
# double well
# ---------------------------------------------------------------------------

DEFAULT_GRIDS = {1: (1, 1), 8: (4, 2), 12: (4, 3), 36: (6, 6)}
# nodes spread like the phase-space (Husimi) density of the initial Gaussian,
# whose variance is 1/2 in x and in xi; used by the reduced desk-scale runs
DESK_NODE_SCALE = 2.0**-0.5


@dataclass
class DoubleWellConfig:
    M: int = 12
    grid: tuple | None = None
    alpha2: float = -0.125
    alpha4: float = 0.015625
    q_ell: float = -2.0
    T: float = 3.0
    kinetic: float = 0.5
    node_scale: float = 1.0
    eps_init: float = 1e-10
    normalize: bool = True

    @classmethod
    def paper(cls, **overrides) -> "DoubleWellConfig":
        base = dict(M=36, grid=(6, 6), T=12.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "DoubleWellConfig":
        base = dict(M=12, T=3.0, node_scale=DESK_NODE_SCALE)
        base.update(overrides)
        return cls(**base)

    def resolved_grid(self) -> tuple:
        if self.grid is not None:
            g = tuple(int(v) for v in self.grid)
        elif self.M in DEFAULT_GRIDS:
            g = DEFAULT_GRIDS[self.M]
        else:
            raise ValueError(f"no default node grid for M={self.M}; set grid explicitly")
        if g[0] * g[1] != self.M:
            raise ValueError(f"grid {g[0]}x{g[1]} does not have M={self.M} nodes")
        return g


@dataclass
class DoubleWellSetup:
    model: GaussianSumModel
    problem: SchrodingerProblem
    q0: np.ndarray
    psi0: GTerms
    fit_error: float
    fit_regularized: bool
    config: DoubleWellConfig


def phase_space_nodes(nx: int, nxi: int, center=(0.0, 0.0), scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Tensor grid of Gauss-Hermite nodes (weight ``exp(-s^2/2)``) around ``center``."""
    gx = hermite_e.hermegauss(nx)[0] * scale + center[0]
    gxi = hermite_e.hermegauss(nxi)[0] * scale + center[1]
    X, XI = np.meshgrid(gx, gxi, indexing="ij")
    return X.ravel(), XI.ravel()


def build_double_well(cfg: DoubleWellConfig | None = None) -> DoubleWellSetup:
    """Frozen Gaussian ansatz fitted to a normalized Gaussian in the left well."""
    cfg = DoubleWellConfig() if cfg is None else cfg
    nx, nxi = cfg.resolved_grid()
    space = GaussianSpace(0.5)
    model = GaussianSumModel(cfg.M, 0.5, space)
    problem = SchrodingerProblem(space, double_well_potential(cfg.alpha2, cfg.alpha4), cfg.kinetic)
    c_psi, k_psi = wavepacket_to_params(np.array([cfg.q_ell]), np.array([0.0]))
    psi0 = GTerms((np.pi**-0.25 * c_psi)[:, None], k_psi)
    x, xi = phase_space_nodes(nx, nxi, (cfg.q_ell, 0.0), cfg.node_scale)
    _, kappa = wavepacket_to_params(x, xi)
    basis = GTerms(np.ones((cfg.M, 1)), kappa)
    gram = space.gram(basis)
    rhs = space.adjoint(basis, psi0)
    regularized = False
    try:
        if np.linalg.cond(gram) > 1e12:
            raise RegLsqError("ill-conditioned")
        c = np.linalg.solve(gram, rhs)
    except (RegLsqError, np.linalg.LinAlgError):
        regularized = True
        c = np.linalg.solve(gram + cfg.eps_init**2 * np.eye(cfg.M), rhs)
    q0 = model.pack(c, kappa)
    fit_error = space.norm(model.eval(q0) - psi0)
    if cfg.normalize:
        q0 = model.pack(c / np.sqrt(space.norm_sq(model.eval(q0))), kappa)
    return DoubleWellSetup(model, problem, q0, psi0, fit_error, regularized, cfg)
