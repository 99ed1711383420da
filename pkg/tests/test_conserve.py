import numpy as np
import pytest

from regdyn import conserve as C
from regdyn import integrate as I
from regdyn.model import CallableModel, GaussianSumModel, LinearModel, QuadratureSpace, identity_model
from regdyn.schrodinger import SchrodingerProblem, double_well_potential


def random_gaussian_state(rng, M):
    c = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    kappa = rng.uniform(-1.5, 1.5, M) + 1j * rng.uniform(-1.5, 1.5, M)
    return np.concatenate([c, kappa])


def dw_setup(M=4, seed=0):
    rng = np.random.default_rng(seed)
    model = GaussianSumModel(M)
    prob = SchrodingerProblem(model.space, double_well_potential(), 0.5)
    q = random_gaussian_state(rng, M)
    q[:M] /= np.sqrt(model.space.norm_sq(model.eval(q)))
    return model, prob, q


def bent_model():
    # a curved two-parameter surface in R^3
    def ev(q):
        return np.array([q[0] + 0.2 * q[1] ** 2, q[1], 0.3 * q[0] * q[1]])

    def jac(q):
        return np.array([[1.0, 0.4 * q[1]], [0.0, 1.0], [0.3 * q[1], 0.3 * q[0]]])

    return CallableModel(QuadratureSpace.euclidean(3), 2, ev, jac)


SKEW = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def rotation(u):
    return (SKEW @ u.ravel()).reshape(u.shape)


def test_constant_trajectory_has_zero_drift():
    model = identity_model(3)
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    traj = I.integrate(model, np.array([1.0, 2.0, 3.0]), lambda u: 0 * u, I.FixedSchedule(1e-3, 0.1, 10))
    rep = C.drift_report(traj, cs)
    assert np.all(rep.drift == 0.0) and np.all(rep.bound == 0.0) and rep.holds


def test_norm_constraint_holds_after_step():
    model, prob, q = dw_setup()
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    for h in (0.05, 0.01):
        q1, rec, ms = C.constrained_euler_step(model, q, prob.field, 1e-3, h, cs)
        assert abs(model.space.norm_sq(model.eval(q1)) - 1.0) <= 1e-11
        assert ms.newton_iters_used >= 1


def test_linear_constraint_converges_in_one_iteration():
    rng = np.random.default_rng(1)
    basis = rng.standard_normal((5, 3))
    model = LinearModel(QuadratureSpace.euclidean(5), basis[:, None, :])
    w = rng.standard_normal(5)
    cs = C.ConstraintSet(model.space, [C.linear_functional(model.space, w[:, None])])
    f = lambda u: rng.standard_normal(u.shape)  # noqa: E731
    q = rng.standard_normal(3)
    g0 = cs.g(model.eval(q))
    q1, _, ms = C.constrained_euler_step(model, q, f, 1e-2, 0.1, cs)
    assert ms.newton_iters_used == 1
    assert cs.g(model.eval(q1)) == pytest.approx(g0, abs=1e-12)


def test_zero_gradient_is_singular():
    model = identity_model(2)
    zero = C.Constraint("zero", lambda u: 0.0, lambda u: 0 * u)
    cs = C.ConstraintSet(model.space, [zero])
    rep = C.gpg_matrix(model, np.ones(2), cs, 1e-3)
    assert rep.singular and rep.rho == 0.0 and rep.inverse_bound == np.inf
    with pytest.raises(C.ConstraintError, match="singular"):
        C.constrained_euler_step(model, np.ones(2), lambda u: u, 1e-3, 0.1, cs)


def test_gpg_identity_jacobian_is_GGt():
    rng = np.random.default_rng(2)
    model = identity_model(4)
    ws = [rng.standard_normal((4, 1)) for _ in range(2)]
    cs = C.ConstraintSet(model.space, [C.linear_functional(model.space, w, f"w{i}") for i, w in enumerate(ws)])
    eps = 1e-3
    W = np.hstack(ws)
    rep = C.gpg_matrix(model, np.zeros(4), cs, eps)
    np.testing.assert_allclose(rep.matrix, W.T @ W / (1 + eps**2), rtol=1e-12)
    assert np.linalg.norm(np.linalg.inv(rep.matrix), 2) <= rep.inverse_bound * (1 + 1e-12)


@pytest.mark.parametrize("ratio", [1.0, 2.0, 100.0])
def test_gpg_aligned_with_large_singular_value(ratio):
    eps = 1e-2
    sigma = ratio * eps
    mat = np.diag([sigma, 1e-6, 1e-6])
    model = LinearModel(QuadratureSpace.euclidean(3), mat[:, None, :])
    w = np.array([[3.0], [0.0], [0.0]])
    cs = C.ConstraintSet(model.space, [C.linear_functional(model.space, w)])
    rep = C.gpg_matrix(model, np.zeros(3), cs, eps)
    assert rep.matrix[0, 0] == pytest.approx(9.0 * sigma**2 / (sigma**2 + eps**2), rel=1e-12)
    assert rep.matrix[0, 0] >= 0.5 * 9.0 * (1 - 1e-12)


def test_multiplier_scales_with_h():
    model, prob, q = dw_setup(seed=3)
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    hs = np.array([0.04, 0.02, 0.01, 0.005])
    lams = [abs(C.constrained_euler_step(model, q, prob.field, 1e-2, h, cs)[2].lam[0]) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(lams), 1)[0]
    assert slope >= 0.9


def test_constrained_defect_not_below_unconstrained():
    rng = np.random.default_rng(4)
    for seed in range(5):
        model, prob, q = dw_setup(seed=seed)
        cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
        eps = 10.0 ** rng.uniform(-4, -1)
        _, rec, ms = C.constrained_euler_step(model, q, prob.field, eps, 0.01, cs)
        assert rec.stage_defects[0] >= ms.unconstrained_defect * (1 - 1e-12)


def test_newton_iteration_limit_raises():
    model, prob, q = dw_setup()
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    with pytest.raises(C.ConstraintError, match="reduce h"):
        C.constrained_euler_step(model, q, prob.field, 1e-3, 0.05, cs, newton_maxit=0)


def test_integrate_constrained_keeps_norm_and_records_multipliers():
    model, prob, q = dw_setup(seed=5)
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    traj = C.integrate_constrained(model, q, prob.field, 1e-2, 0.01, 40, cs)
    assert not traj.failed
    assert len(traj.extras["multipliers"]) == 40
    drift = C.drift_report(traj, cs).drift
    assert np.abs(drift).max() <= 1e-10


def test_drift_bounded_by_defect_integral():
    model = bent_model()
    cs = C.ConstraintSet(model.space, [C.l2_norm(model.space)])
    u0 = model.eval(np.array([0.7, -0.4]))
    assert cs.consistency(u0, rotation(u0))[0] == pytest.approx(0.0, abs=1e-14)
    traj = I.integrate(model, np.array([0.7, -0.4]), rotation, I.FixedSchedule(1e-3, 1e-3, 500), I.RK4)
    rep = C.drift_report(traj, cs)
    assert np.abs(rep.drift).max() > 1e-6  # the surface cannot follow the rotation
    assert rep.holds
