import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regdyn import integrate as I
from regdyn.model import CallableModel, LinearModel, MLPModel, QuadratureSpace, half_square_model, identity_model


def one(u):
    return np.ones_like(u)


def zero(u):
    return np.zeros_like(u)


def orthonormal_linear(n=6, k=3, seed=0):
    rng = np.random.default_rng(seed)
    B, _ = np.linalg.qr(rng.standard_normal((n, k)))
    L = rng.standard_normal((n, n))
    model = LinearModel(QuadratureSpace.euclidean(n), B[:, None, :])
    return model, B, L


# --- qdot --------------------------------------------------------------------

def test_qdot_half_square_closed_form():
    m = half_square_model()
    r = I.qdot(m, np.array([1.0]), one, 1.0)
    assert r.qdot[0] == pytest.approx(0.5, rel=1e-15)
    # residual component d = -eps^2/(q^2+eps^2) and the regularization term eps*qdot
    assert r.residual_norm == pytest.approx(0.5, rel=1e-14)
    assert r.defect == pytest.approx(math.sqrt(0.5), rel=1e-14)


def test_qdot_half_square_small_eps():
    m = half_square_model()
    r = I.qdot(m, np.array([1.0]), one, 1e-3)
    assert r.qdot[0] == pytest.approx(1 / (1 + 1e-6), rel=1e-14)
    assert r.residual_norm == pytest.approx(1e-6 / (1 + 1e-6), rel=1e-8)


def test_qdot_zero_field():
    m = half_square_model()
    r = I.qdot(m, np.array([0.3]), zero, 0.1)
    assert r.qdot[0] == 0.0 and r.defect == 0.0


def test_qdot_requires_positive_eps():
    with pytest.raises(ValueError):
        I.qdot(half_square_model(), np.array([1.0]), one, 0.0)


# --- explicit Euler ------------------------------------------------------------

def test_euler_half_square():
    q1, rec = I.euler_step(half_square_model(), np.array([1.0]), one, 1.0, 0.1)
    assert q1[0] == pytest.approx(1.05, rel=1e-15)
    # Phi(q1) - Phi(q0) - h Phi'(q0) qdot = (h qdot)^2 / 2
    assert rec.aposteriori_local == pytest.approx(0.5 * 0.05**2, rel=1e-10)
    assert rec.defect_max == pytest.approx(math.sqrt(0.5))


def test_euler_zero_step():
    q0 = np.array([0.7])
    q1, rec = I.euler_step(half_square_model(), q0, one, 1.0, 0.0)
    assert np.array_equal(q1, q0)
    assert rec.aposteriori_local == 0.0


def test_euler_linear_matches_projected_ode():
    model, B, L = orthonormal_linear()
    q0 = np.array([0.3, -1.0, 0.5])
    f = lambda u: L @ u.ravel()
    q1, _ = I.euler_step(model, q0, f, 1e-8, 0.05)
    ref = q0 + 0.05 * (B.T @ L @ B @ q0)
    np.testing.assert_allclose(q1, ref, rtol=1e-6)


def test_restriction_flag():
    m = half_square_model()
    q0 = np.array([1.0])
    _, rec = I.euler_step(m, q0, one, 1.0, 0.1)
    assert rec.restriction_satisfied  # 0.1*0.707 <= 1
    _, rec = I.euler_step(m, q0, one, 0.1, 0.1)
    delta = rec.defect_max
    assert rec.restriction_satisfied == (0.1 * delta <= 0.01)
    _, rec = I.euler_step(m, q0, one, 0.1, 0.1, c_restrict=100.0)
    assert rec.restriction_satisfied


# --- implicit Euler ------------------------------------------------------------

def test_implicit_zero_field_one_iteration():
    q0 = np.array([0.4])
    q1, rec = I.implicit_euler_step(half_square_model(), q0, zero, 0.1, 0.1)
    assert np.array_equal(q1, q0)
    assert rec.fp_iterations == 1


def test_implicit_linear_scalar():
    q1, rec = I.implicit_euler_step(identity_model(1), np.array([1.0]), lambda u: -u, 1e-6, 0.1)
    assert q1[0] == pytest.approx(1 / 1.1, abs=1e-11)


def test_implicit_stiff_fixed_point_diverges():
    with pytest.raises(I.ImplicitEulerError, match="reduce h"):
        I.implicit_euler_step(identity_model(1), np.array([1.0]), lambda u: -1e3 * u, 1e-6, 0.1)


def test_implicit_stiff_newton_is_stable():
    q1, _ = I.implicit_euler_step(identity_model(1), np.array([1.0]), lambda u: -1e3 * u, 1e-6, 0.1, method="newton")
    assert abs(q1[0]) < 1.0
    assert q1[0] == pytest.approx(1 / 101, rel=1e-8)


def test_implicit_maxit():
    with pytest.raises(I.ImplicitEulerError, match="did not reach"):
        I.implicit_euler_step(identity_model(1), np.array([1.0]), lambda u: -u, 1e-6, 0.5, fp_maxit=3)


# --- Runge-Kutta ---------------------------------------------------------------

def test_tableau_invariants():
    for tab in I.TABLEAUS.values():
        assert tab.b.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(tab.a.sum(axis=1), tab.c)
    with pytest.raises(ValueError):
        I.RKTableau([[0, 1], [0, 0]], [0.5, 0.5], [1, 0], 2)
    with pytest.raises(ValueError):
        I.RKTableau([[0]], [0.9], [0], 1)


def test_embedded_pair_orders():
    # order conditions up to 3 for both weight vectors, and order 4 for b
    tab = I.RK43
    a, c = tab.a, tab.c
    for w in (tab.b, tab.b_hat):
        assert w @ c == pytest.approx(1 / 2)
        assert w @ c**2 == pytest.approx(1 / 3)
        assert w @ (a @ c) == pytest.approx(1 / 6)
    b = tab.b
    assert b @ c**3 == pytest.approx(1 / 4)
    assert b @ (c * (a @ c)) == pytest.approx(1 / 8)
    assert b @ (a @ c**2) == pytest.approx(1 / 12)
    assert b @ (a @ (a @ c)) == pytest.approx(1 / 24)
    assert tab.b_hat @ (a @ (a @ c)) != pytest.approx(1 / 24)


def test_rk_euler_tableau_is_euler_bitwise():
    model, B, L = orthonormal_linear()
    q0 = np.array([0.3, -1.0, 0.5])
    f = lambda u: L @ u.ravel()
    qa, ra = I.rk_step(model, q0, f, 1e-3, 0.1, I.EULER)
    res = I.qdot(model, q0, f, 1e-3)
    assert np.array_equal(qa, q0 + 0.1 * res.qdot)
    qb, rb = I.euler_step(model, q0, f, 1e-3, 0.1)
    assert np.array_equal(qa, qb) and ra.stage_defects == rb.stage_defects


def test_rk4_exponential_taylor():
    q1, rec = I.rk_step(identity_model(1), np.array([1.0]), lambda u: u, 1e-8, 0.1)
    assert q1[0] == pytest.approx(sum(0.1**j / math.factorial(j) for j in range(5)), abs=1e-6)
    assert len(rec.stage_defects) == 4


def logistic(u):
    return u * (1 - u)


def logistic_exact(t, u0=0.2):
    return u0 * np.exp(t) / (1 - u0 + u0 * np.exp(t))


def test_rk4_order_slope():
    hs = 2.0 ** -np.arange(3, 8)
    errs = []
    for h in hs:
        n = int(round(1 / h))
        traj = I.integrate(identity_model(1), np.array([0.2]), logistic, I.FixedSchedule(1e-8, h, n))
        errs.append(abs(traj.q[-1][0] - logistic_exact(1.0)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.1


def test_linear_model_matches_galerkin_rk4():
    model, B, L = orthonormal_linear(8, 4, seed=2)
    P = B.T @ L @ B
    f = lambda u: L @ u.ravel()
    q = np.array([1.0, 0.2, -0.3, 0.5])
    h = 0.05
    for _ in range(5):
        q1, _ = I.rk_step(model, q, f, 1e-9, h)
        k1 = P @ q
        k2 = P @ (q + h / 2 * k1)
        k3 = P @ (q + h / 2 * k2)
        k4 = P @ (q + h * k3)
        ref = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        np.testing.assert_allclose(q1, ref, rtol=1e-6)
        q = q1


def lv_model():
    return MLPModel(QuadratureSpace.tensor_gauss_legendre(0.5, 2.5, 10, 4))


def lotka_volterra(model):
    def f(u):
        return np.stack([u[:, 0] * (1.0 - u[:, 1]), u[:, 1] * (u[:, 0] - 1.0)], axis=1)

    return f


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), log_eps=st.floats(-6, 0), scale=st.floats(0.1, 3.0))
def test_defect_below_field_norm(seed, log_eps, scale):
    # qdot = 0 is admissible, so delta <= ||f(u)|| at every stage state
    model = lv_model()
    q = model.init_params(seed, scale)
    prob = I.local_problem(model, q, lotka_volterra(model))
    assert 0 <= prob.solve(10.0**log_eps).defect <= prob.b_norm * (1 + 1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_defect_monotone_in_eps(seed):
    model = lv_model()
    q = model.init_params(seed)
    prob = I.local_problem(model, q, lotka_volterra(model))
    eps = np.logspace(-6, 1, 15)
    d = [prob.solve(e).defect for e in eps]
    assert np.all(np.diff(d) >= -1e-12 * max(d))
    assert d[-1] <= prob.b_norm


# --- integrate -----------------------------------------------------------------

def test_integrate_zero_steps():
    traj = I.integrate(identity_model(1), np.array([1.0]), logistic, I.FixedSchedule(1e-3, 0.1, 0))
    assert traj.t == [0.0] and len(traj.q) == 1 and traj.records == []
    assert traj.defect_integral == 0.0


def test_integrate_returns_partial_trajectory_on_failure():
    calls = {"n": 0}

    def bad(u):
        calls["n"] += 1
        if calls["n"] > 9:
            raise FloatingPointError("field blew up")
        return -u

    traj = I.integrate(identity_model(1), np.array([1.0]), bad, I.FixedSchedule(1e-3, 0.1, 10))
    assert traj.failed and "field blew up" in traj.error
    assert len(traj.q) == 3  # two RK4 steps of four stages each succeeded


def test_defect_integral_trapezoid():
    rec = I.StepRecord(t=1.0, h=0.5, eps=0.1, stage_defects=[1.0, 3.0, 2.0, 4.0], stage_times=[1.0, 1.25, 1.25, 1.5])
    # nodes (1, 1), (1.25, 3), (1.5, 4)
    assert rec.defect_integral() == pytest.approx(0.25 * 2 + 0.25 * 3.5)
    single = I.StepRecord(t=0.0, h=0.2, eps=0.1, stage_defects=[2.0], stage_times=[0.0])
    assert single.defect_integral() == pytest.approx(0.4)


def test_csv_roundtrip(tmp_path):
    model, B, L = orthonormal_linear()
    f = lambda u: L @ u.ravel() * 0.1
    traj = I.integrate(model, np.array([0.3, -1.0, 0.5]), f, I.FixedSchedule(1e-2, 0.1, 5))
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    cols = I.read_csv(path)
    assert list(cols) == ["t", "h", "eps", "defect_max", "aposteriori_local", "cumulative_defect_integral"]
    np.testing.assert_array_equal(cols["t"], traj.t[1:])
    np.testing.assert_array_equal(cols["cumulative_defect_integral"], traj.cumulative_defect_integral)
    assert np.all(np.diff(cols["cumulative_defect_integral"]) >= 0)


def circle_model():
    return CallableModel(
        QuadratureSpace.euclidean(2), 1,
        lambda q: np.array([np.cos(q[0]), np.sin(q[0])]),
        lambda q: np.array([-np.sin(q[0]), np.cos(q[0])]),
    )


def spiral(u):
    # rotation plus a slight outward drift the circle cannot follow
    u = u.ravel()
    return np.array([-u[1], u[0]]) + 0.01 * u


def test_adaptive_integration_within_defect_bound():
    from regdyn.adapt import AdaptConfig

    T = 2.0
    cfg = AdaptConfig(h_bounds=(1e-6, 0.1))
    traj = I.integrate(circle_model(), np.array([0.0]), spiral, I.AdaptiveSchedule(T, 0.05, config=cfg), I.RK43)
    assert not traj.failed
    assert traj.t[-1] == pytest.approx(T)
    exact = np.exp(0.01 * T) * np.array([np.cos(T), np.sin(T)])
    err = np.linalg.norm(traj.state().ravel() - exact)
    # one-sided Lipschitz constant of the field is 0.01
    assert err <= np.exp(0.01 * T) * traj.defect_integral
    for rec in traj.records:
        assert rec.delta_tol == pytest.approx(17 * 0.01, rel=0.05)
        assert rec.embedded_error is not None
