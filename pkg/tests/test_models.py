import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from regtrig.models import (ControllerFamily, ModelError, PlantModel, TriggerParams,
                            build_model, closed_loop_field, estimate_exp_bound,
                            example_4_2, example_4_3, linear, lyapunov_pair_for_builtin)


def kron_lyap(A):
    # A' P + P A = -I via vec(P), independent of scipy's Bartels-Stewart solver
    n = len(A)
    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    return np.linalg.solve(K, -I.reshape(-1)).reshape(n, n)


def test_closed_loop_example_4_2_matched():
    m = example_4_2(1.0, 1.0, 3.0)
    F = closed_loop_field(m.plant, m.controller, [2.0], [2.0])
    x = np.array([0.3, -1.7])
    assert np.allclose(F(x), [x[1], -1.0 * x[0] - 3.0 * x[1]], atol=1e-15)


def test_closed_loop_example_4_2_mismatched():
    c, k1, k2, th, thh = 0.5, 2.0, 1.5, 1.7, -0.3
    m = example_4_2(c, k1, k2)
    F = closed_loop_field(m.plant, m.controller, [th], [thh])
    x = np.array([0.9, 0.4])
    want = [x[1], -k1 * x[0] - k2 * x[1] + (th - thh) * (x[0] + c * x[1])]
    assert np.allclose(F(x), want, atol=1e-14)


@pytest.mark.parametrize("name,gains,th,thh", [
    ("example_4_2", dict(c=1, k1=1, k2=3), [2.0], [-1.0]),
    ("example_4_3", dict(k1=1, k2=2, k3=3), [0.5, -1.0], [1.0, 2.0]),
])
def test_closed_loop_vanishes_at_origin(name, gains, th, thh):
    m = build_model(name, **gains)
    F = closed_loop_field(m.plant, m.controller, th, thh)
    assert np.all(F(np.zeros(m.plant.n)) == 0)


def test_closed_loop_dimension_mismatch():
    m = example_4_2(1, 1, 3)
    with pytest.raises(ModelError):
        closed_loop_field(m.plant, m.controller, [1.0, 2.0], [0.0])


def test_example_4_2_lyapunov_matches_kron_oracle():
    k1, k2 = 1.0, 3.0
    V, Q = lyapunov_pair_for_builtin("example_4_2", dict(c=1, k1=k1, k2=k2), [2.0])
    P = kron_lyap(np.array([[0, 1], [-k1, -k2]]))
    x = np.array([0.7, -0.2])
    assert abs(V(x) - x @ P @ x) <= 1e-13
    assert V(x) == Q(x)
    assert V(np.zeros(2)) == 0 and Q(np.zeros(2)) == 0


def test_example_4_3_lyapunov_in_linearizing_coordinates():
    k = (1.0, 2.0, 3.0)
    th = np.array([0.4, -0.6])
    V, Q = lyapunov_pair_for_builtin("example_4_3", dict(k1=k[0], k2=k[1], k3=k[2]), th)
    P = kron_lyap(np.array([[0, 1, 0], [0, 0, 1], [-k[0], -k[1], -k[2]]]))
    x = np.array([0.3, -0.5, 0.8])
    xi = np.array([x[0], x[1], x[0] ** 2 + th[0] * x[1] + x[2]])
    assert abs(V(x) - xi @ P @ xi) <= 1e-13
    assert V(x) == Q(x)


def lin_2state():
    return linear(A=[[0, 1], [0, 0]], B=[[0], [1]], C_list=[[[0, 0], [1, 1]]],
                  gain_table=dict(K0=[[-1, -3]], K=[[[-1, -1]]]))


def test_linear_pair():
    m = lin_2state()
    th = np.array([0.7])
    V, Q = m.controller.V, m.controller.Q
    assert V(th, np.array([3.0, 4.0])) == 25.0
    M = m.linear.M(th)
    assert M >= 1
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.normal(size=2)
        assert np.isclose(Q(th, x) / V(th, x), M ** 2, rtol=1e-14)


def test_linear_closed_loop_abscissa():
    m = lin_2state()
    for th in (-0.5, 0.0, 2.0):
        A_cl = m.linear.closed_loop_matrix([th])
        alpha = np.max(np.linalg.eigvals(A_cl).real)
        assert alpha <= -m.linear.rate([th])


def test_lyapunov_pairs_dominate():
    rng = np.random.default_rng(5)
    cases = [("example_4_2", dict(c=1, k1=1, k2=3), 1),
             ("example_4_3", dict(k1=1, k2=2, k3=3), 2)]
    for name, gains, l in cases:
        ctrl = build_model(name, **gains).controller
        for _ in range(20):
            th = rng.normal(size=l)
            x = rng.normal(size=3 if l == 2 else 2)
            assert 0 < ctrl.V(th, x) <= ctrl.Q(th, x)
    m = lin_2state()
    for _ in range(5):
        th, x = rng.normal(size=1), rng.normal(size=2)
        assert m.controller.V(th, x) <= m.controller.Q(th, x)


def test_matched_example_4_2_V_nonincreasing():
    m = example_4_2(1, 1, 3)
    F = closed_loop_field(m.plant, m.controller, [2.0], [2.0])
    sol = solve_ivp(lambda t, x: F(x), (0, 10), [1.0, 1.0], method="DOP853",
                    rtol=1e-11, atol=1e-13, dense_output=True)
    t = np.linspace(0, 10, 2001)
    V = np.array([m.controller.V([2.0], x) for x in sol.sol(t).T])
    assert np.max(np.diff(V)) <= 1e-10


def test_structure_tags_of_example_4_3():
    p = example_4_3(1, 2, 3).plant
    assert p.rows == (1, 2)
    G = p.g(np.array([0.4, -1.1, 2.0]), np.zeros(1))
    assert G[1, 0] == -1.1 and G[2, 1] == pytest.approx(0.16)
    assert G[0].tolist() == [0, 0] and G[2, 0] == 0 and G[1, 1] == 0


def test_plant_rejects_bad_structure():
    f = lambda x, u: np.array([x[1], u[0]])
    with pytest.raises(ModelError):
        PlantModel(2, 1, 2, f, lambda x, u: np.array([[0, 0], [x[0], x[1]]]), rows=(1, 1))
    with pytest.raises(ModelError):
        PlantModel(2, 1, 1, f, lambda x, u: np.array([[x[0]], [x[1]]]), rows=(1,))
    with pytest.raises(ModelError):
        PlantModel(2, 1, 1, lambda x, u: np.array([1.0, 0.0]), lambda x, u: np.zeros((2, 1)))


def test_builtin_gain_preconditions():
    with pytest.raises(ModelError):
        example_4_2(1, 0, 3)
    with pytest.raises(ModelError):
        example_4_3(4, 1, 2)  # k2 k3 = 2 < k1


def test_controller_spot_check_catches_v_above_q():
    ctrl = ControllerFamily(lambda th, x: np.zeros(1), lambda th, x: 2 * float(x @ x),
                            lambda th, x: float(x @ x))
    with pytest.raises(ModelError):
        ctrl.spot_check([np.zeros(1)], 2)


def test_trigger_params_validation():
    with pytest.raises(ModelError):
        TriggerParams(T=0)
    with pytest.raises(ModelError):
        TriggerParams(T=1, a_coeff=0)
    with pytest.raises(ModelError):
        TriggerParams(T=1, Ntilde=0)
    with pytest.raises(ModelError):
        TriggerParams(T=1, Ntilde=2, N_cert=2)
    assert TriggerParams(T=1, a_coeff=0.1).a(np.array([3.0, 4.0])) == pytest.approx(2.5)


# -- exponential bound ----------------------------------------------------

def test_exp_bound_identity_and_diagonal():
    assert estimate_exp_bound(-np.eye(3), 0.5) == 1.0
    assert estimate_exp_bound(np.diag([-1.0, -2.0]), 1.0) == 1.0


def test_exp_bound_companion_against_eigen_oracle():
    A = np.array([[0.0, 1.0], [-1.0, -3.0]])
    lam, S = np.linalg.eig(A)
    assert np.isclose(lam.real.max(), (-3 + np.sqrt(5)) / 2)
    omega, horizon, n = 0.3, 50 / 0.3, 2000
    Sinv = np.linalg.inv(S)
    grid = np.linspace(0, horizon, n)
    oracle = max(1.0, max(np.linalg.norm((S * np.exp(lam * t)) @ Sinv, 2).real * np.exp(omega * t)
                          for t in grid))
    M = estimate_exp_bound(A, omega)
    assert M > 1
    assert M == pytest.approx(oracle, rel=1e-9)
    # the bound holds at off-grid times too, up to grid resolution
    for t in np.linspace(0, 20, 301):
        assert np.linalg.norm(expm(t * A), 2) <= M * np.exp(-omega * t) * (1 + 1e-3)


def test_exp_bound_rejects_slow_matrix():
    with pytest.raises(ModelError, match="abscissa"):
        estimate_exp_bound(np.array([[0.0, 1.0], [-1.0, -3.0]]), 0.5)
    with pytest.raises(ModelError):
        estimate_exp_bound(np.eye(2), 0.1)
