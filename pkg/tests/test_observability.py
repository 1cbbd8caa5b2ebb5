import time

import numpy as np
import pytest

from regtrig.models import example_4_2
from regtrig.observability import (Backend, SearchSettings, Verdict, check_observability,
                                   kalman_observability, regressor_chain,
                                   run_observability_algorithm, zero_set_certify)
from regtrig.polyalg import Polynomial, poly_eval
from regtrig.polybridge import example_4_2_poly, example_4_3_poly


# -- zero-set certificates -------------------------------------------------

def test_two_independent_forms_hold():
    x1, x2 = Polynomial.variables(2)
    cert = zero_set_certify([x1 + x2, x1 - x2], 1)
    assert cert.verdict is Verdict.HOLDS and cert.backend is Backend.LINEAR_RANK
    assert cert.certifying


def test_single_form_has_axis_witness():
    cert = zero_set_certify([Polynomial.variable(2, 0)], 1)
    assert cert.verdict is Verdict.INCONCLUSIVE
    assert np.allclose(cert.witness, [0.0, 1.0])
    assert cert.residual <= 1e-14


def test_all_zero_list_is_inconclusive():
    cert = zero_set_certify([Polynomial.zero(3), Polynomial.zero(3)], 2)
    assert cert.verdict is Verdict.INCONCLUSIVE
    assert np.linalg.norm(cert.witness) == pytest.approx(1.0)


def test_boundary_gains_give_witness_on_line():
    c = 1.0
    chain = regressor_chain(example_4_2_poly(c, 1.0, 2.0), 0, [2.0], [0.5], 3)
    cert = zero_set_certify(chain, 3)
    assert cert.verdict is Verdict.INCONCLUSIVE
    w = cert.witness
    assert abs(w[0] + c * w[1]) <= 1e-10 * np.linalg.norm(w)
    assert cert.residual < 1e-10


def test_numerical_search_finds_nonlinear_zero():
    x1, x2, x3 = Polynomial.variables(3)
    settings = SearchSettings()
    cert = zero_set_certify([x1 * x2, x3 - x1 ** 2], 2, settings)
    assert cert.backend is Backend.NUMERICAL_SEARCH
    assert cert.verdict is Verdict.INCONCLUSIVE
    w = cert.witness
    assert settings.r_min <= np.linalg.norm(w) <= settings.r_max
    assert max(abs(poly_eval(h, w)) for h in [x1 * x2, x3 - x1 ** 2]) < settings.witness_tol


def test_numerical_search_holds_is_non_certifying():
    x1, x2 = Polynomial.variables(2)
    cert = zero_set_certify([x1 ** 2 + x2 ** 2 - x1 * x2, x2 ** 3], 2)
    assert cert.verdict is Verdict.HOLDS
    assert cert.backend is Backend.NUMERICAL_SEARCH
    assert not cert.certifying


def test_monotone_truncation():
    model = example_4_3_poly(1, 2, 3)
    rng = np.random.default_rng(11)
    for _ in range(4):
        th, z = rng.normal(size=2), rng.normal(size=2)
        z_pinned = np.array([z[0], th[1]])
        for zz in (z, z_pinned):
            for i in range(2):
                for J in (1, 2, 3):
                    a = zero_set_certify(regressor_chain(model, i, th, zz, J), J)
                    if a.holds:
                        b = zero_set_certify(regressor_chain(model, i, th, zz, J + 1), J + 1)
                        assert b.holds


# -- Kalman backend --------------------------------------------------------

def test_kalman_trivial():
    A = np.random.default_rng(0).normal(size=(3, 3))
    assert kalman_observability(A, np.eye(3))
    assert not kalman_observability(A, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        kalman_observability(A, np.eye(2))


def linear_rank_verdict(A, C):
    n = len(A)
    forms, M = [], C.copy()
    for _ in range(n):
        forms += [Polynomial.linear_form(row) for row in M]
        M = M @ A
    return zero_set_certify(forms, n - 1)


def test_backends_agree_on_50_instances():
    rng = np.random.default_rng(2024)
    seen = set()
    for k in range(50):
        n = int(rng.integers(2, 5))
        if k % 2:
            # hide an unobservable block behind a similarity transform
            r = int(rng.integers(1, n))
            A = np.zeros((n, n))
            A[:r, :r] = rng.normal(size=(r, r))
            A[r:, :r] = rng.normal(size=(n - r, r))
            A[r:, r:] = rng.normal(size=(n - r, n - r))
            C = np.zeros((n, n))
            C[:, :r] = rng.normal(size=(n, r))
            # observable part must not see the trailing states
            A[:r, r:] = 0
            S = rng.normal(size=(n, n))
            A, C = np.linalg.solve(S, A @ S), C @ S
        else:
            A = rng.normal(size=(n, n))
            C = np.zeros((n, n))
            C[0] = rng.normal(size=n)
        kal = kalman_observability(A, C)
        cert = linear_rank_verdict(A, C)
        assert cert.backend is Backend.LINEAR_RANK
        assert kal == cert.holds
        seen.add(kal)
    assert seen == {True, False}


@pytest.mark.parametrize("c,k1,k2", [(1, 1, 3), (1, 1, 2), (0.5, 2, 2.5), (0.5, 2, 3), (2, 0.5, 1.5)])
def test_example_4_2_backends_agree_across_boundary(c, k1, k2):
    gap = c * k2 - c * c * k1
    lin = example_4_2(c, k1, k2).linear
    poly = example_4_2_poly(c, k1, k2)
    rng = np.random.default_rng(1)
    for _ in range(5):
        th, z = rng.normal(size=1) * 2, rng.normal(size=1) * 2
        kal = kalman_observability(lin.closed_loop_matrix(th, z), lin.C[0])
        rep = run_observability_algorithm(poly, th, [z])
        assert kal == rep.certified
        assert kal == (abs(gap - 1) > 1e-9)


# -- the step-wise algorithm -----------------------------------------------

def test_example_4_2_certified_and_refused():
    t0 = time.perf_counter()
    rep = run_observability_algorithm(example_4_2_poly(1, 1, 3), [2.0], [[0.0]])
    assert time.perf_counter() - t0 < 2.0
    assert rep.certified and rep.N == 1
    assert rep.index_sets == [{0}]

    bad = run_observability_algorithm(example_4_2_poly(1, 1, 2), [2.0], [[0.0]])
    assert not bad.certified
    assert bad.first_uncovered == 0
    (_, i, w, res), = list(bad.witnesses())
    assert abs(w[0] + w[1]) <= 1e-10 * np.linalg.norm(w)
    assert res < 1e-10


def test_example_4_3_two_steps():
    model = example_4_3_poly(1, 2, 3)
    rng = np.random.default_rng(3)
    for _ in range(8):
        th = rng.normal(size=2)
        hats = [rng.normal(size=2), rng.normal(size=2)]
        rep = run_observability_algorithm(model, th, hats)
        assert rep.index_sets[0] == {1}
        assert 0 in rep.index_sets[1]
        assert rep.covered == {0, 1} and rep.certified and rep.N == 2
        # pinning discipline
        s2 = rep.steps[1]
        assert s2.pinned == (1,)
        assert s2.z[1] == th[1] and s2.z[0] == hats[1][0]
        assert rep.steps[0].pinned == ()


def test_example_4_3_step_one_witness_matches_analysis():
    # x1 solves k1 x1 = (theta2 - z2) x1^2, x2 = 0, x3 = -x1^2
    k1 = 1.0
    model = example_4_3_poly(k1, 2, 3)
    th, z = np.array([0.4, 1.5]), np.array([-0.7, 0.2])
    rep = run_observability_algorithm(model, th, [z, z])
    cert = rep.steps[0].certificates[0]
    assert cert.verdict is Verdict.INCONCLUSIVE
    w = cert.witness
    x1 = k1 / (th[1] - z[1])
    assert np.allclose(w, [x1, 0.0, -x1 ** 2], atol=1e-6)


def test_check_observability_draws_and_summary():
    reps = check_observability(example_4_2_poly(1, 1, 3), draws=4, seed=5)
    assert len(reps) == 4 and all(r.certified for r in reps)
    d = reps[0].to_dict()
    assert d["certified"] and d["index_sets"] == [[1]]
    assert d["N"] == 1


def test_pinned_theta_is_used():
    reps = check_observability(example_4_3_poly(1, 2, 3), draws=3, theta=[0.5, -1.0], seed=9)
    for r in reps:
        assert np.array_equal(r.theta, [0.5, -1.0])
