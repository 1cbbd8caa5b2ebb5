import numpy as np
import pytest

from regtrig.executive import (DWELL_CAP, THRESHOLD_HIT, ZERO_STATE, ConfigError, fit_decay,
                               perturb_record, run_closed_loop, scenario_from_config,
                               trigger_threshold)
from regtrig.models import TriggerParams, example_4_2

EX42 = dict(name="example_4_2", c=1, k1=1, k2=3)
LIN = dict(name="linear", A=[[0, 1], [0, 0]], B=[[0], [1]], C_list=[[[0, 0], [1, 1]]],
           gain_table=dict(K0=[[-1, -3]], K=[[[-1, -1]]]))


def doc(**kw):
    base = dict(model=EX42, theta_true=[2.0], thetahat0=[0.0], x0=[1.0, 1.0], T=1.0,
                a_coeff=0.1, Ntilde=2, t_final=6.0)
    base.update(kw)
    return base


def run(**kw):
    return run_closed_loop(scenario_from_config(doc(**kw)))


def test_threshold_example_4_2():
    m = example_4_2(1, 1, 3)
    A = np.array([[0.0, 1.0], [-1.0, -3.0]])
    K = np.kron(np.eye(2), A.T) + np.kron(A.T, np.eye(2))
    P = np.linalg.solve(K, -np.eye(2).reshape(-1)).reshape(2, 2)
    thr = trigger_threshold(m.controller, np.array([0.0]), np.array([1.0, 0.0]), TriggerParams(T=1))
    assert thr == pytest.approx(P[0, 0] + 0.1, rel=1e-13)


def test_identification_at_first_event():
    r = run()
    first = r.records[0]
    assert first.t <= 1.0
    assert abs(first.thetahat[0] - 2.0) <= 1e-6
    assert first.cause == THRESHOLD_HIT
    assert r.all_passed, [v.line() for v in r.verdicts.values() if not v.passed]


def test_post_identification_spacing_and_constancy():
    r = run(t_final=8.0)
    after = [rec for rec in r.records if rec.t >= r.t_id]
    gaps = np.diff([rec.t for rec in after])
    assert np.all(np.abs(gaps - 1.0) <= 1e-9)
    assert all(np.linalg.norm(rec.thetahat - after[0].thetahat) <= 1e-10 for rec in after)
    assert all(rec.cause == DWELL_CAP for rec in after[1:])


def test_zero_initial_state():
    r = run(x0=[0.0, 0.0], t_final=4.0)
    assert [rec.t for rec in r.records] == [1.0, 2.0, 3.0, 4.0]
    assert all(rec.cause == ZERO_STATE for rec in r.records)
    assert all(rec.thetahat[0] == 0.0 for rec in r.records)
    assert np.all(r.log.x == 0)
    assert r.all_passed


def test_matched_start_never_updates():
    r = run(thetahat0=[2.0], t_final=10.0)
    assert len(r.records) == 10
    assert np.allclose(np.diff([0.0] + [rec.t for rec in r.records]), 1.0, atol=1e-9, rtol=0)
    assert all(rec.update_distance <= 1e-12 for rec in r.records)
    assert r.t_id == 0.0 and r.all_passed


def test_perturbed_history_fails_jump_check():
    r = run()
    bad = perturb_record(r, 1, [2.0 + 5.0])
    assert not bad.verdicts["jump_bound"].passed
    assert bad.verdicts["jump_bound"].margin > 0


def test_example_4_2_filter_variant_matches_generic_estimates():
    g = run(t_final=4.0)
    f = run(t_final=4.0, variant="linear_filter")
    assert f.all_passed
    assert abs(f.records[0].thetahat[0] - 2.0) <= 1e-6
    assert abs(g.records[0].thetahat[0] - f.records[0].thetahat[0]) <= 1e-6


def test_example_4_3_identifies_within_two_windows():
    r = run_closed_loop(scenario_from_config(dict(
        model=dict(name="example_4_3", k1=1, k2=2, k3=3), theta_true=[0.5, -1.0],
        thetahat0=[0.0, 0.0], x0=[0.5, 0.2, -0.3], T=1.0, Ntilde=3, t_final=8.0)))
    assert r.t_id is not None and r.t_id <= 2.0
    assert r.all_passed


def test_linear_variants_agree():
    g = run(model=LIN, t_final=6.0)
    f = run(model=LIN, t_final=6.0, variant="linear_filter")
    assert len(g.records) == len(f.records)
    tol = 2 * g.scenario.settings.event_tol(6.0)
    for a, b in zip(g.records, f.records):
        assert abs(a.t - b.t) <= tol
        assert np.linalg.norm(a.thetahat - b.thetahat) <= 1e-6 * (1 + np.linalg.norm(a.thetahat))
    assert g.t_id <= 1.0 and f.all_passed and g.all_passed


def test_fit_decay_scalar_exponential():
    scalar = dict(name="linear", A=[[-1.0]], B=[[0.0]], C_list=[[[0.0]]],
                  gain_table=dict(K0=[[0.0]], K=[[[0.0]]]))
    r = run(model=scalar, theta_true=[0.0], thetahat0=[0.0], x0=[1.0], t_final=10.0)
    M, w = fit_decay(r, 0.0)
    assert abs(w - 1.0) <= 1e-6
    assert M == pytest.approx(1.0, abs=1e-6)


def test_fit_decay_oscillatory_envelope():
    osc = dict(name="linear", A=[[0.0, 1.0], [-4.25, -1.0]], B=[[0.0], [0.0]],
               C_list=[[[0.0, 0.0], [0.0, 0.0]]], gain_table=dict(K0=[[0.0, 0.0]], K=[[[0.0, 0.0]]]))
    r = run(model=osc, theta_true=[0.0], thetahat0=[0.0], x0=[1.0, 0.0], t_final=20.0)
    _, w = fit_decay(r, 0.0)
    assert abs(w - 0.5) <= 0.15 * 0.5


def test_fit_decay_rejects_zero_trajectory():
    r = run(x0=[0.0, 0.0], t_final=2.0)
    with pytest.raises(ValueError):
        fit_decay(r, 0.0)


def test_config_defaults():
    s = scenario_from_config(doc())
    assert s.settings.rtol == 1e-10 and s.settings.atol == 1e-12
    assert s.settings.dt_log == pytest.approx(1.0 / 200)
    assert s.trigger.a_coeff == 0.1 and s.trigger.Ntilde == 2


def test_config_accepts_nested_params():
    s = scenario_from_config(doc(model=dict(name="example_4_2", params=dict(c=1, k1=1, k2=3))))
    assert s.model.params == {"c": 1.0, "k1": 1.0, "k2": 3.0}


@pytest.mark.parametrize("change,path", [
    (dict(T=-1), "T"),
    (dict(theta_true=[1.0, 2.0]), "theta_true"),
    (dict(x0=[1.0]), "x0"),
    (dict(a_coeff=0.0), "a_coeff"),
    (dict(Ntilde=0), "Ntilde"),
    (dict(Ntilde=1), "Ntilde"),  # must exceed the certified N = 1
    (dict(model=dict(name="nope")), "model.name"),
    (dict(variant="linear_filter", model=dict(name="example_4_3", k1=1, k2=2, k3=3),
          theta_true=[0.5, -1.0], thetahat0=[0.0, 0.0], x0=[0.5, 0.2, -0.3], Ntilde=3), "variant"),
    (dict(solver=dict(rtool=1e-9)), "solver.rtool"),
    (dict(t_final=0), "t_final"),
])
def test_config_rejections(change, path):
    with pytest.raises(ConfigError) as info:
        scenario_from_config(doc(**change))
    assert info.value.path == path
