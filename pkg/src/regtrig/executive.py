"""Hybrid closed-loop runner for regulation-triggered adaptive control.

Between events the estimate is frozen and ``u = k(theta_hat, x)``.  An event
fires at ``min(tau_i + T, r_i)`` where ``r_i`` is the first time
``V(theta_hat, x(t))`` reaches ``Q(theta_hat, x(tau_i)) + a(x(tau_i))``
(no threshold when ``x(tau_i)`` is numerically zero).  At each event the
estimate is replaced by the minimum-distance solution of the Gram system
built on the window ``[mu, tau]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .estimator import (GramSystem, compute_mu, gram_pair, linear_filter_gram,
                        ls_update)
from .integrator import (Integrands, SolverSettings, Stop, StopReason,
                         TrajectoryLog, integrate_segment)
from .models import (ControllerFamily, Model, ModelError, TriggerParams,
                     build_model, closed_loop_field)

GENERIC = "generic"
LINEAR_FILTER = "linear_filter"

DWELL_CAP = "DwellCap"
THRESHOLD_HIT = "ThresholdHit"
ZERO_STATE = "ZeroState"


class ConfigError(ValueError):
    """Rejected scenario document; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Scenario:
    model: Model
    trigger: TriggerParams
    theta_true: np.ndarray
    thetahat0: np.ndarray
    x0: np.ndarray
    t_final: float
    settings: SolverSettings
    variant: str = GENERIC
    output: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.model.plant
        for name, vec, size in (("theta_true", self.theta_true, p.l),
                                ("thetahat0", self.thetahat0, p.l), ("x0", self.x0, p.n)):
            if np.shape(vec) != (size,):
                raise ConfigError(name, f"dimension {np.shape(vec)} does not match the plant ({size},)")
        if not self.t_final > 0:
            raise ConfigError("t_final", f"must be positive, got {self.t_final}")
        if self.variant not in (GENERIC, LINEAR_FILTER):
            raise ConfigError("variant", f"unknown variant {self.variant!r}")
        if self.variant == LINEAR_FILTER and self.model.linear is None:
            raise ConfigError("variant", "the linear_filter variant needs a linear plant")

    @property
    def eps_id(self) -> float:
        return 1e-6 * (1 + float(np.linalg.norm(self.theta_true)))

    @property
    def N(self) -> int:
        return self.model.N_cert if self.model.N_cert is not None else self.model.plant.l


@dataclass(frozen=True)
class EventRecord:
    index: int
    t: float
    x: np.ndarray
    thetahat: np.ndarray
    cause: str
    mu: float
    rank: int
    update_distance: float
    gram: GramSystem | None = None
    previous: np.ndarray | None = None


@dataclass
class Segment:
    t0: float
    t1: float
    thetahat: np.ndarray
    threshold: float | None
    stop: StopReason
    log: TrajectoryLog
    V: np.ndarray


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<24} margin={self.margin:+.3e}  {self.detail}"


@dataclass
class SimulationResult:
    scenario: Scenario
    log: TrajectoryLog
    segments: list[Segment]
    records: list[EventRecord]
    event_times: list[float]
    t_id: float | None
    aborted: bool = False
    verdicts: dict[str, CheckResult] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def thetahat_history(self) -> list[tuple[float, np.ndarray]]:
        hist = [(0.0, self.scenario.thetahat0.copy())]
        hist += [(r.t, r.thetahat) for r in self.records]
        return hist

    def thetahat_at(self, t: float) -> np.ndarray:
        current = self.scenario.thetahat0
        for r in self.records:
            if r.t <= t:
                current = r.thetahat
        return current


def trigger_threshold(ctrl: ControllerFamily, thetahat, x_i, trigger: TriggerParams) -> float:
    """``Q(thetahat, x_i) + a(x_i)``."""
    return ctrl.Q(thetahat, x_i) + trigger.a(x_i)


def _trigger_for(s: Scenario, thetahat, x_i):
    """``(threshold, guard, V)`` for the segment starting at ``x_i``.

    The filter variant uses the radius form of the trigger, which belongs to
    the pair ``V = |x|^2``, ``Q = M^2 |x|^2``; its threshold and ``V`` are
    reported in those terms.
    """
    ctrl = s.model.controller
    if s.variant == LINEAR_FILTER:
        M = s.model.linear.M(thetahat)
        scale = s.trigger.a_coeff + M * M
        radius = float(np.linalg.norm(x_i)) * math.sqrt(scale)
        return (scale * float(x_i @ x_i),
                lambda t, x: float(np.linalg.norm(x)) - radius,
                lambda x: float(x @ x))
    threshold = trigger_threshold(ctrl, thetahat, x_i, s.trigger)
    return (threshold, lambda t, x: ctrl.V(thetahat, x) - threshold,
            lambda x: ctrl.V(thetahat, x))


def run_closed_loop(s: Scenario) -> SimulationResult:
    plant, ctrl, trig = s.model.plant, s.model.controller, s.trigger
    n, m, l = plant.n, plant.m, plant.l
    theta = s.theta_true
    th = s.thetahat0.copy()
    x = s.x0.copy()
    aux = None
    t = 0.0
    event_times = [0.0]
    records: list[EventRecord] = []
    segments: list[Segment] = []
    aborted = False
    end_tol = 1e-12 * max(1.0, s.t_final)

    while s.t_final - t > end_tol:
        horizon = min(trig.T, s.t_final - t)
        th_seg = th.copy()
        if float(np.linalg.norm(x)) <= trig.eps_zero:
            threshold, guard = None, None
            V_of = lambda xx, th_seg=th_seg: ctrl.V(th_seg, xx)
        else:
            threshold, guard, V_of = _trigger_for(s, th_seg, x)
        field_ = closed_loop_field(plant, ctrl, theta, th_seg)
        integrands = Integrands(plant.f, plant.g, lambda xx, th_seg=th_seg: ctrl.k(th_seg, xx), n, m, l)
        log, stop = integrate_segment(field_, x, t, horizon, guard, s.settings, integrands, aux)
        V = np.array([V_of(xx) for xx in log.x])
        segments.append(Segment(t, log.t[-1], th_seg, threshold, stop, log, V))
        if stop.kind is Stop.STATE_NONFINITE:
            aborted = True
            break
        t_new = float(log.t[-1])
        x = log.x[-1].copy()
        aux = np.concatenate([log.F[-1], log.Gam[-1].ravel(), log.z[-1], log.w[-1]])
        if stop.kind is Stop.GUARD_CROSSED:
            cause = THRESHOLD_HIT
        elif horizon == trig.T:
            cause = ZERO_STATE if threshold is None else DWELL_CAP
        else:
            t = t_new
            break  # run ends at t_final without an event
        mu = compute_mu(event_times, t_new, trig.Ntilde, trig.T)
        window = TrajectoryLog.concatenate([sg.log for sg in segments if sg.t1 >= mu])
        if s.variant == LINEAR_FILTER:
            lin = s.model.linear
            gs = linear_filter_gram(window, mu, t_new, lin.L_star, lin.A, lin.B)
        else:
            gs = gram_pair(window, mu, t_new)
        upd = ls_update(gs, th)
        records.append(EventRecord(len(records) + 1, t_new, x.copy(), upd.new.copy(), cause,
                                   mu, upd.rank, upd.distance, gs, th.copy()))
        event_times.append(t_new)
        th = upd.new
        t = t_new

    full = TrajectoryLog.concatenate([sg.log for sg in segments])
    full.events = list(event_times)
    t_id = _identification_time(s, records)
    result = SimulationResult(s, full, segments, records, event_times, t_id, aborted)
    result.verdicts = verify_invariants(result, theta)
    return result


def _identification_time(s: Scenario, records) -> float | None:
    theta = s.theta_true
    if np.linalg.norm(s.thetahat0 - theta) <= s.eps_id:
        return 0.0
    for r in records:
        if np.linalg.norm(r.thetahat - theta) <= s.eps_id:
            return r.t
    return None


# -- verification -----------------------------------------------------------

TOL_SPACING = 1e-9
TOL_CONSTANT = 1e-10
EPS_CONSIST = 1e-6


def _check(name, margin, detail=""):
    margin = float(margin)
    return CheckResult(name, bool(margin <= 0), margin, detail)


def verify_invariants(r: SimulationResult, theta_true) -> dict[str, CheckResult]:
    """Check the run against the closed-loop guarantees.

    Each margin is the worst ``lhs - rhs``; a check passes when it is <= 0.
    """
    s = r.scenario
    theta = np.asarray(theta_true, dtype=float)
    T = s.trigger.T
    tol_bound = 1e-8 * (1 + float(np.linalg.norm(theta)))
    out: dict[str, CheckResult] = {}

    out["no_abort"] = _check("no_abort", 1.0 if r.aborted else -1.0,
                             "integration stopped early" if r.aborted else "")

    times = np.array(r.event_times)
    gaps = np.diff(times)
    tol_ev = [s.settings.event_tol(t0) for t0 in times[:-1]]
    out["dwell_cap"] = _check(
        "dwell_cap", max((g - T - te for g, te in zip(gaps, tol_ev)), default=-T))

    worst = -np.inf
    for sg in r.segments:
        if sg.threshold is None:
            continue
        worst = max(worst, float(np.max(sg.V - sg.threshold)) - 1e-8 * (1 + sg.threshold))
    out["lyapunov_bound"] = _check("lyapunov_bound", worst if np.isfinite(worst) else -1.0)

    jump, growth = -np.inf, -np.inf
    prev = s.thetahat0
    for rec in r.records:
        err_prev = float(np.linalg.norm(theta - prev))
        jump = max(jump, float(np.linalg.norm(rec.thetahat - prev)) - err_prev - tol_bound)
        growth = max(growth, float(np.linalg.norm(theta - rec.thetahat)) - 2 * err_prev - tol_bound)
        prev = rec.thetahat
    out["jump_bound"] = _check("jump_bound", jump if r.records else -1.0)
    out["growth_bound"] = _check("growth_bound", growth if r.records else -1.0)

    consist = -np.inf
    for rec in r.records:
        if rec.gram is not None:
            gs = rec.gram
            consist = max(consist, gs.residual(theta) - EPS_CONSIST * (1 + np.linalg.norm(gs.Z)))
    out["gram_consistency"] = _check("gram_consistency", consist if np.isfinite(consist) else -1.0)

    spacing, constancy = -1.0, -1.0
    if r.t_id is not None:
        after = [rec for rec in r.records if rec.t >= r.t_id]
        base = s.thetahat0 if r.t_id == 0.0 else after[0].thetahat
        ev = [r.t_id] + [rec.t for rec in after if rec.t > r.t_id]
        if len(ev) > 1:
            spacing = float(np.max(np.abs(np.diff(ev) - T))) - TOL_SPACING
        if after:
            constancy = max(float(np.linalg.norm(rec.thetahat - base)) for rec in after) - TOL_CONSTANT
    out["post_id_spacing"] = _check("post_id_spacing", spacing)
    out["post_id_constancy"] = _check("post_id_constancy", constancy)

    bound = math.ceil(s.t_final / T - 1e-12) + s.N + 1
    out["event_count"] = _check("event_count", len(r.records) - bound,
                                f"{len(r.records)} events, bound {bound}")

    x0_nonzero = float(np.linalg.norm(s.x0)) > s.trigger.eps_zero
    if x0_nonzero and s.t_final >= s.N * T and not r.aborted:
        limit = s.N * T + s.settings.event_tol(s.N * T)
        margin = (r.t_id - limit) if r.t_id is not None else math.inf
        out["identification_time"] = _check("identification_time", margin,
                                            f"t_id={r.t_id}, N*T={s.N * T}")
    else:
        out["identification_time"] = _check("identification_time", -1.0, "vacuous")
    return out


def perturb_record(r: SimulationResult, index: int, thetahat) -> SimulationResult:
    """Copy of ``r`` with one recorded estimate replaced (for testing the verifier)."""
    recs = list(r.records)
    recs[index] = replace(recs[index], thetahat=np.asarray(thetahat, dtype=float))
    out = replace(r, records=recs)
    out.verdicts = verify_invariants(out, r.scenario.theta_true)
    return out


# -- decay fit --------------------------------------------------------------

def fit_log_linear(t, xnorm, x0norm: float, t_start: float = 0.0, floor: float = 1e-12):
    """Least-squares line through ``log |x|``; returns ``(M_hat, omega_hat)``."""
    t = np.asarray(t, dtype=float)
    xnorm = np.asarray(xnorm, dtype=float)
    sel = (t >= t_start) & (xnorm > floor)
    if np.count_nonzero(sel) < 2:
        raise ValueError("trajectory is numerically zero after t_start; nothing to fit")
    slope, intercept = np.polyfit(t[sel], np.log(xnorm[sel]), 1)
    M = max(1.0, math.exp(intercept) / x0norm) if x0norm > 0 else 1.0
    return M, -slope


def fit_decay(r: SimulationResult, t_start: float = 0.0):
    xnorm = np.linalg.norm(r.log.x, axis=1)
    return fit_log_linear(r.log.t, xnorm, float(np.linalg.norm(r.scenario.x0)), t_start)


# -- configuration ----------------------------------------------------------

_SOLVER_KEYS = {"rtol", "atol", "dt_log", "tol_event", "eps_zero"}


def _number(doc, key, path, default=None):
    if key not in doc:
        if default is None:
            raise ConfigError(path + key, "missing required field")
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path + key, f"expected a number, got {val!r}")
    return float(val)


def _vector(doc, key):
    if key not in doc:
        raise ConfigError(key, "missing required field")
    try:
        arr = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a list of numbers, got {doc[key]!r}") from None
    return np.atleast_1d(arr)


def model_from_config(spec) -> Model:
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("model.name", "missing model name")
    params = dict(spec.get("params", {}))
    params.update({k: v for k, v in spec.items() if k not in ("name", "params")})
    try:
        return build_model(spec["name"], **params)
    except TypeError as exc:
        raise ConfigError("model", f"bad parameters for {spec['name']!r}: {exc}") from None
    except ModelError as exc:
        path = "model.name" if "unknown model" in str(exc) else "model"
        raise ConfigError(path, str(exc)) from None


def scenario_from_config(doc: dict) -> Scenario:
    """Validate a scenario document and fill in solver defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("", "scenario document must be an object")
    model = model_from_config(doc.get("model"))
    T = _number(doc, "T", "")
    if not T > 0:
        raise ConfigError("T", f"must be positive, got {T}")
    a_coeff = _number(doc, "a_coeff", "", 0.1)
    if not a_coeff > 0:
        raise ConfigError("a_coeff", f"must be positive, got {a_coeff}")
    Ntilde = doc.get("Ntilde", 2)
    if isinstance(Ntilde, bool) or not isinstance(Ntilde, int) or Ntilde < 1:
        raise ConfigError("Ntilde", f"must be a positive integer, got {Ntilde!r}")
    solver = doc.get("solver", {}) or {}
    unknown = set(solver) - _SOLVER_KEYS
    if unknown:
        raise ConfigError("solver." + sorted(unknown)[0], "unknown solver setting")
    settings = SolverSettings(
        rtol=_number(solver, "rtol", "solver.", 1e-10),
        atol=_number(solver, "atol", "solver.", 1e-12),
        dt_log=_number(solver, "dt_log", "solver.", T / 200),
        tol_event=solver.get("tol_event"),
    )
    for key in ("rtol", "atol", "dt_log"):
        if not getattr(settings, key) > 0:
            raise ConfigError("solver." + key, "must be positive")
    eps_zero = _number(solver, "eps_zero", "solver.", 1e-12)
    try:
        trigger = TriggerParams(T=T, a_coeff=a_coeff, Ntilde=Ntilde, eps_zero=eps_zero,
                                N_cert=model.N_cert)
    except ModelError as exc:
        raise ConfigError("Ntilde", str(exc)) from None
    l, n = model.plant.l, model.plant.n
    theta = _vector(doc, "theta_true")
    if theta.shape != (l,):
        raise ConfigError("theta_true", f"dimension {theta.size} does not match the plant's l={l}")
    thetahat0 = _vector(doc, "thetahat0") if "thetahat0" in doc else np.zeros(l)
    if thetahat0.shape != (l,):
        raise ConfigError("thetahat0", f"dimension {thetahat0.size} does not match the plant's l={l}")
    x0 = _vector(doc, "x0")
    if x0.shape != (n,):
        raise ConfigError("x0", f"dimension {x0.size} does not match the plant's n={n}")
    t_final = _number(doc, "t_final", "")
    if not t_final > 0:
        raise ConfigError("t_final", f"must be positive, got {t_final}")
    variant = doc.get("variant", GENERIC)
    if variant not in (GENERIC, LINEAR_FILTER):
        raise ConfigError("variant", f"expected 'generic' or 'linear_filter', got {variant!r}")
    if variant == LINEAR_FILTER and model.linear is None:
        raise ConfigError("variant", "the linear_filter variant needs a linear plant")
    try:
        model.controller.spot_check([theta, thetahat0], n)
    except ModelError as exc:
        raise ConfigError("model", str(exc)) from None
    return Scenario(model, trigger, theta, thetahat0, x0, t_final, settings, variant,
                    dict(doc.get("output", {}) or {}))
