"""Segment integration with dense logging, running integrals and guard localization.

Each segment integrates the closed loop from one event time to the next.  When
the plant's drift and regressor are supplied, the running integrals

    F(t) = int_0^t f(x, u) ds,   Gam(t) = int_0^t g(x, u) ds,
    z(t) = int_0^t x ds,         w(t) = int_0^t u ds

are carried as extra ODE states so they share the integrator's error control.
``x - F - Gam theta`` is a linear invariant of that augmented system, which
Runge-Kutta methods (and their dense output) preserve up to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import DOP853


@dataclass(frozen=True)
class SolverSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    dt_log: float = 0.005
    tol_event: float | None = None  # default 1e-10 * max(1, t0)
    max_step: float = np.inf

    def event_tol(self, t0: float) -> float:
        if self.tol_event is not None:
            return self.tol_event
        return 1e-10 * max(1.0, abs(t0))


class Stop(enum.Enum):
    GUARD_CROSSED = "GuardCrossed"
    HORIZON_REACHED = "HorizonReached"
    STATE_NONFINITE = "StateNonFinite"


@dataclass(frozen=True)
class StopReason:
    kind: Stop
    t: float

    def __str__(self):
        return f"{self.kind.value}({self.t:.12g})"


@dataclass
class TrajectoryLog:
    """Time-stamped samples of state, input and running integrals.

    Arrays are indexed by sample: ``x[k]`` has shape ``(n,)``, ``Gam[k]``
    shape ``(n, l)``.  ``events`` lists the event anchor times; each is a
    sample time.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray | None = None
    F: np.ndarray | None = None
    Gam: np.ndarray | None = None
    z: np.ndarray | None = None
    w: np.ndarray | None = None
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    @property
    def has_integrals(self) -> bool:
        return self.F is not None

    def index_of(self, time: float) -> int:
        """Index of the sample exactly at ``time``."""
        k = int(np.searchsorted(self.t, time))
        if k >= len(self.t) or self.t[k] != time:
            raise ValueError(f"time {time!r} is not a sample time of the log")
        return k

    def window(self, mu: float, tau: float) -> slice:
        if mu > tau:
            raise ValueError(f"window start {mu} is after its end {tau}")
        return slice(self.index_of(mu), self.index_of(tau) + 1)

    @staticmethod
    def concatenate(parts: list[TrajectoryLog]) -> TrajectoryLog:
        """Join consecutive segments, merging the shared endpoint samples.

        At a shared time the later segment's sample wins, so the input is
        right-continuous.
        """
        keep = []
        for i, part in enumerate(parts):
            if i + 1 < len(parts) and len(parts[i + 1]) and parts[i + 1].t[0] == part.t[-1]:
                keep.append(slice(0, len(part) - 1))
            else:
                keep.append(slice(0, len(part)))

        def cat(name):
            arrs = [getattr(p, name) for p in parts]
            if any(a is None for a in arrs):
                return None
            return np.concatenate([a[s] for a, s in zip(arrs, keep)])

        events = sorted({e for p in parts for e in p.events})
        return TrajectoryLog(cat("t"), cat("x"), cat("u"), cat("F"), cat("Gam"),
                             cat("z"), cat("w"), events)


class Integrands:
    """Plant pieces evaluated along the trajectory for the running integrals."""

    def __init__(self, f, g, control, n: int, m: int, l: int):
        self.f, self.g, self.control = f, g, control
        self.n, self.m, self.l = n, m, l

    @property
    def size(self) -> int:
        n, m, l = self.n, self.m, self.l
        return n + n * l + n + m

    def derivative(self, x) -> np.ndarray:
        u = self.control(x)
        return np.concatenate([self.f(x, u), self.g(x, u).ravel(), x, u])


def integrate_segment(field: Callable[[np.ndarray], np.ndarray], x0, t0: float,
                      horizon: float, guard: Callable[[float, np.ndarray], float] | None = None,
                      settings: SolverSettings | None = None,
                      integrands: Integrands | None = None, aux0=None):
    """Integrate ``xdot = field(x)`` on ``[t0, t0 + horizon]``.

    Samples are logged at ``t0 + k * dt_log`` and at the final time.  If a
    guard is given it must be negative at ``t0``; the first time it becomes
    non-negative ends the segment, localized by bisection on the dense output
    to ``settings.event_tol(t0)``.  The returned crossing time is the upper
    end of the final bracket.

    ``aux0`` is the initial value of the running integrals (packed as
    ``[F, Gam.ravel(), z, w]``), zero by default.

    Returns ``(log, StopReason)``.
    """
    settings = settings or SolverSettings()
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    tol = settings.event_tol(t0)
    t_end = t0 + horizon

    if integrands is not None:
        aux0 = np.zeros(integrands.size) if aux0 is None else np.asarray(aux0, dtype=float)
        y0 = np.concatenate([x0, aux0])

        def rhs(t, y):
            x = y[:n]
            return np.concatenate([field(x), integrands.derivative(x)])
    else:
        y0 = x0.copy()

        def rhs(t, y):
            return np.asarray(field(y), dtype=float)

    if guard is not None:
        g0 = guard(t0, x0)
        if not g0 < 0:
            raise ValueError(f"guard must be negative at the segment start, got {g0}")

    ts, ys = [t0], [y0]
    next_k = 1
    stop = None

    if not np.all(np.isfinite(y0)):
        return _pack(ts, ys, n, integrands), StopReason(Stop.STATE_NONFINITE, t0)

    solver = DOP853(rhs, t0, y0, t_end, rtol=settings.rtol, atol=settings.atol,
                    max_step=settings.max_step)
    t_prev = t0
    while stop is None:
        solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            stop = StopReason(Stop.STATE_NONFINITE, ts[-1])
            break
        t_new = solver.t
        finished = solver.status == "finished"
        sol = solver.dense_output()
        checks = []
        while True:
            tk = t0 + next_k * settings.dt_log
            if tk >= t_new or tk >= t_end - 1e-9 * settings.dt_log:
                break
            checks.append(tk)
            next_k += 1
        # the step endpoint is checked against the guard but only logged at the end
        checks.append(t_new)
        for tk in checks:
            at_end = tk == t_new
            yk = solver.y.copy() if at_end else sol(tk)
            if not np.all(np.isfinite(yk)):
                stop = StopReason(Stop.STATE_NONFINITE, ts[-1])
                break
            if guard is not None and guard(tk, yk[:n]) >= 0:
                t_star = _bisect(guard, sol, t_prev, tk, n, tol)
                ts.append(t_star)
                ys.append(solver.y.copy() if t_star == t_new else sol(t_star))
                stop = StopReason(Stop.GUARD_CROSSED, t_star)
                break
            if not at_end or finished:
                ts.append(tk)
                ys.append(yk)
            t_prev = tk
        if stop is None and finished:
            ts[-1] = t_end
            stop = StopReason(Stop.HORIZON_REACHED, t_end)
    return _pack(ts, ys, n, integrands), stop


def _bisect(guard, sol, lo, hi, n, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if guard(mid, sol(mid)[:n]) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _pack(ts, ys, n, integrands):
    t = np.array(ts)
    Y = np.array(ys)
    log = TrajectoryLog(t=t, x=Y[:, :n])
    if integrands is not None:
        l, m = integrands.l, integrands.m
        o = n
        log.F = Y[:, o:o + n]
        o += n
        log.Gam = Y[:, o:o + n * l].reshape(len(t), n, l)
        o += n * l
        log.z = Y[:, o:o + n]
        o += n
        log.w = Y[:, o:o + m]
        log.u = np.array([integrands.control(x) for x in log.x])
    return log
