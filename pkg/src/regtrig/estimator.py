"""Regressor integrals, Gram systems and the minimum-distance update.

For a window ``[mu, tau]`` with

    p(t, s) = x(t) - x(s) - (F(t) - F(s)),    q(t, s) = Gam(t) - Gam(s)

the Gram pair is ``G = int int q'q``, ``Z = int int q'p`` over the square
``[mu, tau]^2``.  Along exact trajectories ``p = q theta``, hence
``Z = G theta``.

The double integral uses the tensor-product trapezoid rule on the log grid.
With weights ``w_k`` and ``W = sum w_k`` the double sum collapses to

    sum_ab w_a w_b (Y_a - Y_b)'(X_a - X_b) = 2 W sum_k w_k (Y_k - Ybar)'(X_k - Xbar)

where ``Xbar`` is the weighted mean; this is evaluated in O(K) instead of
O(K^2) and avoids the cancellation of the uncentred expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrator import TrajectoryLog

RANK_TOL = 1e-9


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class GramSystem:
    G: np.ndarray
    Z: np.ndarray
    mu: float
    tau: float

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        object.__setattr__(self, "G", 0.5 * (G + G.T))
        object.__setattr__(self, "Z", np.atleast_1d(np.asarray(self.Z, dtype=float)))
        if self.mu > self.tau:
            raise EstimatorError(f"window start {self.mu} after end {self.tau}")

    @property
    def l(self) -> int:
        return len(self.Z)

    def residual(self, theta) -> float:
        return float(np.linalg.norm(self.G @ np.asarray(theta, dtype=float) - self.Z))

    def rank(self, rank_tol: float = RANK_TOL) -> int:
        ev = np.linalg.eigvalsh(self.G)
        top = ev.max(initial=0.0)
        if top <= 0:
            return 0
        return int(np.sum(ev > rank_tol * top))

    def is_psd(self) -> bool:
        ev = np.linalg.eigvalsh(self.G)
        return bool(ev.min() >= -1e-10 * (1 + max(ev.max(), 0.0)))


@dataclass(frozen=True)
class EstimateUpdate:
    previous: np.ndarray
    new: np.ndarray
    rank: int
    mu: float
    tau: float

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.new - self.previous))


def compute_mu(event_times, next_event: float, Ntilde: int, T: float) -> float:
    """Earliest past event time no older than ``Ntilde * T`` before ``next_event``."""
    times = np.asarray(event_times, dtype=float)
    if len(times) == 0:
        raise EstimatorError("no past event times")
    threshold = next_event - Ntilde * T
    feasible = times[times >= threshold]
    if len(feasible) == 0:
        raise EstimatorError(
            f"no event time in [{threshold}, {next_event}]; the dwell cap was violated upstream")
    return float(feasible.min())


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros(len(t))
    if len(t) > 1:
        h = np.diff(t)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    return w


def double_trapezoid(t, Y, X):
    """``int int (Y(t) - Y(s))' (X(t) - X(s)) ds dt`` on the grid ``t``.

    ``Y`` has shape ``(K, n, l)`` and ``X`` shape ``(K, n)`` or ``(K, n, r)``.
    """
    w = trapezoid_weights(t)
    W = w.sum()
    if W == 0:
        shape = (Y.shape[2],) + X.shape[2:]
        return np.zeros(shape)
    Yc = Y - np.tensordot(w, Y, axes=1) / W
    Xc = X - np.tensordot(w, X, axes=1) / W
    if X.ndim == 2:
        return 2 * W * np.einsum("k,kni,kn->i", w, Yc, Xc)
    return 2 * W * np.einsum("k,kni,knj->ij", w, Yc, Xc)


def gram_pair(log: TrajectoryLog, mu: float, tau: float) -> GramSystem:
    if not log.has_integrals:
        raise EstimatorError("log carries no running integrals")
    if mu > tau:
        raise EstimatorError(f"window start {mu} after end {tau}")
    try:
        s = log.window(mu, tau)
    except ValueError as exc:
        raise EstimatorError(str(exc)) from None
    t = log.t[s]
    P = log.x[s] - log.F[s]
    Gam = log.Gam[s]
    G = double_trapezoid(t, Gam, Gam)
    Z = double_trapezoid(t, Gam, P)
    return GramSystem(G, Z, mu, tau)


def gram_pair_bruteforce(log: TrajectoryLog, mu: float, tau: float) -> GramSystem:
    """Direct O(K^2) tensor trapezoid over the triangle ``t >= s``, doubled.

    Slow; kept as an independent check on :func:`gram_pair`.
    """
    s = log.window(mu, tau)
    t = log.t[s]
    X, F, Gam = log.x[s], log.F[s], log.Gam[s]
    w = trapezoid_weights(t)
    l = Gam.shape[2]
    G = np.zeros((l, l))
    Z = np.zeros(l)
    for a in range(len(t)):
        for b in range(a):
            q = Gam[a] - Gam[b]
            p = X[a] - X[b] - (F[a] - F[b])
            G += w[a] * w[b] * q.T @ q
            Z += w[a] * w[b] * q.T @ p
    # diagonal terms vanish since q(t, t) = 0
    return GramSystem(2 * G, 2 * Z, mu, tau)


def linear_filter_gram(log: TrajectoryLog, mu: float, tau: float, L_star, A, B) -> GramSystem:
    """Gram pair from the filter states ``z' = x``, ``w' = u``.

    Uses ``y = x - A z - B w`` in place of ``x - F`` and ``L*(z)`` in place
    of ``Gam``; on linear plants these coincide.
    """
    if log.z is None or log.w is None:
        raise EstimatorError("log carries no filter states")
    if mu > tau:
        raise EstimatorError(f"window start {mu} after end {tau}")
    try:
        s = log.window(mu, tau)
    except ValueError as exc:
        raise EstimatorError(str(exc)) from None
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    t, x, z, w = log.t[s], log.x[s], log.z[s], log.w[s]
    y = x - z @ A.T - w @ B.T
    Lz = np.array([L_star(zk) for zk in z])
    Q = double_trapezoid(t, Lz, Lz)
    q = double_trapezoid(t, Lz, y)
    return GramSystem(Q, q, mu, tau)


def ls_update(gs: GramSystem, theta_prev, rank_tol: float = RANK_TOL) -> EstimateUpdate:
    """Closest point to ``theta_prev`` on ``{v : G v = Z}``.

    Computed as ``theta_prev + pinv(G) (Z - G theta_prev)`` with eigenvalues
    of ``G`` below ``rank_tol * lambda_max`` treated as zero.  For an
    inconsistent system this is the least-residual point closest to
    ``theta_prev``.  A residual ``Z - G theta_prev`` at the rounding level of
    its own evaluation leaves the estimate unchanged.
    """
    theta_prev = np.atleast_1d(np.asarray(theta_prev, dtype=float))
    ev, U = np.linalg.eigh(gs.G)
    top = ev.max(initial=0.0)
    if top <= 0:
        return EstimateUpdate(theta_prev.copy(), theta_prev.copy(), 0, gs.mu, gs.tau)
    keep = ev > rank_tol * top
    Uk = U[:, keep]
    r = gs.Z - gs.G @ theta_prev
    # theta_prev already solves the system to rounding: it is its own closest point
    noise = 64 * np.finfo(float).eps * (np.linalg.norm(gs.Z) + top * np.linalg.norm(theta_prev))
    if np.linalg.norm(r) <= noise:
        return EstimateUpdate(theta_prev.copy(), theta_prev.copy(), int(keep.sum()), gs.mu, gs.tau)
    step = Uk @ ((Uk.T @ r) / ev[keep])
    return EstimateUpdate(theta_prev.copy(), theta_prev + step, int(keep.sum()), gs.mu, gs.tau)
