"""Plants, nominal controller families and Lyapunov pairs.

A plant is ``xdot = f(x, u) + g(x, u) @ theta`` with ``theta`` unknown.  A
controller family supplies the nominal feedback ``k(theta, x)`` together with
the Lyapunov-like pair ``V(theta, x) <= Q(theta, x)`` used by the event
trigger.

Built-in models:

``example_4_2(c, k1, k2)``
    planar linear plant ``x1' = x2, x2' = theta (x1 + c x2) + u``.
``example_4_3(k1, k2, k3)``
    ``x1' = x2, x2' = x1^2 + theta1 x2 + x3, x3' = theta2 x1^2 + u`` with a
    feedback-linearizing controller.
``linear(A, B, C_list, gain_table)``
    ``x' = (A + sum theta_i C_i) x + B u`` with ``u = K_theta x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm, solve_continuous_lyapunov

ZERO_TOL = 1e-12


class ModelError(ValueError):
    """Rejected model configuration."""


def _as_vec(v, name="vector"):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True)
class PlantModel:
    """``xdot = f(x, u) + g(x, u) theta``.

    ``rows`` is the optional one-parameter-per-equation tag: parameter ``i``
    enters only equation ``rows[i]`` (zero-based).
    """

    n: int
    m: int
    l: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    rows: tuple[int, ...] | None = None
    name: str = "plant"

    def __post_init__(self):
        x0, u0 = np.zeros(self.n), np.zeros(self.m)
        f0 = np.asarray(self.f(x0, u0), dtype=float)
        g0 = np.asarray(self.g(x0, u0), dtype=float)
        if f0.shape != (self.n,):
            raise ModelError(f"f returns shape {f0.shape}, expected ({self.n},)")
        if g0.shape != (self.n, self.l):
            raise ModelError(f"g returns shape {g0.shape}, expected ({self.n}, {self.l})")
        if np.max(np.abs(f0), initial=0.0) > ZERO_TOL or np.max(np.abs(g0), initial=0.0) > ZERO_TOL:
            raise ModelError("f(0, 0) and g(0, 0) must vanish")
        if self.rows is not None:
            self._check_rows()

    def _check_rows(self):
        rows = tuple(self.rows)
        if len(rows) != self.l:
            raise ModelError(f"need one row index per parameter, got {len(rows)} for l={self.l}")
        if len(set(rows)) != len(rows):
            raise ModelError(f"row indices {rows} are not distinct")
        if any(not 0 <= r < self.n for r in rows):
            raise ModelError(f"row indices {rows} out of range")
        rng = np.random.default_rng(0)
        mask = np.ones((self.n, self.l), dtype=bool)
        for i, r in enumerate(rows):
            mask[r, i] = False
        for _ in range(20):
            G = np.asarray(self.g(rng.normal(size=self.n), rng.normal(size=self.m)))
            if np.max(np.abs(G[mask]), initial=0.0) > ZERO_TOL:
                raise ModelError("regressor has entries outside the tagged rows")

    def rhs(self, x, u, theta) -> np.ndarray:
        return self.f(x, u) + self.g(x, u) @ theta


@dataclass(frozen=True)
class ControllerFamily:
    """Nominal feedback ``k(theta, x)`` with Lyapunov pair ``V <= Q``."""

    k: Callable[[np.ndarray, np.ndarray], np.ndarray]
    V: Callable[[np.ndarray, np.ndarray], float]
    Q: Callable[[np.ndarray, np.ndarray], float]

    def spot_check(self, thetas: Sequence[np.ndarray], n: int, n_samples: int = 20,
                   seed: int = 0) -> None:
        """Sample-based check of k(theta, 0) = 0, positivity and V <= Q.

        Positive definiteness and the uniform coercivity assumption cannot be
        decided for arbitrary callables; this only catches gross errors.
        """
        rng = np.random.default_rng(seed)
        zero = np.zeros(n)
        for th in thetas:
            th = np.asarray(th, dtype=float)
            if np.max(np.abs(self.k(th, zero))) > ZERO_TOL:
                raise ModelError(f"k(theta, 0) != 0 at theta={th}")
            if abs(self.V(th, zero)) > ZERO_TOL or abs(self.Q(th, zero)) > ZERO_TOL:
                raise ModelError(f"V or Q nonzero at the origin for theta={th}")
            for _ in range(n_samples):
                x = rng.normal(size=n) * rng.choice([1e-2, 1.0, 10.0])
                v, q = self.V(th, x), self.Q(th, x)
                if not (v > 0 and q > 0):
                    raise ModelError(f"V or Q not positive at x={x}, theta={th}")
                if v > q * (1 + 1e-12):
                    raise ModelError(f"V > Q at x={x}, theta={th}")


@dataclass(frozen=True)
class TriggerParams:
    """Dwell cap ``T``, trigger margin ``a(x)``, window length ``Ntilde``."""

    T: float
    a_coeff: float = 0.1
    Ntilde: int = 2
    eps_zero: float = 1e-12
    a_func: Callable[[np.ndarray], float] | None = None
    N_cert: int | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ModelError(f"T must be positive, got {self.T}")
        if self.a_func is None and not self.a_coeff > 0:
            raise ModelError(f"a_coeff must be positive, got {self.a_coeff}")
        if int(self.Ntilde) != self.Ntilde or self.Ntilde < 1:
            raise ModelError(f"Ntilde must be a positive integer, got {self.Ntilde}")
        if self.N_cert is not None and not self.Ntilde > self.N_cert:
            raise ModelError(
                f"Ntilde={self.Ntilde} must exceed the certified N={self.N_cert}")

    def a(self, x) -> float:
        if self.a_func is not None:
            return float(self.a_func(x))
        return self.a_coeff * float(np.dot(x, x))


# -- exponential bound ------------------------------------------------------

def spectral_abscissa(A) -> float:
    return float(np.max(np.linalg.eigvals(np.asarray(A, dtype=float)).real))


def estimate_exp_bound(A_cl, omega: float, horizon: float | None = None,
                       n_points: int = 2000) -> float:
    """Smallest ``M >= 1`` with ``|exp(t A_cl)| <= M exp(-omega t)`` on a grid.

    The grid is ``n_points`` equally spaced times on ``[0, horizon]`` with
    ``horizon = 50 / omega`` by default.  A spectral abscissa equal to
    ``-omega`` is accepted; for a defective boundary mode the result is only
    a grid maximum.
    """
    A = np.asarray(A_cl, dtype=float)
    if not omega > 0:
        raise ModelError(f"rate must be positive, got {omega}")
    alpha = spectral_abscissa(A)
    # equality is allowed (diagonalizable boundary modes stay bounded)
    if alpha > -omega + 1e-12 * max(1.0, omega):
        raise ModelError(
            f"closed loop not stable enough: spectral abscissa {alpha:.6g} "
            f"exceeds -omega = {-omega:.6g}")
    horizon = 50.0 / omega if horizon is None else horizon
    h = horizon / (n_points - 1)
    step = expm(h * A) * np.exp(omega * h)
    phi = np.eye(len(A))
    best = 1.0
    for _ in range(n_points - 1):
        phi = phi @ step
        best = max(best, np.linalg.norm(phi, 2))
    return best


# -- models -----------------------------------------------------------------

@dataclass(frozen=True)
class LinearPlant:
    """``x' = (A + sum theta_i C_i) x + B u`` with affine gains.

    ``K_theta = K0 + sum theta_i K[i]``.  ``omega_fraction`` sets the decay
    rate used for ``M(theta)`` as a fraction of the closed-loop stability
    margin, unless ``omega`` fixes it.
    """

    A: np.ndarray
    B: np.ndarray
    C: tuple[np.ndarray, ...]
    K0: np.ndarray
    K: tuple[np.ndarray, ...]
    omega: float | None = None
    omega_fraction: float = 0.5

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ModelError("A must be square")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise ModelError(f"B must have {n} rows")
        m = self.B.shape[1]
        if any(C.shape != (n, n) for C in self.C):
            raise ModelError("each C_i must be n x n")
        if self.K0.shape != (m, n) or any(K.shape != (m, n) for K in self.K):
            raise ModelError(f"gain matrices must be {m} x {n}")
        if len(self.K) != len(self.C):
            raise ModelError("need one gain slope per parameter")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def l(self):
        return len(self.C)

    def gain(self, theta) -> np.ndarray:
        theta = _as_vec(theta)
        return self.K0 + sum(t * K for t, K in zip(theta, self.K))

    def open_matrix(self, theta) -> np.ndarray:
        theta = _as_vec(theta)
        return self.A + sum(t * C for t, C in zip(theta, self.C))

    def closed_loop_matrix(self, theta, theta_hat=None) -> np.ndarray:
        """``A + sum theta_i C_i + B K_{theta_hat}`` (``theta_hat`` defaults to ``theta``)."""
        theta_hat = theta if theta_hat is None else theta_hat
        return self.open_matrix(theta) + self.B @ self.gain(theta_hat)

    def rate(self, theta) -> float:
        alpha = spectral_abscissa(self.closed_loop_matrix(theta))
        if alpha >= 0:
            raise ModelError(f"closed loop at theta={theta} is not Hurwitz (abscissa {alpha:.6g})")
        if self.omega is not None:
            if alpha > -self.omega:
                raise ModelError(
                    f"spectral abscissa {alpha:.6g} exceeds -omega = {-self.omega:.6g}")
            return self.omega
        return -self.omega_fraction * alpha

    def M(self, theta) -> float:
        return _cached_M(self, tuple(np.asarray(theta, dtype=float).ravel()))

    def L_star(self, x) -> np.ndarray:
        """``L* x = [C_1 x, ..., C_l x]`` as an ``n x l`` matrix."""
        return np.column_stack([C @ x for C in self.C])

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


@lru_cache(maxsize=256)
def _cached_M(plant: LinearPlant, theta: tuple) -> float:
    th = np.array(theta)
    return estimate_exp_bound(plant.closed_loop_matrix(th), plant.rate(th))


@dataclass(frozen=True)
class Model:
    """A named plant together with its controller family."""

    name: str
    params: dict
    plant: PlantModel
    controller: ControllerFamily
    linear: LinearPlant | None = None
    N_cert: int | None = None
    extras: dict = field(default_factory=dict)


def closed_loop_field(plant: PlantModel, ctrl: ControllerFamily, theta_true, theta_hat):
    """``x -> f(x, k(theta_hat, x)) + g(x, k(theta_hat, x)) theta_true``."""
    theta_true = _as_vec(theta_true, "theta_true")
    theta_hat = _as_vec(theta_hat, "theta_hat")
    if theta_true.shape != (plant.l,) or theta_hat.shape != (plant.l,):
        raise ModelError(f"parameter vectors must have length {plant.l}")

    def field(x):
        x = np.asarray(x, dtype=float)
        if x.shape != (plant.n,):
            raise ModelError(f"state must have length {plant.n}")
        u = ctrl.k(theta_hat, x)
        return plant.f(x, u) + plant.g(x, u) @ theta_true

    return field


def _lyap(A_cl):
    # A' P + P A = -I
    return solve_continuous_lyapunov(A_cl.T, -np.eye(len(A_cl)))


def companion(coeffs) -> np.ndarray:
    """Companion matrix with last row ``-coeffs``."""
    n = len(coeffs)
    A = np.eye(n, k=1)
    A[-1] = -np.asarray(coeffs, dtype=float)
    return A


def example_4_2(c: float, k1: float, k2: float) -> Model:
    """``x1' = x2, x2' = theta (x1 + c x2) + u``, ``k = -k1 x1 - k2 x2 - theta (x1 + c x2)``."""
    if not (k1 > 0 and k2 > 0):
        raise ModelError(f"example_4_2 needs k1, k2 > 0 (got {k1}, {k2})")
    c, k1, k2 = float(c), float(k1), float(k2)

    def f(x, u):
        return np.array([x[1], u[0]])

    def g(x, u):
        return np.array([[0.0], [x[0] + c * x[1]]])

    def k(th, x):
        return np.array([-k1 * x[0] - k2 * x[1] - th[0] * (x[0] + c * x[1])])

    P = _lyap(companion([k1, k2]))

    def V(th, x):
        return float(x @ P @ x)

    plant = PlantModel(2, 1, 1, f, g, rows=(1,), name="example_4_2")
    ctrl = ControllerFamily(k, V, V)
    lin = LinearPlant(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]), B=np.array([[0.0], [1.0]]),
        C=(np.array([[0.0, 0.0], [1.0, c]]),),
        K0=np.array([[-k1, -k2]]), K=(np.array([[-1.0, -c]]),))
    return Model("example_4_2", {"c": c, "k1": k1, "k2": k2}, plant, ctrl,
                 linear=lin, N_cert=1, extras={"P": P})


def example_4_3(k1: float, k2: float, k3: float) -> Model:
    """Nonlinear two-parameter example with feedback-linearizing control."""
    if not (k1 > 0 and k2 > 0 and k3 > 0 and k2 * k3 > k1):
        raise ModelError(f"example_4_3 needs k1, k2, k3 > 0 and k2*k3 > k1 (got {k1}, {k2}, {k3})")
    k1, k2, k3 = float(k1), float(k2), float(k3)

    def f(x, u):
        return np.array([x[1], x[0] ** 2 + x[2], u[0]])

    def g(x, u):
        return np.array([[0.0, 0.0], [x[1], 0.0], [0.0, x[0] ** 2]])

    def k(th, x):
        w = x[0] ** 2 + th[0] * x[1] + x[2]
        return np.array([-k1 * x[0] - k2 * x[1] - 2 * x[0] * x[1]
                         - (th[0] + k3) * w - th[1] * x[0] ** 2])

    P = _lyap(companion([k1, k2, k3]))

    def V(th, x):
        xi = np.array([x[0], x[1], x[0] ** 2 + th[0] * x[1] + x[2]])
        return float(xi @ P @ xi)

    plant = PlantModel(3, 1, 2, f, g, rows=(1, 2), name="example_4_3")
    return Model("example_4_3", {"k1": k1, "k2": k2, "k3": k3}, plant,
                 ControllerFamily(k, V, V), N_cert=2, extras={"P": P})


def linear(A, B, C_list=None, gain_table=None, C=None) -> Model:
    """Linear plant with ``V = |x|^2`` and ``Q = M(theta)^2 |x|^2``.

    ``gain_table`` holds ``K0`` and a list ``K`` of per-parameter slopes, and
    optionally ``omega`` or ``omega_fraction``.  ``C`` is accepted as an
    alias of ``C_list``.
    """
    C_list = C if C_list is None else C_list
    if C_list is None or gain_table is None:
        raise ModelError("linear model needs C_list and gain_table")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    Cs = tuple(np.atleast_2d(np.asarray(C, dtype=float)) for C in C_list)
    K0 = np.atleast_2d(np.asarray(gain_table["K0"], dtype=float))
    Ks = tuple(np.atleast_2d(np.asarray(K, dtype=float))
               for K in gain_table.get("K", [np.zeros_like(K0)] * len(Cs)))
    lin = LinearPlant(A, B, Cs, K0, Ks, omega=gain_table.get("omega"),
                      omega_fraction=gain_table.get("omega_fraction", 0.5))
    n, m, l = lin.n, lin.m, lin.l

    def f(x, u):
        return A @ x + B @ u

    def g(x, u):
        return lin.L_star(x)

    def k(th, x):
        return lin.gain(th) @ x

    def V(th, x):
        return float(x @ x)

    def Q(th, x):
        return lin.M(th) ** 2 * float(x @ x)

    plant = PlantModel(n, m, l, f, g, name="linear")
    params = {"A": A.tolist(), "B": B.tolist(), "C": [C.tolist() for C in Cs],
              "gain_table": {"K0": K0.tolist(), "K": [K.tolist() for K in Ks]}}
    return Model("linear", params, plant, ControllerFamily(k, V, Q), linear=lin, N_cert=1)


MODELS = {
    "example_4_2": example_4_2,
    "example_4_3": example_4_3,
    "linear": linear,
}


def build_model(name: str, **params) -> Model:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return factory(**params)


def lyapunov_pair_for_builtin(model_id: str, gains: dict, theta):
    """``(V(theta, .), Q(theta, .))`` for a built-in model at fixed ``theta``."""
    model = build_model(model_id, **gains)
    th = _as_vec(theta)
    ctrl = model.controller
    return (lambda x: ctrl.V(th, np.asarray(x, dtype=float)),
            lambda x: ctrl.Q(th, np.asarray(x, dtype=float)))
