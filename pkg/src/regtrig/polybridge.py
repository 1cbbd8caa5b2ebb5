"""Polynomial renderings of plants in one-parameter-per-equation form.

A :class:`PolyModel` stores

* ``f``: ``n`` polynomials in ``(x, u)``,
* ``g``: ``l`` scalar polynomials in ``(x, u)``; parameter ``i`` enters
  equation ``rows[i]`` through ``g[i] * theta_i``,
* ``k``: ``m`` polynomials in ``(x, z)`` giving the feedback at parameter ``z``.

From these, :meth:`PolyModel.closed_field` builds

    F_z(x) = f(x, k(z, x)) + sum_i g_i(x, k(z, x)) theta_i e_{rows[i]}

as a :class:`~regtrig.polyalg.PolyVectorField`.  :func:`build_dual` pairs the
polynomial rendering of a built-in with its numeric callables and checks
that they agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import Model, ModelError, build_model, closed_loop_field
from .polyalg import Polynomial, PolyVectorField, poly_eval


@dataclass(frozen=True)
class PolyModel:
    n: int
    m: int
    l: int
    f: tuple[Polynomial, ...]
    g: tuple[Polynomial, ...]
    rows: tuple[int, ...]
    k: tuple[Polynomial, ...]
    name: str = "polynomial"

    def __post_init__(self):
        n, m, l = self.n, self.m, self.l
        if len(self.f) != n or any(p.nvars != n + m for p in self.f):
            raise ModelError(f"f needs {n} polynomials in {n + m} variables")
        if len(self.g) != l or any(p.nvars != n + m for p in self.g):
            raise ModelError(f"g needs {l} polynomials in {n + m} variables")
        if len(self.k) != m or any(p.nvars != n + l for p in self.k):
            raise ModelError(f"k needs {m} polynomials in {n + l} variables")
        if len(self.rows) != l or len(set(self.rows)) != l:
            raise ModelError(f"rows {self.rows} must be {l} distinct indices")
        if any(not 0 <= r < n for r in self.rows):
            raise ModelError(f"rows {self.rows} out of range for n={n}")

    def feedback(self, z) -> list[Polynomial]:
        """``k(z, .)`` as polynomials in ``x``."""
        z = np.asarray(z, dtype=float)
        values = {self.n + i: float(z[i]) for i in range(self.l)}
        return [p.substitute(values) for p in self.k]

    def _images(self, z):
        return Polynomial.variables(self.n) + self.feedback(z)

    def regressor(self, i: int, z) -> Polynomial:
        """``g_i(x, k(z, x))``."""
        return self.g[i].compose(self._images(z))

    def closed_field(self, theta, z) -> PolyVectorField:
        theta = np.asarray(theta, dtype=float)
        images = self._images(z)
        comps = [fj.compose(images) for fj in self.f]
        for i, r in enumerate(self.rows):
            comps[r] = comps[r] + self.g[i].compose(images) * float(theta[i])
        return PolyVectorField(comps)

    # -- file format --------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> PolyModel:
        """Build from ``{"n", "m", "l", "f", "g", "rows", "k"}``.

        ``f`` and ``g`` are strings over ``x1..xn, u1..um``; ``k`` over
        ``x1..xn, z1..zl``; ``rows`` are one-based equation indices.
        """
        try:
            n, m, l = int(doc["n"]), int(doc["m"]), int(doc["l"])
            xu = [f"x{j + 1}" for j in range(n)] + [f"u{j + 1}" for j in range(m)]
            xz = [f"x{j + 1}" for j in range(n)] + [f"z{j + 1}" for j in range(l)]
            f = tuple(Polynomial.parse(s, variables=xu) for s in doc["f"])
            g = tuple(Polynomial.parse(s, variables=xu) for s in doc["g"])
            k = tuple(Polynomial.parse(s, variables=xz) for s in doc["k"])
            rows = tuple(int(r) - 1 for r in doc["rows"])
        except KeyError as exc:
            raise ModelError(f"polynomial model is missing field {exc.args[0]!r}") from None
        return cls(n, m, l, f, g, rows, k, name=doc.get("name", "polynomial"))

    def to_dict(self) -> dict:
        xu = [f"x{j + 1}" for j in range(self.n)] + [f"u{j + 1}" for j in range(self.m)]
        xz = [f"x{j + 1}" for j in range(self.n)] + [f"z{j + 1}" for j in range(self.l)]
        return {
            "name": self.name, "n": self.n, "m": self.m, "l": self.l,
            "f": [p.to_string(xu) for p in self.f],
            "g": [p.to_string(xu) for p in self.g],
            "rows": [r + 1 for r in self.rows],
            "k": [p.to_string(xz) for p in self.k],
        }

    @classmethod
    def load(cls, path) -> PolyModel:
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- numeric forms ------------------------------------------------------

    def numeric_field(self, theta, z):
        F = self.closed_field(theta, z)
        return lambda x: F(x)


def example_4_2_poly(c: float, k1: float, k2: float) -> PolyModel:
    x1, x2, u1 = Polynomial.variables(3)
    f = (x2, u1)
    g = (x1 + c * x2,)
    X1, X2, Z1 = Polynomial.variables(3)
    k = (-k1 * X1 - k2 * X2 - Z1 * (X1 + c * X2),)
    return PolyModel(2, 1, 1, f, g, (1,), k, name="example_4_2")


def example_4_3_poly(k1: float, k2: float, k3: float) -> PolyModel:
    x1, x2, x3, u1 = Polynomial.variables(4)
    f = (x2, x1 ** 2 + x3, u1)
    g = (x2, x1 ** 2)
    X1, X2, X3, Z1, Z2 = Polynomial.variables(5)
    w = X1 ** 2 + Z1 * X2 + X3
    k = (-k1 * X1 - k2 * X2 - 2 * X1 * X2 - (Z1 + k3) * w - Z2 * X1 ** 2,)
    return PolyModel(3, 1, 2, f, g, (1, 2), k, name="example_4_3")


POLY_MODELS = {
    "example_4_2": example_4_2_poly,
    "example_4_3": example_4_3_poly,
}


def poly_model(name: str, **gains) -> PolyModel:
    try:
        return POLY_MODELS[name](**gains)
    except KeyError:
        raise ModelError(f"no polynomial rendering for model {name!r}") from None


class AgreementError(ModelError):
    pass


@dataclass(frozen=True)
class DualModel:
    model: Model
    poly: PolyModel
    theta: np.ndarray
    z: np.ndarray
    field_numeric: object
    field_poly: PolyVectorField
    regressors: tuple[Polynomial, ...]

    def check_agreement(self, n_points: int = 100, tol: float = 1e-10, seed=None) -> float:
        """Largest relative mismatch at random points of the unit ball.

        Compares the closed-loop fields and the regressor entries ``g_i``.
        """
        rng = np.random.default_rng(seed)
        n = self.poly.n
        worst, worst_x = 0.0, None
        for _ in range(n_points):
            d = rng.normal(size=n)
            x = d / np.linalg.norm(d) * rng.uniform() ** (1 / n)
            a = np.asarray(self.field_numeric(x))
            b = self.field_poly(x)
            plant, ctrl = self.model.plant, self.model.controller
            G = np.asarray(plant.g(x, ctrl.k(self.z, x)))
            a = np.concatenate([a, [G[r, i] for i, r in enumerate(self.poly.rows)]])
            b = np.concatenate([b, [poly_eval(h, x) for h in self.regressors]])
            err = np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a))
            if err > worst:
                worst, worst_x = err, x
        if worst > tol:
            raise AgreementError(
                f"numeric and polynomial fields differ by {worst:.3g} at x={worst_x}")
        return worst


def build_dual(model_id: str, gains: dict, theta, z, n_points: int = 100,
               seed: int = 0) -> DualModel:
    model = build_model(model_id, **gains)
    poly = poly_model(model_id, **gains)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    dual = DualModel(
        model, poly, theta, z,
        closed_loop_field(model.plant, model.controller, theta, z),
        poly.closed_field(theta, z),
        tuple(poly.regressor(i, z) for i in range(poly.l)))
    dual.check_agreement(n_points, seed=seed)
    return dual
