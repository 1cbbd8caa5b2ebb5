"""Sparse multivariate polynomials with real coefficients.

A :class:`Polynomial` over ``n`` variables stores a mapping from exponent
tuples to float coefficients.  Coefficients with magnitude below
:data:`PRUNE_TOL` are dropped after every operation, so the zero polynomial
has no terms.  Terms are kept in sorted order which makes printing and
comparisons reproducible.

The textual syntax used in config files is::

    3.5*x1^2*x3 - x2 + 0.25

Variables default to ``x1..xn``; other names can be supplied to
:meth:`Polynomial.parse`.  ``str(p)`` prints coefficients with ``repr`` so
that ``Polynomial.parse(str(p), n) == p`` exactly.
"""

from __future__ import annotations

import re
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

PRUNE_TOL = 1e-12

Exponent = tuple


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Exponent, float] | None = None):
        if nvars < 1:
            raise ValueError(f"variable count must be positive, got {nvars}")
        clean = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars or any(e < 0 for e in exp):
                raise ValueError(f"bad exponent {exp} for {nvars} variables")
            coef = float(coef)
            if abs(coef) >= PRUNE_TOL or not np.isfinite(coef):
                clean[exp] = coef
        self.nvars = nvars
        self._terms = MappingProxyType(dict(sorted(clean.items())))

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> Polynomial:
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, j: int) -> Polynomial:
        """The coordinate polynomial ``x_{j+1}`` (``j`` is zero-based)."""
        if not 0 <= j < nvars:
            raise ValueError(f"variable index {j} out of range for {nvars} variables")
        exp = [0] * nvars
        exp[j] = 1
        return cls(nvars, {tuple(exp): 1.0})

    @classmethod
    def variables(cls, nvars: int) -> list[Polynomial]:
        return [cls.variable(nvars, j) for j in range(nvars)]

    @classmethod
    def linear_form(cls, coeffs: Sequence[float]) -> Polynomial:
        n = len(coeffs)
        terms = {}
        for j, c in enumerate(coeffs):
            exp = [0] * n
            exp[j] = 1
            terms[tuple(exp)] = c
        return cls(n, terms)

    # -- basic properties ---------------------------------------------------

    @property
    def terms(self) -> Mapping[Exponent, float]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self._terms), default=-1)

    def is_linear_form(self) -> bool:
        """True if every term has total degree exactly one (zero counts)."""
        return all(sum(e) == 1 for e in self._terms)

    def linear_coefficients(self) -> np.ndarray:
        if not self.is_linear_form():
            raise ValueError("polynomial is not a linear form")
        out = np.zeros(self.nvars)
        for exp, coef in self._terms.items():
            out[exp.index(1)] = coef
        return out

    def coefficient(self, exp: Exponent) -> float:
        return self._terms.get(tuple(exp), 0.0)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError(
                    f"variable count mismatch: {self.nvars} vs {other.nvars}")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for exp, coef in other._terms.items():
            terms[exp] = terms.get(exp, 0.0) + coef
        return Polynomial(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.nvars, {e: c * other for e, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                exp = tuple(a + b for a, b in zip(e1, e2))
                terms[exp] = terms.get(exp, 0.0) + c1 * c2
        return Polynomial(self.nvars, terms)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self * (1.0 / other)
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def diff(self, j: int) -> Polynomial:
        """Partial derivative with respect to variable ``j`` (zero-based)."""
        terms: dict = {}
        for exp, coef in self._terms.items():
            if exp[j] == 0:
                continue
            new = list(exp)
            new[j] -= 1
            new = tuple(new)
            terms[new] = terms.get(new, 0.0) + coef * exp[j]
        return Polynomial(self.nvars, terms)

    def gradient(self) -> list[Polynomial]:
        return [self.diff(j) for j in range(self.nvars)]

    def compose(self, images: Sequence[Polynomial]) -> Polynomial:
        """Substitute ``images[j]`` for variable ``j``.

        All images must share one variable count, which becomes the variable
        count of the result.
        """
        if len(images) != self.nvars:
            raise ValueError(f"need {self.nvars} images, got {len(images)}")
        m = images[0].nvars
        if any(im.nvars != m for im in images):
            raise ValueError("images must share a variable count")
        powers: list[dict[int, Polynomial]] = [{0: Polynomial.constant(m, 1.0)} for _ in images]

        def power(j, k):
            cache = powers[j]
            if k not in cache:
                cache[k] = power(j, k - 1) * images[j]
            return cache[k]

        result = Polynomial.zero(m)
        for exp, coef in self._terms.items():
            term = Polynomial.constant(m, coef)
            for j, k in enumerate(exp):
                if k:
                    term = term * power(j, k)
            result = result + term
        return result

    def substitute(self, values: Mapping[int, float]) -> Polynomial:
        """Fix some variables to numbers and drop them from the variable list."""
        keep = [j for j in range(self.nvars) if j not in values]
        if not keep:
            raise ValueError("cannot substitute every variable; use eval")
        m = len(keep)
        images = []
        for j in range(self.nvars):
            if j in values:
                images.append(Polynomial.constant(m, values[j]))
            else:
                images.append(Polynomial.variable(m, keep.index(j)))
        return self.compose(images)

    def extend(self, nvars: int) -> Polynomial:
        """Embed into a larger variable set by appending unused variables."""
        if nvars < self.nvars:
            raise ValueError("cannot shrink the variable set")
        pad = (0,) * (nvars - self.nvars)
        return Polynomial(nvars, {e + pad: c for e, c in self._terms.items()})

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x) -> float | np.ndarray:
        return poly_eval(self, x)

    # -- comparison and printing -------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and dict(self._terms) == dict(other._terms)

    def __hash__(self):
        return hash((self.nvars, tuple(self._terms.items())))

    def max_coefficient_diff(self, other: Polynomial) -> float:
        other = self._coerce(other)
        keys = set(self._terms) | set(other._terms)
        return max((abs(self.coefficient(k) - other.coefficient(k)) for k in keys), default=0.0)

    def allclose(self, other: Polynomial, tol: float = 1e-10) -> bool:
        return self.max_coefficient_diff(other) <= tol

    def __repr__(self):
        return f"Polynomial({self.nvars}, {str(self)!r})"

    def to_string(self, names: Sequence[str] | None = None) -> str:
        names = names or [f"x{j + 1}" for j in range(self.nvars)]
        if not self._terms:
            return "0"
        parts = []
        # highest degree first reads more naturally
        for exp, coef in sorted(self._terms.items(), key=lambda kv: (-sum(kv[0]), kv[0])):
            mono = "*".join(
                names[j] if k == 1 else f"{names[j]}^{k}"
                for j, k in enumerate(exp) if k)
            mag = abs(coef)
            if not mono:
                body = repr(mag)
            elif mag == 1.0:
                body = mono
            else:
                body = f"{mag!r}*{mono}"
            sign = "-" if coef < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    __str__ = to_string

    @classmethod
    def parse(cls, text: str, nvars: int | None = None,
              variables: Sequence[str] | None = None) -> Polynomial:
        """Parse the textual polynomial syntax.

        Either ``nvars`` (variables ``x1..xn``) or an explicit list of
        variable names must be given.
        """
        if variables is None:
            if nvars is None:
                raise ValueError("give nvars or variables")
            variables = [f"x{j + 1}" for j in range(nvars)]
        return _Parser(text, list(variables)).parse()


# -- parsing --------------------------------------------------------------

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
    | (?P<op>[-+*^()])
    )""", re.VERBOSE)


class PolynomialSyntaxError(ValueError):
    pass


class _Parser:
    def __init__(self, text, names):
        self.names = names
        self.n = len(names)
        self.tokens = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise PolynomialSyntaxError(f"unexpected character at {pos}: {text[pos:]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind)))
            pos = m.end()
            while pos < len(text) and text[pos].isspace():
                pos += 1
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self):
        if not self.tokens:
            raise PolynomialSyntaxError("empty polynomial")
        p = self.expr()
        if self.i != len(self.tokens):
            raise PolynomialSyntaxError(f"trailing input at token {self.peek()[1]!r}")
        return p

    def expr(self):
        sign = 1.0
        kind, val = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        acc = self.term() * sign
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                t = self.term()
                acc = acc + t if val == "+" else acc - t
            else:
                return acc

    def term(self):
        acc = self.factor()
        while True:
            kind, val = self.peek()
            if kind == "op" and val == "*":
                self.take()
                acc = acc * self.factor()
            elif kind in ("num", "name") or (kind == "op" and val == "("):
                acc = acc * self.factor()
            else:
                return acc

    def factor(self):
        kind, val = self.take()
        if kind == "num":
            base = Polynomial.constant(self.n, float(val))
        elif kind == "name":
            if val not in self.names:
                raise PolynomialSyntaxError(f"unknown variable {val!r}")
            base = Polynomial.variable(self.n, self.names.index(val))
        elif kind == "op" and val == "(":
            base = self.expr()
            if self.take() != ("op", ")"):
                raise PolynomialSyntaxError("missing ')'")
        else:
            raise PolynomialSyntaxError(f"unexpected token {val!r}")
        kind, val = self.peek()
        if kind == "op" and val == "^":
            self.take()
            kind, val = self.take()
            if kind != "num" or not val.isdigit():
                raise PolynomialSyntaxError("exponent must be a non-negative integer")
            base = base ** int(val)
        return base


# -- evaluation -------------------------------------------------------------

def poly_eval(p: Polynomial, x) -> float | np.ndarray:
    """Evaluate ``p`` at a point (shape ``(n,)``) or at points (``(P, n)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (p.nvars,):
        raise ValueError(f"point has shape {x.shape}, polynomial has {p.nvars} variables")
    if not p.terms:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
    exps = np.array(list(p.terms.keys()), dtype=float)
    coefs = np.array(list(p.terms.values()))
    mono = np.prod(x[..., None, :] ** exps, axis=-1)
    out = mono @ coefs
    return float(out) if x.ndim == 1 else out


class CompiledPolys:
    """Stacked dense evaluation of several polynomials and their Jacobian.

    Used by the zero-set search, which evaluates the same list at many
    points in batches.
    """

    def __init__(self, polys: Sequence[Polynomial]):
        if not polys:
            raise ValueError("need at least one polynomial")
        self.nvars = polys[0].nvars
        self.size = len(polys)
        self._vals = self._stack(polys)
        self._grads = self._stack([g for p in polys for g in p.gradient()])

    @staticmethod
    def _stack(polys):
        n = polys[0].nvars
        exps = sorted({e for p in polys for e in p.terms} | {(0,) * n})
        index = {e: i for i, e in enumerate(exps)}
        mat = np.zeros((len(exps), len(polys)))
        for k, p in enumerate(polys):
            for e, c in p.terms.items():
                mat[index[e], k] = c
        return np.array(exps, dtype=float), mat

    def _apply(self, packed, X):
        exps, mat = packed
        mono = np.prod(X[:, None, :] ** exps[None], axis=-1)
        return mono @ mat

    def values(self, X) -> np.ndarray:
        """Shape ``(P, k)`` values at points ``X`` of shape ``(P, n)``."""
        return self._apply(self._vals, np.atleast_2d(X))

    def jacobian(self, X) -> np.ndarray:
        """Shape ``(P, k, n)``."""
        X = np.atleast_2d(X)
        return self._apply(self._grads, X).reshape(len(X), self.size, self.nvars)


# -- vector fields and Lie derivatives -------------------------------------

class PolyVectorField:
    """``n`` polynomial components over ``n`` variables."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Polynomial]):
        comps = tuple(components)
        if not comps:
            raise ValueError("empty vector field")
        n = comps[0].nvars
        if len(comps) != n or any(c.nvars != n for c in comps):
            raise ValueError(
                f"vector field needs {n} components over {n} variables")
        self.components = comps

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(poly_eval(c, x)) for c in self.components], axis=-1)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __repr__(self):
        return "PolyVectorField([" + ", ".join(repr(str(c)) for c in self.components) + "])"


def lie_derivative(h: Polynomial, F: PolyVectorField) -> Polynomial:
    """``L_F h = grad(h) . F``."""
    if h.nvars != F.dim:
        raise ValueError(f"h has {h.nvars} variables but F has dimension {F.dim}")
    out = Polynomial.zero(h.nvars)
    for j, Fj in enumerate(F.components):
        dh = h.diff(j)
        if not dh.is_zero():
            out = out + dh * Fj
    return out


def repeated_lie(h: Polynomial, F: PolyVectorField, j: int) -> Polynomial:
    if j < 0:
        raise ValueError("derivative order must be non-negative")
    if h.nvars != F.dim:
        raise ValueError(f"h has {h.nvars} variables but F has dimension {F.dim}")
    for _ in range(j):
        h = lie_derivative(h, F)
    return h


def lie_chain(h: Polynomial, F: PolyVectorField, J: int) -> list[Polynomial]:
    """``[h, L_F h, ..., L_F^(J) h]``."""
    chain = [h]
    for _ in range(J):
        chain.append(lie_derivative(chain[-1], F))
    return chain
