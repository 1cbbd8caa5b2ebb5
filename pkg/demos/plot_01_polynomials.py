"""
Polynomials and Lie derivatives
===============================

A short tour of the sparse polynomial type: parsing, evaluation and
derivatives along a polynomial vector field.
"""

# %%
# Polynomials are parsed from plain text and printed back in the same syntax.
import numpy as np

from regtrig import Polynomial, PolyVectorField, lie_chain, lie_derivative, poly_eval

p = Polynomial.parse("3.5*x1^2*x3 - x2", nvars=3)
print("p        =", p)
print("p(1,2,3) =", poly_eval(p, [1.0, 2.0, 3.0]))

# %%
# Evaluation is vectorised over rows of a sample array.
X = np.random.default_rng(0).normal(size=(4, 3))
print("batch    =", poly_eval(p, X))

# %%
# A vector field is a list of polynomials, one per state.  Here
# x1' = x2, x2' = x1^2 + x3, x3' = -x1 - 2 x2.
x1, x2, x3 = Polynomial.variables(3)
F = PolyVectorField([x2, x1 ** 2 + x3, -x1 - 2 * x2])

h = x1 ** 2
print("L_F h    =", lie_derivative(h, F))

# %%
# The chain h, L_F h, L_F^2 h, ... grows in degree quickly.
for j, q in enumerate(lie_chain(h, F, 4)):
    print(f"j={j}  degree {q.degree:2d}  terms {len(q.terms):3d}")
