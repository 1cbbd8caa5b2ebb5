"""
Plants, controllers and decay bounds
====================================

Build the built-in planar plant, check that its nominal closed loop is
stable and bound the transient of the matrix exponential.
"""

# %%
import numpy as np

from regtrig import build_model, estimate_exp_bound
from regtrig.models import spectral_abscissa

m = build_model("example_4_2", c=1.0, k1=1.0, k2=3.0)
theta = np.array([2.0])
x = np.array([1.0, -0.5])
u = m.controller.k(theta, x)
print("u       =", u)
print("xdot    =", m.plant.f(x, u) + m.plant.g(x, u) @ theta)

# %%
# With matched estimate the closed loop is linear.  Its spectral abscissa
# fixes the best rate; ``estimate_exp_bound`` returns the overshoot M.
A_cl = np.array([[0.0, 1.0], [-1.0, -3.0]])
alpha = spectral_abscissa(A_cl)
omega = -0.5 * alpha
print(f"abscissa {alpha:.4f}  rate {omega:.4f}  M {estimate_exp_bound(A_cl, omega):.4f}")

# %%
# The Lyapunov function of the controller family is a quadratic form.
print("V(x)    =", m.controller.V(theta, x))
