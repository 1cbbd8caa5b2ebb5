"""
Integration up to a guard crossing
==================================

Integrate a damped oscillator until its energy falls below a fraction of
the initial value and compare with the closed-form crossing time.
"""

# %%
import numpy as np

from regtrig import SolverSettings, integrate_segment

A = np.array([[-0.5, 0.0], [0.0, -0.5]])
x0 = np.array([1.0, 1.0])


def field(x):
    return A @ x


# The energy |x|^2 = 2 exp(-t) reaches 0.5 at t = ln 4.
def guard(t, x):
    return 0.5 - x @ x


log, stop = integrate_segment(field, x0, 0.0, 5.0, guard=guard, settings=SolverSettings())
print("stop      :", stop)
print("crossing  :", stop.t, " exact", np.log(4.0))
print("error     :", abs(stop.t - np.log(4.0)))

# %%
# The log is sampled on a uniform grid; the last row is the crossing.
print("samples   :", len(log.t), " last state", log.x[-1])
