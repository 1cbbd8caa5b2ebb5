"""
Estimate updates from a Gram system
===================================

The estimator moves the frozen estimate to the closest point of the
solution set of G v = Z.  With a rank-deficient G only the identifiable
directions change.
"""

# %%
import numpy as np

from regtrig import GramSystem, ls_update

theta_true = np.array([1.0, -2.0])
g = np.array([1.0, 1.0])
G = np.outer(g, g)                 # rank one: only theta1 + theta2 is seen
gs = GramSystem(G=G, Z=G @ theta_true, mu=0.0, tau=1.0)

prev = np.array([0.0, 0.0])
upd = ls_update(gs, prev)
print("rank      :", upd.rank)
print("new       :", upd.new)
print("residual  :", gs.residual(upd.new))

# %%
# The step is orthogonal to the null space of G.
null = np.array([1.0, -1.0]) / np.sqrt(2)
print("null part :", null @ (upd.new - prev))

# %%
# A full-rank system recovers theta exactly.
G2 = np.array([[2.0, 0.3], [0.3, 1.0]])
print("full rank :", ls_update(GramSystem(G2, G2 @ theta_true, 0.0, 1.0), prev).new)
