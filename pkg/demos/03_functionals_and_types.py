"""Slope-vector combinatorics and the generalized energy family.

The partial order on equal-sum nonincreasing tuples, the block-checkpoint
shortcut, phi_alpha monotonicity, separation of types by the alpha grid,
critical values 2 pi phi_alpha(i(mu + N)), and the trace-projection bound.
"""

import numpy as np

from hymflow import hn
from hymflow import functionals as fn

print("(1,1) <= (2,0):", hn.leq([1, 1], [2, 0]))
print("(1,0,-1) <= (1,1,-2):", hn.leq([1, 0, -1], [1, 1, -2]))
print("(2,0) <= (1,1):", hn.leq([2, 0], [1, 1]))

sv = hn.SlopeVector(values=(1.0, 1.0, 0.0), partition=(2, 3))
print("block-checkpoint comparison agrees with the order:",
      hn.shatz_sufficient(sv, [2, 0, 0]) == hn.leq([1, 1, 0], [2, 0, 0]))

print("phi_alpha monotone along (1,1) <= (2,0):",
      hn.phi_monotone_check([1, 1], [2, 0], [1.0, 1.5, 2.0, 3.0]))

print("(2,0) vs (1,1) separate on the alpha grid:",
      not hn.distinguish_types([2, 0], [1, 1]))
print("(3,1,0) vs (2,2,0) separate on the alpha grid:",
      not hn.distinguish_types([3, 1, 0], [2, 2, 0]))

print("critical value of (1,0):   ", fn.hym_of_type([1, 0], 2, 0),
      "= 2 pi:", 2 * np.pi)
print("critical value of (1,-1):  ", fn.hym_of_type([1, -1], 2, 0),
      "= 4 pi:", 4 * np.pi)

L = np.diag([2.0, 1.0]).astype(complex)
for pi_vec in (np.array([0.0, 1.0]), np.array([1.0, 0.0])):
    pi = np.diag(pi_vec).astype(complex)
    lhs, rhs, ok = fn.trace_projection_bound(L, pi)
    print(f"tr(L pi) = {lhs:.1f} <= top-eigenvalue sum {rhs:.1f}: {ok}")
