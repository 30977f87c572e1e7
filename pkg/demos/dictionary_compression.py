"""Compress a hump-shaped lag curve with a small Legendre dictionary.

A high-frequency window of m lags enters the regression through L << m
dictionary columns.  This script shows the two facts that make that work:
the scaled dictionary Gram is nearly diagonal (columns do not interfere),
and a few coefficients reproduce a smooth weight curve almost exactly.
"""

import numpy as np

from panelmidas import beta_weights, build_dictionary

m = 24

for L in (3, 4, 5):
    d = build_dictionary(m, L)
    gram = m * d.W.T @ d.W
    off = np.max(np.abs(gram - np.diag(np.diag(gram))))
    print(f"L={L}: scaled Gram diag {np.diag(gram).round(3)}, "
          f"max off-diagonal {off:.2e}")

print("\nthe diagonal tracks 1/(2l+1), the norms of unnormalized Legendre")
print("polynomials, and the off-diagonal stays at the 1/m discretization")
print("floor, so penalizing dictionary coefficients is well conditioned.")

# a slowly decaying hump, the kind of lag profile the estimator targets
curve = beta_weights(m, 3.0, 3.0)

print("\nprojection error of the curve onto the dictionary span:")
for L in (1, 2, 3, 4, 5, 6):
    d = build_dictionary(m, L)
    coefs, *_ = np.linalg.lstsq(d.W, curve / m, rcond=None)
    err = np.max(np.abs(d.W @ coefs - curve / m)) * m
    print(f"  L={L}: {len(coefs)} coefficients, max abs error {err:.2e}")

print("\nthe hump is symmetric, so odd degrees add nothing (errors move in")
print("pairs), and being a quartic it is captured exactly at L=5; rougher")
print("curves decay geometrically instead of terminating.")
