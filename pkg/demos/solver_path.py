"""Walk the sparse-group solver down a lambda path.

Builds a small regression with three active groups out of ten, then
solves the penalized problem on a decreasing lambda grid for three mixes
of the penalty: pure LASSO (gamma=1), pure group LASSO (gamma=0), and an
even blend.  The printout tracks how many groups and how many single
coefficients survive at each lambda.
"""

import numpy as np

from panelmidas import (DesignProblem, GroupStructure, PenaltyConfig,
                        SolverConfig, lambda_grid, lambda_max, solve)

rng = np.random.default_rng(3)
n, n_groups, gsize = 200, 10, 4
p = n_groups * gsize

X = rng.standard_normal((n, p))
beta = np.zeros(p)
for g in (0, 3, 7):  # three active groups, two nonzeros each
    beta[g * gsize:g * gsize + 2] = rng.uniform(0.5, 1.5, size=2)
y = X @ beta + rng.standard_normal(n)

groups = GroupStructure.from_sizes([gsize] * n_groups,
                                   [f"g{k}" for k in range(n_groups)])
prob = DesignProblem(yvec=y, X=X, groups=groups, intercept_mode="none",
                     n_entities=1, n_periods=n)
cfg = SolverConfig(tolerance=1e-10)

for gamma in (1.0, 0.5, 0.0):
    lmax = lambda_max(prob, PenaltyConfig(lam=1.0, gamma=gamma, groups=groups))
    print(f"\ngamma={gamma}: lambda_max={lmax:.4f}")
    warm = None
    for lam in lambda_grid(lmax, 8, 0.01):
        res = solve(prob, PenaltyConfig(lam=lam, gamma=gamma, groups=groups),
                    cfg, warm_start=warm)
        warm = res.coefficients
        b = res.slopes
        live_groups = sum(bool(np.any(b[np.asarray(part)] != 0.0))
                          for part in groups.partition)
        print(f"  lam={lam:9.5f}  nonzeros={int(np.sum(b != 0)):3d}  "
              f"groups={live_groups:2d}  objective={res.objective:.5f}  "
              f"iters={res.iterations}")

print("\nat gamma=0 whole groups enter together; at gamma=1 coefficients")
print("enter one at a time; the blend keeps group structure while zeroing")
print("individual deadweight inside active groups.")
