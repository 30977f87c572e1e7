"""Desk-scale rejection frequency study.

Runs the full benchmark loop (simulate, compress, cross-validate, fit,
debias, test) on a reduced panel at 60 replications per cell: one null
column (weight scale 0, frequencies should sit near the 5% level) and one
alternative column (scale 1/3, frequencies should be high).  Takes about
a minute; scale replications and panel size up for publication numbers.
"""

import time

from panelmidas import CvConfig, DgpConfig, ExperimentGrid, run_experiment

grid = ExperimentGrid(
    models=(("sgl-midas", "pooled"), ("lasso-umidas", "pooled")),
    weight_scales=(0.0, 1.0 / 3.0),
    bandwidths=(10.0, 20.0),
    replications=60,
    base_seed=42,
    dgp=DgpConfig(n_entities=15, n_periods=40, n_covariates=10,
                  common_intercept=True),
    cv=CvConfig(n_folds=5, n_lambda=10, lambda_ratio=0.05),
)

start = time.time()
result = run_experiment(grid)
print(result.to_text())
print(f"elapsed: {time.time() - start:.1f}s "
      f"({grid.replications} replications per cell)")
