"""A small Monte Carlo sweep over the measurement noise.

This is the ``fig3`` preset with fewer trials, so it finishes in a few
seconds. Each trial draws a sound speed in 1400-1600 m/s, sensor errors
and measurement noise from its own seeded streams. The same trial index
reuses those streams at every grid point, which keeps the curves smooth.
For the full 1000-trial run use ``uwloc simulate --preset fig3``.
"""

import sys

from uwloc import harness

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 200
exp = harness.figure_presets(trials=trials)["fig3"]
results = harness.run_experiment(exp, seed=0)


def col(name):
    return harness.series_by_name(results, name).values_db


print(f"{trials} trials per point, sensor error fixed at 0 dB\n")
print("sigma_d^2   position MSE / bound     velocity MSE / bound     speed MSE / bound")
for k, level in enumerate(exp.grid):
    print(f"{level:6.0f}      {col('mse_u')[k]:6.2f} / {col('crlb_u')[k]:6.2f}         "
          f"{col('mse_udot')[k]:6.2f} / {col('crlb_udot')[k]:6.2f}         "
          f"{col('mse_c')[k]:6.2f} / {col('crlb_c')[k]:6.2f}")
