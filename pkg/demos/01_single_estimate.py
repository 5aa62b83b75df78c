"""One noisy snapshot, one estimate, and how it compares with the bound.

Ten sensors sit on a 1 km cube; their reported positions and velocities
are off by a few metres and metres per second. The source moves slowly
and the sound speed is not known. We draw one set of TDOA/FDOA
measurements, run the two-stage estimator and put its error next to the
Cramer-Rao bound for the same operating point.
"""

import numpy as np

from uwloc import crlb, estimator, model, noise

rng = np.random.default_rng(2024)
source = model.default_source(1510.0)
array = model.default_array()

# sigma_d = 1 m of range-difference noise, sigma_s = 1 for the sensor errors
nm = noise.NoiseModel.standard(array.count, 1.0, 1.0, source.speed)

clean = model.true_measurements(source, array)
meas = model.MeasurementSet.from_alpha(noise.sample_gaussian(clean.alpha, nm.q_alpha, rng))
reported = noise.perturb_array(array, nm.q_beta, rng)

# The estimator only ever sees the reported (nominal) sensor parameters.
report = estimator.estimate(meas, reported.nominal(), nm)

print("true      u =", source.position, " udot =", source.velocity, " c =", source.speed)
print("estimated u =", np.round(report.position, 2), " udot =", np.round(report.velocity, 3),
      " c =", round(report.speed, 2))

bound = crlb.crlb_report(crlb.fim(source, array, nm))
std = np.sqrt(np.diag(report.cov_xi))
print(f"\nposition error {np.linalg.norm(report.position - source.position):6.2f} m, "
      f"predicted rms {np.linalg.norm(std[:3]):6.2f} m, bound {bound.crlb_u:6.2f} m")
print(f"velocity error {np.linalg.norm(report.velocity - source.velocity):6.3f} m/s, "
      f"predicted rms {np.linalg.norm(std[3:6]):6.3f} m/s, bound {bound.crlb_udot:6.3f} m/s")
print(f"speed error    {abs(report.speed - source.speed):6.2f} m/s, "
      f"predicted rms {std[6]:6.2f} m/s, bound {bound.crlb_c:6.2f} m/s")
