"""Does the estimator reach the bound when the noise is small?

To first order the estimator's covariance has the same shape as the
bound, with two matrices G3 and G4 standing in for the true Jacobians.
``efficiency_check`` builds them and reports how far each block sits
from its target, and how far apart the two information matrices are.

Two simplifications are available for comparison. The ``reduced``
stage-2 transform drops the error of the c**2 estimate inside the
second-stage design matrix. The ``uncorrected`` FDOA error vector uses
t where linearisation gives tdot. Only the full, corrected pair attains
the bound.
"""

from uwloc import analysis, model, noise

source, array = model.default_source(1500.0), model.default_array()
small = noise.NoiseModel.standard(10, noise.db_to_sigma(-30), noise.db_to_sigma(-30), 1500.0)

print(f"{'stage-2 / FDOA error':28s} {'info gap':>10s} {'worst G3':>10s} {'worst G4':>10s}")
for d2 in ("full", "reduced"):
    for ddot in ("corrected", "uncorrected"):
        check = analysis.efficiency_check(source, array, small, d2_form=d2, ddot_form=ddot)
        print(f"{d2 + ' / ' + ddot:28s} {check.max_rel_gap:10.2e} "
              f"{check.g3_max_deviation:10.2e} {check.g4_max_deviation:10.2e}")

check = analysis.efficiency_check(source, array, small, d2_form="reduced")
print("\nper-block G3 deviation with the reduced stage-2 transform:")
for name, value in check.g3_deviation.items():
    print(f"  {name:14s} {value:.3f}")

flags = analysis.condition_flags(source, array)
print("\nsmall-noise conditions (reference range, slow motion, short delay):", flags)
