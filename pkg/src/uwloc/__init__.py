"""Two-stage TDOA/FDOA localisation of a moving underwater source with unknown sound speed.

Modules:

* :mod:`uwloc.model` - geometry, measurement synthesis, reference sensor
* :mod:`uwloc.noise` - covariance structures and reproducible sampling
* :mod:`uwloc.crlb` - hybrid Fisher information and Cramer-Rao bounds
* :mod:`uwloc.estimator` - the two-stage weighted least-squares estimator
* :mod:`uwloc.analysis` - small-noise efficiency diagnostics
* :mod:`uwloc.harness` - Monte Carlo sweeps and CSV output
* :mod:`uwloc.config`, :mod:`uwloc.cli` - text files and the command line
"""

from .crlb import CrlbReport, crlb_report, fim
from .errors import ConfigError, LocalizationError
from .estimator import EstimateReport, estimate
from .model import MeasurementSet, NominalSensors, SensorArray, SourceState, true_measurements
from .noise import NoiseModel

__all__ = [
    "ConfigError", "CrlbReport", "EstimateReport", "LocalizationError", "MeasurementSet",
    "NoiseModel", "NominalSensors", "SensorArray", "SourceState", "crlb_report", "estimate",
    "fim", "true_measurements",
]
__version__ = "0.1.0"
