"""Exception hierarchy shared by every module of the package."""


class LocalizationError(Exception):
    """Base class for numerical failures.

    ``stage`` is filled in by :func:`uwloc.estimator.estimate` so callers can
    tell which part of the pipeline gave up.
    """

    def __init__(self, message="", stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class InvalidParameter(LocalizationError, ValueError):
    pass


class DegenerateGeometry(LocalizationError):
    pass


class NotPSD(LocalizationError):
    pass


class SingularCovariance(LocalizationError):
    pass


class SingularFim(LocalizationError):
    pass


class DegenerateProjection(LocalizationError):
    pass


class SingularWeighting(LocalizationError):
    pass


class RankDeficient(LocalizationError):
    pass


class NonPositiveSpeedSquare(LocalizationError):
    pass


class EmptyEnsemble(LocalizationError, ValueError):
    pass


class ConfigError(ValueError):
    """Bad scenario/measurement/experiment file or inconsistent dimensions."""
