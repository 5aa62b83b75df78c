"""Noise covariances and reproducible random sampling.

Randomness contract: a single integer seed feeds :class:`numpy.random.SeedSequence`;
each Monte Carlo trial gets its own child sequences keyed by
``(trial, purpose)``, so extending a run with more trials never changes
the draws of earlier ones and the speed, measurement-noise and
sensor-error streams are independent.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import psd_factor
from .errors import InvalidParameter

# Per-sensor position-error weights of the reference scenario; velocity
# errors use half of these.
DEFAULT_B = np.array([1, 20, 10, 30, 20, 3, 2, 10, 1, 2], dtype=float)

PURPOSES = ("speed", "alpha", "beta")


def correlation_block(n):
    """``n x n`` matrix with unit diagonal and 0.5 everywhere else."""
    return 0.5 * np.ones((n, n)) + 0.5 * np.eye(n)


def standard_q_alpha(m, sigma_d, c):
    """Measurement covariance ``sigma_d^2 / c^2 * blkdiag(R, 0.1 R)``.

    :param m: number of sensors (the matrix is ``2(m-1)`` square)
    :param sigma_d: range-noise scale in metres
    :param c: propagation speed in m/s
    """
    if m < 2:
        raise InvalidParameter(f"need at least 2 sensors, got {m}")
    if not c > 0:
        raise InvalidParameter(f"propagation speed must be positive, got {c}")
    if sigma_d < 0:
        raise InvalidParameter(f"sigma_d must be non-negative, got {sigma_d}")
    r = correlation_block(m - 1)
    z = np.zeros_like(r)
    q = np.block([[r, z], [z, 0.1 * r]])
    return (sigma_d ** 2 / c ** 2) * q


def standard_q_beta(b, sigma_s):
    """Diagonal sensor-error covariance ``sigma_s^2 diag([b (x) 1_3, 0.5 b (x) 1_3])``."""
    b = np.asarray(b, dtype=float).reshape(-1)
    if np.any(b <= 0):
        raise InvalidParameter("every entry of b must be positive")
    if sigma_s < 0:
        raise InvalidParameter(f"sigma_s must be non-negative, got {sigma_s}")
    pos = np.repeat(b, 3)
    return np.diag(sigma_s ** 2 * np.concatenate([pos, 0.5 * pos]))


def db_to_sigma(value_db):
    """Scale ``sigma`` from ``10 log10(sigma^2)``."""
    return float(10.0 ** (value_db / 20.0))


@dataclass(frozen=True)
class NoiseModel:
    q_alpha: np.ndarray
    q_beta: np.ndarray
    sigma_d: float = float("nan")
    sigma_s: float = float("nan")

    def __post_init__(self):
        qa = np.array(self.q_alpha, dtype=float)
        qb = np.array(self.q_beta, dtype=float)
        for name, q in (("q_alpha", qa), ("q_beta", qb)):
            if q.ndim != 2 or q.shape[0] != q.shape[1]:
                raise InvalidParameter(f"{name} must be square, got {q.shape}")
            if q.shape[0] % 2:
                raise InvalidParameter(f"{name} must have even size, got {q.shape[0]}")
            scale = max(float(np.max(np.abs(q))), 1e-300)
            if np.max(np.abs(q - q.T)) > 1e-12 * scale:
                raise InvalidParameter(f"{name} is not symmetric")
            q.setflags(write=False)
        if qb.shape[0] != 6 * (qa.shape[0] // 2 + 1):
            raise InvalidParameter(
                f"q_alpha ({qa.shape[0]}) and q_beta ({qb.shape[0]}) disagree on the sensor count")
        object.__setattr__(self, "q_alpha", qa)
        object.__setattr__(self, "q_beta", qb)

    @classmethod
    def standard(cls, m, sigma_d, sigma_s, c, b=None):
        b = DEFAULT_B if b is None else b
        return cls(standard_q_alpha(m, sigma_d, c), standard_q_beta(b, sigma_s), sigma_d, sigma_s)

    @property
    def count(self):
        return self.q_alpha.shape[0] // 2 + 1


def sample_gaussian(mean, cov, rng, size=None, factor=None):
    """Draw ``mean + F z`` with ``F F^T = cov`` and ``z`` standard normal.

    Pass a precomputed ``factor`` (from :func:`uwloc._linalg.psd_factor`) to
    skip the factorisation inside hot loops. With ``size`` the result has
    shape ``(size, n)``.
    """
    mean = np.asarray(mean, dtype=float)
    if factor is None:
        factor = psd_factor(cov)
    k = factor.shape[1]
    if size is None:
        z = rng.standard_normal(k)
        return mean + factor @ z
    z = rng.standard_normal((size, k))
    return mean + z @ factor.T


def perturb_array(array, q_beta, rng, factor=None):
    """Return ``array`` with nominal parameters = truth + a draw of ``N(0, q_beta)``."""
    beta = array.beta_true
    if np.shape(q_beta) != (beta.size, beta.size) and factor is None:
        raise InvalidParameter(f"q_beta must be {beta.size} square for {array.count} sensors")
    return array.with_nominal_beta(sample_gaussian(beta, q_beta, rng, factor=factor))


def trial_streams(seed, trial):
    """Independent generators for one trial, keyed by purpose."""
    return {
        purpose: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, k)))
        for k, purpose in enumerate(PURPOSES)
    }
