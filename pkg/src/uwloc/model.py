"""Geometry and the noiseless TDOA/FDOA measurement model.

Conventions used throughout the package:

* sensors are rows of ``(M, 3)`` arrays; row 0 is the reference sensor;
* the sensor parameter vector is ``beta = [s_1..s_M, sdot_1..sdot_M]``
  (all positions first, then all velocities), length ``6M``;
* ``tdoa[i-1] = (r_i - r_0) / c`` and ``fdoa[i-1] = (rdot_i - rdot_0) / c``
  for ``i = 1..M-1``; FDOA is the carrier-normalised, dimensionless rate.

Units are metres, seconds and m/s everywhere.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, InvalidParameter

MIN_SENSORS = 5


def _vec3(x, name):
    a = np.array(x, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise InvalidParameter(f"{name} must have 3 components, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter(f"{name} must be finite")
    a.setflags(write=False)
    return a


def _rows3(x, name, m=None):
    a = np.array(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise InvalidParameter(f"{name} must be an (M, 3) array, got shape {a.shape}")
    if m is not None and a.shape[0] != m:
        raise InvalidParameter(f"{name} has {a.shape[0]} rows, expected {m}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter(f"{name} must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SourceState:
    """Position (m), velocity (m/s) and propagation speed (m/s) of the source."""

    position: np.ndarray
    velocity: np.ndarray
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        speed = float(self.speed)
        if not np.isfinite(speed) or speed <= 0:
            raise InvalidParameter(f"speed must be positive and finite, got {self.speed}")
        object.__setattr__(self, "speed", speed)

    @property
    def theta(self):
        return np.concatenate([self.position, self.velocity])

    @property
    def xi(self):
        """``[u, udot, c]``, the seven quantities the estimator reports."""
        return np.concatenate([self.position, self.velocity, [self.speed]])

    def with_speed(self, speed):
        return SourceState(self.position, self.velocity, speed)

    def translated(self, shift):
        return SourceState(self.position + np.asarray(shift, float), self.velocity, self.speed)


@dataclass(frozen=True)
class NominalSensors:
    """The sensor parameters an estimator is allowed to see.

    Deliberately carries no true values, so anything typed against this
    class cannot peek at ground truth.
    """

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = _rows3(self.positions, "positions")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", _rows3(self.velocities, "velocities", pos.shape[0]))

    @property
    def count(self):
        return self.positions.shape[0]

    @property
    def beta(self):
        return np.concatenate([self.positions.ravel(), self.velocities.ravel()])

    def translated(self, shift):
        return NominalSensors(self.positions + np.asarray(shift, float), self.velocities)


@dataclass(frozen=True)
class SensorArray:
    """True and nominal sensor parameters, reference sensor in row 0.

    ``permutation[k]`` is the index, in the order originally supplied, of
    the sensor now stored in row ``k``.
    """

    true_positions: np.ndarray
    true_velocities: np.ndarray
    nominal_positions: np.ndarray = None
    nominal_velocities: np.ndarray = None
    permutation: tuple = field(default=None)

    def __post_init__(self):
        pos = _rows3(self.true_positions, "true_positions")
        m = pos.shape[0]
        if m < MIN_SENSORS:
            raise InvalidParameter(f"need at least {MIN_SENSORS} sensors, got {m}")
        vel = _rows3(self.true_velocities, "true_velocities", m)
        npos = pos if self.nominal_positions is None else _rows3(self.nominal_positions, "nominal_positions", m)
        nvel = vel if self.nominal_velocities is None else _rows3(self.nominal_velocities, "nominal_velocities", m)
        gaps = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        gaps[np.diag_indices(m)] = np.inf
        if np.min(gaps) == 0.0:
            raise InvalidParameter("two sensors share the same true position")
        perm = tuple(range(m)) if self.permutation is None else tuple(int(p) for p in self.permutation)
        if sorted(perm) != list(range(m)):
            raise InvalidParameter(f"permutation {perm} is not a permutation of 0..{m - 1}")
        for name, value in (("true_positions", pos), ("true_velocities", vel),
                            ("nominal_positions", npos), ("nominal_velocities", nvel),
                            ("permutation", perm)):
            object.__setattr__(self, name, value)

    @property
    def count(self):
        return self.true_positions.shape[0]

    @property
    def beta_true(self):
        return np.concatenate([self.true_positions.ravel(), self.true_velocities.ravel()])

    @property
    def beta_nominal(self):
        return np.concatenate([self.nominal_positions.ravel(), self.nominal_velocities.ravel()])

    def nominal(self):
        return NominalSensors(self.nominal_positions, self.nominal_velocities)

    def truth(self):
        """True parameters packaged as if they were nominal (noiseless studies)."""
        return NominalSensors(self.true_positions, self.true_velocities)

    def with_nominal(self, positions, velocities):
        return SensorArray(self.true_positions, self.true_velocities,
                           positions, velocities, self.permutation)

    def with_nominal_beta(self, beta):
        m = self.count
        beta = np.asarray(beta, dtype=float)
        return self.with_nominal(beta[:3 * m].reshape(m, 3), beta[3 * m:].reshape(m, 3))

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return SensorArray(self.true_positions + shift, self.true_velocities,
                           self.nominal_positions + shift, self.nominal_velocities,
                           self.permutation)

    def reordered(self, order):
        order = np.asarray(order, dtype=int)
        return SensorArray(self.true_positions[order], self.true_velocities[order],
                           self.nominal_positions[order], self.nominal_velocities[order],
                           tuple(self.permutation[k] for k in order))


@dataclass(frozen=True)
class MeasurementSet:
    """TDOA (s) and carrier-normalised FDOA against sensor 0."""

    tdoa: np.ndarray
    fdoa: np.ndarray

    def __post_init__(self):
        t = np.array(self.tdoa, dtype=float).reshape(-1)
        f = np.array(self.fdoa, dtype=float).reshape(-1)
        if t.shape != f.shape:
            raise InvalidParameter(f"tdoa and fdoa lengths differ ({t.size} vs {f.size})")
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "tdoa", t)
        object.__setattr__(self, "fdoa", f)

    @property
    def alpha(self):
        return np.concatenate([self.tdoa, self.fdoa])

    @classmethod
    def from_alpha(cls, alpha):
        alpha = np.asarray(alpha, dtype=float)
        n = alpha.size // 2
        return cls(alpha[:n], alpha[n:])


def range_(source, sensor_pos):
    """Euclidean distance between the source and one sensor position."""
    return float(np.linalg.norm(np.asarray(source.position) - np.asarray(sensor_pos, float)))


def range_rate(source, sensor_pos, sensor_vel):
    """Time derivative of :func:`range_` for a moving source and sensor."""
    diff = source.position - np.asarray(sensor_pos, float)
    r = np.linalg.norm(diff)
    if r == 0.0:
        raise DegenerateGeometry("range rate undefined: source coincides with sensor")
    return float(diff @ (source.velocity - np.asarray(sensor_vel, float)) / r)


def ranges(position, sensor_positions):
    return np.linalg.norm(np.asarray(position) - sensor_positions, axis=1)


def ranges_and_rates(position, velocity, sensor_positions, sensor_velocities):
    """Vectorised ranges and range rates for every sensor."""
    diff = np.asarray(position) - sensor_positions
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0.0):
        raise DegenerateGeometry("source coincides with a sensor")
    rdot = np.einsum("ij,ij->i", diff, np.asarray(velocity) - sensor_velocities) / r
    return r, rdot


def measurements_from(position, velocity, speed, sensor_positions, sensor_velocities):
    r, rdot = ranges_and_rates(position, velocity, sensor_positions, sensor_velocities)
    return MeasurementSet((r[1:] - r[0]) / speed, (rdot[1:] - rdot[0]) / speed)


def true_measurements(source, array):
    """Noiseless TDOA/FDOA generated from the true sensor parameters."""
    return measurements_from(source.position, source.velocity, source.speed,
                             array.true_positions, array.true_velocities)


def canonicalize_reference(array, ranges_hint=None, floor=0.05):
    """Move the chosen reference sensor into row 0.

    Without a hint the order is kept. With ``ranges_hint`` (one range per
    sensor, current order) the reference becomes the sensor with the
    smallest hinted range among those above ``floor * max(ranges_hint)``:
    close to the source, but not so close that ``u - s_ref`` nearly
    vanishes and the second-stage transform turns singular.
    """
    m = array.count
    if ranges_hint is None:
        return array
    hint = np.asarray(ranges_hint, dtype=float).reshape(-1)
    if hint.size != m:
        raise InvalidParameter(f"ranges_hint has {hint.size} entries, expected {m}")
    threshold = floor * np.max(hint)
    candidates = np.flatnonzero((hint > threshold) & (hint > 0))
    if candidates.size == 0:
        return array
    ref = int(candidates[np.argmin(hint[candidates])])
    if ref == 0:
        return array
    order = np.arange(m)
    order[[0, ref]] = order[[ref, 0]]
    return array.reordered(order)


# Sensor layout used in every numerical study: positions (m) and
# velocities (m/s) of the ten sensors, sensor 1 first.
DEFAULT_SENSOR_POSITIONS = np.array([
    [0, 1000, 0],
    [0, 0, 0],
    [0, 0, 1000],
    [0, 1000, 1000],
    [1000, 0, 0],
    [1000, 1000, 0],
    [1000, 0, 1000],
    [1000, 1000, 1000],
    [500, 500, 1000],
    [500, 500, 0],
], dtype=float)

DEFAULT_SENSOR_VELOCITIES = np.array([
    [3, -2, 2],
    [-3, 1, 2],
    [1, -2, 1],
    [1, 2, 3],
    [-2, 1, 1],
    [2, -1, 1],
    [1.2, -1.5, 1.5],
    [-1.5, 1.2, -1.2],
    [1.3, 1.3, 1.3],
    [2.5, 2.5, 2.5],
], dtype=float)

DEFAULT_SOURCE_POSITION = np.array([200.0, 800.0, 200.0])
DEFAULT_SOURCE_VELOCITY = np.array([-2.0, 1.5, 1.0])


def default_array():
    return SensorArray(DEFAULT_SENSOR_POSITIONS, DEFAULT_SENSOR_VELOCITIES)


def default_source(speed=1500.0):
    return SourceState(DEFAULT_SOURCE_POSITION, DEFAULT_SOURCE_VELOCITY, speed)
