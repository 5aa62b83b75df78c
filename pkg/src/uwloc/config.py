"""Plain-text scenario, measurement and report files.

One ``key = value`` pair per line; ``#`` starts a comment. Values are
numbers separated by spaces or commas. Sensors are numbered from 1 and
sensor 1 is the reference::

    source.position = 200 800 200
    source.velocity = -2 1.5 1
    source.speed = 1400 1600        # one value, or a range drawn per trial
    sensors[1].position = 0 1000 0
    sensors[1].velocity = 3 -2 2
    noise.sigma_d_db = 0
    noise.sigma_s_db = 0
    noise.b = 1 20 10 30 20 3 2 10 1 2
    noise.seed = 0

Noise levels are ``10 log10(sigma^2)``; ``-inf`` means noiseless. Without
``noise.b`` a ten-sensor layout uses the reference weights and any other
layout uses ones.

Optional per-sensor keys ``sensors[i].nominal_position`` and
``sensors[i].nominal_velocity`` give the erroneous values the estimator
sees; they default to the true ones.

A measurement file holds ``tdoa``, ``fdoa``, the nominal sensors as
``sensors[i].position`` / ``sensors[i].velocity`` and optionally the noise
keys plus ``noise.speed``, the propagation speed used to scale the
measurement covariance.
"""

from dataclasses import dataclass, field
import re

import numpy as np

from .errors import ConfigError, InvalidParameter
from .model import (DEFAULT_SOURCE_POSITION, DEFAULT_SOURCE_VELOCITY, DEFAULT_SENSOR_POSITIONS,
                    DEFAULT_SENSOR_VELOCITIES, MeasurementSet, NominalSensors, SensorArray, SourceState)
from .noise import DEFAULT_B, NoiseModel, db_to_sigma

SENSOR_KEY = re.compile(r"^sensors\[(\d+)\]\.(position|velocity|nominal_position|nominal_velocity)$")
SCENARIO_KEYS = {
    "source.position", "source.velocity", "source.speed",
    "noise.sigma_d_db", "noise.sigma_s_db", "noise.b", "noise.seed",
}
EXPERIMENT_KEYS = {
    "experiment.name", "experiment.sweep", "experiment.grid", "experiment.trials",
    "experiment.modes", "experiment.n_iter", "experiment.nominal_speed",
}
MEASUREMENT_KEYS = {"tdoa", "fdoa", "noise.sigma_d_db", "noise.sigma_s_db", "noise.b",
                    "noise.speed"}
DEFAULT_SPEED_RANGE = (1400.0, 1600.0)


@dataclass(frozen=True)
class Scenario:
    """Everything a simulation needs besides the sweep itself."""

    source: SourceState
    array: SensorArray
    sigma_d_db: float = 0.0
    sigma_s_db: float = 0.0
    b: tuple = tuple(DEFAULT_B)
    speed_range: tuple = None
    seed: int = 0

    @property
    def sigma_d(self):
        return db_to_sigma(self.sigma_d_db)

    @property
    def sigma_s(self):
        return db_to_sigma(self.sigma_s_db)

    def noise(self, speed=None):
        speed = self.source.speed if speed is None else speed
        return NoiseModel.standard(self.array.count, self.sigma_d, self.sigma_s, speed, self.b)


def default_scenario():
    """Ten-sensor reference layout, source at [200, 800, 200] m, speed drawn in [1400, 1600] m/s."""
    source = SourceState(DEFAULT_SOURCE_POSITION, DEFAULT_SOURCE_VELOCITY, 1500.0)
    array = SensorArray(DEFAULT_SENSOR_POSITIONS, DEFAULT_SENSOR_VELOCITIES)
    return Scenario(source, array, 0.0, 0.0, tuple(DEFAULT_B), DEFAULT_SPEED_RANGE, 0)


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class _Document:
    path: str
    entries: dict = field(default_factory=dict)

    def error(self, key, message):
        where = f"{self.path}:{self.entries[key].line}" if key in self.entries else self.path
        return ConfigError(f"{where}: {key}: {message}")

    def floats(self, key, count=None, required=True):
        if key not in self.entries:
            if required:
                raise ConfigError(f"{self.path}: missing required key {key!r}")
            return None
        text = self.entries[key].value
        try:
            values = np.array([float(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok])
        except ValueError:
            raise self.error(key, f"expected numbers, got {text!r}") from None
        if count is not None and values.size not in np.atleast_1d(count):
            raise self.error(key, f"expected {count} values, got {values.size}")
        # a level of -inf dB is how a noiseless setup is written
        bad = ~np.isfinite(values) & ~(key.endswith("_db") & (values == -np.inf))
        if np.any(bad):
            raise self.error(key, "values must be finite")
        return values

    def words(self, key, default=None):
        if key not in self.entries:
            return default
        return tuple(tok for tok in re.split(r"[,\s]+", self.entries[key].value.strip()) if tok)

    def integer(self, key, default):
        if key not in self.entries:
            return default
        value = self.floats(key, 1)[0]
        if value != int(value):
            raise self.error(key, f"expected an integer, got {value}")
        return int(value)


def parse_text(text, path="<string>", allowed=frozenset()):
    """Split ``key = value`` lines; unknown keys and duplicates are errors."""
    doc = _Document(path)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed and not SENSOR_KEY.match(key):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in doc.entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        doc.entries[key] = _Entry(value, lineno)
    return doc


def _sensor_rows(doc, min_sensors=None):
    """Per-sensor dictionaries, checked for a contiguous 1..M numbering.

    ``min_sensors`` adds a friendlier count check for commands that run
    the estimator.
    """
    rows = {}
    for key in doc.entries:
        match = SENSOR_KEY.match(key)
        if match:
            rows.setdefault(int(match.group(1)), {})[match.group(2)] = doc.floats(key, 3)
    if not rows:
        raise ConfigError(f"{doc.path}: missing required key 'sensors[1].position' (no sensors block)")
    count = max(rows)
    for i in range(1, count + 1):
        for part in ("position", "velocity"):
            if part not in rows.get(i, {}):
                raise ConfigError(f"{doc.path}: missing required key 'sensors[{i}].{part}'")
    if min_sensors is not None and count < min_sensors:
        raise ConfigError(
            f"{doc.path}: {count} sensors given; the estimator needs at least {min_sensors} "
            f"(its first stage has 9 unknowns and only 2(M-1) = {2 * (count - 1)} equations)")
    return [rows[i] for i in range(1, count + 1)]


def _noise_fields(doc, m):
    sd = doc.floats("noise.sigma_d_db", 1, required=False)
    ss = doc.floats("noise.sigma_s_db", 1, required=False)
    b = doc.floats("noise.b", m, required=False)
    if b is None:
        b = DEFAULT_B if m == DEFAULT_B.size else np.ones(m)
    elif np.any(b <= 0):
        raise doc.error("noise.b", "every weight must be positive")
    return (0.0 if sd is None else float(sd[0]), 0.0 if ss is None else float(ss[0]),
            tuple(float(v) for v in b))


def scenario_from_text(text, path="<string>", min_sensors=None):
    doc = parse_text(text, path, SCENARIO_KEYS)
    return _scenario(doc, path, min_sensors)


def _scenario(doc, path, min_sensors):
    rows = _sensor_rows(doc, min_sensors)
    speed = doc.floats("source.speed", (1, 2))
    if np.any(speed <= 0):
        raise doc.error("source.speed", "speed must be positive")
    speed_range = None
    if speed.size == 2:
        if not speed[0] < speed[1]:
            raise doc.error("source.speed", "range must be increasing")
        speed_range = (float(speed[0]), float(speed[1]))
    try:
        source = SourceState(doc.floats("source.position", 3), doc.floats("source.velocity", 3),
                             float(np.mean(speed)))
        pos = np.array([r["position"] for r in rows])
        vel = np.array([r["velocity"] for r in rows])
        npos = np.array([r.get("nominal_position", r["position"]) for r in rows])
        nvel = np.array([r.get("nominal_velocity", r["velocity"]) for r in rows])
        array = SensorArray(pos, vel, npos, nvel)
    except InvalidParameter as err:
        raise ConfigError(f"{path}: {err}") from None
    sd, ss, b = _noise_fields(doc, array.count)
    seed = doc.words("noise.seed", ("0",))
    try:
        seed = int(seed[0]) if len(seed) == 1 else -1
    except ValueError:
        seed = -1
    if not 0 <= seed < 2 ** 64:
        raise doc.error("noise.seed", "seed must be one unsigned 64-bit integer")
    return Scenario(source, array, sd, ss, b, speed_range, seed)


def read_scenario(path, min_sensors=None):
    """Parse a scenario file; ``"default"`` gives :func:`default_scenario`."""
    if str(path) == "default":
        return default_scenario()
    return scenario_from_text(_read(path), str(path), min_sensors)


def experiment_from_text(text, path="<string>", min_sensors=None):
    """A scenario plus ``experiment.*`` keys, as an :class:`~uwloc.harness.Experiment`.

    The noise levels in the ``noise`` block are the fixed ones; the swept
    level is overridden point by point.
    """
    from .harness import Experiment

    doc = parse_text(text, path, SCENARIO_KEYS | EXPERIMENT_KEYS)
    scenario = _scenario(doc, path, min_sensors)
    sweep = doc.words("experiment.sweep")
    if not sweep or len(sweep) != 1:
        raise ConfigError(f"{path}: missing required key 'experiment.sweep'")
    grid = doc.floats("experiment.grid")
    nominal = doc.floats("experiment.nominal_speed", 1, required=False)
    kwargs = dict(
        trials=doc.integer("experiment.trials", 1000),
        sigma_d_db=scenario.sigma_d_db, sigma_s_db=scenario.sigma_s_db,
        modes=doc.words("experiment.modes", ("full_covariance",)),
        n_iter=doc.integer("experiment.n_iter", 2),
        scenario=scenario,
    )
    if nominal is not None:
        kwargs["nominal_speed"] = float(nominal[0])
    name = doc.words("experiment.name", ("custom",))[0]
    try:
        return Experiment(name, sweep[0], tuple(grid), **kwargs)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from None


def read_experiment(path, min_sensors=None):
    return experiment_from_text(_read(path), str(path), min_sensors)


def load_scenario(path):
    """``(SourceState, SensorArray, NoiseModel)`` from a scenario file."""
    scenario = read_scenario(path)
    return scenario.source, scenario.array, scenario.noise()


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read file ({err.strerror})") from None


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.atleast_1d(values))


def _sensor_lines(positions, velocities, nominal_positions=None, nominal_velocities=None):
    lines = []
    for i in range(positions.shape[0]):
        lines.append(f"sensors[{i + 1}].position = {_fmt(positions[i])}")
        lines.append(f"sensors[{i + 1}].velocity = {_fmt(velocities[i])}")
        if nominal_positions is not None and not np.array_equal(nominal_positions[i], positions[i]):
            lines.append(f"sensors[{i + 1}].nominal_position = {_fmt(nominal_positions[i])}")
        if nominal_velocities is not None and not np.array_equal(nominal_velocities[i], velocities[i]):
            lines.append(f"sensors[{i + 1}].nominal_velocity = {_fmt(nominal_velocities[i])}")
    return lines


def scenario_to_text(scenario):
    """Inverse of :func:`scenario_from_text`; floats are written with ``repr`` so they round-trip."""
    src, arr = scenario.source, scenario.array
    speed = scenario.speed_range if scenario.speed_range is not None else src.speed
    lines = [
        f"source.position = {_fmt(src.position)}",
        f"source.velocity = {_fmt(src.velocity)}",
        f"source.speed = {_fmt(speed)}",
        *_sensor_lines(arr.true_positions, arr.true_velocities,
                       arr.nominal_positions, arr.nominal_velocities),
        f"noise.sigma_d_db = {_fmt(scenario.sigma_d_db)}",
        f"noise.sigma_s_db = {_fmt(scenario.sigma_s_db)}",
        f"noise.b = {_fmt(scenario.b)}",
        f"noise.seed = {scenario.seed}",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MeasurementFile:
    meas: MeasurementSet
    sensors: NominalSensors
    noise: NoiseModel = None


def measurement_from_text(text, path="<string>", min_sensors=None):
    doc = parse_text(text, path, MEASUREMENT_KEYS)
    rows = _sensor_rows(doc, min_sensors)
    for i, row in enumerate(rows, start=1):
        if "nominal_position" in row or "nominal_velocity" in row:
            raise ConfigError(f"{path}: sensors[{i}]: measurement files carry nominal values "
                              "as sensors[i].position / sensors[i].velocity")
    m = len(rows)
    sensors = NominalSensors(np.array([r["position"] for r in rows]),
                             np.array([r["velocity"] for r in rows]))
    meas = MeasurementSet(doc.floats("tdoa", m - 1), doc.floats("fdoa", m - 1))
    noise = None
    if any(k.startswith("noise.") for k in doc.entries):
        speed = doc.floats("noise.speed", 1)
        if speed[0] <= 0:
            raise doc.error("noise.speed", "speed must be positive")
        sd, ss, b = _noise_fields(doc, m)
        try:
            noise = NoiseModel.standard(m, db_to_sigma(sd), db_to_sigma(ss), float(speed[0]), b)
        except InvalidParameter as err:
            raise ConfigError(f"{path}: {err}") from None
    return MeasurementFile(meas, sensors, noise)


def read_measurements(path, min_sensors=None):
    return measurement_from_text(_read(path), str(path), min_sensors)


def measurement_to_text(meas, sensors, sigma_d_db=None, sigma_s_db=None, b=None, speed=None):
    lines = [f"tdoa = {_fmt(meas.tdoa)}", f"fdoa = {_fmt(meas.fdoa)}",
             *_sensor_lines(sensors.positions, sensors.velocities)]
    if sigma_d_db is not None:
        lines += [f"noise.sigma_d_db = {_fmt(sigma_d_db)}",
                  f"noise.sigma_s_db = {_fmt(sigma_s_db)}",
                  f"noise.b = {_fmt(b if b is not None else DEFAULT_B)}",
                  f"noise.speed = {_fmt(speed)}"]
    return "\n".join(lines) + "\n"


def report_to_text(report):
    """Estimate report: state, 7x7 covariance of ``[u, udot, c]`` and any warnings."""
    lines = [
        f"position = {_fmt(report.position)}",
        f"velocity = {_fmt(report.velocity)}",
        f"speed = {_fmt(report.speed)}",
        f"weighting_mode = {report.weighting_mode}",
        f"iterations = {report.iterations_used}",
    ]
    for k, row in enumerate(report.cov_xi, start=1):
        lines.append(f"covariance[{k}] = {_fmt(row)}")
    for k, note in enumerate(report.warnings, start=1):
        lines.append(f"warning[{k}] = {note}")
    return "\n".join(lines) + "\n"
