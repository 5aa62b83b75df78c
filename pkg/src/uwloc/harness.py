"""Monte Carlo sweeps: per-trial data generation, MSE in dB and CSV output.

Every trial owns three random streams (speed, measurement noise, sensor
errors) derived from ``(seed, trial)``. The same trial index reuses the
same streams at every grid point, so neighbouring points of a sweep see
common random numbers and the curves come out smooth.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import io

import numpy as np

from . import crlb
from .config import Scenario, default_scenario
from .errors import ConfigError, EmptyEnsemble, LocalizationError
from .estimator import WEIGHTING_MODES, estimate
from .model import MeasurementSet, measurements_from
from ._linalg import psd_factor
from .noise import correlation_block, db_to_sigma, standard_q_beta, trial_streams

SWEEPS = ("sigma_d_db", "sigma_s_db", "delta_c")
SERIES = ("mse_u", "mse_udot", "mse_c", "crlb_u", "crlb_udot", "crlb_c")
UNITS = {"u": "m^2", "udot": "m^2/s^2", "c": "(m/s)^2"}
DB_FLOOR = -120.0
CSV_COLUMNS = ("sweep_value", "mse_u_db", "mse_udot_db", "mse_c_db",
               "crlb_u_db", "crlb_udot_db", "crlb_c_db", "failed_trials")
CRLB_COLUMNS = ("sweep_var", "crlb_u_db", "crlb_udot_db", "crlb_c_db", "case")


@dataclass(frozen=True)
class Experiment:
    """One sweep of the Monte Carlo protocol.

    ``sigma_d_db`` and ``sigma_s_db`` hold the fixed noise levels; the
    swept one is overridden at each grid point. For a ``delta_c`` sweep
    the true speed is ``nominal_speed + delta_c`` and the estimator's
    measurement covariance is built with ``nominal_speed``.
    """

    name: str
    sweep: str
    grid: tuple
    trials: int = 1000
    sigma_d_db: float = 0.0
    sigma_s_db: float = 0.0
    modes: tuple = ("full_covariance",)
    n_iter: int = 2
    outputs: tuple = SERIES
    monte_carlo: bool = True
    nominal_speed: float = 1490.0
    scenario: Scenario = field(default=None, compare=False)

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        grid = tuple(float(g) for g in self.grid)
        if not grid or np.any(np.diff(grid) <= 0):
            raise ConfigError("grid must be non-empty and strictly increasing")
        object.__setattr__(self, "grid", grid)
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        for mode in self.modes:
            if mode not in WEIGHTING_MODES:
                raise ConfigError(f"unknown weighting mode {mode!r}")
        unknown = set(self.outputs) - set(SERIES)
        if unknown:
            raise ConfigError(f"unknown output series {sorted(unknown)}")
        if self.scenario is None:
            object.__setattr__(self, "scenario", default_scenario())

    def levels(self, value):
        """``(sigma_d_db, sigma_s_db, delta_c)`` at one grid value."""
        sd, ss, dc = self.sigma_d_db, self.sigma_s_db, None
        if self.sweep == "sigma_d_db":
            sd = value
        elif self.sweep == "sigma_s_db":
            ss = value
        else:
            dc = value
        return sd, ss, dc


@dataclass(frozen=True)
class SeriesResult:
    name: str
    grid: np.ndarray
    values_db: np.ndarray
    unit: str
    trials_failed: np.ndarray
    mode: str = "full_covariance"


def mse_db(errors):
    """``10 log10(sum ||e_i||^2 / N)``, floored at -120 dB."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise EmptyEnsemble("no error vectors to average")
    if errors.ndim == 1:
        errors = errors[None, :]
    mse = np.sum(errors ** 2) / errors.shape[0]
    return max(DB_FLOOR, 10.0 * np.log10(mse)) if mse > 0 else DB_FLOOR


def _to_db(value):
    if not np.isfinite(value):
        return float("nan")
    return max(DB_FLOOR, 10.0 * np.log10(value)) if value > 0 else DB_FLOOR


def crlb_point(scenario, sigma_d_db, sigma_s_db, speed, known_speed=False):
    """Squared root-trace bounds ``(u, udot, c)`` in dB at one operating point.

    A zero noise level on both sides gives a zero bound (the floor);
    a singular covariance otherwise gives ``nan``.
    """
    sd, ss = db_to_sigma(sigma_d_db), db_to_sigma(sigma_s_db)
    if sd == 0.0 and ss == 0.0:
        return (DB_FLOOR, DB_FLOOR, float("nan") if known_speed else DB_FLOOR)
    noise = replace(scenario, sigma_d_db=sigma_d_db, sigma_s_db=sigma_s_db).noise(speed)
    source = scenario.source.with_speed(speed)
    try:
        report = crlb.crlb_report(crlb.fim(source, scenario.array, noise), known_speed)
    except LocalizationError:
        return (float("nan"),) * 3
    return tuple(_to_db(v ** 2) for v in (report.crlb_u, report.crlb_udot, report.crlb_c))


@dataclass(frozen=True)
class _Factors:
    alpha: np.ndarray   # square root of blkdiag(R, 0.1 R)
    beta: np.ndarray    # square root of the unit-sigma Q_beta


def _factors(scenario):
    m = scenario.array.count
    r = correlation_block(m - 1)
    z = np.zeros_like(r)
    return _Factors(psd_factor(np.block([[r, z], [z, 0.1 * r]])),
                    psd_factor(standard_q_beta(scenario.b, 1.0)))


def _trial_speed(exp, rng, delta_c):
    if delta_c is not None:
        return exp.nominal_speed + delta_c
    lo_hi = exp.scenario.speed_range
    if lo_hi is None:
        return exp.scenario.source.speed
    return float(rng.uniform(*lo_hi))


def run_trial(exp, seed, trial, value, mode, factors=None):
    """Error ``xi_hat - xi`` for one trial (``None`` if the estimator failed) and the true speed.

    The estimator is handed the measurement covariance scaled with the
    trial's true speed, except in a ``delta_c`` sweep where only the
    nominal speed is known.
    """
    scenario = exp.scenario
    sd_db, ss_db, delta_c = exp.levels(value)
    sd, ss = db_to_sigma(sd_db), db_to_sigma(ss_db)
    streams = trial_streams(seed, trial)
    speed = _trial_speed(exp, streams["speed"], delta_c)
    factors = _factors(scenario) if factors is None else factors
    source = scenario.source.with_speed(speed)
    array = scenario.array

    beta_err = ss * (factors.beta @ streams["beta"].standard_normal(factors.beta.shape[1]))
    nominal = array.with_nominal_beta(array.beta_true + beta_err)
    alpha = measurements_from(source.position, source.velocity, speed,
                              array.true_positions, array.true_velocities).alpha
    alpha = alpha + (sd / speed) * (factors.alpha @ streams["alpha"].standard_normal(factors.alpha.shape[1]))
    assumed = exp.nominal_speed if delta_c is not None else speed
    noise = replace(scenario, sigma_d_db=sd_db, sigma_s_db=ss_db).noise(assumed)
    try:
        report = estimate(MeasurementSet.from_alpha(alpha), nominal.nominal(), noise,
                          n_iter=exp.n_iter, mode=mode)
    except LocalizationError:
        return None, speed
    return report.xi - source.xi, speed


def _grid_point(exp, seed, value, mode):
    """MSE and bound cells (dB) plus the failure count at one grid value."""
    errors, speeds = [], []
    factors = _factors(exp.scenario)
    for trial in range(exp.trials):
        err, speed = run_trial(exp, seed, trial, value, mode, factors)
        speeds.append(speed)
        if err is not None:
            errors.append(err)
    failed = exp.trials - len(errors)
    if errors:
        e = np.array(errors)
        mse = (mse_db(e[:, :3]), mse_db(e[:, 3:6]), mse_db(e[:, 6:]))
    else:
        mse = (float("nan"),) * 3
    sd_db, ss_db, delta_c = exp.levels(value)
    # The speed bound scales with c; evaluating at the RMS of the drawn
    # speeds matches an MSE averaged over those speeds.
    rms_speed = float(np.sqrt(np.mean(np.square(speeds))))
    bound = crlb_point(exp.scenario, sd_db, ss_db, rms_speed)
    return mse, bound, failed


def _crlb_only_point(exp, value):
    sd_db, ss_db, delta_c = exp.levels(value)
    speed = exp.nominal_speed + delta_c if delta_c is not None else exp.scenario.source.speed
    return crlb_point(exp.scenario, sd_db, ss_db, speed)


def _task(args):
    return _grid_point(*args)


def run_experiment(exp, seed=0, workers=1):
    """Run every grid point and return one :class:`SeriesResult` per requested series and mode.

    Trials whose estimate raises a :class:`~uwloc.errors.LocalizationError`
    are left out of the mean and counted in ``trials_failed``.
    ``workers > 1`` spreads grid points over processes; results do not
    depend on the worker count.
    """
    results = []
    grid = np.array(exp.grid)
    for mode in exp.modes:
        if exp.monte_carlo:
            tasks = [(exp, seed, value, mode) for value in exp.grid]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    cells = list(pool.map(_task, tasks))
            else:
                cells = [_task(t) for t in tasks]
        else:
            cells = [((float("nan"),) * 3, _crlb_only_point(exp, v), 0) for v in exp.grid]
        failed = np.array([c[2] for c in cells])
        columns = {}
        for k, q in enumerate(("u", "udot", "c")):
            columns[f"mse_{q}"] = np.array([c[0][k] for c in cells])
            columns[f"crlb_{q}"] = np.array([c[1][k] for c in cells])
        for name in exp.outputs:
            if name.startswith("mse") and not exp.monte_carlo:
                continue
            unit = UNITS[name.split("_", 1)[1]]
            results.append(SeriesResult(name, grid, columns[name], unit, failed, mode))
    return results


def crlb_sweep(exp):
    """Rows ``(value, u_db, udot_db, c_db, case)`` for both speed cases at each grid value."""
    rows = []
    for value in exp.grid:
        sd_db, ss_db, delta_c = exp.levels(value)
        speed = exp.nominal_speed + delta_c if delta_c is not None else exp.scenario.source.speed
        for case, known in (("known_c", True), ("unknown_c", False)):
            rows.append((value, *crlb_point(exp.scenario, sd_db, ss_db, speed, known), case))
    return rows


def _cell(value):
    return "nan" if not np.isfinite(value) else f"{value:.6f}"


def results_to_csv(results, extra_mode_column=None):
    """CSV text in the fixed column order; a ``weighting_mode`` column is added for several modes."""
    modes = list(dict.fromkeys(r.mode for r in results))
    with_mode = len(modes) > 1 if extra_mode_column is None else extra_mode_column
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + (("weighting_mode",) if with_mode else ()))
    for mode in modes:
        series = {r.name: r for r in results if r.mode == mode}
        first = next(iter(series.values()))
        for k, value in enumerate(first.grid):
            row = [_cell(value)]
            for col in CSV_COLUMNS[1:-1]:
                name = col[:-3]
                row.append(_cell(series[name].values_db[k]) if name in series else "nan")
            row.append(int(first.trials_failed[k]))
            if with_mode:
                row.append(mode)
            writer.writerow(row)
    return out.getvalue()


def crlb_rows_to_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CRLB_COLUMNS)
    for value, u, ud, c, case in rows:
        writer.writerow([_cell(value), _cell(u), _cell(ud), _cell(c), case])
    return out.getvalue()


def figure_presets(scenario=None, trials=1000):
    """Ready-made sweeps behind the ``fig2``-``fig6`` presets.

    ``fig2``/``fig2b`` are bound-only (sensor-error and measurement-noise
    sweeps); ``fig3``-``fig6`` are Monte Carlo runs.
    """
    scenario = default_scenario() if scenario is None else scenario
    levels = tuple(range(-5, 25, 5))
    wide = tuple(range(-20, 25, 5))
    common = dict(trials=trials, scenario=scenario)
    return {
        "fig2": Experiment("fig2", "sigma_s_db", wide, sigma_d_db=0.0, monte_carlo=False, **common),
        "fig2b": Experiment("fig2b", "sigma_d_db", wide, sigma_s_db=0.0, monte_carlo=False, **common),
        "fig3": Experiment("fig3", "sigma_d_db", levels, sigma_s_db=0.0, **common),
        "fig4": Experiment("fig4", "sigma_s_db", levels, sigma_d_db=0.0, **common),
        "fig5": Experiment("fig5", "delta_c", tuple(range(-70, 80, 10)),
                           sigma_d_db=-5.0, sigma_s_db=0.0, nominal_speed=1490.0, **common),
        "fig6": Experiment("fig6", "sigma_d_db", levels, sigma_s_db=0.0,
                           modes=WEIGHTING_MODES, **common),
    }


def series_by_name(results, name, mode="full_covariance"):
    for r in results:
        if r.name == name and r.mode == mode:
            return r
    raise KeyError(f"no series {name!r} for mode {mode!r}")
