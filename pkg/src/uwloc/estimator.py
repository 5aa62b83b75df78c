"""Two-stage weighted least squares for a moving source with unknown sound speed.

Stage 1 squares the TDOA equations (and differentiates them for FDOA)
into a pseudo-linear system in nine unknowns,

    phi1 = [u (3), udot (3), c * r1_hat, c**2, c * r1dot_hat],

where ``r1_hat``/``r1dot_hat`` are the range and range rate to the
*nominal* reference sensor. Stage 2 exploits the relations between those
nine numbers to solve a small 9x7 system in

    phi2 = [(u - s1)**2, (u - s1) * (udot - sdot1), c**2]

and maps back to ``(u, udot, c)``. Sensor errors enter through the
stage-1 weighting matrix only.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from ._linalg import COND_LIMIT, scaled_condition, spd_inv, spd_solve, symmetrize
from .errors import (DegenerateGeometry, InvalidParameter, LocalizationError,
                     NonPositiveSpeedSquare, RankDeficient, SingularWeighting)
from .model import MeasurementSet, NominalSensors

WEIGHTING_MODES = ("full_covariance", "structured_identity", "plain_identity")
# ``uncorrected``: the FDOA reference-error vector uses c*t*lambda + c*t*rho;
# ``corrected``: c*t*lambda + c*tdot*rho, which is what linearising the
# FDOA equation actually gives.
DDOT_FORMS = ("uncorrected", "corrected")
# ``reduced``: stage-2 error transform ignores the error of the c**2 estimate
# inside G2 rows 7-8; ``full``: keeps it, which is the exact first-order
# expansion and the only one whose small-noise covariance meets the bound.
D2_FORMS = ("reduced", "full")

CLAMP_WARN_FRACTION = 1e-3
DEGENERATE_FRACTION = 1e-6


@dataclass(frozen=True)
class Stage1System:
    h1: np.ndarray
    g1: np.ndarray
    w1: np.ndarray
    b1: np.ndarray = None
    d1: np.ndarray = None


@dataclass(frozen=True)
class Stage2System:
    h2: np.ndarray
    g2: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class EstimateReport:
    phi1: np.ndarray
    phi2: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    speed: float
    cov_phi1: np.ndarray
    cov_phi2: np.ndarray
    cov_xi: np.ndarray
    iterations_used: int
    weighting_mode: str
    warnings: list = field(default_factory=list)

    @property
    def xi(self):
        return np.concatenate([self.position, self.velocity, [self.speed]])


def _check_sensors(sensors):
    if not isinstance(sensors, NominalSensors):
        raise TypeError(
            f"estimator takes NominalSensors (use SensorArray.nominal()), got {type(sensors).__name__}")


def build_stage1(meas, sensors):
    """Pseudo-linear system ``h1 = G1 phi1 + eps1`` from nominal sensor data."""
    _check_sensors(sensors)
    s, sd = sensors.positions, sensors.velocities
    t, f = meas.tdoa, meas.fdoa
    n = s.shape[0] - 1
    if t.size != n:
        raise InvalidParameter(f"{t.size} TDOA values for {n + 1} sensors")
    big_r = np.einsum("ij,ij->i", s, s)
    big_rdot = np.einsum("ij,ij->i", sd, s)
    ds = s[1:] - s[0]
    dsd = sd[1:] - sd[0]

    h_t = big_r[0] - big_r[1:]
    g_t = np.zeros((n, 9))
    g_t[:, :3] = -2.0 * ds
    g_t[:, 6] = -2.0 * t
    g_t[:, 7] = -t ** 2

    h_f = 2.0 * (big_rdot[0] - big_rdot[1:])
    g_f = np.empty((n, 9))
    g_f[:, :3] = -2.0 * dsd
    g_f[:, 3:6] = -2.0 * ds
    g_f[:, 6] = -2.0 * f
    g_f[:, 7] = -2.0 * t * f
    g_f[:, 8] = -2.0 * t

    return np.concatenate([h_t, h_f]), np.vstack([g_t, g_f])


def error_transforms(meas, sensors, position, velocity, speed, ddot_form="corrected"):
    """``(B1, D1)`` with ``eps1 = B1 d_alpha + D1 d_beta`` at the given state."""
    s, sd = sensors.positions, sensors.velocities
    m = s.shape[0]
    n = m - 1
    t, f = meas.tdoa, meas.fdoa
    diff = position - s
    vdiff = velocity - sd
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0.0):
        raise DegenerateGeometry("estimated source coincides with a sensor")
    rdot = np.einsum("ij,ij->i", diff, vdiff) / r
    rho1 = diff[0] / r[0]
    lam1 = vdiff[0] / r[0] - (rdot[0] / r[0]) * rho1

    b = np.diag(2.0 * speed * r[1:])
    bdot = np.diag(2.0 * speed * rdot[1:])
    b1 = np.block([[b, np.zeros((n, n))], [bdot, b]])

    d_vec = diff[0] + speed * t[:, None] * rho1
    if ddot_form == "uncorrected":
        ddot_vec = vdiff[0] + speed * t[:, None] * lam1 + speed * t[:, None] * rho1
    elif ddot_form == "corrected":
        ddot_vec = vdiff[0] + speed * t[:, None] * lam1 + speed * f[:, None] * rho1
    else:
        raise InvalidParameter(f"unknown ddot_form {ddot_form!r}")

    d = np.zeros((n, 3 * m))
    ddot = np.zeros((n, 3 * m))
    d[:, :3] = -2.0 * d_vec
    ddot[:, :3] = -2.0 * ddot_vec
    for i in range(n):
        k = i + 1
        d[i, 3 * k:3 * k + 3] = 2.0 * diff[k]
        ddot[i, 3 * k:3 * k + 3] = 2.0 * vdiff[k]
    d1 = np.block([[d, np.zeros((n, 3 * m))], [ddot, d]])
    return b1, d1


def stage1_weights(meas, sensors, estimate, noise, mode="full_covariance", ddot_form="corrected"):
    """Stage-1 weighting matrix ``W1`` (and the transforms it was built from).

    ``estimate`` is a 9-vector ``phi1`` or ``None`` for the initial weight.
    Returns ``(w1, b1, d1)``; ``b1``/``d1`` are ``None`` when no estimate
    was used.
    """
    if mode not in WEIGHTING_MODES:
        raise InvalidParameter(f"unknown weighting mode {mode!r}")
    n2 = 2 * (sensors.count - 1)
    if mode == "plain_identity":
        return np.eye(n2), None, None
    if estimate is None:
        if mode == "structured_identity":
            return np.eye(n2), None, None
        return _weight_from_cov(noise.q_alpha, "Q_alpha"), None, None
    phi = np.asarray(estimate, dtype=float)
    speed = np.sqrt(abs(phi[7]))
    b1, d1 = error_transforms(meas, sensors, phi[:3], phi[3:6], speed, ddot_form)
    if mode == "full_covariance":
        qa, qb = noise.q_alpha, noise.q_beta
        cov = b1 @ qa @ b1.T + d1 @ qb @ d1.T
    else:
        cov = b1 @ b1.T + d1 @ d1.T
    return _weight_from_cov(cov, "stage-1 error covariance"), b1, d1


def _weight_from_cov(cov, what):
    """Inverse of ``cov``, computed on a copy normalised by its largest diagonal entry.

    The scale is put back afterwards so that ``(G^T W G)^-1`` is a real
    covariance. A zero covariance means noiseless data, where every
    weighting gives the same answer; identity is used.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    scale = np.max(np.abs(np.diag(cov)))
    if scale == 0.0:
        return np.eye(cov.shape[0])
    return spd_inv(cov / scale, SingularWeighting, what, cond_limit=np.inf) / scale


def wls_solve(h, g, w, what):
    """Weighted LS ``(G^T W G)^-1 G^T W h`` and the matrix ``(G^T W G)^-1``."""
    normal = symmetrize(g.T @ w @ g)
    rhs = g.T @ w @ h
    cond = scaled_condition(normal)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficient(f"{what} normal matrix is rank deficient (scaled condition {cond:.3g})")
    sol = spd_solve(normal, np.column_stack([rhs, np.eye(normal.shape[0])]), RankDeficient, what)
    return sol[:, 0], symmetrize(sol[:, 1:])


def stage1_solve(h1, g1, w1):
    return wls_solve(h1, g1, w1, "stage-1")


def _b2(position, velocity, speed, s1, sd1, d2_form):
    off = position - s1
    voff = velocity - sd1
    r1 = np.linalg.norm(off)
    r1dot = off @ voff / r1
    b2 = np.zeros((9, 9))
    b2[:3, :3] = 2.0 * np.diag(off)
    b2[3:6, :3] = np.diag(voff)
    b2[3:6, 3:6] = np.diag(off)
    d2 = np.array([
        [2.0 * speed * r1, 0.0, 0.0],
        [speed * r1dot, 0.0, speed * r1],
        [0.0, 1.0, 0.0],
    ])
    if d2_form == "full":
        d2[0, 1] = -r1 ** 2
        d2[1, 1] = -r1 * r1dot
    elif d2_form != "reduced":
        raise InvalidParameter(f"unknown d2_form {d2_form!r}")
    b2[6:, 6:] = d2
    return b2


def _check_offsets(off, what):
    norm = np.linalg.norm(off)
    if norm == 0.0 or np.min(np.abs(off)) < DEGENERATE_FRACTION * norm:
        raise DegenerateGeometry(
            f"{what} has a near-zero component relative to the reference sensor; "
            "pick a different reference")


def stage2_transform(position, velocity, speed, sensors, d2_form="full"):
    """``B2`` with ``eps2 = B2 d_phi1``, checked for invertibility."""
    s1, sd1 = sensors.positions[0], sensors.velocities[0]
    _check_offsets(position - s1, "source estimate")
    return _b2(position, velocity, speed, s1, sd1, d2_form)


def build_stage2(phi1, sensors, fisher1, position=None, velocity=None, speed=None, d2_form="full"):
    """Second-stage system built from the stage-1 solution.

    ``fisher1`` is ``G1^T W1 G1``. The state used inside ``B2`` defaults
    to the one carried by ``phi1``; later iterations pass the recovered
    estimate instead.
    """
    _check_sensors(sensors)
    phi1 = np.asarray(phi1, dtype=float)
    if phi1[7] <= 0.0:
        raise NonPositiveSpeedSquare(f"stage-1 speed square is {phi1[7]:.4g}")
    s1, sd1 = sensors.positions[0], sensors.velocities[0]
    off = phi1[:3] - s1
    _check_offsets(off, "stage-1 position")
    voff = phi1[3:6] - sd1

    h2 = np.concatenate([off * off, off * voff, [phi1[6] ** 2, phi1[6] * phi1[8], phi1[7]]])
    g2 = np.zeros((9, 7))
    g2[:3, :3] = np.eye(3)
    g2[3:6, 3:6] = np.eye(3)
    g2[6, :3] = phi1[7]
    g2[7, 3:6] = phi1[7]
    g2[8, 6] = 1.0

    if position is None:
        position, velocity, speed = phi1[:3], phi1[3:6], np.sqrt(phi1[7])
    b2 = stage2_transform(position, velocity, speed, sensors, d2_form)
    b2_inv = np.linalg.solve(b2, np.eye(9))
    w2 = symmetrize(b2_inv.T @ fisher1 @ b2_inv)
    return Stage2System(h2, g2, w2, b2)


def stage2_solve(system):
    return wls_solve(system.h2, system.g2, system.w2, "stage-2")


def recover(phi1, phi2, sensors):
    """Map ``phi2`` back to ``(u, udot, c, warnings)``.

    Square roots take ``|x|``: small noise can push a squared quantity a
    little below zero. A clamp bigger than ``1e-3 * |phi2|`` is reported
    in the warnings list; a non-positive speed square of that size is an
    error.
    """
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    s1, sd1 = sensors.positions[0], sensors.velocities[0]
    limit = CLAMP_WARN_FRACTION * np.linalg.norm(phi2)
    notes = []

    if phi2[6] <= 0.0 and (phi2[6] == 0.0 or -phi2[6] > limit):
        raise NonPositiveSpeedSquare(f"stage-2 speed square is {phi2[6]:.4g}")
    neg = phi2[:3] < 0.0
    if np.any(-phi2[:3][neg] > limit):
        notes.append(f"clamped negative position squares {phi2[:3][neg]}")
    if phi2[6] < 0.0:
        notes.append(f"clamped negative speed square {phi2[6]:.4g}")

    sign = np.sign(phi1[:3] - s1)
    sign[sign == 0] = 1.0
    position = sign * np.sqrt(np.abs(phi2[:3])) + s1
    off = position - s1
    if np.any(off == 0.0):
        raise DegenerateGeometry("recovered position shares a coordinate with the reference sensor")
    velocity = phi2[3:6] / off + sd1
    speed = float(np.sqrt(abs(phi2[6])))
    return position, velocity, speed, notes


def xi_transform(position, velocity, speed, s1, sd1):
    """``B3`` with ``d_phi2 = B3 d_xi``."""
    off = position - s1
    b3 = np.zeros((7, 7))
    b3[:3, :3] = 2.0 * np.diag(off)
    b3[3:6, :3] = np.diag(velocity - sd1)
    b3[3:6, 3:6] = np.diag(off)
    b3[6, 6] = 2.0 * speed
    return b3


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except LocalizationError as err:
        if err.stage is None:
            err.stage = stage
        raise


def estimate(meas, sensors, noise=None, n_iter=2, mode="full_covariance",
             ddot_form="corrected", d2_form="full"):
    """Run both stages and return an :class:`EstimateReport`.

    :param meas: :class:`~uwloc.model.MeasurementSet` against sensor 0
    :param sensors: :class:`~uwloc.model.NominalSensors` (never the truth)
    :param noise: :class:`~uwloc.noise.NoiseModel`; only needed for ``full_covariance``
    :param n_iter: re-weighting iterations per stage (1..5)
    :param mode: one of ``WEIGHTING_MODES``
    :param ddot_form: reference-sensor FDOA error vector, see ``DDOT_FORMS``
    :param d2_form: stage-2 error transform, see ``D2_FORMS``
    """
    _check_sensors(sensors)
    if not isinstance(meas, MeasurementSet):
        raise TypeError(f"meas must be a MeasurementSet, got {type(meas).__name__}")
    if not 1 <= int(n_iter) <= 5:
        raise InvalidParameter(f"n_iter must be in 1..5, got {n_iter}")
    if mode == "full_covariance" and noise is None:
        raise InvalidParameter("full_covariance weighting needs a noise model")
    if sensors.count < 6:
        raise RankDeficient(
            f"{sensors.count} sensors give {2 * (sensors.count - 1)} equations for 9 "
            "stage-1 unknowns; need at least 6 sensors", stage="stage1")
    n_iter = int(n_iter)

    h1, g1 = _staged("stage1", build_stage1, meas, sensors)
    w1, _, _ = _staged("stage1", stage1_weights, meas, sensors, None, noise, mode, ddot_form)
    phi1, cov_phi1 = _staged("stage1", stage1_solve, h1, g1, w1)
    if mode != "plain_identity":
        for _ in range(n_iter):
            w1, _, _ = _staged("stage1", stage1_weights, meas, sensors, phi1, noise, mode, ddot_form)
            phi1, cov_phi1 = _staged("stage1", stage1_solve, h1, g1, w1)
    fisher1 = symmetrize(g1.T @ w1 @ g1)

    system = _staged("stage2", build_stage2, phi1, sensors, fisher1, d2_form=d2_form)
    phi2, cov_phi2 = _staged("stage2", stage2_solve, system)
    position, velocity, speed, notes = _staged("recover", recover, phi1, phi2, sensors)
    for _ in range(n_iter):
        system = _staged("stage2", build_stage2, phi1, sensors, fisher1,
                         position, velocity, speed, d2_form=d2_form)
        phi2, cov_phi2 = _staged("stage2", stage2_solve, system)
        position, velocity, speed, notes = _staged("recover", recover, phi1, phi2, sensors)

    s1, sd1 = sensors.positions[0], sensors.velocities[0]
    b3 = xi_transform(position, velocity, speed, s1, sd1)
    b3_inv = _staged("recover", _inv_b3, b3)
    cov_xi = symmetrize(b3_inv @ cov_phi2 @ b3_inv.T)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return EstimateReport(phi1, phi2, position, velocity, speed, cov_phi1, cov_phi2,
                          cov_xi, n_iter, mode, notes)


def _inv_b3(b3):
    if np.any(np.diag(b3) == 0.0):
        raise DegenerateGeometry("B3 is singular")
    return np.linalg.solve(b3, np.eye(7))
