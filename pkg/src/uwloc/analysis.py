"""Small-noise efficiency diagnostics for the two-stage estimator.

The estimator's first-order covariance can be written in the same form as
the hybrid bound on ``xi = [u, udot, c]``, with two matrices ``G3`` and
``G4`` standing in for ``d alpha / d xi`` and ``-d alpha / d beta``. This
module builds those matrices two ways (closed-form blocks and the direct
matrix product), measures how far they sit from the true Jacobians, and
compares the two 7x7 information matrices.

Nothing here is on the estimation path; it exists to report, not to
assert, how close the estimator gets to the bound.
"""

from dataclasses import dataclass

import numpy as np

from . import crlb
from ._linalg import spd_inv, spd_solve, symmetrize
from .errors import DegenerateGeometry, SingularFim
from .estimator import (D2_FORMS, DDOT_FORMS, build_stage1, build_stage2, error_transforms,
                        xi_transform)
from .model import ranges_and_rates, true_measurements

# Thresholds for the three geometric small-noise conditions: a reference
# range well below the others, slow relative motion and short propagation
# times compared with the ranges.
REFERENCE_RATIO = 0.5
RATE_LIMIT = 0.01
DELAY_LIMIT = 0.01

G3_BLOCKS = ("tdoa_position", "tdoa_velocity", "tdoa_speed",
             "fdoa_position", "fdoa_velocity", "fdoa_speed")
G4_BLOCKS = ("tdoa_sensor_position", "tdoa_sensor_velocity",
             "fdoa_sensor_position", "fdoa_sensor_velocity")


@dataclass(frozen=True)
class EfficiencyCheck:
    g3: np.ndarray
    g4: np.ndarray
    b3: np.ndarray
    cov_xi_inv: np.ndarray
    crlb_xi_inv: np.ndarray
    condition_flags: tuple
    max_rel_gap: float
    g3_deviation: dict
    g4_deviation: dict
    d2_form: str = "full"
    ddot_form: str = "corrected"

    @property
    def g3_max_deviation(self):
        return max(self.g3_deviation.values())

    @property
    def g4_max_deviation(self):
        return max(self.g4_deviation.values())


def _state(source, array, phi1):
    """Source, true sensor parameters and the ranges used by every block."""
    u, ud, c = source.position, source.velocity, source.speed
    s, sd = array.true_positions, array.true_velocities
    r, rdot = ranges_and_rates(u, ud, s, sd)
    if phi1 is None:
        phi1 = np.concatenate([u, ud, [c * r[0], c * c, c * rdot[0]]])
    return u, ud, c, s, sd, r, rdot, np.asarray(phi1, dtype=float)


def build_g3_g4(source, array, phi1=None, meas=None, ddot_form="corrected"):
    """Closed-form ``G3`` (2(M-1) x 7) and ``G4`` (2(M-1) x 6M).

    ``G3`` follows the stage-2 error transform that ignores the error of
    the stage-1 ``c**2`` inside the second-stage design matrix; the
    product route with ``d2_form="reduced"`` gives the same matrix. ``G4``
    uses the reference-sensor error vectors of the chosen ``ddot_form``.

    Everything is evaluated at the true sensor parameters.

    :param phi1: stage-1 solution; defaults to its noiseless value
    :param meas: measurements; defaults to the noiseless ones
    """
    if ddot_form not in DDOT_FORMS:
        raise ValueError(f"unknown ddot_form {ddot_form!r}")
    u, ud, c, s, sd, r, rdot, phi1 = _state(source, array, phi1)
    if meas is None:
        meas = true_measurements(source, array)
    t, f = meas.tdoa, meas.fdoa
    m = s.shape[0]
    n = m - 1
    p8 = phi1[7]
    r1, r1dot = r[0], rdot[0]
    ri, ridot = r[1:], rdot[1:]
    off, voff = u - s[0], ud - sd[0]

    g3 = np.zeros((2 * n, 7))
    g3[:n, :3] = ((u - s[1:]) - off) / (c * ri[:, None]) \
        - (t * p8 / (c ** 2 * ri * r1))[:, None] * off
    g3[:n, 6] = -(c * t) ** 2 / (c ** 2 * ri)
    g3[n:, :3] = ((ridot / ri ** 2)[:, None] * (s[1:] - s[0])
                  - (sd[1:] - sd[0]) / ri[:, None]) / c \
        + (p8 / (c ** 2 * r1) * (ridot * t / ri ** 2 - f / ri)
           + t * r1dot * p8 / (c ** 2 * ri * r1 ** 2))[:, None] * off \
        - (t * p8 / (c ** 2 * r1 * ri))[:, None] * voff
    g3[n:, 3:6] = g3[:n, :3]
    g3[n:, 6] = ridot * t ** 2 / ri ** 2 - 2.0 * t * f / ri

    rho1 = off / r1
    lam1 = voff / r1 - (r1dot / r1) * rho1
    d_vec = off + c * t[:, None] * rho1
    rate = t if ddot_form == "uncorrected" else f
    ddot_vec = voff + c * t[:, None] * lam1 + c * rate[:, None] * rho1

    g4 = np.zeros((2 * n, 6 * m))
    g4[:n, :3] = -d_vec / (c * ri[:, None])
    g4[n:, :3] = (d_vec * (ridot / ri ** 2)[:, None] - ddot_vec / ri[:, None]) / c
    for i in range(n):
        k = 3 * (i + 1)
        diff, vdiff = u - s[i + 1], ud - sd[i + 1]
        g4[i, k:k + 3] = diff / (c * ri[i])
        g4[n + i, k:k + 3] = (vdiff / ri[i] - ridot[i] * diff / ri[i] ** 2) / c
    g4[n:, 3 * m:] = g4[:n, :3 * m]
    return g3, g4


def product_g3_g4(source, array, phi1=None, meas=None, d2_form="full", ddot_form="corrected"):
    """``G3 = B1^-1 G1 B2^-1 G2 B3`` and ``G4 = B1^-1 D1`` by direct multiplication."""
    u, ud, c, s, sd, r, rdot, phi1 = _state(source, array, phi1)
    if meas is None:
        meas = true_measurements(source, array)
    sensors = array.truth()
    _, g1 = build_stage1(meas, sensors)
    b1, d1 = error_transforms(meas, sensors, u, ud, c, ddot_form)
    stage2 = build_stage2(phi1, sensors, np.eye(9), u, ud, c, d2_form=d2_form)
    b3 = xi_transform(u, ud, c, s[0], sd[0])
    g3 = np.linalg.solve(b1, g1 @ np.linalg.solve(stage2.b2, stage2.g2 @ b3))
    g4 = np.linalg.solve(b1, d1)
    return g3, g4


def _block_gap(approx, exact):
    scale = np.max(np.abs(exact))
    gap = np.max(np.abs(approx - exact))
    return float(gap / scale) if scale > 0 else float(gap)


def block_deviations(g3, g4, jac):
    """Largest relative deviation of each block from its Jacobian target.

    Targets are ``[d alpha/d theta, d alpha/d c]`` for ``G3`` and
    ``-d alpha/d beta`` for ``G4``. Each block is normalised by its own
    largest target entry; blocks whose target is identically zero report
    the absolute deviation.
    """
    n = g3.shape[0] // 2
    m = g4.shape[1] // 6
    target3 = jac.d_alpha_d_xi
    target4 = -jac.d_alpha_d_beta
    rows = (slice(0, n), slice(n, 2 * n))
    cols3 = (slice(0, 3), slice(3, 6), slice(6, 7))
    cols4 = (slice(0, 3 * m), slice(3 * m, 6 * m))
    dev3, dev4 = {}, {}
    names3 = iter(G3_BLOCKS)
    for rs in rows:
        for cs in cols3:
            dev3[next(names3)] = _block_gap(g3[rs, cs], target3[rs, cs])
    names4 = iter(G4_BLOCKS)
    for rs in rows:
        for cs in cols4:
            dev4[next(names4)] = _block_gap(g4[rs, cs], target4[rs, cs])
    return dev3, dev4


def information_from_g(g3, g4, q_alpha, q_beta):
    """``G3' Qa^-1 G3 - G3' Qa^-1 G4 (Qb^-1 + G4' Qa^-1 G4)^-1 G4' Qa^-1 G3``."""
    qa_inv = spd_inv(q_alpha, SingularFim, "Q_alpha")
    qb_inv = spd_inv(q_beta, SingularFim, "Q_beta", cond_limit=np.inf)
    a = g3.T @ qa_inv
    inner = symmetrize(qb_inv + g4.T @ qa_inv @ g4)
    cross = a @ g4
    return symmetrize(a @ g3 - cross @ spd_solve(inner, cross.T, SingularFim, "inner matrix"))


def chained_information(source, array, noise, phi1=None, meas=None, d2_form="full",
                        ddot_form="corrected"):
    """Inverse covariance through the estimator's own weights: ``B3' G2' W2 G2 B3``."""
    u, ud, c, s, sd, r, rdot, phi1 = _state(source, array, phi1)
    if meas is None:
        meas = true_measurements(source, array)
    sensors = array.truth()
    _, g1 = build_stage1(meas, sensors)
    b1, d1 = error_transforms(meas, sensors, u, ud, c, ddot_form)
    w1 = spd_inv(symmetrize(b1 @ noise.q_alpha @ b1.T + d1 @ noise.q_beta @ d1.T),
                 SingularFim, "stage-1 covariance", cond_limit=np.inf)
    stage2 = build_stage2(phi1, sensors, symmetrize(g1.T @ w1 @ g1), u, ud, c, d2_form=d2_form)
    b3 = xi_transform(u, ud, c, s[0], sd[0])
    return symmetrize(b3.T @ stage2.g2.T @ stage2.w2 @ stage2.g2 @ b3)


def condition_flags(source, array, meas=None):
    """The three geometric conditions as booleans ``(reference, rate, delay)``."""
    u, ud, c, s, sd, r, rdot, _ = _state(source, array, None)
    if meas is None:
        meas = true_measurements(source, array)
    if np.any(r == 0):
        raise DegenerateGeometry("source coincides with a sensor")
    reference = bool(r[0] < REFERENCE_RATIO * np.min(r[1:]))
    rate = bool(np.max(np.abs(rdot / r)) < RATE_LIMIT)
    delay = bool(np.max(np.abs(np.concatenate([[0.0], meas.tdoa]) / r)) < DELAY_LIMIT)
    return reference, rate, delay


def efficiency_check(source, array, noise, phi1=None, meas=None, d2_form="full",
                     ddot_form="corrected"):
    """Compare the estimator's small-noise information with the hybrid bound on ``xi``.

    With ``d2_form="reduced"`` the closed-form blocks are used; with
    ``"full"`` the product route is used (there the closed forms do not
    apply). ``max_rel_gap`` is the relative Frobenius distance between
    the two 7x7 inverse covariances.
    """
    if d2_form not in D2_FORMS:
        raise ValueError(f"unknown d2_form {d2_form!r}")
    if meas is None:
        meas = true_measurements(source, array)
    if d2_form == "reduced":
        g3, g4 = build_g3_g4(source, array, phi1, meas, ddot_form)
    else:
        g3, g4 = product_g3_g4(source, array, phi1, meas, d2_form, ddot_form)
    jac = crlb.jacobians(source, array)
    dev3, dev4 = block_deviations(g3, g4, jac)
    cov_inv = information_from_g(g3, g4, noise.q_alpha, noise.q_beta)
    bound_inv = crlb.crlb_xi_inverse(crlb.fim_from_jacobians(
        jac, spd_inv(noise.q_alpha, SingularFim, "Q_alpha"),
        spd_inv(noise.q_beta, SingularFim, "Q_beta", cond_limit=np.inf)))
    gap = float(np.linalg.norm(cov_inv - bound_inv) / np.linalg.norm(bound_inv))
    u, ud, c, s, sd, *_ = _state(source, array, phi1)
    b3 = xi_transform(u, ud, c, s[0], sd[0])
    return EfficiencyCheck(g3, g4, b3, cov_inv, bound_inv, condition_flags(source, array, meas),
                           gap, dev3, dev4, d2_form, ddot_form)
