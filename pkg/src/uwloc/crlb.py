"""Hybrid Fisher information and Cramer-Rao bounds.

Unknowns are ordered ``phi = [u (3), udot (3), c (1), beta (6M)]``: the
source state is deterministic, ``beta`` carries a Gaussian prior with
covariance ``Q_beta`` centred on the nominal values, and ``c`` is
deterministic. Bounds are evaluated at the true parameters.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import COND_LIMIT, scaled_condition, spd_inv, spd_solve, sym_inv_sqrt, symmetrize
from .errors import DegenerateGeometry, DegenerateProjection, SingularCovariance, SingularFim


@dataclass(frozen=True)
class Jacobians:
    d_alpha_d_theta: np.ndarray  # 2(M-1) x 6
    d_alpha_d_c: np.ndarray      # 2(M-1)
    d_alpha_d_beta: np.ndarray   # 2(M-1) x 6M

    @property
    def d_alpha_d_xi(self):
        return np.column_stack([self.d_alpha_d_theta, self.d_alpha_d_c])


@dataclass(frozen=True)
class FimBlocks:
    x11: np.ndarray
    x12: np.ndarray
    x13: np.ndarray
    x22: np.ndarray
    x23: np.ndarray
    x33: np.ndarray

    def assemble(self):
        return np.block([
            [self.x11, self.x12, self.x13],
            [self.x12.T, self.x22, self.x23],
            [self.x13.T, self.x23.T, self.x33],
        ])

    def without_speed(self):
        """Information matrix for the known-speed case, ``[theta, beta]``."""
        return np.block([[self.x11, self.x13], [self.x13.T, self.x33]])


@dataclass(frozen=True)
class CrlbReport:
    crlb_u: float      # root of summed position variances, m
    crlb_udot: float   # m/s
    crlb_c: float      # m/s (nan in the known-speed case)
    covariance: np.ndarray

    @property
    def mse_db(self):
        """Bound on each MSE in dB (squared root-trace, 1 m^2 reference)."""
        return tuple(to_db(v ** 2) for v in (self.crlb_u, self.crlb_udot, self.crlb_c))


def to_db(value):
    with np.errstate(divide="ignore"):
        return float(10.0 * np.log10(value))


def partials(u, udot, c, sensor_pos, sensor_vel):
    """Derivatives of ``alpha = [r_i1 / c, rdot_i1 / c]`` with respect to all unknowns.

    Returns ``(d_theta, d_c, d_beta)``; see :class:`Jacobians`.
    """
    diff = u - sensor_pos
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0.0):
        raise DegenerateGeometry("zero source-sensor range in jacobian")
    vdiff = udot - sensor_vel
    rdot = np.einsum("ij,ij->i", diff, vdiff) / r
    rho = diff / r[:, None]
    # d rdot_i / d u; also -(d rdot_i / d s_i)
    drdot = vdiff / r[:, None] - diff * (rdot / r ** 2)[:, None]

    m = sensor_pos.shape[0]
    n = m - 1
    d_theta = np.zeros((2 * n, 6))
    d_theta[:n, :3] = (rho[1:] - rho[0]) / c
    d_theta[n:, :3] = (drdot[1:] - drdot[0]) / c
    d_theta[n:, 3:] = d_theta[:n, :3]

    d_c = -np.concatenate([r[1:] - r[0], rdot[1:] - rdot[0]]) / c ** 2

    d_beta = np.zeros((2 * n, 6 * m))
    rows = np.arange(n)
    # reference sensor columns
    d_beta[:n, 0:3] = rho[0] / c
    d_beta[n:, 0:3] = drdot[0] / c
    d_beta[n:, 3 * m:3 * m + 3] = rho[0] / c
    for k in range(1, m):
        i = rows[k - 1]
        d_beta[i, 3 * k:3 * k + 3] = -rho[k] / c
        d_beta[n + i, 3 * k:3 * k + 3] = -drdot[k] / c
        d_beta[n + i, 3 * m + 3 * k:3 * m + 3 * k + 3] = -rho[k] / c
    return d_theta, d_c, d_beta


def jacobians(source, array, at_true=True):
    """Measurement Jacobians at the true (or nominal) sensor parameters."""
    if at_true:
        pos, vel = array.true_positions, array.true_velocities
    else:
        pos, vel = array.nominal_positions, array.nominal_velocities
    return Jacobians(*partials(source.position, source.velocity, source.speed, pos, vel))


def _q_alpha_inv(noise):
    return spd_inv(noise.q_alpha, SingularCovariance, "Q_alpha")


def _q_beta_inv(noise):
    return spd_inv(noise.q_beta, SingularCovariance, "Q_beta", cond_limit=np.inf)


def fim_from_jacobians(jac, q_alpha_inv, q_beta_inv):
    a, g, b = jac.d_alpha_d_theta, jac.d_alpha_d_c[:, None], jac.d_alpha_d_beta
    qa_a, qa_g, qa_b = q_alpha_inv @ a, q_alpha_inv @ g, q_alpha_inv @ b
    return FimBlocks(
        x11=symmetrize(a.T @ qa_a),
        x12=a.T @ qa_g,
        x13=a.T @ qa_b,
        x22=g.T @ qa_g,
        x23=g.T @ qa_b,
        x33=symmetrize(b.T @ qa_b + q_beta_inv),
    )


def fim(source, array, noise):
    """Hybrid Fisher information blocks ``X11 .. X33`` at the truth."""
    return fim_from_jacobians(jacobians(source, array), _q_alpha_inv(noise), _q_beta_inv(noise))


def crlb_report(blocks, known_speed=False):
    """Root-trace bounds for position, velocity and speed.

    With ``known_speed`` the speed row/column is removed first and
    ``crlb_c`` is ``nan``.
    """
    info = blocks.without_speed() if known_speed else blocks.assemble()
    cond = scaled_condition(info)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularFim(f"Fisher information is ill-conditioned (scaled condition {cond:.3g})")
    cov = spd_inv(info, SingularFim, "Fisher information")
    diag = np.diag(cov)
    crlb_c = np.nan if known_speed else np.sqrt(diag[6])
    return CrlbReport(np.sqrt(diag[:3].sum()), np.sqrt(diag[3:6].sum()), crlb_c, cov)


def _schur_theta(blocks, known_speed):
    """Inverse bound on theta by eliminating the nuisance blocks directly."""
    if known_speed:
        x_t = blocks.x13
        x_nn = blocks.x33
    else:
        x_t = np.hstack([blocks.x12, blocks.x13])
        x_nn = np.block([[blocks.x22, blocks.x23], [blocks.x23.T, blocks.x33]])
    return symmetrize(blocks.x11 - x_t @ spd_solve(x_nn, x_t.T, SingularFim, "nuisance information"))


def q1_inverse(jac, q_alpha_inv):
    """Measurement information with the speed direction projected out."""
    g = jac.d_alpha_d_c[:, None]
    qg = q_alpha_inv @ g
    denom = float((g.T @ qg)[0, 0])
    if denom <= 0.0:
        raise DegenerateProjection("speed derivative vanishes")
    return symmetrize(q_alpha_inv - qg @ qg.T / denom)


def _gamma_form(jac, q_inv, q_beta_inv):
    a, b = jac.d_alpha_d_theta, jac.d_alpha_d_beta
    gamma_inv = symmetrize(b.T @ q_inv @ b + q_beta_inv)
    cross = a.T @ q_inv @ b
    return symmetrize(a.T @ q_inv @ a - cross @ spd_solve(gamma_inv, cross.T, SingularFim, "Gamma"))


def crlb_theta_inverse_forms(source, array, noise, known_speed=False):
    """Both algebraic forms of the inverse theta-bound: Schur complement and projected."""
    jac = jacobians(source, array)
    qa_inv = _q_alpha_inv(noise)
    qb_inv = _q_beta_inv(noise)
    blocks = fim_from_jacobians(jac, qa_inv, qb_inv)
    schur = _schur_theta(blocks, known_speed)
    q_inv = qa_inv if known_speed else q1_inverse(jac, qa_inv)
    return schur, _gamma_form(jac, q_inv, qb_inv)


def crlb_theta_unknown_c(source, array, noise):
    """6x6 bound on ``[u, udot]`` when the propagation speed is estimated too."""
    schur, _ = crlb_theta_inverse_forms(source, array, noise)
    return spd_inv(schur, SingularFim, "theta information")


def crlb_theta_known_c(source, array, noise):
    """6x6 bound on ``[u, udot]`` when the propagation speed is known."""
    schur, _ = crlb_theta_inverse_forms(source, array, noise, known_speed=True)
    return spd_inv(schur, SingularFim, "theta information")


def projection_p1(jac, q_alpha):
    """Rank-one projector onto the whitened speed-derivative direction.

    Returns ``(P1, S)`` where ``S`` is the symmetric square root of
    ``inv(q_alpha)``; the projected information is ``S (I - P1) S``.
    """
    g = np.asarray(jac.d_alpha_d_c, dtype=float)
    if not np.any(g):
        raise DegenerateProjection("speed derivative is identically zero")
    s = sym_inv_sqrt(q_alpha)
    w = s @ g
    p1 = np.outer(w, w) / float(w @ w)
    return symmetrize(p1), s


def crlb_xi_inverse(blocks):
    """Inverse bound on ``xi = [u, udot, c]`` with ``beta`` eliminated."""
    top = np.block([[blocks.x11, blocks.x12], [blocks.x12.T, blocks.x22]])
    cross = np.vstack([blocks.x13, blocks.x23])
    return symmetrize(top - cross @ spd_solve(blocks.x33, cross.T, SingularFim, "X33"))
