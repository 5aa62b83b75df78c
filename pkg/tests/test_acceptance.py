"""Acceptance criteria, one check per criterion at its stated tolerance.

Each ``check_*`` returns ``(ok, detail)``. The tests record one line per
criterion (shown in the terminal summary) and then assert. Running this
file directly prints the same lines without pytest.

The Monte Carlo runs use seed 0 and N = 1000 and are shared between
criteria; the full-covariance series of the weighting-mode sweep is the
measurement-noise sweep itself (same seed, same grid, same streams).
"""

from functools import lru_cache
import time

import numpy as np

from uwloc import analysis, crlb, estimator, harness, model, noise

import conftest
from conftest import random_geometry
from test_crlb import block_rel_error, fd_jacobians

SEED = 0
TRIALS = 1000


@lru_cache(maxsize=None)
def sweep(name):
    """``(results, seconds)`` for one preset at seed 0, N = 1000."""
    start = time.perf_counter()
    res = harness.run_experiment(harness.figure_presets(trials=TRIALS)[name], SEED)
    return res, time.perf_counter() - start


def values(results, name, mode="full_covariance"):
    s = harness.series_by_name(results, name, mode)
    return dict(zip(s.grid.tolist(), s.values_db.tolist()))


def check_speed_knowledge_gap():
    start = time.perf_counter()
    src, arr = model.default_source(1500.0), model.default_array()
    blocks = crlb.fim(src, arr, noise.NoiseModel.standard(10, 1.0, 1.0, 1500.0))
    unknown = crlb.crlb_report(blocks, known_speed=False).mse_db
    known = crlb.crlb_report(blocks, known_speed=True).mse_db
    gap_u, gap_v = unknown[0] - known[0], unknown[1] - known[1]
    elapsed = time.perf_counter() - start
    ok = abs(gap_u - 1.07) <= 0.05 and abs(gap_v - 0.96) <= 0.05 and elapsed < 1.0
    return ok, (f"position gap {gap_u:.3f} dB (target 1.07), velocity gap {gap_v:.4f} dB "
                f"(target 0.96), tol 0.05 dB, {elapsed:.3f} s")


def check_velocity_mse_vs_measurement_noise():
    target = {-5.0: 4.182, 10.0: 5.532, 15.0: 7.046, 20.0: 9.986}
    _, seconds = sweep("fig3")
    got = values(sweep("fig3")[0], "mse_udot")
    diffs = {k: got[k] - v for k, v in target.items()}
    ok = all(abs(d) <= 0.5 for d in diffs.values()) and seconds < 120
    cells = ", ".join(f"{k:+.0f}: {got[k]:.3f}/{target[k]:.3f}" for k in target)
    return ok, f"velocity MSE dB got/target {cells}; tol 0.5 dB; {seconds:.1f} s"


def check_velocity_mse_vs_sensor_error():
    target = {-5.0: -9.91, 0.0: -7.8, 5.0: -4.475, 10.0: -0.55, 15.0: 4.436, 20.0: 9.03}
    got = values(sweep("fig4")[0], "mse_udot")
    diffs = {k: got[k] - v for k, v in target.items()}
    ok = all(abs(d) <= 0.5 for d in diffs.values())
    worst = max(diffs, key=lambda k: abs(diffs[k]))
    cells = ", ".join(f"{k:+.0f}: {got[k]:.2f}/{target[k]:.2f}" for k in target)
    return ok, f"velocity MSE dB got/target {cells}; worst {diffs[worst]:+.2f} dB; tol 0.5 dB"


def check_bound_attainment():
    res = sweep("fig6")[0]
    gaps = {}
    for q in ("u", "udot", "c"):
        mse, bound = values(res, f"mse_{q}"), values(res, f"crlb_{q}")
        for level in (-5.0, 0.0, 5.0):
            gaps[(q, level)] = mse[level] - bound[level]
    worst = max(gaps, key=lambda k: abs(gaps[k]))
    ok = all(abs(g) <= 0.3 for g in gaps.values())
    per_q = "; ".join(
        f"{q}: " + " ".join(f"{gaps[(q, l)]:+.2f}" for l in (-5.0, 0.0, 5.0))
        for q in ("u", "udot", "c"))
    return ok, f"MSE-CRLB dB at -5/0/5 dB {per_q}; worst {worst} {gaps[worst]:+.2f}; tol 0.3 dB"


def check_speed_mismatch_robustness():
    mse = np.array(list(values(sweep("fig5")[0], "mse_u").values()))
    spread = float(mse.max() - mse.min())
    return spread < 0.5, f"position MSE spread over delta_c -70..70 = {spread:.3f} dB (< 0.5)"


def check_weighting_modes():
    res = sweep("fig6")[0]
    rmse = {mode: np.sqrt(10 ** (values(res, "mse_u", mode)[-5.0] / 10))
            for mode in estimator.WEIGHTING_MODES}
    ordered = all(
        values(res, "mse_u", "full_covariance")[g] < values(res, "mse_u", "structured_identity")[g]
        < values(res, "mse_u", "plain_identity")[g]
        for g in harness.figure_presets()["fig6"].grid)
    ok = (abs(rmse["full_covariance"] - 2.66) <= 0.6
          and abs(rmse["structured_identity"] - 4.1) <= 0.6 and ordered)
    return ok, (f"root-MSE at -5 dB: full {rmse['full_covariance']:.2f} m (2.66), structured "
                f"{rmse['structured_identity']:.2f} m (4.1), plain {rmse['plain_identity']:.2f} m; "
                f"tol 0.6 m; ordering at every point: {ordered}")


def check_noiseless_round_trip():
    rng = np.random.default_rng(12345)
    worst = 0.0
    for k in range(100):
        m = (6, 8, 10)[k % 3]
        src, arr = random_geometry(rng, m)
        quiet = noise.NoiseModel(np.zeros((2 * m - 2, 2 * m - 2)), np.zeros((6 * m, 6 * m)))
        rep = estimator.estimate(model.true_measurements(src, arr), arr.truth(), quiet)
        for got, true in ((rep.position, src.position), (rep.velocity, src.velocity),
                          (rep.speed, src.speed)):
            worst = max(worst, float(np.linalg.norm(got - true) / np.linalg.norm(true)))
    return worst <= 1e-6, f"worst relative error over 100 geometries (M=6,8,10): {worst:.2e} (<= 1e-6)"


def check_jacobian_oracle():
    rng = np.random.default_rng(777)
    worst = 0.0
    for _ in range(20):
        src, arr = random_geometry(rng, 10)
        jac = crlb.jacobians(src, arr)
        d_theta, d_c, d_beta, _ = fd_jacobians(src, arr)
        n = arr.count - 1
        for rows in (slice(0, n), slice(n, 2 * n)):
            for exact, approx in ((jac.d_alpha_d_theta[rows, :3], d_theta[rows, :3]),
                                  (jac.d_alpha_d_theta[rows, 3:], d_theta[rows, 3:]),
                                  (jac.d_alpha_d_c[rows], d_c[rows]),
                                  (jac.d_alpha_d_beta[rows], d_beta[rows])):
                if np.any(exact) or np.any(approx):
                    worst = max(worst, block_rel_error(exact, approx))
    return worst <= 1e-6, f"max block relative error vs central differences, 20 points: {worst:.2e} (<= 1e-6)"


def check_algebraic_identities():
    rng = np.random.default_rng(99)
    cases = [(model.default_source(1500.0), model.default_array())]
    cases += [random_geometry(rng, 10) for _ in range(4)]
    w = {"theta forms": 0.0, "Q1 forms": 0.0, "projector": 0.0, "psd": np.inf}
    for src, arr in cases:
        nm = noise.NoiseModel.standard(10, 1.0, 1.0, src.speed)
        for known in (False, True):
            schur, gamma = crlb.crlb_theta_inverse_forms(src, arr, nm, known)
            w["theta forms"] = max(w["theta forms"],
                                   np.max(np.abs(schur - gamma)) / np.max(np.abs(schur)))
        jac = crlb.jacobians(src, arr)
        p1, s = crlb.projection_p1(jac, nm.q_alpha)
        direct = crlb.q1_inverse(jac, np.linalg.inv(nm.q_alpha))
        w["Q1 forms"] = max(w["Q1 forms"], np.max(np.abs(s @ (np.eye(18) - p1) @ s - direct))
                            / np.max(np.abs(direct)))
        w["projector"] = max(w["projector"], np.max(np.abs(p1 @ p1 - p1)),
                             np.max(np.abs(p1 - p1.T)), abs(np.trace(p1) - 1.0))
        diff = crlb.crlb_theta_unknown_c(src, arr, nm) - crlb.crlb_theta_known_c(src, arr, nm)
        ev = np.linalg.eigvalsh(diff)
        w["psd"] = min(w["psd"], ev.min() / ev.max())
    ok = (w["theta forms"] <= 1e-8 and w["Q1 forms"] <= 1e-10 and w["projector"] <= 1e-10
          and w["psd"] >= -1e-10)
    return ok, (f"theta-bound forms {w['theta forms']:.1e} (<= 1e-8), Q1 forms {w['Q1 forms']:.1e} "
                f"(<= 1e-10), projector {w['projector']:.1e} (<= 1e-10), "
                f"min eig ratio of difference {w['psd']:.1e} (>= 0)")


def check_efficiency():
    src, arr = model.default_source(1500.0), model.default_array()
    nm = noise.NoiseModel.standard(10, noise.db_to_sigma(-30), noise.db_to_sigma(-30), 1500.0)
    c = analysis.efficiency_check(src, arr, nm)
    ok = c.max_rel_gap <= 0.05 and c.g3_max_deviation <= 0.02 and c.g4_max_deviation <= 0.02
    return ok, (f"information gap {c.max_rel_gap:.2e} (<= 5%), G3 deviation "
                f"{c.g3_max_deviation:.2e}, G4 deviation {c.g4_max_deviation:.2e} (<= 2%)")


CRITERIA = [
    ("1 speed-knowledge bound gap", check_speed_knowledge_gap),
    ("2 velocity MSE vs measurement noise", check_velocity_mse_vs_measurement_noise),
    ("3 velocity MSE vs sensor error", check_velocity_mse_vs_sensor_error),
    ("4 bound attainment at low noise", check_bound_attainment),
    ("5 sound-speed mismatch robustness", check_speed_mismatch_robustness),
    ("6 weighting-mode comparison", check_weighting_modes),
    ("7 noiseless round trip", check_noiseless_round_trip),
    ("8 Jacobian vs finite differences", check_jacobian_oracle),
    ("9 algebraic identities", check_algebraic_identities),
    ("10 small-noise efficiency", check_efficiency),
]


def _run(index):
    label, fn = CRITERIA[index]
    ok, detail = fn()
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    return ok, detail


def test_criterion_01_speed_knowledge_gap():
    ok, detail = _run(0)
    assert ok, detail


def test_criterion_02_velocity_mse_vs_measurement_noise():
    ok, detail = _run(1)
    assert ok, detail


def test_criterion_03_velocity_mse_vs_sensor_error():
    ok, detail = _run(2)
    assert ok, detail


def test_criterion_04_bound_attainment():
    ok, detail = _run(3)
    assert ok, detail


def test_criterion_05_speed_mismatch_robustness():
    ok, detail = _run(4)
    assert ok, detail


def test_criterion_06_weighting_modes():
    ok, detail = _run(5)
    assert ok, detail


def test_criterion_07_noiseless_round_trip():
    ok, detail = _run(6)
    assert ok, detail


def test_criterion_08_jacobian_oracle():
    ok, detail = _run(7)
    assert ok, detail


def test_criterion_09_algebraic_identities():
    ok, detail = _run(8)
    assert ok, detail


def test_criterion_10_efficiency():
    ok, detail = _run(9)
    assert ok, detail


if __name__ == "__main__":
    for i in range(len(CRITERIA)):
        _run(i)
