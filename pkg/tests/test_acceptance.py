"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import time

import numpy as np
import pytest

from conftest import DAMPING_POWER, chained_fk, random_theta, record_acceptance
from umarm.actuation import joint_stiffness, ratio_to_pressures
from umarm.arm import N_JOINTS, position_jacobian, robot_fk, spatial_jacobian, tip_position
from umarm.experiments import (
    ExperimentSpec,
    oscillation_frequency,
    run_compliance_demo,
    run_experiment,
    run_payload_sweep,
    run_step_response,
    run_waypoints,
)
from umarm.ik import IkParams, null_space_projector, solve_position_ik
from umarm.plant import N_ACTUATORS, Plant, SimConfig
from umarm.spatial import vee

STIFFNESS_PRESSURES = (0.0, 14.0, 28.0, 55.0, 83.0, 276.0)


@pytest.fixture(scope="module")
def ik_targets(arm):
    rng = np.random.default_rng(0)
    return [tip_position(arm, th) for th in random_theta(rng, arm, 100)]


def test_01_fk_matches_chained_transforms(arm):
    rng = np.random.default_rng(1)
    thetas = random_theta(rng, arm, 1000)
    t0 = time.perf_counter()
    poses = [robot_fk(arm, th).matrix() for th in thetas]
    elapsed = time.perf_counter() - t0
    err = max(np.abs(T - chained_fk(arm, th)).max() for T, th in zip(poses, thetas))
    ok = err <= 1e-10 and elapsed < 5.0
    record_acceptance(1, "FK vs chained transforms", ok, f"max err {err:.2e}, {elapsed:.2f} s for 1000")
    assert err <= 1e-10
    assert elapsed < 5.0


def test_02_jacobian_matches_finite_differences(arm):
    rng = np.random.default_rng(2)
    h = 1e-6
    worst = worst_spatial = 0.0
    for th in random_theta(rng, arm, 200):
        g_inv = np.linalg.inv(robot_fk(arm, th).matrix())
        Js = spatial_jacobian(arm, th)
        Jp = position_jacobian(arm, th)
        for i in range(N_JOINTS):
            e = np.zeros(N_JOINTS)
            e[i] = h
            Tp, Tm = robot_fk(arm, th + e).matrix(), robot_fk(arm, th - e).matrix()
            col = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
            worst = max(worst, np.linalg.norm(Jp[:, i] - col) / np.linalg.norm(col))
            V = (Tp - Tm) / (2 * h) @ g_inv
            xi = np.concatenate([V[:3, 3], vee(V[:3, :3])])
            worst_spatial = max(worst_spatial, np.linalg.norm(Js[:, i] - xi) / np.linalg.norm(xi))
    ok = worst < 1e-5 and worst_spatial < 1e-5
    record_acceptance(
        2, "Jacobian vs central differences", ok,
        f"max column relative err {worst:.2e} (spatial {worst_spatial:.2e})",
    )
    assert worst < 1e-5
    assert worst_spatial < 1e-5


def test_03_ik_round_trip(arm, cfg, ik_targets):
    t0 = time.perf_counter()
    results = [solve_position_ik(arm, np.zeros(N_JOINTS), p, cfg.ik) for p in ik_targets]
    elapsed = time.perf_counter() - t0
    good = sum(r.converged and r.residual <= 1e-4 and r.iterations <= 200 for r in results)
    inside = all(arm.limits.contains(r.theta) for r in results)
    ok = good >= 95 and inside and elapsed < 10.0
    record_acceptance(3, "IK round trip", ok, f"{good}/100 converged, limits ok={inside}, {elapsed:.2f} s")
    assert good >= 95
    assert inside
    assert elapsed < 10.0


def test_04_null_space_projection(arm):
    rng = np.random.default_rng(4)
    worst = 0.0
    for th in random_theta(rng, arm, 100):
        J = position_jacobian(arm, th)
        z = rng.normal(size=N_JOINTS)
        worst = max(worst, np.linalg.norm(J @ null_space_projector(J) @ z))
    ok = worst <= 1e-8
    record_acceptance(4, "null-space motion leaves the tip fixed", ok, f"max |J N v| {worst:.2e}")
    assert worst <= 1e-8


def test_05_limit_avoidance_reduces_joint_excursion(arm, cfg, ik_targets):
    def mean_max_abs(k0):
        params = IkParams(**{**cfg.raw["ik"], "null_gain": k0})
        sols = [solve_position_ik(arm, np.zeros(N_JOINTS), p, params).theta for p in ik_targets]
        return float(np.mean([np.abs(s).max() for s in sols]))

    with_k0 = mean_max_abs(cfg.ik.null_gain)
    without = mean_max_abs(0.0)
    ok = with_k0 < without
    record_acceptance(
        5, "limit avoidance lowers mean max |theta|", ok,
        f"k0={cfg.ik.null_gain}: {np.degrees(with_k0):.3f} deg, k0=0: {np.degrees(without):.3f} deg",
    )
    assert with_k0 < without


def test_06_ratio_to_pressures_floor_and_clamp(cfg):
    ratios = np.geomspace(1e-2, 1e2, 100)
    floors = np.linspace(0.0, cfg.max_pressure, 100)
    R, PA = np.meshgrid(ratios, floors)
    p1, p2, _ = ratio_to_pressures(R.ravel(), PA.ravel(), cfg.max_pressure)
    floor_ok = np.all(np.minimum(p1, p2) == PA.ravel())
    range_ok = np.all((p1 >= 0) & (p2 >= 0) & (p1 <= cfg.max_pressure) & (p2 <= cfg.max_pressure))
    ok = bool(floor_ok and range_ok)
    record_acceptance(6, "ratio_to_pressures floor and clamp", ok, f"{R.size} grid points")
    assert floor_ok
    assert range_ok


def test_07_step_response_ordering(cfg):
    reports = {
        name: run_step_response(cfg, ExperimentSpec("step_response", profile=name))
        for name in ("high-aggressive", "low-aggressive", "low-conservative")
    }
    ha, la, lc = (reports[n] for n in ("high-aggressive", "low-aggressive", "low-conservative"))
    ha_settles = all(s is not None and s <= 3.0 for s in ha.settling_times)
    ha_best = ha.joint_rmse_deg < min(la.joint_rmse_deg, lc.joint_rmse_deg)
    la_fails = la.settling_time_5pct is None
    lc_slower = lc.settling_time_5pct is None or lc.settling_time_5pct > ha.settling_time_5pct
    lc_worse = lc_slower or lc.joint_rmse_deg > ha.joint_rmse_deg
    ok = ha_settles and ha_best and la_fails and lc_worse
    fmt = lambda r: "[" + ", ".join("dns" if s is None else f"{s:.2f}" for s in r.settling_times) + "]"
    record_acceptance(
        7, "step response ordering", ok,
        f"HA {fmt(ha)} {ha.joint_rmse_deg:.3f} deg; LA {fmt(la)} {la.joint_rmse_deg:.3f} deg; "
        f"LC {fmt(lc)} {lc.joint_rmse_deg:.3f} deg",
    )
    assert ha_settles
    assert ha_best
    assert la_fails
    assert lc_worse


def test_08_waypoint_tracking(cfg):
    t0 = time.perf_counter()
    r = run_waypoints(cfg, ExperimentSpec("waypoints", dwell=5.0))
    elapsed = time.perf_counter() - t0
    simulated = float(r.trajectory.time[-1])
    speed = simulated / elapsed
    ok = r.endeffector_rmse_mm <= 5.0 and elapsed < 60.0 and speed >= 10.0
    record_acceptance(
        8, "waypoint tracking", ok,
        f"RMSE {r.endeffector_rmse_mm:.3f} mm, {elapsed:.2f} s wall for {simulated:.0f} s ({speed:.0f}x)",
    )
    assert r.endeffector_rmse_mm <= 5.0
    assert elapsed < 60.0
    assert speed >= 10.0


def test_09_stiffness_and_frequency_rise_with_pressure(cfg):
    joints = cfg.joints
    k_rising = all(
        all(b > a for a, b in zip(ks, ks[1:]))
        for ks in ([joint_stiffness(j, 0.0, p, p) for p in STIFFNESS_PRESSURES] for j in joints)
    )
    freqs = [oscillation_frequency(cfg, p) for p in STIFFNESS_PRESSURES]
    f_rising = all(b > a for a, b in zip(freqs, freqs[1:]))
    ok = k_rising and f_rising
    record_acceptance(
        9, "stiffness and frequency rise with pressure", ok,
        "f = " + ", ".join(f"{f:.2f}" for f in freqs) + " Hz",
    )
    assert k_rising
    assert f_rising


def test_10_directional_compliance(cfg):
    r = run_compliance_demo(cfg, ExperimentSpec("compliance_demo"))
    ok = r.displacement_ratio >= 2.0
    record_acceptance(
        10, "directional compliance", ok,
        f"displacement ratio {r.displacement_ratio:.2f} (analytic {r.compliance_ratio:.2f})",
    )
    assert r.displacement_ratio >= 2.0


def test_11_payload_droop_increases(cfg):
    r = run_payload_sweep(cfg, ExperimentSpec("payload_sweep", payloads=(0.0, 1.0, 2.0, 3.0)))
    d = r.droop_mm
    ok = all(b > a for a, b in zip(d, d[1:]))
    record_acceptance(11, "payload droop increases", ok, "droop " + ", ".join(f"{x:.1f}" for x in d) + " mm")
    assert all(b > a for a, b in zip(d, d[1:]))


def test_12_energy_conservation_and_passivity(arm):
    plant = Plant(arm, SimConfig(dt=1e-3, damping_base=0.0, damping_pressure=0.0))
    th0 = np.zeros(N_JOINTS)
    th0[[0, 5, 10]] = [0.04, -0.03, 0.02]
    s = plant.initial_state(theta=th0)
    E0 = plant.mechanical_energy(s)
    drift = 0.0
    touched = False
    for _ in range(10_000):
        s = plant.advance(s, np.zeros(N_ACTUATORS), 1)
        drift = max(drift, abs(plant.mechanical_energy(s) - E0) / abs(E0))
        touched |= bool(np.any(s.theta >= plant.stop_hi) or np.any(s.theta <= plant.stop_lo))

    # every plant step in this session so far, plus a randomly driven damped run
    damped = Plant(arm)
    rng = np.random.default_rng(12)
    sd = damped.initial_state(theta=random_theta(rng, arm, scale=0.5), pressure=50.0)
    for _ in range(10_000 // 50):
        sd = damped.advance(sd, rng.uniform(0.0, 276.0, N_ACTUATORS), 50)
    session_max = max(DAMPING_POWER["max"], damped.max_damping_power)
    passive = session_max <= 0.0

    ok = drift <= 1e-3 and not touched and passive
    record_acceptance(
        12, "energy conservation and passivity", ok,
        f"drift {drift:.2e} over 10 s, max damping power {session_max:.2e} W "
        f"over {DAMPING_POWER['calls']} plant calls",
    )
    assert not touched
    assert drift <= 1e-3
    assert passive


def test_13_experiment_outputs_are_byte_identical(cfg, tmp_path):
    kinds = ("step_response", "waypoints", "payload_sweep", "endurance", "compliance_demo")
    same = {}
    for kind in kinds:
        blobs = []
        for run in range(2):
            out = tmp_path / f"{kind}_{run}"
            run_experiment(cfg, ExperimentSpec(kind, output=out, seed=0))
            blobs.append((out / f"{kind}.csv").read_bytes())
        same[kind] = blobs[0] == blobs[1]
    ok = all(same.values())
    record_acceptance(13, "byte-identical CSV output", ok, ", ".join(f"{k}={v}" for k, v in same.items()))
    assert ok
