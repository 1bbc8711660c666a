"""Closed-loop experiments: controller + plant + kinematics on one simulated clock.

The plant steps at ``1 / dt`` (1 kHz by default) and the joint controller
ticks at ``controller.rate_hz`` (100 Hz), holding its pressure commands
between ticks.  Trajectories are logged at the controller rate.

Every ``run_*`` function takes a :class:`~umarm.config.Config` plus an
:class:`ExperimentSpec` and returns a :class:`MetricsReport`; when the spec
names an output directory, a trajectory CSV and a plain-text summary are
written there.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .actuation import ArmController, joint_stiffness, task_space_compliance
from .arm import N_JOINTS, angles_from_link_poses, link_poses, position_jacobian, tip_position
from .errors import ConfigError, ExperimentError, InputError
from .ik import solve_position_ik
from .plant import CSV_COLUMNS, Plant, TankState

CSV_VERSION = "umarm-trajectory/1"
KINDS = ("step_response", "waypoints", "payload_sweep", "endurance", "compliance_demo")


@dataclass
class ExperimentSpec:
    kind: str
    profile: str = "high-aggressive"
    duration: float | None = None
    waypoints: np.ndarray | None = None
    dwell: float | None = None
    payloads: tuple | None = None
    output: Path | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown experiment kind '{self.kind}'")
        if self.duration is not None and not self.duration > 0:
            raise InputError("duration must be positive")
        if self.waypoints is not None:
            self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
            if self.kind == "waypoints" and len(self.waypoints) == 0:
                raise InputError("waypoint experiment needs at least one waypoint")


@dataclass
class MetricsReport:
    kind: str
    profile: str
    settling_times: list = field(default_factory=list)  # per transition, None = did not settle
    settling_time_5pct: float | None = None
    joint_rmse_deg: float | None = None
    endeffector_rmse_mm: float | None = None
    waypoint_errors_mm: list = field(default_factory=list)
    endurance_s: float | None = None
    waypoints_reached: int | None = None
    supply_failed: bool | None = None
    payloads_kg: list = field(default_factory=list)
    droop_mm: list = field(default_factory=list)
    displacement_ratio: float | None = None
    compliance_ratio: float | None = None
    notes: list = field(default_factory=list)

    def summary(self):
        lines = [f"experiment: {self.kind}", f"profile: {self.profile}"]
        if self.settling_times:
            fmt = ["did-not-settle" if s is None else f"{s:.3f} s" for s in self.settling_times]
            lines.append("5% settling per transition: " + ", ".join(fmt))
            worst = "did-not-settle" if self.settling_time_5pct is None else f"{self.settling_time_5pct:.3f} s"
            lines.append(f"5% settling (worst transition): {worst}")
        for name, unit in (
            ("joint_rmse_deg", "deg"), ("endeffector_rmse_mm", "mm"), ("endurance_s", "s"),
            ("waypoints_reached", ""), ("supply_failed", ""), ("displacement_ratio", ""),
            ("compliance_ratio", ""),
        ):
            v = getattr(self, name)
            if v is not None:
                lines.append(f"{name}: {v:.6g} {unit}".rstrip() if isinstance(v, float) else f"{name}: {v}")
        if self.waypoint_errors_mm:
            lines.append("per-waypoint RMSE (mm): " + ", ".join(f"{e:.3f}" for e in self.waypoint_errors_mm))
        if self.payloads_kg:
            for m, d in zip(self.payloads_kg, self.droop_mm):
                lines.append(f"payload {m:g} kg: droop {d:.3f} mm")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


@dataclass
class Trajectory:
    time: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    pressure: np.ndarray
    tank: np.ndarray
    target: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# {CSV_VERSION}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        rows = np.column_stack([self.time, self.theta, self.theta_dot, self.pressure, self.tank])
        for row in rows:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


def settling_time(times, signal, target, step_amplitude, band=0.05):
    """Time from ``times[0]`` after which ``signal`` stays within the band.

    The band is ``+-band * |step_amplitude|`` around ``target``.  Returns
    ``None`` when the last sample is still outside ("does not settle").
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if signal.size == 0:
        raise InputError("empty signal")
    tol = band * abs(step_amplitude)
    outside = np.flatnonzero(np.abs(signal - target) > tol)
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last == signal.size - 1:
        return None
    return float(times[last + 1] - times[0])


class ClosedLoop:
    """Controller and plant wired together for one experiment run."""

    def __init__(self, cfg, profile, sim=None, joints=None, frame_feedback=False):
        self.cfg = cfg
        self.profile = profile
        self.sim = sim if sim is not None else cfg.sim
        self.plant = Plant(cfg.arm, self.sim, joints if joints is not None else cfg.joints)
        self.controller = ArmController(
            profile.gains, profile.p_A, cfg.arm.limits, cfg.derate_gamma, cfg.max_pressure
        )
        self.substeps = int(round(1.0 / (cfg.control_rate * self.sim.dt)))
        self.period = self.substeps * self.sim.dt
        self.frame_feedback = frame_feedback

    def measure(self, state):
        if not self.frame_feedback:
            return state.theta
        return angles_from_link_poses(self.cfg.arm, link_poses(self.cfg.arm, state.theta))

    def run(self, schedule, duration, tank=None, state=None, stop_on_depletion=False):
        """Simulate ``duration`` seconds tracking ``schedule(t) -> 12 targets``.

        Returns ``(trajectory, final_state, final_tank)``.
        """
        n_ticks = int(round(duration / self.period))
        if state is None:
            state = self.plant.initial_state(pressure=np.repeat(self.controller.p_A, 2))
        rows_t, rows_th, rows_thd, rows_p, rows_tank, rows_tg = [], [], [], [], [], []
        for k in range(n_ticks + 1):
            t = state.time
            target = np.asarray(schedule(t), dtype=float)
            rows_t.append(t)
            rows_th.append(state.theta)
            rows_thd.append(state.theta_dot)
            rows_p.append(state.pressure)
            rows_tank.append(np.nan if tank is None else tank.pressure)
            rows_tg.append(target)
            if k == n_ticks:
                break
            if tank is not None and stop_on_depletion and not tank.supply_ok:
                break
            cmd = self.controller.update(target, self.measure(state), self.period)
            if tank is None:
                state = self.plant.advance(state, cmd, self.substeps)
            else:
                state, tank = self.plant.advance(state, cmd, self.substeps, tank)
        traj = Trajectory(
            np.array(rows_t), np.array(rows_th), np.array(rows_thd), np.array(rows_p),
            np.array(rows_tank), np.array(rows_tg),
        )
        return traj, state, tank


def _write_outputs(spec, report, traj=None, name=None):
    if spec.output is None:
        return
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = name or spec.kind
    if traj is not None:
        (out / f"{stem}.csv").write_text(traj.to_csv())
    (out / f"{stem}_summary.txt").write_text(report.summary())


def _profile(cfg, name):
    return cfg.profile(name)


def step_schedule(cfg):
    """Piecewise-constant joint targets of the step-response protocol."""
    sr = cfg.step_response
    switches = [float(s) for s in sr["switch_times"]]
    values = [float(v) for v in sr["targets"]]

    def schedule(t):
        value = 0.0
        for ts, v in zip(switches, values):
            # small tolerance so a tick landing on a switch time sees the new target
            if t >= ts - 1e-9:
                value = v
        return np.full(N_JOINTS, value)

    return schedule, switches, values


def run_step_response(cfg, spec, joints=None, sim=None):
    profile = _profile(cfg, spec.profile)
    schedule, switches, values = step_schedule(cfg)
    duration = spec.duration if spec.duration is not None else float(cfg.step_response.get("duration", 24.0))
    loop = ClosedLoop(cfg, profile, sim=sim, joints=joints)
    traj, _, _ = loop.run(schedule, duration)

    report = MetricsReport(kind=spec.kind, profile=profile.name)
    bounds = switches + [traj.time[-1] + 1e-9]
    prev = 0.0
    for i, (t0, value) in enumerate(zip(switches, values)):
        if t0 >= traj.time[-1]:
            break
        sel = (traj.time >= t0 - 1e-9) & (traj.time < bounds[i + 1] - 1e-9)
        per_joint = [
            settling_time(traj.time[sel], traj.theta[sel, j], value, value - prev)
            for j in range(N_JOINTS)
        ]
        report.settling_times.append(None if any(s is None for s in per_joint) else max(per_joint))
        prev = value
    if report.settling_times and all(s is not None for s in report.settling_times):
        report.settling_time_5pct = max(report.settling_times)
    err = traj.theta - traj.target
    report.joint_rmse_deg = float(np.degrees(np.sqrt(np.mean(err**2))))
    tips = np.array([tip_position(cfg.arm, th) for th in traj.theta[:: max(1, len(traj.time) // 600)]])
    targets = np.array([tip_position(cfg.arm, th) for th in traj.target[:: max(1, len(traj.time) // 600)]])
    report.endeffector_rmse_mm = float(1e3 * np.sqrt(np.mean(np.sum((tips - targets) ** 2, axis=1))))
    report.trajectory = traj
    _write_outputs(spec, report, traj)
    return report


def plan_waypoints(cfg, points, theta0=None):
    """Joint targets for each waypoint, each solved from the same start ``theta0``.

    Solving every waypoint from one start (the rest posture by default)
    keeps the plan independent of traversal order; chaining warm starts
    lets the redundant solution drift toward the joint limits.

    Raises:
        ExperimentError: naming the first waypoint the solver cannot reach.
    """
    theta = np.zeros(N_JOINTS) if theta0 is None else np.asarray(theta0, dtype=float)
    plan = []
    for i, p in enumerate(points):
        res = solve_position_ik(cfg.arm, theta, p, cfg.ik)
        if not res.converged:
            raise ExperimentError(
                f"IK did not converge for waypoint {i} at {np.round(p, 4).tolist()} "
                f"(residual {res.residual * 1e3:.2f} mm)"
            )
        plan.append(res.theta)
    return np.array(plan)


def _waypoint_schedule(plan, dwell):
    def schedule(t):
        k = min(int(math.floor(t / dwell + 1e-9)), len(plan) - 1)
        return plan[k]
    return schedule


def run_waypoints(cfg, spec, joints=None, sim=None):
    profile = _profile(cfg, spec.profile)
    points = spec.waypoints if spec.waypoints is not None else cfg.waypoints
    dwell = spec.dwell if spec.dwell is not None else cfg.waypoint_dwell
    window = min(cfg.waypoint_window, dwell)
    plan = plan_waypoints(cfg, points)
    loop = ClosedLoop(cfg, profile, sim=sim, joints=joints)
    duration = dwell * len(points)
    traj, _, _ = loop.run(_waypoint_schedule(plan, dwell), duration)

    report = MetricsReport(kind=spec.kind, profile=profile.name)
    sq_all = []
    for i, p in enumerate(points):
        t_end = (i + 1) * dwell
        sel = (traj.time >= t_end - window - 1e-9) & (traj.time < t_end - 1e-9)
        tips = np.array([tip_position(cfg.arm, th) for th in traj.theta[sel]])
        sq = np.sum((tips - p) ** 2, axis=1)
        sq_all.append(sq)
        report.waypoint_errors_mm.append(float(1e3 * np.sqrt(np.mean(sq))))
    report.endeffector_rmse_mm = float(1e3 * np.sqrt(np.mean(np.concatenate(sq_all))))
    err = traj.theta - traj.target
    report.joint_rmse_deg = float(np.degrees(np.sqrt(np.mean(err**2))))
    report.trajectory = traj
    _write_outputs(spec, report, traj)
    return report


def bending_commands(cfg, direction, pressure=None, hold=None):
    """One-sided maximum pressure on every joint that bends the tip toward ``direction``.

    Joints whose rest-posture motion is orthogonal to ``direction`` get the
    balanced ``hold`` pressure on both sides so they stay near zero.
    """
    pressure = cfg.max_pressure if pressure is None else pressure
    hold = float(cfg.payload.get("hold_kpa", 0.0)) if hold is None else hold
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    J = position_jacobian(cfg.arm, np.zeros(N_JOINTS))
    proj = d @ J
    cmd = np.zeros(2 * N_JOINTS)
    scale = np.max(np.abs(proj))
    for i, v in enumerate(proj):
        if abs(v) < 1e-6 * scale:
            cmd[2 * i] = cmd[2 * i + 1] = hold
            continue
        cmd[2 * i if v > 0 else 2 * i + 1] = pressure
    return cmd


def run_payload_sweep(cfg, spec, joints=None, sim=None):
    """Steady tip position under one-sided maximum actuation for each payload."""
    payloads = list(spec.payloads if spec.payloads is not None else cfg.payload["masses_kg"])
    if any(m < 0 for m in payloads):
        raise InputError("payloads must be non-negative")
    settle = spec.duration if spec.duration is not None else float(cfg.payload.get("settle_time", 4.0))
    cmd = bending_commands(cfg, cfg.payload.get("direction", [1.0, 0.0, 0.0]))
    base_sim = sim if sim is not None else cfg.sim
    joints = joints if joints is not None else cfg.joints
    tips = {}
    trajs = []
    for m in sorted(set([0.0] + [float(x) for x in payloads])):
        plant = Plant(cfg.arm, replace(base_sim, payload_mass=m), joints)
        state = plant.initial_state(pressure=cmd)
        n = int(round(settle / base_sim.dt))
        state = plant.advance(state, cmd, n)
        tips[m] = tip_position(cfg.arm, state.theta)
        trajs.append(state.row())
    report = MetricsReport(kind=spec.kind, profile="one-sided-max")
    report.payloads_kg = [float(m) for m in payloads]
    report.droop_mm = [float(1e3 * np.linalg.norm(tips[float(m)] - tips[0.0])) for m in payloads]
    report.tips = {m: tips[m].tolist() for m in tips}
    rows = np.array(trajs)
    traj = Trajectory(rows[:, 0], rows[:, 1:13], rows[:, 13:25], rows[:, 25:49], rows[:, 49], rows[:, 1:13] * 0)
    _write_outputs(spec, report, traj)
    return report


def run_endurance(cfg, spec, tank=None, joints=None, sim=None):
    """Loop the waypoint cycle on tank air until the regulator loses supply."""
    profile = _profile(cfg, spec.profile)
    tank = tank if tank is not None else cfg.tank
    points = spec.waypoints if spec.waypoints is not None else cfg.waypoints
    dwell = spec.dwell if spec.dwell is not None else float(cfg.endurance.get("dwell", 2.0))
    cap = spec.duration if spec.duration is not None else float(cfg.endurance.get("duration_cap", 3600.0))
    plan = plan_waypoints(cfg, points)
    n = len(plan)

    def schedule(t):
        return plan[int(math.floor(t / dwell + 1e-9)) % n]

    loop = ClosedLoop(cfg, profile, sim=sim, joints=joints)
    traj, state, tank_end = loop.run(schedule, cap, tank=tank, stop_on_depletion=True)
    report = MetricsReport(kind=spec.kind, profile=profile.name)
    failed = not tank_end.supply_ok
    report.supply_failed = failed
    report.endurance_s = float(state.time) if failed else float(cap)
    report.waypoints_reached = int(math.floor(report.endurance_s / dwell + 1e-9))
    if not failed:
        report.notes.append("supply never failed; endurance reported as the duration cap")
    report.trajectory = traj
    _write_outputs(spec, report, traj)
    return report


def compliance_profile(cfg, direction_stiff, high=None, low=None, theta=None):
    """Per-joint antagonistic pressures that stiffen the tip along ``direction_stiff``.

    A joint is stiffened when its tip motion is at least as aligned with
    the stiff direction as with the orthogonal horizontal direction.
    """
    high = float(cfg.compliance.get("high_kpa", 276.0)) if high is None else high
    low = float(cfg.compliance.get("low_kpa", 14.0)) if low is None else low
    theta = np.zeros(N_JOINTS) if theta is None else theta
    d = np.asarray(direction_stiff, dtype=float)
    d = d / np.linalg.norm(d)
    J = position_jacobian(cfg.arm, theta)
    along = np.abs(d @ J)
    norm = np.linalg.norm(J, axis=0)
    # 45-degree joints (ratio exactly 1/sqrt(2)) count as aligned.
    aligned = along >= (np.sqrt(0.5) - 1e-9) * norm
    return np.where(aligned, high, low)


def run_compliance_demo(cfg, spec, pressures=None, joints=None, sim=None):
    """Tip displacement under equal forces along a stiff and a soft direction.

    Both the analytic compliance ratio and a simulated one (open-loop, both
    sides of each joint held at the profile pressure) are reported.
    """
    comp = cfg.compliance
    d_stiff = np.asarray(comp.get("probe_stiff", [1, 0, 0]), dtype=float)
    d_soft = np.asarray(comp.get("probe_soft", [0, 1, 0]), dtype=float)
    d_stiff /= np.linalg.norm(d_stiff)
    d_soft /= np.linalg.norm(d_soft)
    if abs(d_stiff @ d_soft) > 1e-9:
        raise InputError("probe directions must be orthogonal")
    force = float(comp.get("force_n", 2.0))
    settle = spec.duration if spec.duration is not None else float(comp.get("settle_time", 3.0))
    pa = compliance_profile(cfg, d_stiff) if pressures is None else np.asarray(pressures, dtype=float)
    joints = joints if joints is not None else cfg.joints
    theta = np.zeros(N_JOINTS)

    k = np.array([joint_stiffness(j, 0.0, p, p) for j, p in zip(joints, pa)])
    report = MetricsReport(kind=spec.kind, profile="directional")
    try:
        C = task_space_compliance(cfg.arm, theta, k)
    except InputError:
        report.notes.append("singular compliance: some joint has zero stiffness")
        C = None
    if C is not None:
        c_stiff = np.linalg.norm(C @ d_stiff)
        c_soft = np.linalg.norm(C @ d_soft)
        report.compliance_ratio = float(c_soft / c_stiff) if c_stiff > 0 else math.inf

    base_sim = sim if sim is not None else cfg.sim
    disp = []
    rows = []
    cmd = np.repeat(pa, 2)
    for d in (d_stiff, d_soft):
        tips = []
        for f in (0.0, force):
            plant = Plant(cfg.arm, replace(base_sim, tip_force=tuple(f * d)), joints)
            state = plant.initial_state(pressure=cmd)
            state = plant.advance(state, cmd, int(round(settle / base_sim.dt)))
            tips.append(tip_position(cfg.arm, state.theta))
            rows.append(state.row())
        disp.append(float(np.linalg.norm(tips[1] - tips[0])))
    report.displacements_mm = [1e3 * x for x in disp]
    report.displacement_ratio = disp[1] / disp[0] if disp[0] > 0 else (math.inf if disp[1] > 0 else math.nan)
    rows = np.array(rows)
    traj = Trajectory(rows[:, 0], rows[:, 1:13], rows[:, 13:25], rows[:, 25:49], rows[:, 49], rows[:, 1:13] * 0)
    _write_outputs(spec, report, traj)
    return report


def dominant_frequency(signal, dt):
    """Damped frequency (Hz) of the best two-pole fit to a free response.

    Fits ``x[k+1] = a1 x[k] + a2 x[k-1]`` by least squares and reads the
    frequency off the pole angle.  Returns 0 when the fitted poles are real.
    """
    x = np.asarray(signal, dtype=float)
    if x.size < 4:
        raise InputError("need at least four samples")
    A = np.column_stack([x[1:-1], x[:-2]])
    (a1, a2), *_ = np.linalg.lstsq(A, x[2:], rcond=None)
    poles = np.roots([1.0, -a1, -a2])
    if np.all(np.abs(poles.imag) <= 1e-12 * np.maximum(np.abs(poles), 1.0)):
        return 0.0
    return float(np.max(np.abs(np.angle(poles))) / (2.0 * np.pi * dt))


def oscillation_frequency(cfg, pressure, joint=0, amplitude=0.01, window=0.5, sim=None, joints=None):
    """Small-signal free-oscillation frequency (Hz) of one joint at equal pressures.

    Every actuator is held at ``pressure``; ``joint`` starts ``amplitude``
    rad off the hanging rest posture and the first ``window`` seconds of
    its response are fitted with :func:`dominant_frequency`.
    """
    sim = sim if sim is not None else cfg.sim
    plant = Plant(cfg.arm, sim, joints if joints is not None else cfg.joints)
    theta = np.zeros(N_JOINTS)
    theta[joint] = amplitude
    cmd = np.full(2 * N_JOINTS, float(pressure))
    state = plant.initial_state(theta=theta, pressure=cmd)
    n = int(round(window / sim.dt))
    trace = np.empty(n + 1)
    trace[0] = state.theta[joint]
    for k in range(n):
        state = plant.advance(state, cmd, 1)
        trace[k + 1] = state.theta[joint]
    return dominant_frequency(trace, sim.dt)


RUNNERS = {
    "step_response": run_step_response,
    "waypoints": run_waypoints,
    "payload_sweep": run_payload_sweep,
    "endurance": run_endurance,
    "compliance_demo": run_compliance_demo,
}


def run_experiment(cfg, spec):
    try:
        runner = RUNNERS[spec.kind]
    except KeyError:
        raise ConfigError(f"unknown experiment kind '{spec.kind}'") from None
    return runner(cfg, spec)
