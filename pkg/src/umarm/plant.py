"""Fixed-step simulation of the arm under antagonistic pneumatic actuation.

Model summary:
    * 24 on-off valves, each a bang-bang pressure loop with a deadband and
      first-order fill/vent dynamics against the supply line.
    * 12 decoupled joints, ``I_i th'' = tau_pair + tau_gravity + tau_ext
      - (c0 + cp * min(p1, p2)) th'``.  Gravity and external tip forces
      are evaluated through the full forward kinematics, so the joints
      still feel each other's posture statically; inertia is diagonal and
      fixed at its rest-posture value.
    * Rigid, inelastic hard stops ``hardstop_margin`` beyond each joint
      limit.
    * An optional compressed-air tank behind a regulator; filling
      actuators draws standard volume from it (isothermal ideal gas).

The joint integrator is velocity Verlet (kick-drift-kick) at ``dt``;
valves are advanced first in each step.  The inner loop runs in numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .actuation import MAX_PRESSURE, JointBank, _torque_stiffness, build_joints
from .arm import GRAVITY, N_JOINTS
from .errors import InputError, SimulationFault

P_ATM = 101.325  # kPa
HOLD, FILL, VENT = 0, 1, 2
VALVE_NAMES = {HOLD: "hold", FILL: "fill", VENT: "vent"}
VALVE_CODES = {v: k for k, v in VALVE_NAMES.items()}
N_ACTUATORS = 2 * N_JOINTS


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    rotor_inertia: float = 1e-3  # kg m^2 added to every joint
    damping_base: float = 0.05  # N m s / rad
    damping_pressure: float = 5e-3  # N m s / (rad kPa), times min(p1, p2)
    tau_fill: float = 0.08  # s
    tau_vent: float = 0.12  # s
    deadband: float = 3.0  # kPa
    supply_pressure: float = MAX_PRESSURE
    payload_mass: float = 0.0  # kg at the end-effector
    hardstop_margin: float = np.deg2rad(2.0)
    gravity: float = GRAVITY
    actuator_volume: float = 0.012  # L per actuator
    tip_force: tuple = (0.0, 0.0, 0.0)  # N, constant external force at the tip

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError("dt must be positive")
        if not self.rotor_inertia > 0:
            raise InputError("inertia must be positive")
        if self.payload_mass < 0:
            raise InputError("payload must be non-negative")
        if min(self.damping_base, self.damping_pressure) < 0:
            raise InputError("damping coefficients must be non-negative")
        object.__setattr__(self, "tip_force", tuple(float(f) for f in self.tip_force))


@dataclass
class ActuatorState:
    pressure: float
    valve_state: str = "hold"
    target_pressure: float = 0.0


@dataclass
class TankState:
    """Compressed-air tank behind a regulator (gauge kPa, liters)."""

    volume: float = 1.11
    pressure: float = 31000.0
    regulator_setpoint: float = MAX_PRESSURE

    @property
    def supply_ok(self):
        return self.pressure > self.regulator_setpoint

    @property
    def supply(self):
        return self.regulator_setpoint if self.supply_ok else max(self.pressure, 0.0)

    def standard_volume(self, pressure=None):
        """Gas content in standard liters at the given gauge pressure."""
        p = self.pressure if pressure is None else pressure
        return self.volume * (p + P_ATM) / P_ATM

    def usable_volume(self):
        return self.standard_volume() - self.standard_volume(self.regulator_setpoint)

    @classmethod
    def infinite(cls, setpoint=MAX_PRESSURE):
        return cls(volume=np.inf, pressure=np.inf, regulator_setpoint=setpoint)


def tank_step(tank, flow, dt):
    """Draw ``flow`` standard liters per second for ``dt`` seconds.

    Isothermal: the tank's absolute pressure drops by ``flow dt P_atm / V``.
    Pressure never increases.
    """
    if flow < 0:
        raise InputError("flow must be non-negative")
    if flow == 0 or np.isinf(tank.volume):
        return replace(tank)
    drop = flow * dt * P_ATM / tank.volume
    return replace(tank, pressure=max(tank.pressure - drop, -P_ATM))


def depletion_time(tank, flow):
    """Closed-form time until the tank falls to the regulator setpoint."""
    if flow <= 0 or np.isinf(tank.volume):
        return np.inf
    return max(tank.usable_volume(), 0.0) / flow


@dataclass
class PlantState:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    theta_dot: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    pressure: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTUATORS))
    valve: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTUATORS, dtype=np.int64))
    target: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTUATORS))
    time: float = 0.0

    def copy(self):
        return PlantState(
            self.theta.copy(), self.theta_dot.copy(), self.pressure.copy(),
            self.valve.copy(), self.target.copy(), self.time,
        )

    def actuator(self, k):
        return ActuatorState(float(self.pressure[k]), VALVE_NAMES[int(self.valve[k])], float(self.target[k]))

    def row(self, tank_pressure=np.nan):
        """Flat snapshot: time, 12 angles, 12 rates, 24 pressures, tank pressure."""
        return np.concatenate([[self.time], self.theta, self.theta_dot, self.pressure, [tank_pressure]])


CSV_COLUMNS = (
    ["time"]
    + [f"theta_{i}" for i in range(N_JOINTS)]
    + [f"theta_dot_{i}" for i in range(N_JOINTS)]
    + [f"p_{i}_{s}" for i in range(N_JOINTS) for s in (1, 2)]
    + ["tank_pressure"]
)


# --- kernels ----------------------------------------------------------------


@njit(cache=True)
def _valve_update(p, target, supply, dt, tau_fill, tau_vent, deadband):
    if p < target - deadband:
        if supply > p:
            p_new = supply - (supply - p) * np.exp(-dt / tau_fill)
        else:
            p_new = p
        return p_new, FILL
    if p > target + deadband:
        return p * np.exp(-dt / tau_vent), VENT
    return p, HOLD


@njit(cache=True)
def _chain(axes, points, theta, R, t):
    n = theta.shape[0]
    for a in range(3):
        for b in range(3):
            R[0, a, b] = 1.0 if a == b else 0.0
        t[0, a] = 0.0
    E = np.empty((3, 3))
    for i in range(n):
        x, y, z = axes[i, 0], axes[i, 1], axes[i, 2]
        s = np.sin(theta[i])
        h = np.sin(0.5 * theta[i])
        c = 2.0 * h * h
        E[0, 0] = 1.0 - c * (y * y + z * z)
        E[1, 1] = 1.0 - c * (x * x + z * z)
        E[2, 2] = 1.0 - c * (x * x + y * y)
        E[0, 1] = -s * z + c * x * y
        E[1, 0] = s * z + c * x * y
        E[0, 2] = s * y + c * x * z
        E[2, 0] = -s * y + c * x * z
        E[1, 2] = -s * x + c * y * z
        E[2, 1] = s * x + c * y * z
        # translation of the joint exponential: (I - E) q
        te0 = points[i, 0] - (E[0, 0] * points[i, 0] + E[0, 1] * points[i, 1] + E[0, 2] * points[i, 2])
        te1 = points[i, 1] - (E[1, 0] * points[i, 0] + E[1, 1] * points[i, 1] + E[1, 2] * points[i, 2])
        te2 = points[i, 2] - (E[2, 0] * points[i, 0] + E[2, 1] * points[i, 1] + E[2, 2] * points[i, 2])
        for a in range(3):
            for b in range(3):
                R[i + 1, a, b] = R[i, a, 0] * E[0, b] + R[i, a, 1] * E[1, b] + R[i, a, 2] * E[2, b]
            t[i + 1, a] = R[i, a, 0] * te0 + R[i, a, 1] * te1 + R[i, a, 2] * te2 + t[i, a]


@njit(cache=True)
def _static_torques(axes, points, mass_m, mass_pos, mass_parent, theta, g, tip_rest, tip_force, R, t, tau):
    """Gravity plus tip-force joint torques; returns gravitational potential energy."""
    n = theta.shape[0]
    _chain(axes, points, theta, R, t)
    for i in range(n):
        tau[i] = 0.0
    U = 0.0
    w = np.empty(3)
    q = np.empty(3)
    p = np.empty(3)
    for i in range(n):
        for a in range(3):
            w[a] = R[i, a, 0] * axes[i, 0] + R[i, a, 1] * axes[i, 1] + R[i, a, 2] * axes[i, 2]
            q[a] = R[i, a, 0] * points[i, 0] + R[i, a, 1] * points[i, 1] + R[i, a, 2] * points[i, 2] + t[i, a]
        acc = 0.0
        for m in range(mass_m.shape[0]):
            k = mass_parent[m]
            if k < i:
                continue
            for a in range(3):
                p[a] = (R[k + 1, a, 0] * mass_pos[m, 0] + R[k + 1, a, 1] * mass_pos[m, 1]
                        + R[k + 1, a, 2] * mass_pos[m, 2] + t[k + 1, a])
            # w . ((p - q) x F) with F = (0, 0, -m g)
            fz = -mass_m[m] * g
            dx = p[0] - q[0]
            dy = p[1] - q[1]
            acc += (w[0] * dy - w[1] * dx) * fz
        for a in range(3):
            p[a] = (R[n, a, 0] * tip_rest[0] + R[n, a, 1] * tip_rest[1]
                    + R[n, a, 2] * tip_rest[2] + t[n, a])
        dx = p[0] - q[0]
        dy = p[1] - q[1]
        dz = p[2] - q[2]
        cx = dy * tip_force[2] - dz * tip_force[1]
        cy = dz * tip_force[0] - dx * tip_force[2]
        cz = dx * tip_force[1] - dy * tip_force[0]
        tau[i] = acc + w[0] * cx + w[1] * cy + w[2] * cz
    for m in range(mass_m.shape[0]):
        k = mass_parent[m]
        z = mass_pos[m, 2]
        if k >= 0:
            z = (R[k + 1, 2, 0] * mass_pos[m, 0] + R[k + 1, 2, 1] * mass_pos[m, 1]
                 + R[k + 1, 2, 2] * mass_pos[m, 2] + t[k + 1, 2])
        U += mass_m[m] * g * z
    return U


@njit(cache=True)
def _accel(theta, omega, pressure, inertia, c0, cp,
           Ax, Ay, bx, by, g1, g2, L0, eps,
           axes, points, mass_m, mass_pos, mass_parent, g, tip_rest, tip_force,
           R, t, tau_s, out):
    _static_torques(axes, points, mass_m, mass_pos, mass_parent, theta, g, tip_rest, tip_force, R, t, tau_s)
    worst = -np.inf
    for i in range(theta.shape[0]):
        p1 = pressure[2 * i]
        p2 = pressure[2 * i + 1]
        tau_a, _ = _torque_stiffness(theta[i], p1, p2, Ax[i], Ay[i], bx[i], by[i], g1[i], g2[i], L0[i], eps[i])
        c = c0 + cp * min(p1, p2)
        damp = -c * omega[i]
        power = damp * omega[i]
        if power > worst:
            worst = power
        out[i] = (tau_a + tau_s[i] + damp) / inertia[i]
    return worst


@njit(cache=True)
def _advance(n_steps, dt, theta, omega, pressure, valve, target, tank,
             inertia, c0, cp, tau_fill, tau_vent, deadband, stop_lo, stop_hi, act_volume,
             Ax, Ay, bx, by, g1, g2, L0, eps,
             axes, points, mass_m, mass_pos, mass_parent, g, tip_rest, tip_force, stats):
    # tank = [volume, gauge pressure, setpoint]; stats = [std liters drawn, max damping power]
    nj = theta.shape[0]
    R = np.empty((nj + 1, 3, 3))
    t = np.empty((nj + 1, 3))
    tau_s = np.empty(nj)
    a0 = np.empty(nj)
    a1 = np.empty(nj)
    for _ in range(n_steps):
        supply = tank[2] if tank[1] > tank[2] else max(tank[1], 0.0)
        drawn = 0.0
        for k in range(pressure.shape[0]):
            p_new, v = _valve_update(pressure[k], target[k], supply, dt, tau_fill, tau_vent, deadband)
            if v == FILL and p_new > pressure[k]:
                drawn += act_volume[k] * (p_new - pressure[k]) / P_ATM
            pressure[k] = p_new
            valve[k] = v
        stats[0] += drawn
        if drawn > 0.0 and np.isfinite(tank[0]):
            tank[1] -= drawn * P_ATM / tank[0]

        w0 = _accel(theta, omega, pressure, inertia, c0, cp, Ax, Ay, bx, by, g1, g2, L0, eps,
                    axes, points, mass_m, mass_pos, mass_parent, g, tip_rest, tip_force, R, t, tau_s, a0)
        for i in range(nj):
            omega[i] += 0.5 * dt * a0[i]
            theta[i] += dt * omega[i]
            if theta[i] > stop_hi[i]:
                theta[i] = stop_hi[i]
                if omega[i] > 0.0:
                    omega[i] = 0.0
            elif theta[i] < stop_lo[i]:
                theta[i] = stop_lo[i]
                if omega[i] < 0.0:
                    omega[i] = 0.0
        w1 = _accel(theta, omega, pressure, inertia, c0, cp, Ax, Ay, bx, by, g1, g2, L0, eps,
                    axes, points, mass_m, mass_pos, mass_parent, g, tip_rest, tip_force, R, t, tau_s, a1)
        for i in range(nj):
            omega[i] += 0.5 * dt * a1[i]
            # a joint resting on a stop cannot be moving into it
            if theta[i] >= stop_hi[i] and omega[i] > 0.0:
                omega[i] = 0.0
            elif theta[i] <= stop_lo[i] and omega[i] < 0.0:
                omega[i] = 0.0
        stats[1] = max(stats[1], w0, w1)
        for i in range(nj):
            if not (np.isfinite(theta[i]) and np.isfinite(omega[i])):
                return False
    return True


# --- public API -------------------------------------------------------------


def pressure_dynamics_step(act, supply, dt, tau_fill=0.08, tau_vent=0.12, deadband=3.0):
    """Advance one actuator's internal on-off pressure loop by ``dt``."""
    if dt <= 0:
        raise InputError("dt must be positive")
    p, v = _valve_update(float(act.pressure), float(act.target_pressure), float(supply),
                         float(dt), float(tau_fill), float(tau_vent), float(deadband))
    return ActuatorState(min(max(p, 0.0), max(supply, act.pressure)), VALVE_NAMES[int(v)], act.target_pressure)


def _mass_arrays(arm, payload):
    m = [lm.mass for lm in arm.masses] + [payload]
    pos = [lm.rest_position for lm in arm.masses] + [arm.rest_tool_pose.translation]
    parent = [lm.parent_joint for lm in arm.masses] + [N_JOINTS - 1]
    return np.array(m, dtype=float), np.array(pos, dtype=float), np.array(parent, dtype=np.int64)


def rest_inertia(arm, payload=0.0, rotor=0.0):
    """Inertia of everything distal to each joint about its axis, arm at rest."""
    m, pos, parent = _mass_arrays(arm, payload)
    out = np.full(N_JOINTS, float(rotor))
    for i in range(N_JOINTS):
        w, q = arm.axes[i], arm.points[i]
        for mk, pk, par in zip(m, pos, parent):
            if par >= i:
                d = pk - q
                d_perp = d - (d @ w) * w
                out[i] += mk * (d_perp @ d_perp)
    return out


def _static(arm, theta, payload, g, tip_force):
    m, pos, parent = _mass_arrays(arm, payload)
    R = np.empty((N_JOINTS + 1, 3, 3))
    t = np.empty((N_JOINTS + 1, 3))
    tau = np.empty(N_JOINTS)
    U = _static_torques(
        np.ascontiguousarray(arm.axes), np.ascontiguousarray(arm.points), m, pos, parent,
        np.asarray(theta, dtype=float), float(g), np.ascontiguousarray(arm.rest_tool_pose.translation),
        np.asarray(tip_force, dtype=float), R, t, tau,
    )
    return tau, U


def gravity_torques(arm, theta, payload=0.0, g=GRAVITY):
    """Joint torques ``-dU/dtheta`` from the lumped link masses and a tip payload."""
    if payload < 0:
        raise InputError("payload must be non-negative")
    return _static(arm, theta, payload, g, np.zeros(3))[0]


def potential_energy(arm, theta, payload=0.0, g=GRAVITY):
    return _static(arm, theta, payload, g, np.zeros(3))[1]


def tip_force_torques(arm, theta, force):
    """Joint torques ``J_p^T f`` produced by a force applied at the tip."""
    return _static(arm, theta, 0.0, 0.0, force)[0]


class Plant:
    """Simulator instance for one arm, actuator set and configuration.

    Instances hold only constant data; state lives in :class:`PlantState`
    and :class:`TankState` values passed in and returned.
    """

    def __init__(self, arm, config=None, joints=None):
        self.arm = arm
        self.config = config if config is not None else SimConfig()
        self.bank = JointBank(joints if joints is not None else build_joints(arm))
        cfg = self.config
        self.inertia = rest_inertia(arm, cfg.payload_mass, cfg.rotor_inertia)
        self._m, self._pos, self._parent = _mass_arrays(arm, cfg.payload_mass)
        self.stop_hi = arm.limits.upper + cfg.hardstop_margin
        self.stop_lo = arm.limits.lower - cfg.hardstop_margin
        self._axes = np.ascontiguousarray(arm.axes)
        self._points = np.ascontiguousarray(arm.points)
        self._tip = np.ascontiguousarray(arm.rest_tool_pose.translation)
        self._force = np.array(cfg.tip_force, dtype=float)
        self._volume = np.full(N_ACTUATORS, cfg.actuator_volume)
        self.max_damping_power = -np.inf
        self.air_drawn = 0.0

    def initial_state(self, theta=None, pressure=None):
        s = PlantState()
        if theta is not None:
            s.theta = np.array(theta, dtype=float)
        if pressure is not None:
            s.pressure = np.broadcast_to(np.asarray(pressure, dtype=float), (N_ACTUATORS,)).copy()
            s.target = s.pressure.copy()
        return s

    def advance(self, state, commands, n_steps=1, tank=None):
        """Hold the 24 pressure ``commands`` for ``n_steps`` plant steps.

        Returns the new state, or ``(state, tank)`` when a tank is given.
        """
        cfg = self.config
        commands = np.asarray(commands, dtype=float)
        if commands.shape != (N_ACTUATORS,):
            raise InputError(f"expected {N_ACTUATORS} pressure commands")
        if np.any(commands < 0) or np.any(commands > cfg.supply_pressure):
            raise InputError(f"pressure commands must lie in [0, {cfg.supply_pressure}] kPa")
        new = state.copy()
        new.target = commands.copy()
        if tank is None:
            tk = np.array([np.inf, np.inf, cfg.supply_pressure])
        else:
            tk = np.array([tank.volume, tank.pressure, tank.regulator_setpoint], dtype=float)
        stats = np.array([0.0, -np.inf])
        b = self.bank
        ok = _advance(
            int(n_steps), cfg.dt, new.theta, new.theta_dot, new.pressure, new.valve, new.target, tk,
            self.inertia, cfg.damping_base, cfg.damping_pressure, cfg.tau_fill, cfg.tau_vent,
            cfg.deadband, self.stop_lo, self.stop_hi, self._volume,
            b.Ax, b.Ay, b.bx, b.by, b.gain1, b.gain2, b.L0, b.eps,
            self._axes, self._points, self._m, self._pos, self._parent, cfg.gravity,
            self._tip, self._force, stats,
        )
        if not ok:
            raise SimulationFault(
                f"non-finite state near t={state.time + n_steps * cfg.dt:.4f} s: "
                f"theta={new.theta.tolist()}, theta_dot={new.theta_dot.tolist()}"
            )
        new.time = round(state.time + n_steps * cfg.dt, 12)
        self.air_drawn += stats[0]
        self.max_damping_power = max(self.max_damping_power, stats[1])
        if tank is None:
            return new
        return new, replace(tank, pressure=float(tk[1]))

    def static_torques(self, theta):
        R = np.empty((N_JOINTS + 1, 3, 3))
        t = np.empty((N_JOINTS + 1, 3))
        tau = np.empty(N_JOINTS)
        _static_torques(self._axes, self._points, self._m, self._pos, self._parent,
                        np.asarray(theta, dtype=float), self.config.gravity, self._tip,
                        self._force, R, t, tau)
        return tau

    def mechanical_energy(self, state):
        """Kinetic plus gravitational energy (J); excludes actuator elasticity."""
        _, U = _static(self.arm, state.theta, self.config.payload_mass, self.config.gravity, np.zeros(3))
        return 0.5 * float(self.inertia @ state.theta_dot**2) + U


def dynamics_step(state, commands, config, arm, joints=None):
    """Advance ``state`` by one ``config.dt`` under the 24 pressure ``commands``."""
    for arr in (state.theta, state.theta_dot, state.pressure):
        if not np.all(np.isfinite(arr)):
            raise SimulationFault("non-finite input state")
    return Plant(arm, config, joints).advance(state, commands, 1)
