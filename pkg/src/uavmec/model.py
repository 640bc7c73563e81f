"""System model for single-UAV edge computing.

Problem data types plus the closed-form physical quantities: LoS channel
gain, uploading rate, offloaded bits, flight and computation energy, and a
constraint audit of a complete (trajectory, association, power) solution.

All quantities are SI linear units. dB conversions happen only when a
scenario is ingested (see :mod:`uavmec.scenario`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LN2 = np.log(2.0)


class InstanceError(ValueError):
    """Raised when data violates a type invariant or shapes disagree."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def db_to_linear(db: float) -> float:
    return float(10.0 ** (db / 10.0))


@dataclass(frozen=True)
class UePoint:
    id: int
    position: np.ndarray
    min_bits: float
    cycles_per_bit: float

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        if self.position.shape != (2,):
            raise InstanceError(f"UE {self.id}: position must be 2-D")
        if not self.min_bits >= 0:
            raise InstanceError(f"UE {self.id}: min_bits must be >= 0")
        if not self.cycles_per_bit > 0:
            raise InstanceError(f"UE {self.id}: cycles_per_bit must be > 0")


@dataclass(frozen=True)
class UavParams:
    altitude: float
    weight: float
    v_max: float
    battery: float
    cpu_freq: float
    switch_cap: float
    end_point: np.ndarray
    start_point: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "end_point", _frozen(self.end_point))
        object.__setattr__(self, "start_point", _frozen(self.start_point))
        for name in ("altitude", "weight", "v_max", "battery", "cpu_freq", "switch_cap"):
            if not getattr(self, name) > 0:
                raise InstanceError(f"uav.{name} must be > 0")
        if self.end_point.shape != (2,) or self.start_point.shape != (2,):
            raise InstanceError("uav start/end points must be 2-D")


@dataclass(frozen=True)
class ChannelParams:
    ref_gain: float
    noise_power: float
    bandwidth: float

    def __post_init__(self):
        for name in ("ref_gain", "noise_power", "bandwidth"):
            if not getattr(self, name) > 0:
                raise InstanceError(f"channel.{name} must be > 0")


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    slots: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise InstanceError("time.horizon must be > 0")
        if int(self.slots) != self.slots or self.slots < 1:
            raise InstanceError("time.slots must be a positive integer")

    @property
    def slot_len(self) -> float:
        return self.horizon / self.slots


@dataclass(frozen=True)
class UeBudget:
    energy_cap: float
    p_min: float

    def __post_init__(self):
        if not self.energy_cap > 0:
            raise InstanceError("budget.energy_cap must be > 0")
        if not self.p_min >= 0:
            raise InstanceError("budget.p_min must be >= 0")


@dataclass(frozen=True)
class Scenario:
    ues: tuple
    uav: UavParams
    channel: ChannelParams
    time: TimeGrid
    budget: UeBudget

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(self.ues))
        if len(self.ues) < 1:
            raise InstanceError("scenario needs at least one UE")
        if [ue.id for ue in self.ues] != list(range(1, len(self.ues) + 1)):
            raise InstanceError("UE ids must be unique and contiguous from 1")
        # slack for the float product N * (T/N) * P_min
        floor_energy = self.time.slots * self.time.slot_len * self.budget.p_min
        if floor_energy > self.budget.energy_cap * (1 + 1e-12):
            raise InstanceError(
                "budget.energy_cap is below N * slot_len * p_min; no power schedule is feasible"
            )

    @property
    def K(self) -> int:
        return len(self.ues)

    @property
    def N(self) -> int:
        return self.time.slots

    @property
    def dt(self) -> float:
        return self.time.slot_len

    @property
    def flight_kappa(self) -> float:
        return 0.5 * self.uav.weight * self.time.slot_len

    @property
    def positions(self) -> np.ndarray:
        return np.array([ue.position for ue in self.ues])

    @property
    def min_bits(self) -> np.ndarray:
        return np.array([ue.min_bits for ue in self.ues])

    @property
    def cycles(self) -> np.ndarray:
        return np.array([ue.cycles_per_bit for ue in self.ues])

    def joules_per_bit(self) -> np.ndarray:
        """Computation energy per offloaded bit for each UE, gamma_C * C_k * f_C^2."""
        return self.uav.switch_cap * self.cycles * self.uav.cpu_freq**2

    def replace(self, **changes) -> "Scenario":
        """Copy with UAV-level fields changed (battery, cpu_freq, v_max, ...)."""
        uav_fields = {k: v for k, v in changes.items() if k in UavParams.__dataclass_fields__}
        if len(uav_fields) != len(changes):
            unknown = set(changes) - set(uav_fields)
            raise InstanceError(f"cannot replace {sorted(unknown)}")
        uav = UavParams(**{**self.uav.__dict__, **uav_fields})
        return Scenario(self.ues, uav, self.channel, self.time, self.budget)


@dataclass(frozen=True)
class Trajectory:
    """UAV waypoints q[0..N]; slot n (1-based) is served from q[n]."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise InstanceError("trajectory must be an (N+1, 2) array")

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points, axis=0)

    def speeds(self, dt: float) -> np.ndarray:
        return np.linalg.norm(self.steps, axis=1) / dt

    @property
    def serving(self) -> np.ndarray:
        return self.points[1:]


@dataclass(frozen=True)
class Association:
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", _frozen(self.b, dtype=np.int8))
        if self.b.ndim != 2:
            raise InstanceError("association must be a K x N matrix")

    @classmethod
    def from_served(cls, served, K: int) -> "Association":
        served = np.asarray(served, dtype=int)
        b = np.zeros((K, served.size), dtype=np.int8)
        b[served, np.arange(served.size)] = 1
        return cls(b)

    @property
    def served(self) -> np.ndarray:
        """0-based index of the UE served in each slot (argmax of each column)."""
        return np.argmax(self.b, axis=0)

    def is_valid(self) -> bool:
        return bool(np.all((self.b == 0) | (self.b == 1)) and np.all(self.b.sum(axis=0) == 1))


@dataclass(frozen=True)
class PowerSchedule:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))
        if self.p.ndim != 2:
            raise InstanceError("power schedule must be a K x N matrix")

    @classmethod
    def uniform(cls, K: int, N: int, watts: float) -> "PowerSchedule":
        return cls(np.full((K, N), float(watts)))


@dataclass(frozen=True)
class EnergyLedger:
    per_slot_flight: np.ndarray
    per_ue_compute: np.ndarray

    @property
    def flight(self) -> float:
        return float(np.sum(self.per_slot_flight))

    @property
    def compute(self) -> float:
        return float(np.sum(self.per_ue_compute))

    @property
    def total(self) -> float:
        return self.flight + self.compute


# --- closed-form quantities -------------------------------------------------


def channel_gain(q, z, ch: ChannelParams, uav: UavParams):
    """LoS power gain rho_0 / (H^2 + |q - z|^2); broadcasts over leading axes."""
    d2 = np.sum((np.asarray(q, dtype=float) - np.asarray(z, dtype=float)) ** 2, axis=-1)
    return ch.ref_gain / (uav.altitude**2 + d2)


def rate(p, gain, noise_power):
    """Spectral efficiency log2(1 + p * gain / sigma^2) in bits/s/Hz."""
    return np.log2(1.0 + np.asarray(p, dtype=float) * gain / noise_power)


def gains(scen: Scenario, traj: Trajectory) -> np.ndarray:
    """K x N channel gains, slot n evaluated at its serving waypoint q[n]."""
    z = scen.positions[:, None, :]
    q = traj.serving[None, :, :]
    return channel_gain(q, z, scen.channel, scen.uav)


def rates(scen: Scenario, traj: Trajectory, power: PowerSchedule) -> np.ndarray:
    return rate(power.p, gains(scen, traj), scen.channel.noise_power)


def offloaded_bits(b, R, grid: TimeGrid, bandwidth: float):
    """Per-UE bits S_k = dt * B * sum_n b_k[n] R_k[n] and their total."""
    b = np.asarray(b, dtype=float)
    R = np.asarray(R, dtype=float)
    if b.shape != R.shape:
        raise InstanceError(f"association shape {b.shape} != rate shape {R.shape}")
    S = grid.slot_len * bandwidth * np.sum(b * R, axis=1)
    return S, float(np.sum(S))


def flight_energy(traj: Trajectory, scen: Scenario):
    if len(traj.points) != scen.N + 1:
        raise InstanceError("trajectory length must be N + 1")
    v = traj.speeds(scen.dt)
    e = scen.flight_kappa * v**2
    return e, float(np.sum(e))


def compute_energy(S, ues, uav: UavParams):
    S = np.asarray(S, dtype=float)
    C = np.array([ue.cycles_per_bit for ue in ues])
    e = uav.switch_cap * C * S * uav.cpu_freq**2
    return e, float(np.sum(e))


def evaluate(scen: Scenario, traj: Trajectory, assoc: Association, power: PowerSchedule):
    """Per-UE bits, total bits and the energy ledger of a full solution."""
    R = rates(scen, traj, power)
    S, total = offloaded_bits(assoc.b, R, scen.time, scen.channel.bandwidth)
    e_f, _ = flight_energy(traj, scen)
    e_c, _ = compute_energy(S, scen.ues, scen.uav)
    return S, total, EnergyLedger(e_f, e_c)


def sum_bits(scen: Scenario, traj: Trajectory, assoc: Association, power: PowerSchedule) -> float:
    return evaluate(scen, traj, assoc, power)[1]


# --- audit ------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Signed residuals per constraint family; <= 0 means satisfied.

    ``raw`` holds residuals in physical units, ``scaled`` the same residuals
    divided by the magnitude of the constraint they belong to.
    """

    raw: dict
    scaled: dict

    def worst(self) -> dict:
        return {name: float(np.max(v)) if np.size(v) else -np.inf for name, v in self.scaled.items()}

    def max_residual(self) -> float:
        return max(self.worst().values())

    def violations(self, tol: float = 1e-6) -> list:
        return [name for name, v in self.worst().items() if v > tol]

    def feasible(self, tol: float = 1e-6) -> bool:
        return not self.violations(tol)


def audit(scen: Scenario, traj: Trajectory, assoc: Association, power: PowerSchedule) -> AuditReport:
    K, N, dt = scen.K, scen.N, scen.dt
    if traj.points.shape != (N + 1, 2):
        raise InstanceError(f"trajectory shape {traj.points.shape}, expected {(N + 1, 2)}")
    if assoc.b.shape != (K, N):
        raise InstanceError(f"association shape {assoc.b.shape}, expected {(K, N)}")
    if power.p.shape != (K, N):
        raise InstanceError(f"power shape {power.p.shape}, expected {(K, N)}")

    raw, scale = {}, {}
    step_cap = scen.uav.v_max * dt
    raw["velocity"] = np.linalg.norm(traj.steps, axis=1) - step_cap
    scale["velocity"] = step_cap
    endpoint_scale = max(step_cap, 1.0)
    raw["start_point"] = np.atleast_1d(np.linalg.norm(traj.points[0] - scen.uav.start_point))
    raw["end_point"] = np.atleast_1d(np.linalg.norm(traj.points[-1] - scen.uav.end_point))
    scale["start_point"] = scale["end_point"] = endpoint_scale

    b = assoc.b.astype(float)
    binary = np.where((assoc.b == 0) | (assoc.b == 1), 0.0, 1.0)
    raw["association"] = np.maximum(np.abs(b.sum(axis=0) - 1.0), binary.max(axis=0))
    scale["association"] = 1.0

    p = power.p
    raw["power_floor"] = (scen.budget.p_min - p).ravel()
    scale["power_floor"] = max(scen.budget.p_min, 1e-3)
    raw["power_budget"] = dt * p.sum(axis=1) - scen.budget.energy_cap
    scale["power_budget"] = scen.budget.energy_cap

    S, _, ledger = evaluate(scen, traj, assoc, power)
    D = scen.min_bits
    raw["qos"] = D - S
    scale["qos"] = np.maximum(D, dt * scen.channel.bandwidth)
    raw["energy"] = np.atleast_1d(ledger.flight + ledger.compute - scen.uav.battery)
    scale["energy"] = scen.uav.battery

    scaled = {name: np.asarray(raw[name]) / scale[name] for name in raw}
    return AuditReport(raw, scaled)
