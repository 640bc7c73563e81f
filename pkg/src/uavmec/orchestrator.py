"""Alternating maximization over association, trajectory and power.

Each outer round solves the association exactly, takes one convexified
trajectory step, then one convexified power step (the baseline schemes
skip the later blocks). Every block returns a point that is feasible and no
worse than the input, so the per-round total bits never decrease.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import association, model, power, trajectory
from .model import Association, EnergyLedger, PowerSchedule, Scenario, Trajectory
from .solver import SolverOptions

log = logging.getLogger(__name__)

INITIAL_POWER_W = 0.3
RING_SLACK = 2.0  # ring circumference budget nu_max*T/(2*pi + RING_SLACK)
MONO_SLACK = 1e-6
# node cap for the feasibility probe used by restoration (no incumbent found = treat as infeasible)
FEASIBILITY_NODES = 300


class Scheme(str, enum.Enum):
    PROPOSED = "proposed"
    SCHEME_I = "scheme1"
    SCHEME_II = "scheme2"

    @property
    def blocks(self):
        return {"proposed": ("b", "q", "p"), "scheme1": ("b", "q"), "scheme2": ("b",)}[self.value]


class InfeasibleInit(Exception):
    """No velocity-feasible path joins the start and end points."""


class InfeasibleProblem(Exception):
    """The association problem is infeasible and restoration could not fix it."""

    def __init__(self, msg, family="qos"):
        super().__init__(msg)
        self.family = family


class RestorationFailed(InfeasibleProblem):
    pass


@dataclass(frozen=True)
class RunConfig:
    tol_rel: float = 1e-4  # epsilon = tol_rel * S^1 unless tol_abs is set
    tol_abs: Optional[float] = None
    max_iter: int = 100
    scheme: Scheme = Scheme.PROPOSED
    seed: int = 0
    bnb_rel_gap: float = 1e-3
    bnb_max_nodes: Optional[int] = 5_000
    restore_rounds: int = 30
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.tol_rel > 0 or (self.tol_abs is not None and not self.tol_abs > 0):
            raise ValueError("tolerance must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class Solution:
    trajectory: Trajectory
    association: Association
    power: PowerSchedule


@dataclass(frozen=True)
class IterationRecord:
    r: int
    bits: float
    deltas: dict  # per-block change in total bits
    accepted: dict  # per-block: did the block move the iterate
    ledger: EnergyLedger
    residuals: dict  # worst scaled residual per constraint family
    wall_time: float
    bnb_status: str = "optimal"


@dataclass
class SolveReport:
    scheme: Scheme
    solution: Solution
    bits: float
    per_ue_bits: np.ndarray
    ledger: EnergyLedger
    iterations: list
    converged: bool
    status: str
    epsilon: float
    restored: bool = False
    wall_time: float = 0.0

    @property
    def history(self):
        return [rec.bits for rec in self.iterations]


# --- initialization ---------------------------------------------------------


def straight_line(scen: Scenario) -> Trajectory:
    s = np.linspace(0.0, 1.0, scen.N + 1)[:, None]
    q0, qT = scen.uav.start_point, scen.uav.end_point
    pts = q0 + s * (qT - q0)
    pts[0], pts[-1] = q0, qT
    return Trajectory(pts)


def _velocity_ok(scen: Scenario, pts) -> bool:
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return bool(np.all(steps <= scen.uav.v_max * scen.dt))


def ring(scen: Scenario, radius: float) -> np.ndarray:
    """Ring around the UE centroid, entered from the start and left toward the end."""
    N = scen.N
    q0, qT = scen.uav.start_point, scen.uav.end_point
    centre = scen.positions.mean(axis=0)
    away = q0 - centre
    theta0 = math.atan2(away[1], away[0]) if np.any(away) else 0.0
    theta = theta0 + 2.0 * np.pi * np.arange(N + 1) / N
    pts = centre + radius * np.column_stack([np.cos(theta), np.sin(theta)])
    m = max(1, math.ceil(N / 5))
    n = np.arange(N + 1)
    a = np.clip(n / m, 0.0, 1.0)[:, None]  # ramp in from q0
    b = np.clip((n - (N - m)) / m, 0.0, 1.0)[:, None]  # ramp out to qT
    pts = (1.0 - a) * q0 + a * pts
    pts = (1.0 - b) * pts + b * qT
    pts[0], pts[-1] = q0, qT
    return pts


def init_state(scen: Scenario, cfg: RunConfig | None = None):
    """Ring trajectory (straight-line fallback) and uniform initial power."""
    line = straight_line(scen)
    if not _velocity_ok(scen, line.points):
        raise InfeasibleInit("start and end are farther apart than v_max * T")
    centre = scen.positions.mean(axis=0)
    spread = float(np.max(np.linalg.norm(scen.positions - centre, axis=1)))
    radius = min(0.5 * spread, scen.uav.v_max * scen.time.horizon / (2.0 * np.pi + RING_SLACK))
    traj = line
    for _ in range(30):
        if radius <= 1e-9 * (1.0 + spread):
            break
        pts = ring(scen, radius)
        if _velocity_ok(scen, pts):
            traj = Trajectory(pts)
            break
        radius *= 0.8
    return traj, PowerSchedule.uniform(scen.K, scen.N, INITIAL_POWER_W)


# --- restoration ------------------------------------------------------------


def qos_cap(scen: Scenario) -> float:
    """Upper bound on any single UE's bits: all slots, hovering overhead, best power split."""
    N, dt = scen.N, scen.dt
    p_avg = scen.budget.energy_cap / (N * dt)
    snr = p_avg * scen.channel.ref_gain / (scen.uav.altitude**2 * scen.channel.noise_power)
    return N * dt * scen.channel.bandwidth * math.log2(1.0 + snr)


def _restoration_association(scen: Scenario, traj: Trajectory, pw: PowerSchedule) -> Association:
    """Max-min greedy association for the slack-raising steps.

    The UE furthest below its floor (relative to it) takes its best open
    slot until every floor is met or the slots run out; leftover slots go
    to the cheapest UE in computation energy when the battery is short,
    else to the best rate. Every UE with a floor gets slots, so the slack
    steps have something to improve.
    """
    K, N = scen.K, scen.N
    w = scen.dt * scen.channel.bandwidth * model.rates(scen, traj, pw)
    c = scen.joules_per_bit()[:, None] * w
    D = scen.min_bits
    served = np.full(N, -1)
    S = np.zeros(K)
    need = D > 0
    while np.any(served < 0):
        short = need & (S < D)
        if not np.any(short):
            break
        ratio = np.where(short, S / np.where(D > 0, D, 1.0), np.inf)
        k = int(np.argmin(ratio))
        open_cols = np.flatnonzero(served < 0)
        n = int(open_cols[np.argmax(w[k, open_cols])])
        served[n] = k
        S[k] += w[k, n]
    _, e_f = model.flight_energy(traj, scen)
    done = np.flatnonzero(served >= 0)
    energy = e_f + float(np.sum(c[served[done], done]))
    rest = np.flatnonzero(served < 0)
    if len(rest):
        short_energy = energy + float(np.sum(c[:, rest].max(axis=0))) > scen.uav.battery
        served[rest] = np.argmin(c[:, rest], axis=0) if short_energy else np.argmax(w[:, rest], axis=0)
    return Association.from_served(served, K)


def _audit_ok(scen, sol: Solution, tol=0.0) -> bool:
    return model.audit(scen, sol.trajectory, sol.association, sol.power).max_residual() <= tol


def restore_feasibility(scen: Scenario, traj: Trajectory, pw: PowerSchedule, cfg: RunConfig | None = None):
    """Push (trajectory, power) toward a state where the association problem is feasible.

    Returns (trajectory, power, restored, association) where ``restored`` is
    False if the input was already fine and ``association`` is a feasible
    assignment at the returned state. Raises RestorationFailed otherwise.
    """
    cfg = cfg or RunConfig()
    blocks = cfg.scheme.blocks
    cap = qos_cap(scen)
    worst = float(np.max(scen.min_bits))
    if worst > cap:
        raise RestorationFailed(f"QoS infeasible: D_k = {worst:.6g} bits exceeds the per-UE cap {cap:.6g}")
    found = _p1_feasible(scen, traj, pw)
    if found is not None:
        return traj, pw, False, found
    if "q" not in blocks and "p" not in blocks:
        raise RestorationFailed("QoS infeasible at the fixed trajectory and power")
    slack = -np.inf
    for rnd in range(cfg.restore_rounds):
        assoc = _restoration_association(scen, traj, pw)
        improved = False
        if "p" in blocks:
            pw_new, s = power.restore_step(scen, assoc, traj, pw, cfg.solver)
            if s > slack + 1e-9 * max(1.0, abs(slack)):
                improved = True
            pw, slack = pw_new, max(slack, s)
        if "q" in blocks:
            traj_new, s = trajectory.restore_step(scen, assoc, pw, traj, cfg.solver)
            if s > slack + 1e-9 * max(1.0, abs(slack)):
                improved = True
            traj, slack = traj_new, max(slack, s)
        log.debug("restoration round %d: min slack %.6g", rnd, slack)
        found = _p1_feasible(scen, traj, pw, assoc)
        if found is not None:
            return traj, pw, True, found
        if not improved:
            break
    raise RestorationFailed(f"QoS infeasible: restoration stalled at min relative slack {slack:.3e}")


def _p1_feasible(scen, traj, pw, candidate: Association | None = None) -> Association | None:
    """Some feasible association at (traj, pw), or None if the search finds none.

    ``candidate`` is tried first as the incumbent.
    """
    try:
        res = association.solve_association(scen, traj, pw, incumbent=candidate, max_nodes=FEASIBILITY_NODES,
                                            first_feasible=True)
        return res.association
    except (association.AssociationInfeasible, association.BudgetExhausted):
        return None


# --- main loop --------------------------------------------------------------


def _record(scen, r, sol: Solution, deltas, accepted, t0, bnb_status) -> IterationRecord:
    S, total, ledger = model.evaluate(scen, sol.trajectory, sol.association, sol.power)
    rep = model.audit(scen, sol.trajectory, sol.association, sol.power)
    return IterationRecord(r, total, deltas, accepted, ledger, rep.worst(), time.perf_counter() - t0, bnb_status)


def run(scen: Scenario, cfg: RunConfig | None = None, init: Solution | tuple | None = None) -> SolveReport:
    """Alternate the enabled blocks until the total bits settle.

    ``init`` is a warm start, either a full :class:`Solution` (its
    association seeds the first branch and bound) or a (trajectory, power)
    pair; by default the ring initializer is used.
    """
    cfg = cfg or RunConfig()
    start = time.perf_counter()
    blocks = cfg.scheme.blocks
    incumbent = None
    if init is None:
        traj, pw = init_state(scen, cfg)
    elif isinstance(init, Solution):
        traj, pw, incumbent = init.trajectory, init.power, init.association
    else:
        traj, pw = init

    traj, pw, restored, found = restore_feasibility(scen, traj, pw, cfg)
    if restored or incumbent is None:
        incumbent = found

    records = []
    prev = 0.0
    eps = cfg.tol_abs
    converged = False
    sol = None
    for r in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        deltas, accepted = {}, {}
        try:
            res = association.solve_association(scen, traj, pw, incumbent=incumbent,
                                                rel_gap=cfg.bnb_rel_gap, max_nodes=cfg.bnb_max_nodes)
        except association.BudgetExhausted as exc:
            raise InfeasibleProblem(str(exc), family="energy") from None
        except association.AssociationInfeasible as exc:
            raise InfeasibleProblem(f"QoS infeasible: {exc}") from None
        assoc = res.association
        s_b = model.sum_bits(scen, traj, assoc, pw)
        deltas["b"] = s_b - prev
        accepted["b"] = incumbent is None or not np.array_equal(assoc.b, incumbent.b)
        s_cur = s_b
        if "q" in blocks:
            step = trajectory.solve_p2prime(scen, assoc, pw, traj, cfg.solver)
            traj = step.trajectory
            s_q = model.sum_bits(scen, traj, assoc, pw)
            deltas["q"], accepted["q"] = s_q - s_cur, step.accepted
            s_cur = s_q
        if "p" in blocks:
            pstep = power.solve_p3prime(scen, assoc, traj, pw, cfg.solver)
            pw = pstep.power
            s_p = model.sum_bits(scen, traj, assoc, pw)
            deltas["p"], accepted["p"] = s_p - s_cur, pstep.accepted
            s_cur = s_p
        sol = Solution(traj, assoc, pw)
        rec = _record(scen, r, sol, deltas, accepted, t0, res.status)
        records.append(rec)
        if r > 1 and rec.bits < prev - MONO_SLACK * abs(prev):
            log.warning("round %d lowered total bits: %.9e -> %.9e", r, prev, rec.bits)
        if eps is None:
            eps = cfg.tol_rel * abs(rec.bits)
        log.info("round %d: bits %.9e (delta %.3e)", r, rec.bits, rec.bits - prev)
        if abs(rec.bits - prev) <= eps:
            converged = True
            prev = rec.bits
            break
        prev = rec.bits
        incumbent = assoc

    S, total, ledger = model.evaluate(scen, sol.trajectory, sol.association, sol.power)
    ok = _audit_ok(scen, sol, 1e-6)
    status = ("converged" if converged else "max_iter") if ok else "audit_failed"
    return SolveReport(cfg.scheme, sol, total, S, ledger, records, converged, status, float(eps),
                       restored, time.perf_counter() - start)


def run_schemes(scen: Scenario, cfg: RunConfig | None = None, schemes=tuple(Scheme)):
    """Run several schemes from the same initial state.

    A scheme that enables more blocks is additionally continued from the
    final point of each nested scheme, and the better run is kept; both are
    legitimate runs of that scheme and this makes its advantage structural
    rather than dependent on which local optimum a cold start finds.
    """
    cfg = cfg or RunConfig()
    init = init_state(scen, cfg)
    order = sorted(schemes, key=lambda s: len(Scheme(s).blocks))
    out = {}
    for s in order:
        s = Scheme(s)
        rep = run(scen, replace(cfg, scheme=s), init=init)
        for lower, rep_l in out.items():
            if set(lower.blocks) < set(s.blocks) and rep_l.bits > rep.bits:
                warm = run(scen, replace(cfg, scheme=s), init=rep_l.solution)
                if warm.bits > rep.bits:
                    rep = warm
        out[s] = rep
    return out


# --- parameter sweeps -------------------------------------------------------

SWEEP_PARAMS = {"battery_J": "battery", "cpu_freq_hz": "cpu_freq", "v_max": "v_max"}


@dataclass
class SweepPoint:
    value: float
    scheme: Scheme
    report: Optional[SolveReport]
    status: str
    message: str = ""


def _run_point(args):
    scen, cfg, init = args
    try:
        rep = run(scen, cfg, init=init)
        return rep, rep.status, ""
    except (InfeasibleProblem, InfeasibleInit) as exc:
        return None, "infeasible", str(exc)


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def sweep(scen: Scenario, param: str, values, schemes=(Scheme.PROPOSED,), cfg: RunConfig | None = None,
          jobs: int = 1):
    """Run each scheme at each parameter value.

    Cold runs from the ring start are followed by warm-start passes: a
    point is re-run from its neighbours' solutions (when those pass the
    audit at the new value) and from nested schemes' solutions, keeping
    the best. Returns points sorted by value, then scheme name.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; expected one of {sorted(SWEEP_PARAMS)}")
    values = sorted(float(v) for v in values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if any(not v > 0 for v in values):
        raise ValueError("sweep values must be positive")
    cfg = cfg or RunConfig()
    field_name = SWEEP_PARAMS[param]
    scens = [scen.replace(**{field_name: v}) for v in values]
    order = sorted((Scheme(s) for s in schemes), key=lambda s: len(s.blocks))
    results = {}

    def better(cur, cand):
        if cand[0] is None:
            return cur
        if cur[0] is None or cand[0].bits > cur[0].bits:
            return cand
        return cur

    def warm(i, s, sol):
        if sol is None or not _audit_ok(scens[i], sol, 0.0):
            return (None, "skipped", "")
        return _run_point((scens[i], replace(cfg, scheme=s), sol))

    for s in order:
        scfg = replace(cfg, scheme=s)
        cur = _map(_run_point, [(sc, scfg, None) for sc in scens], jobs)
        if s is not Scheme.SCHEME_II:
            for lower in results:
                if set(lower.blocks) < set(s.blocks):
                    for i in range(len(values)):
                        rep_l = results[lower][i][0]
                        if rep_l is not None and (cur[i][0] is None or rep_l.bits > cur[i][0].bits):
                            cur[i] = better(cur[i], warm(i, s, rep_l.solution))
            up, down = range(1, len(values)), range(len(values) - 2, -1, -1)
            # end on the pass whose direction keeps neighbours' solutions feasible
            keep = down if param == "cpu_freq_hz" else up
            other = up if keep is down else down
            for idx in (keep, other, keep):
                for i in idx:
                    j = i - 1 if idx.step == 1 else i + 1
                    nb = cur[j][0]
                    if nb is not None and (cur[i][0] is None or nb.bits > cur[i][0].bits):
                        cur[i] = better(cur[i], warm(i, s, nb.solution))
        results[s] = cur

    points = []
    listed = [s for s in Scheme if s in results]  # declaration order: proposed, scheme1, scheme2
    for i, v in enumerate(values):
        for s in listed:
            rep, status, msg = results[s][i]
            points.append(SweepPoint(v, s, rep, status, msg))
    return points
