"""Exact per-slot user association by best-first branch and bound.

With trajectory and powers fixed, choosing which UE the UAV serves in each
slot is a 0/1 program: pick one UE per slot, maximize the offloaded bits,
keep every UE above its minimum bits and keep computation plus flight
energy inside the battery. Node bounds come from the LP relaxation solved
by :func:`uavmec.solver.solve_lp`, tightened by the Lagrangian bound at the
LP multipliers (the slot-choice polytope is integral, so that bound is the
LP bound, but it can be evaluated exactly).
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model
from .model import Association, PowerSchedule, Scenario, Trajectory
from .solver import SolverOptions, Status, solve_lp

log = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
# relative inflation of bounds derived from floating multipliers
BOUND_SAFETY = 1e-12


class BudgetExhausted(Exception):
    """Flight energy alone exceeds the battery; no association can be feasible."""


class AssociationInfeasible(Exception):
    """No one-UE-per-slot assignment meets every QoS floor within the energy budget."""


@dataclass(frozen=True)
class AssociationIlp:
    weights: np.ndarray  # bits contributed by serving UE k in slot n
    costs: np.ndarray  # joules of computation for that assignment
    budget: float  # battery minus flight energy
    min_bits: np.ndarray

    def __post_init__(self):
        w, c = np.asarray(self.weights, float), np.asarray(self.costs, float)
        if w.shape != c.shape or w.ndim != 2:
            raise model.InstanceError("weights and costs must be matching K x N arrays")
        if np.any(w < 0) or np.any(c < 0):
            raise model.InstanceError("weights and costs must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "min_bits", np.asarray(self.min_bits, float).reshape(w.shape[0]))

    @property
    def shape(self):
        return self.weights.shape

    def value(self, served) -> float:
        return float(np.sum(self.weights[served, np.arange(len(served))]))

    def is_feasible(self, served) -> bool:
        K, N = self.shape
        cols = np.arange(N)
        S = np.zeros(K)
        np.add.at(S, served, self.weights[served, cols])
        energy = float(np.sum(self.costs[served, cols]))
        return bool(np.all(S >= self.min_bits) and energy <= self.budget)


def build_ilp(scen: Scenario, traj: Trajectory, power: PowerSchedule) -> AssociationIlp:
    R = model.rates(scen, traj, power)
    w = scen.dt * scen.channel.bandwidth * R
    c = scen.joules_per_bit()[:, None] * w
    _, e_f = model.flight_energy(traj, scen)
    if e_f > scen.uav.battery:
        raise BudgetExhausted(f"flight energy {e_f:.6g} J exceeds battery {scen.uav.battery:.6g} J")
    return AssociationIlp(w, c, scen.uav.battery - e_f, scen.min_bits)


@dataclass
class BnbNode:
    fixing: np.ndarray  # K x N, -1 free, 0/1 fixed
    bound: float
    depth: int
    branch_var: Optional[tuple] = None
    lp_x: Optional[np.ndarray] = None
    multipliers: tuple = ()


@dataclass
class BnbResult:
    association: Association
    value: float
    bound: float
    gap: float
    nodes: int
    lp_solves: int
    status: str  # "optimal", "node_limit" or "feasible"


def _propagate(fixing: np.ndarray) -> Optional[np.ndarray]:
    """Close columns forced by one-UE-per-slot; None if a column cannot be covered."""
    f = fixing.copy()
    ones = (f == 1).sum(axis=0)
    if np.any(ones > 1):
        return None
    has_one = ones == 1
    f[:, has_one] = np.where(f[:, has_one] == 1, 1, 0)
    free = (f == -1).sum(axis=0)
    if np.any((free == 0) & ~has_one):
        return None
    single = (free == 1) & ~has_one
    for n in np.flatnonzero(single):
        f[f[:, n] == -1, n] = 1
    return f


def _allowed(fixing: np.ndarray) -> np.ndarray:
    return fixing != 0


def _residual(ilp: AssociationIlp, fixing):
    """Bits still owed per UE, energy left, and value of the entries fixed to 1."""
    fixed1 = fixing == 1
    S_fixed = np.where(fixed1, ilp.weights, 0.0).sum(axis=1)
    need = np.maximum(ilp.min_bits - S_fixed, 0.0)
    e_left = ilp.budget - float(np.where(fixed1, ilp.costs, 0.0).sum())
    return need, e_left, float(S_fixed.sum())


def _lagrangian(ilp: AssociationIlp, fixing, lam, mu):
    """Lagrangian bound and its maximizing assignment for multipliers lam (QoS), mu (energy).

    QoS rows are taken in their coefficient-tightened form
    sum_n min(w_kn, need_k) b_kn >= need_k over the undecided columns,
    which every feasible completion satisfies.
    """
    allowed = _allowed(fixing)
    cols = np.arange(ilp.shape[1])
    if not np.any(lam) and mu == 0.0:
        served = np.argmax(np.where(allowed, ilp.weights, -np.inf), axis=0)
        # same summation order as AssociationIlp.value, so ties compare exactly
        return float(np.sum(ilp.weights[served, cols])), served
    need, e_left, fixed_value = _residual(ilp, fixing)
    lam = np.where(need > 0, lam, 0.0)
    open_cols = ~np.any(fixing == 1, axis=0)
    adj = ilp.weights + lam[:, None] * np.minimum(ilp.weights, need[:, None]) - mu * ilp.costs
    adj = np.where(allowed, adj, -np.inf)
    served = np.argmax(adj, axis=0)
    bound = fixed_value + float(np.sum(adj[served, cols][open_cols])) - float(lam @ need) + mu * e_left
    return bound * (1.0 + BOUND_SAFETY) + BOUND_SAFETY * abs(bound), served


def _lagrangian_fixing(ilp: AssociationIlp, fixing, lam, mu, threshold):
    """Fix to 0 every free entry whose forcing drops the Lagrangian bound to ``threshold``.

    Forcing b_kn = 1 costs max_k' adj_k'n - adj_kn in the bound, so an
    entry whose forced bound cannot beat the incumbent is closed.
    """
    allowed = _allowed(fixing)
    need, e_left, fixed_value = _residual(ilp, fixing)
    lam = np.where(need > 0, lam, 0.0)
    open_cols = ~np.any(fixing == 1, axis=0)
    adj = ilp.weights + lam[:, None] * np.minimum(ilp.weights, need[:, None]) - mu * ilp.costs
    adj = np.where(allowed, adj, -np.inf)
    top = adj.max(axis=0)
    raw = fixed_value + float(np.sum(top[open_cols])) - float(lam @ need) + mu * e_left
    with np.errstate(invalid="ignore"):
        forced = raw - (top[None, :] - adj)
        forced = forced * (1.0 + BOUND_SAFETY) + BOUND_SAFETY * np.abs(forced)
    close = (fixing == -1) & open_cols[None, :] & (forced <= threshold)
    if not np.any(close):
        return fixing
    out = fixing.copy()
    out[close] = 0
    return out


def _quick_infeasible(ilp: AssociationIlp, fixing) -> bool:
    allowed = _allowed(fixing)
    best_bits = np.where(allowed, ilp.weights, 0.0).sum(axis=1)
    if np.any(best_bits < ilp.min_bits):
        return True
    min_energy = np.where(allowed, ilp.costs, np.inf).min(axis=0).sum()
    return bool(min_energy > ilp.budget)


def _relaxation(ilp: AssociationIlp, fixing):
    """LP relaxation data over the free entries of a node."""
    K, N = ilp.shape
    w, c = ilp.weights, ilp.costs
    fixed1 = fixing == 1
    free_mask = fixing == -1
    free = np.argwhere(free_mask)  # rows (k, n), k-major order
    S_fixed = np.where(fixed1, w, 0.0).sum(axis=1)
    E_fixed = float(np.where(fixed1, c, 0.0).sum())
    w_scale = max(float(np.max(w)), 1e-300)

    rows, rhs = [], []
    qos_rows = []
    for k in range(K):
        need = ilp.min_bits[k] - S_fixed[k]
        if need > 0:
            # coefficient tightening: no single slot needs to count for more than the shortfall
            row = np.where(free[:, 0] == k, np.minimum(w[free[:, 0], free[:, 1]], need), 0.0)
            rows.append(-row / w_scale)
            rhs.append(-need / w_scale)
            qos_rows.append(k)
    e_scale = max(ilp.budget, float(np.max(c)), 1e-300)
    e_left = ilp.budget - E_fixed
    energy_row = None
    cost_free = c[free[:, 0], free[:, 1]]
    free_cols = np.unique(free[:, 1])
    max_energy = sum(cost_free[free[:, 1] == n].max() for n in free_cols)
    if max_energy > e_left:
        energy_row = len(rows)
        rows.append(cost_free / e_scale)
        rhs.append(e_left / e_scale)
    A = (free[:, 1][None, :] == free_cols[:, None]).astype(float)
    return dict(
        free=free, w_scale=w_scale, e_scale=e_scale, qos_rows=qos_rows, energy_row=energy_row,
        c=w[free[:, 0], free[:, 1]] / w_scale,
        G=np.array(rows) if rows else None, h=np.array(rhs) if rhs else None,
        A=A, b=np.ones(len(free_cols)), free_cols=free_cols,
    )


LP_OPTIONS = SolverOptions()


def lp_bound(node: BnbNode, ilp: AssociationIlp, opts: SolverOptions = LP_OPTIONS):
    """Upper bound on every completion of the node from its LP relaxation.

    Returns (bound, lp_outcome, relaxation). The bound is ``-inf`` when the
    node is infeasible; a fully fixed node returns its exact objective.
    """
    fixing = _propagate(node.fixing)
    if fixing is None or _quick_infeasible(ilp, fixing):
        return -np.inf, None, None
    fixed_value = float(np.sum(np.where(fixing == 1, ilp.weights, 0.0)))
    if not np.any(fixing == -1):
        served = np.argmax(fixing, axis=0)
        return (ilp.value(served) if ilp.is_feasible(served) else -np.inf), None, None
    rel = _relaxation(ilp, fixing)
    n_free = len(rel["free"])
    x0 = np.zeros(n_free)
    for n in rel["free_cols"]:
        idx = rel["free"][:, 1] == n
        x0[idx] = 1.0 / idx.sum()
    out = solve_lp(rel["c"], G=rel["G"], h=rel["h"], A=rel["A"], b=rel["b"],
                   lower=np.zeros(n_free), upper=np.ones(n_free), x0=x0, opts=opts)
    if out.status is Status.INFEASIBLE:
        return -np.inf, out, rel
    if out.dual_bound is None or not np.isfinite(out.dual_bound):
        return np.inf, out, rel
    bound = fixed_value + rel["w_scale"] * out.dual_bound
    bound += BOUND_SAFETY * abs(bound)
    return bound, out, rel


def _multipliers(ilp: AssociationIlp, out, rel, zero_slack: bool):
    K = ilp.shape[0]
    lam = np.zeros(K)
    mu = 0.0
    lin = out.multipliers.get("linear", np.zeros(0))
    if not len(lin):
        return lam, mu
    slack = rel["h"] - rel["G"] @ out.x
    keep = slack <= 1e-6 if zero_slack else np.ones(len(lin), bool)
    for i, k in enumerate(rel["qos_rows"]):
        lam[k] = lin[i] if keep[i] else 0.0
    if rel["energy_row"] is not None:
        i = rel["energy_row"]
        mu = lin[i] * rel["w_scale"] / rel["e_scale"] if keep[i] else 0.0
    return np.maximum(lam, 0.0), max(mu, 0.0)


def _local_search(ilp: AssociationIlp, served, rounds: int = 200) -> np.ndarray:
    """Improve a feasible assignment by best single or paired column reassignments."""
    w, c = ilp.weights, ilp.costs
    K, N = ilp.shape
    cols = np.arange(N)
    served = served.copy()
    for _ in range(rounds):
        S = np.zeros(K)
        np.add.at(S, served, w[served, cols])
        e_slack = ilp.budget - float(np.sum(c[served, cols]))
        q_slack = S - ilp.min_bits
        # every move (k, n): reassign column n to UE k
        kk, nn = np.nonzero(np.arange(K)[:, None] != served[None, :])
        old = served[nn]
        dv = w[kk, nn] - w[old, nn]
        de = c[kk, nn] - c[old, nn]
        dS = np.zeros((len(kk), K))
        dS[np.arange(len(kk)), kk] += w[kk, nn]
        dS[np.arange(len(kk)), old] -= w[old, nn]
        ok1 = (de <= e_slack) & np.all(dS >= -q_slack, axis=1) & (dv > 0)
        best_gain, move = 0.0, None
        if np.any(ok1):
            i = int(np.argmax(np.where(ok1, dv, -np.inf)))
            best_gain, move = dv[i], (i,)
        # pairs on distinct columns, restricted to one gaining move per pair
        gain2 = dv[:, None] + dv[None, :]
        ok2 = (nn[:, None] != nn[None, :]) & (gain2 > best_gain) & (de[:, None] + de[None, :] <= e_slack)
        ii, jj = np.nonzero(np.triu(ok2))
        if len(ii):
            feas = np.all(dS[ii] + dS[jj] >= -q_slack, axis=1)
            if np.any(feas):
                g = np.where(feas, gain2[ii, jj], -np.inf)
                t = int(np.argmax(g))
                move = (ii[t], jj[t])
        if move is None:
            break
        cand = served.copy()
        for i in move:
            cand[nn[i]] = kk[i]
        if not ilp.is_feasible(cand) or ilp.value(cand) <= ilp.value(served):
            break
        served = cand
    return served


def _repair(ilp: AssociationIlp, fixing, served) -> Optional[np.ndarray]:
    """Greedy fix-up of an assignment: shed energy cheaply, then top up QoS."""
    served = served.copy()
    w, c = ilp.weights, ilp.costs
    K, N = ilp.shape
    allowed = _allowed(fixing)
    cols = np.arange(N)
    for _ in range(2 * N):
        S = np.zeros(K)
        np.add.at(S, served, w[served, cols])
        energy = float(np.sum(c[served, cols]))
        short = np.flatnonzero(S < ilp.min_bits)
        if energy <= ilp.budget and not len(short):
            return served
        best, best_score = None, -np.inf
        for n in range(N):
            k0 = served[n]
            for k in np.flatnonzero(allowed[:, n]):
                if k == k0:
                    continue
                if S[k0] - w[k0, n] < ilp.min_bits[k0] and k0 not in short:
                    continue
                d_bits = w[k, n] - w[k0, n]
                d_energy = c[k, n] - c[k0, n]
                if len(short):
                    if k not in short:
                        continue
                    score = w[k, n] - 1e-3 * max(d_energy, 0.0)
                elif d_energy < 0:
                    score = d_bits / -d_energy
                else:
                    continue
                if score > best_score:
                    best, best_score = (n, k), score
        if best is None:
            return None
        served[best[0]] = best[1]
    return None


def solve_bnb(ilp: AssociationIlp, gap: float = 0.0, rel_gap: float = 0.0,
              incumbent=None, max_nodes: Optional[int] = None,
              lp_options: SolverOptions = LP_OPTIONS, first_feasible: bool = False) -> BnbResult:
    """Maximize total bits over one-UE-per-slot assignments.

    ``incumbent`` (served-UE vector or :class:`Association`) seeds the
    search when it is feasible; the result is never worse than it. The
    search stops when no open node can beat the incumbent by more than
    ``gap + rel_gap * |incumbent|`` (0 by default: proven optimal).
    With ``first_feasible`` it returns as soon as any feasible assignment
    is known (status "feasible").
    """
    K, N = ilp.shape
    counter = itertools.count()
    best_served, best_value = None, -np.inf
    lp_solves = 0
    pruned_bound = -np.inf  # largest bound discarded only because of the gap tolerance

    def offer(served):
        nonlocal best_served, best_value
        if served is None:
            return
        served = np.asarray(served, dtype=int)
        if ilp.is_feasible(served):
            v = ilp.value(served)
            if v > best_value:
                served = _local_search(ilp, served)
                best_served, best_value = served, ilp.value(served)

    if incumbent is not None:
        offer(incumbent.served if isinstance(incumbent, Association) else incumbent)
    offer(np.argmax(ilp.weights, axis=0))

    def tolerance():
        return gap + rel_gap * abs(best_value) if np.isfinite(best_value) else 0.0

    def pruned(bound):
        nonlocal pruned_bound
        if bound <= best_value + tolerance():
            pruned_bound = max(pruned_bound, bound)
            return True
        return False

    def evaluate(fixing, parent_bound, depth, inherited=()):
        nonlocal lp_solves
        fixing = _propagate(fixing)
        if fixing is None or _quick_infeasible(ilp, fixing):
            return None
        bound0, served0 = _lagrangian(ilp, fixing, np.zeros(K), 0.0)
        offer(served0)
        bound = min(bound0, parent_bound)
        if ilp.is_feasible(served0) or pruned(bound):
            return None  # column-wise maximum is feasible: node solved exactly
        if not np.any(fixing == -1):
            return None
        # any non-negative multipliers give a valid bound; try the parent's before an LP
        for lam, mu in inherited:
            b_l, served_l = _lagrangian(ilp, fixing, lam, mu)
            bound = min(bound, b_l)
            offer(served_l)
        if pruned(bound):
            return None
        node = BnbNode(fixing, bound, depth)
        b_lp, out, rel = lp_bound(node, ilp, lp_options)
        lp_solves += 1
        if b_lp == -np.inf:
            return None
        bound = min(bound, b_lp)
        if out is not None and out.x is not None and np.all(np.isfinite(out.x)):
            x = np.zeros((K, N))
            x[fixing == 1] = 1.0
            x[rel["free"][:, 0], rel["free"][:, 1]] = out.x
            node.lp_x = x
            served_lp = np.argmax(np.where(_allowed(fixing), x, -1.0), axis=0)
            offer(served_lp)
            offer(_repair(ilp, fixing, served_lp))
            if out.multipliers:
                mults = []
                for zero in (False, True):
                    lam, mu = _multipliers(ilp, out, rel, zero)
                    mults.append((lam, mu))
                    b_l, served_l = _lagrangian(ilp, fixing, lam, mu)
                    bound = min(bound, b_l)
                    offer(served_l)
                    offer(_repair(ilp, fixing, served_l))
                node.multipliers = tuple(mults)
        node.bound = bound
        if pruned(bound):
            return None
        if np.isfinite(best_value):
            fixing = node.fixing
            for lam, mu in ((np.zeros(K), 0.0),) + tuple(node.multipliers) + tuple(inherited):
                fixing = _lagrangian_fixing(ilp, fixing, lam, mu, best_value + tolerance())
            if fixing is not node.fixing:
                fixing = _propagate(fixing)
                if fixing is None or _quick_infeasible(ilp, fixing):
                    return None
                if not np.any(fixing == -1):
                    offer(np.argmax(fixing == 1, axis=0))
                    return None
                node.fixing = fixing
        return node

    root = evaluate(np.full((K, N), -1, dtype=np.int8), np.inf, 0)
    heap = []
    if root is not None:
        heapq.heappush(heap, (-root.bound, next(counter), root))
    nodes = 1
    status = "optimal"
    while heap:
        neg_bound, _, node = heap[0]
        if -neg_bound <= best_value + tolerance():
            break
        if first_feasible and np.isfinite(best_value):
            status = "feasible"
            break
        if max_nodes is not None and nodes >= max_nodes:
            status = "node_limit"
            break
        heapq.heappop(heap)
        if nodes % 100 < 2:
            log.debug("bnb: %d nodes, %d open, incumbent %.10e, bound %.10e",
                      nodes, len(heap), best_value, -neg_bound)
        k, n = _branch_variable(node)
        for val in (1, 0):
            child = node.fixing.copy()
            child[k, n] = val
            nodes += 1
            ev = evaluate(child, node.bound, node.depth + 1, node.multipliers)
            if ev is not None:
                ev.branch_var = (k, n)
                heapq.heappush(heap, (-ev.bound, next(counter), ev))

    if best_served is None:
        raise AssociationInfeasible("no assignment meets every QoS floor within the energy budget")
    open_bound = -heap[0][0] if heap else best_value
    bound = max(best_value, open_bound, pruned_bound)
    return BnbResult(
        association=Association.from_served(best_served, K),
        value=best_value,
        bound=bound,
        gap=bound - best_value,
        nodes=nodes,
        lp_solves=lp_solves,
        status=status,
    )


def _branch_variable(node: BnbNode):
    """Most fractional free entry of the LP solution; ties to lowest (k, n)."""
    free = node.fixing == -1
    if node.lp_x is not None:
        frac = np.where(free, np.minimum(node.lp_x, 1.0 - node.lp_x), -1.0)
        flat = int(np.argmax(frac))  # np.argmax returns the first maximum in C (k-major) order
        if frac.flat[flat] >= 0:
            return np.unravel_index(flat, frac.shape)
    k, n = np.argwhere(free)[0]
    return int(k), int(n)


def solve_association(scen: Scenario, traj: Trajectory, power: PowerSchedule, **kwargs) -> BnbResult:
    return solve_bnb(build_ilp(scen, traj, power), **kwargs)
