"""Uploading-power step with association and trajectory fixed.

Only the served entry of each slot is a decision variable; every unserved
(k, n) sits at the power floor. The objective and QoS rows use the exact
concave rate. The battery row is made affine by replacing each rate with
its tangent at the current powers. Since the rate is concave in p, the
tangent over-estimates it, so the affine row never under-counts
computation energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import model
from .model import LN2, Association, PowerSchedule, Scenario, Trajectory
from .solver import ConstraintEval, SmoothProgram, SolveOutcome, SolverOptions, Status, solve

log = logging.getLogger(__name__)


def _log2(d):
    # -inf outside the domain, without floating-point warnings
    return np.where(d > 0, np.log2(np.maximum(d, 1e-300)), -np.inf)


def _qos_sum(M, r):
    # M @ r where zero coefficients ignore the -inf entries of other UEs
    with np.errstate(invalid="ignore"):
        out = M @ r
    return np.where(np.isnan(out), -np.inf, out)


def linearize_rate_in_power(p_r, gain, noise_power):
    """Tangent of log2(1 + p g / sigma^2) at p_r: returns (value, slope)."""
    p_r = np.asarray(p_r, dtype=float)
    gain = np.asarray(gain, dtype=float)
    value = np.log2(1.0 + p_r * gain / noise_power)
    slope = gain / (LN2 * (noise_power + p_r * gain))
    return value, slope


@dataclass
class PowerStep:
    power: PowerSchedule
    outcome: SolveOutcome | None
    accepted: bool


def _floor_schedule(scen: Scenario, served, p_served) -> PowerSchedule:
    p = np.full((scen.K, scen.N), scen.budget.p_min)
    p[served, np.arange(scen.N)] = p_served
    return PowerSchedule(p)


def solve_p3prime(scen: Scenario, assoc: Association, traj: Trajectory, p_r: PowerSchedule,
                  opts: SolverOptions | None = None) -> PowerStep:
    """One convexified power step from p_r; falls back to p_r if it cannot improve."""
    K, N, dt = scen.K, scen.N, scen.dt
    B, sigma2 = scen.channel.bandwidth, scen.channel.noise_power
    E_U, p_min = scen.budget.energy_cap, scen.budget.p_min
    served = assoc.served
    cols = np.arange(N)
    g = model.gains(scen, traj)[served, cols]
    snr = g / sigma2
    pr = p_r.p[served, cols]
    jpb = scen.joules_per_bit()[served]
    _, e_f = model.flight_energy(traj, scen)

    obj_scale = 1.0 / (dt * B * N)

    def objective(x):
        d = 1.0 + x * snr
        f = np.sum(_log2(d))
        grad = snr / (LN2 * d)
        hess = np.diag(-(snr**2) / (LN2 * d**2))
        return f * dt * B * obj_scale, grad * dt * B * obj_scale, hess * dt * B * obj_scale

    # per-UE uploading energy with unserved slots at the floor
    counts = np.bincount(served, minlength=K)
    member = (served[None, :] == np.arange(K)[:, None]).astype(float)
    G_budget = dt * member / E_U
    h_budget = (E_U - dt * (N - counts) * p_min) / E_U

    # battery row with rates replaced by their tangents at p_r
    value, slope = linearize_rate_in_power(pr, g, sigma2)
    coef = jpb * dt * B
    E0 = scen.uav.battery
    G_energy = (coef * slope)[None, :] / E0
    h_energy = np.array([(E0 - e_f - np.sum(coef * (value - slope * pr))) / E0])

    G = np.vstack([G_budget, G_energy])
    h = np.concatenate([h_budget, h_energy])

    D = scen.min_bits
    qos_ues = np.flatnonzero(D > 0)
    constraints = None
    if len(qos_ues):
        M = member[qos_ues] * (dt * B / D[qos_ues])[:, None]

        def constraints(x):
            d = 1.0 + x * snr
            r = _log2(d)
            vals = 1.0 - _qos_sum(M, r)
            J = -M * (snr / (LN2 * d))[None, :]
            curv = (snr**2) / (LN2 * d**2)

            def hess(w):
                return np.diag((w @ M) * curv)

            return ConstraintEval(vals, J, hess)

    lower = np.full(N, p_min)
    upper = np.full(N, E_U / dt - (N - 1) * p_min)
    prog = SmoothProgram(n=N, objective=objective, x0=pr, constraints=constraints, G=G, h=h,
                         lower=lower, upper=upper)
    out = solve(prog, opts)
    if not np.all(np.isfinite(out.x)) or out.status in (Status.INFEASIBLE, Status.UNBOUNDED) \
            or not np.isfinite(out.value):
        log.debug("power step rejected: %s %s", out.status, out.message)
        return PowerStep(p_r, out, False)
    x = np.clip(out.x, p_min, None)
    cand = _floor_schedule(scen, served, x)
    worst = model.audit(scen, traj, assoc, cand).worst()
    viol = max(worst["power_floor"], worst["power_budget"], worst["qos"], worst["energy"])
    s_new = model.sum_bits(scen, traj, assoc, cand)
    s_old = model.sum_bits(scen, traj, assoc, p_r)
    if viol > 0 or s_new < s_old:
        log.debug("power step rejected: violation %.3e, bits %.6e -> %.6e", viol, s_old, s_new)
        return PowerStep(p_r, out, False)
    return PowerStep(cand, out, True)


def restore_step(scen: Scenario, assoc: Association, traj: Trajectory, p_r: PowerSchedule,
                 opts: SolverOptions | None = None):
    """Power step maximizing the smallest relative QoS/battery slack.

    Returns (power, true slack at the returned powers).
    """
    from .trajectory import feasibility_slack

    K, N, dt = scen.K, scen.N, scen.dt
    B, sigma2 = scen.channel.bandwidth, scen.channel.noise_power
    E_U, p_min = scen.budget.energy_cap, scen.budget.p_min
    served = assoc.served
    cols = np.arange(N)
    g = model.gains(scen, traj)[served, cols]
    snr = g / sigma2
    pr = np.clip(p_r.p[served, cols], p_min, None)
    start = _floor_schedule(scen, served, pr)
    if model.audit(scen, traj, assoc, start).worst()["power_budget"] > 0:
        start = _floor_schedule(scen, served, np.full(N, p_min))
        pr = np.full(N, p_min)
    slack_old = feasibility_slack(scen, traj, assoc, start)
    jpb = scen.joules_per_bit()[served]
    _, e_f = model.flight_energy(traj, scen)
    counts = np.bincount(served, minlength=K)
    member = (served[None, :] == np.arange(K)[:, None]).astype(float)
    D = scen.min_bits
    qos_ues = np.flatnonzero(D > 0)
    M = member[qos_ues] * (dt * B / D[qos_ues])[:, None]
    value, slope = linearize_rate_in_power(pr, g, sigma2)
    coef = jpb * dt * B
    E0 = scen.uav.battery

    # variables (p, s); rows: 1 - S_k/D_k + s <= 0, linearized energy / E0 - 1 + s <= 0
    def objective(y):
        grad = np.zeros(N + 1)
        grad[N] = 1.0
        return y[N], grad, np.zeros((N + 1, N + 1))

    def constraints(y):
        x = y[:N]
        d = 1.0 + x * snr
        vals = 1.0 - _qos_sum(M, _log2(d)) + y[N]
        J = np.hstack([-M * (snr / (LN2 * d))[None, :], np.ones((len(qos_ues), 1))])
        curv = (snr**2) / (LN2 * d**2)

        def hess(w):
            out = np.zeros((N + 1, N + 1))
            out[:N, :N] = np.diag((w @ M) * curv)
            return out

        return ConstraintEval(vals, J, hess)

    G = np.vstack([
        np.hstack([dt * member / E_U, np.zeros((K, 1))]),
        np.append(coef * slope / E0, 1.0)[None, :],
    ])
    h = np.concatenate([(E_U - dt * (N - counts) * p_min) / E_U,
                        [(E0 - e_f - np.sum(coef * (value - slope * pr))) / E0]])
    lower = np.append(np.full(N, p_min), -np.inf)
    upper = np.append(np.full(N, E_U / dt - (N - 1) * p_min), 1.0)
    y0 = np.append(pr, min(slack_old, 0.0) - 1.0)
    prog = SmoothProgram(n=N + 1, objective=objective, x0=y0,
                         constraints=constraints if len(qos_ues) else None, G=G, h=h, lower=lower, upper=upper)
    out = solve(prog, opts)
    if not np.all(np.isfinite(out.x)) or out.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return start, slack_old
    cand = _floor_schedule(scen, served, np.clip(out.x[:N], p_min, None))
    worst = model.audit(scen, traj, assoc, cand).worst()
    if max(worst["power_floor"], worst["power_budget"]) > 0:
        return start, slack_old
    slack_new = feasibility_slack(scen, traj, assoc, cand)
    if slack_new <= slack_old:
        return start, slack_old
    return cand, slack_new
