"""One successive-convex-approximation step on the UAV trajectory.

With association and powers fixed, the rate of slot n depends on the
waypoint only through the squared horizontal distance u = |q[n] - z_k|^2,
and is convex in u. Two surrogates built at the current waypoints q^r give
a convex program:

* the tangent of R in u is a global lower bound; it replaces the rate in
  the objective and in the per-UE QoS rows (concave in q);
* a descent-lemma quadratic W + g.(q - q^r) + L/2 |q - q^r|^2, with L
  bounding the spectral norm of the rate Hessian over the reachable disc,
  is a global upper bound; it replaces the rate in the battery row.

Both are tight at q^r, so the step never lowers the true objective and
never leaves the true feasible set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import model
from .model import LN2, Association, PowerSchedule, Scenario, Trajectory
from .solver import ConstraintEval, SmoothProgram, SolveOutcome, SolverOptions, Status, solve

log = logging.getLogger(__name__)

LIPSCHITZ_GRID = 10_000
LIPSCHITZ_SAFETY = 1.1


def _snr_scale(p, scen: Scenario):
    """a = p * rho_0 / sigma^2, so that R(u) = log2(1 + a / (H^2 + u))."""
    return np.asarray(p, dtype=float) * scen.channel.ref_gain / scen.channel.noise_power


def _dR_du(u, a, H2):
    return -a / (LN2 * (H2 + u) * (H2 + u + a))


def _d2R_du2(u, a, H2):
    return (1.0 / (H2 + u) ** 2 - 1.0 / (H2 + u + a) ** 2) / LN2


def taylor_lower(q_r, z_k, p, scen: Scenario):
    """Tangent of R in u = |q - z|^2 at q_r: returns slope A <= 0 and value W."""
    a = _snr_scale(p, scen)
    H2 = scen.uav.altitude**2
    u_r = np.sum((np.asarray(q_r, float) - np.asarray(z_k, float)) ** 2, axis=-1)
    W = np.log2(1.0 + a / (H2 + u_r))
    A = _dR_du(u_r, a, H2)
    return A, W


def rate_gradient_hessian(q, z, p, scen: Scenario):
    """Closed-form gradient (2,) and Hessian (2, 2) of R with respect to q."""
    a = _snr_scale(p, scen)
    H2 = scen.uav.altitude**2
    d = np.asarray(q, float) - np.asarray(z, float)
    u = float(d @ d)
    A = _dR_du(u, a, H2)
    Ap = _d2R_du2(u, a, H2)
    grad = 2.0 * A * d
    hess = 2.0 * A * np.eye(2) + 4.0 * Ap * np.outer(d, d)
    return grad, hess


def _hessian_eigs(u, a, H2):
    A = _dR_du(u, a, H2)
    Ap = _d2R_du2(u, a, H2)
    return np.abs(2.0 * A), np.abs(2.0 * A + 4.0 * u * Ap)


def lipschitz_constant(z, p, scen: Scenario, arena_radius: float) -> float:
    """Safety-inflated max of the rate Hessian's spectral norm over |q - z| <= arena_radius.

    ``z`` does not enter the value: the Hessian depends on q only through
    |q - z|, and the caller's radius already bounds that distance.
    """
    del z
    a = float(_snr_scale(p, scen))
    if a == 0.0:
        return 0.0
    H2 = scen.uav.altitude**2
    U = float(arena_radius) ** 2
    grid = np.linspace(0.0, U, LIPSCHITZ_GRID)
    best = 0.0
    for which in (0, 1):
        vals = _hessian_eigs(grid, a, H2)[which]
        i = int(np.argmax(vals))
        best = max(best, float(vals[i]))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if hi > lo:
            res = minimize_scalar(lambda u: -_hessian_eigs(u, a, H2)[which], bounds=(lo, hi),
                                  method="bounded", options={"xatol": 1e-9 * (1.0 + hi)})
            best = max(best, float(-res.fun))
    return LIPSCHITZ_SAFETY * best


@dataclass(frozen=True)
class RateSurrogate:
    """Per-entry surrogates of R at expansion waypoints (vectorized over entries)."""

    q_r: np.ndarray  # (m, 2)
    z: np.ndarray  # (m, 2)
    W: np.ndarray  # rate at q_r
    A: np.ndarray  # dR/du at q_r
    grad: np.ndarray  # (m, 2) gradient of R in q at q_r
    L: np.ndarray  # Lipschitz constant of the gradient

    def lower(self, q):
        u = np.sum((np.asarray(q) - self.z) ** 2, axis=-1)
        u_r = np.sum((self.q_r - self.z) ** 2, axis=-1)
        return self.A * (u - u_r) + self.W

    def upper(self, q):
        d = np.asarray(q) - self.q_r
        return self.W + np.sum(self.grad * d, axis=-1) + 0.5 * self.L * np.sum(d * d, axis=-1)


def arena(scen: Scenario):
    """Centre and radius of a disc containing every reachable waypoint and every UE."""
    pts = np.vstack([scen.uav.start_point, scen.uav.end_point, scen.positions])
    centre = 0.5 * (scen.uav.start_point + scen.uav.end_point)
    radius = float(np.max(np.linalg.norm(pts - centre, axis=1)))
    return centre, radius + scen.uav.v_max * scen.time.horizon / 2.0


def build_surrogate(scen: Scenario, served, p_served, q_r_serving) -> RateSurrogate:
    z = scen.positions[served]
    A, W = taylor_lower(q_r_serving, z, p_served, scen)
    grad = 2.0 * A[:, None] * (q_r_serving - z)
    centre, radius = arena(scen)
    L = np.empty(len(served))
    cache = {}
    for j, (k, p) in enumerate(zip(served, p_served)):
        key = (int(k), float(p))
        if key not in cache:
            reach = radius + float(np.linalg.norm(scen.positions[k] - centre))
            cache[key] = lipschitz_constant(scen.positions[k], p, scen, reach)
        L[j] = cache[key]
    return RateSurrogate(np.array(q_r_serving, float), z, W, A, grad, L)


def upper_bound(q, surrogate: RateSurrogate):
    return surrogate.upper(q)


# --- quadratic program assembly ---------------------------------------------


class _Quadratic:
    """1/2 q'Pq + p'q + r over the flattened waypoints q[0..N]."""

    def __init__(self, dim):
        self.P = np.zeros((dim, dim))
        self.p = np.zeros(dim)
        self.r = 0.0

    def add_sqdist(self, n, z, coef):
        """coef * |q[n] - z|^2"""
        i = slice(2 * n, 2 * n + 2)
        self.P[i, i] += 2.0 * coef * np.eye(2)
        self.p[i] += -2.0 * coef * np.asarray(z)
        self.r += coef * float(np.dot(z, z))

    def add_step(self, n, coef):
        """coef * |q[n+1] - q[n]|^2"""
        a, b = slice(2 * n, 2 * n + 2), slice(2 * n + 2, 2 * n + 4)
        I2 = 2.0 * coef * np.eye(2)
        self.P[a, a] += I2
        self.P[b, b] += I2
        self.P[a, b] -= I2
        self.P[b, a] -= I2

    def add_linear(self, n, g, const):
        self.p[2 * n:2 * n + 2] += g
        self.r += const

    def scaled(self, s):
        out = _Quadratic(len(self.p))
        out.P, out.p, out.r = self.P * s, self.p * s, self.r * s
        return out

    def restrict(self, E, fixed):
        """Pull back to x where q = E x + fixed."""
        P = E.T @ self.P @ E
        p = E.T @ (self.P @ fixed + self.p)
        r = 0.5 * fixed @ self.P @ fixed + self.p @ fixed + self.r
        return P, p, r


def _quadratic_rows(P, p, r):
    """Constraint oracle for rows 1/2 x'P_i x + p_i'x + r_i <= 0."""

    def oracle(x):
        Px = P @ x  # (m, n)
        vals = 0.5 * Px @ x + p @ x + r
        J = Px + p
        return ConstraintEval(vals, J, lambda w: np.tensordot(w, P, axes=1))

    return oracle


@dataclass
class TrajectoryStep:
    trajectory: Trajectory
    outcome: SolveOutcome | None
    accepted: bool
    surrogate: RateSurrogate | None = None


def _program_parts(scen: Scenario, served, power: PowerSchedule, q_r: Trajectory):
    N, dt, B = scen.N, scen.dt, scen.channel.bandwidth
    cols = np.arange(N)
    p_served = power.p[served, cols]
    q_serv = q_r.serving
    sur = build_surrogate(scen, served, p_served, q_serv)
    dim = 2 * (N + 1)
    z = scen.positions

    # each slot contributes dt*B*[A (u - u_r) + W] to its UE's lower-bound bits
    u_r = np.sum((q_serv - z[served]) ** 2, axis=1)
    per_ue = [_Quadratic(dim) for _ in range(scen.K)]
    for j in range(N):
        quad = per_ue[served[j]]
        quad.add_sqdist(j + 1, z[served[j]], dt * B * sur.A[j])
        quad.r += dt * B * (sur.W[j] - sur.A[j] * u_r[j])

    energy = _Quadratic(dim)
    jpb = scen.joules_per_bit()
    for j in range(N):
        k = served[j]
        coef = jpb[k] * dt * B
        qr = q_serv[j]
        g, L = sur.grad[j], sur.L[j]
        energy.add_sqdist(j + 1, qr, coef * 0.5 * L)
        energy.add_linear(j + 1, coef * g, coef * (sur.W[j] - g @ qr))
    for n in range(N):
        energy.add_step(n, scen.flight_kappa / dt**2)
    energy.r -= scen.uav.battery

    steps = []
    for n in range(N):
        s = _Quadratic(dim)
        s.add_step(n, 1.0)
        s.r -= (scen.uav.v_max * dt) ** 2
        steps.append(s)
    return sur, per_ue, energy, steps


def _selector(scen: Scenario, ell: float):
    N = scen.N
    dim = 2 * (N + 1)
    E = np.zeros((dim, 2 * (N - 1)))
    E[2:2 * N, :] = ell * np.eye(2 * (N - 1))
    fixed = np.zeros(dim)
    fixed[:2] = scen.uav.start_point
    fixed[2 * N:] = scen.uav.end_point
    return E, fixed


def _traj_checks(scen, traj, assoc, power, ref_traj):
    """True P2 constraint residuals (scaled) and objective."""
    rep = model.audit(scen, traj, assoc, power)
    worst = rep.worst()
    viol = max(worst["velocity"], worst["qos"], worst["energy"])
    return viol, model.sum_bits(scen, traj, assoc, power)


def solve_p2prime(scen: Scenario, assoc: Association, power: PowerSchedule, q_r: Trajectory,
                  opts: SolverOptions | None = None) -> TrajectoryStep:
    """One convexified trajectory step from q_r; falls back to q_r if it cannot improve."""
    N = scen.N
    if N < 2:
        return TrajectoryStep(q_r, None, False)
    served = assoc.served
    ell = scen.uav.v_max * scen.dt
    sur, per_ue, energy, steps = _program_parts(scen, served, power, q_r)
    E, fixed = _selector(scen, ell)

    obj_scale = 1.0 / (scen.dt * scen.channel.bandwidth * N)
    total = _Quadratic(2 * (N + 1))
    for quad in per_ue:
        total.P += quad.P
        total.p += quad.p
        total.r += quad.r
    Po, po, ro = total.scaled(obj_scale).restrict(E, fixed)

    rows = []
    D = scen.min_bits
    for k, quad in enumerate(per_ue):
        if D[k] > 0:
            # D_k - S_k^low <= 0, relative to D_k
            neg = quad.scaled(-1.0 / D[k])
            neg.r += 1.0
            rows.append(neg.restrict(E, fixed))
    rows.append(energy.scaled(1.0 / scen.uav.battery).restrict(E, fixed))
    for s in steps:
        rows.append(s.scaled(1.0 / ell**2).restrict(E, fixed))
    P = np.array([r[0] for r in rows])
    p = np.array([r[1] for r in rows])
    r = np.array([r[2] for r in rows])

    def objective(x):
        Px = Po @ x
        return 0.5 * x @ Px + po @ x + ro, Px + po, Po

    x0 = (q_r.points[1:N].ravel()) / ell
    prog = SmoothProgram(n=2 * (N - 1), objective=objective, x0=x0, constraints=_quadratic_rows(P, p, r))
    out = solve(prog, opts)
    if not np.isfinite(out.value) or out.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        log.debug("trajectory step rejected: %s %s", out.status, out.message)
        return TrajectoryStep(q_r, out, False, sur)
    pts = q_r.points.copy()
    pts[1:N] = out.x.reshape(N - 1, 2) * ell
    cand = Trajectory(pts)
    viol_new, s_new = _traj_checks(scen, cand, assoc, power, q_r)
    _, s_old = _traj_checks(scen, q_r, assoc, power, q_r)
    if viol_new > 0 or s_new < s_old:
        log.debug("trajectory step rejected: violation %.3e, bits %.6e -> %.6e", viol_new, s_old, s_new)
        return TrajectoryStep(q_r, out, False, sur)
    return TrajectoryStep(cand, out, True, sur)


def restore_step(scen: Scenario, assoc: Association, power: PowerSchedule, q_r: Trajectory,
                 opts: SolverOptions | None = None):
    """Trajectory step maximizing the smallest relative QoS/battery slack.

    Returns (trajectory, true slack at the returned trajectory).
    """
    N = scen.N
    slack_old = feasibility_slack(scen, q_r, assoc, power)
    if N < 2:
        return q_r, slack_old
    ell = scen.uav.v_max * scen.dt
    sur, per_ue, energy, steps = _program_parts(scen, assoc.served, power, q_r)
    E, fixed = _selector(scen, ell)
    n = 2 * (N - 1)
    rows, slack_rows = [], []
    D = scen.min_bits
    for k, quad in enumerate(per_ue):
        if D[k] > 0:
            neg = quad.scaled(-1.0 / D[k])
            neg.r += 1.0
            slack_rows.append(neg.restrict(E, fixed))
    slack_rows.append(energy.scaled(1.0 / scen.uav.battery).restrict(E, fixed))
    for s in steps:
        rows.append(s.scaled(1.0 / ell**2).restrict(E, fixed))

    def pad(P, p, r, s_coef):
        Pp = np.zeros((n + 1, n + 1))
        Pp[:n, :n] = P
        return Pp, np.append(p, s_coef), r

    allrows = [pad(*q, 1.0) for q in slack_rows] + [pad(*q, 0.0) for q in rows]
    P = np.array([r[0] for r in allrows])
    p = np.array([r[1] for r in allrows])
    r = np.array([r[2] for r in allrows])

    def objective(y):
        g = np.zeros(n + 1)
        g[n] = 1.0
        return y[n], g, np.zeros((n + 1, n + 1))

    y0 = np.append(q_r.points[1:N].ravel() / ell, min(slack_old, 0.0) - 1.0)
    upper = np.full(n + 1, np.inf)
    upper[n] = 1.0
    prog = SmoothProgram(n=n + 1, objective=objective, x0=y0, constraints=_quadratic_rows(P, p, r), upper=upper)
    out = solve(prog, opts)
    if not np.all(np.isfinite(out.x)) or out.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return q_r, slack_old
    pts = q_r.points.copy()
    pts[1:N] = out.x[:n].reshape(N - 1, 2) * ell
    cand = Trajectory(pts)
    if model.audit(scen, cand, assoc, power).worst()["velocity"] > 0:
        return q_r, slack_old
    slack_new = feasibility_slack(scen, cand, assoc, power)
    if slack_new <= slack_old:
        return q_r, slack_old
    return cand, slack_new


def feasibility_slack(scen: Scenario, traj: Trajectory, assoc: Association, power: PowerSchedule) -> float:
    """Smallest of (S_k - D_k)/D_k over UEs with D_k > 0 and (E_0 - E)/E_0."""
    S, _, ledger = model.evaluate(scen, traj, assoc, power)
    D = scen.min_bits
    pos = D > 0
    qos = (S[pos] - D[pos]) / D[pos]
    energy = (scen.uav.battery - ledger.total) / scen.uav.battery
    return float(min(np.min(qos, initial=np.inf), energy))
