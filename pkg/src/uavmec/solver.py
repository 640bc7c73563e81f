"""Log-barrier Newton solver for smooth convex programs.

Solves

    maximize    f(x)
    subject to  g_i(x) <= 0      (convex, twice differentiable)
                G x <= h
                lower <= x <= upper
                A x = c

with f concave. A phase-I slack problem produces a strictly feasible start
when the initial point is not one; equality constraints are enforced with
infeasible-start Newton steps. Linear programs go through the same path
(:func:`solve_lp`), which additionally returns a certified dual bound.
"""

from __future__ import annotations

import csv
import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    NUMERIC_FAILURE = "NumericFailure"


@dataclass
class ConstraintEval:
    """Values, Jacobian and weighted Hessian of a block of convex constraints.

    ``hessian(w)`` must return sum_i w_i * Hess g_i(x) as an (n, n) array.
    """

    values: np.ndarray
    jacobian: np.ndarray
    hessian: Callable[[np.ndarray], np.ndarray]


@dataclass
class SmoothProgram:
    n: int
    objective: Callable  # x -> (value, gradient, hessian); concave
    x0: np.ndarray
    constraints: Optional[Callable] = None  # x -> ConstraintEval; convex, <= 0
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    linear: bool = False  # objective Hessian is identically zero; enables the low-rank KKT path

    def __post_init__(self):
        n = self.n
        self.x0 = np.asarray(self.x0, dtype=float).reshape(n)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float).reshape(n)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float).reshape(n)
        if self.G is None:
            self.G, self.h = np.zeros((0, n)), np.zeros(0)
        else:
            self.G = np.atleast_2d(np.asarray(self.G, float))
            self.h = np.asarray(self.h, float).reshape(-1)
        if self.A is None:
            self.A, self.c = np.zeros((0, n)), np.zeros(0)
        else:
            self.A = np.atleast_2d(np.asarray(self.A, float))
            self.c = np.asarray(self.c, float).reshape(-1)
        if self.G.shape[1] != n or self.A.shape[1] != n:
            raise ValueError("constraint matrices must have n columns")


@dataclass
class SolverOptions:
    t0: float = 1.0
    mu: float = 10.0
    tol_gap: float = 1e-7  # relative: stop when m/t <= tol_gap * (1 + |f|)
    tol_feas: float = 1e-8
    tol_stationarity: float = 1e-6
    max_newton: int = 200  # per centering step
    max_total_newton: int = 5000
    alpha: float = 0.25
    beta: float = 0.5
    newton_eps: float = 1e-10
    reg0: float = 1e-10
    trace_path: Optional[str] = None
    debug: bool = False


@dataclass
class SolveOutcome:
    x: np.ndarray
    value: float
    status: Status
    stationarity: float = np.inf
    primal_infeasibility: float = np.inf
    gap: float = np.inf
    newton_iterations: int = 0
    outer_iterations: int = 0
    multipliers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    dual_bound: Optional[float] = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _NumericFailure(Exception):
    pass


class _Unbounded(Exception):
    pass


class _Split:
    """Barrier Hessian B + U U', with U' the constraint rows divided by their slacks.

    Keeping U apart lets the Newton system be solved in augmented form,
    where slacks near zero give large but benign entries instead of a
    dense Hessian with condition number 1/s^2.
    """

    def __init__(self, B, U):
        self.B, self.U = B, U

    def dense(self):
        return self.B + self.U @ self.U.T

    def matvec(self, v):
        return self.B @ v + self.U @ (self.U.T @ v)


class _LowRank(_Split):
    """diag(d) + U U' with U tall and thin."""

    def __init__(self, d, U):
        self.d = d
        super().__init__(None, U)

    def dense(self):
        H = self.U @ self.U.T
        H[np.diag_indices(len(self.d))] += self.d
        return H

    def full_b(self):
        return np.diag(self.d)

    def matvec(self, v):
        return self.d * v + self.U @ (self.U.T @ v)

    def kkt_solve(self, A, rhs_x, rhs_eq, refine: int = 3):
        """Woodbury for H^-1, Schur complement on the equalities, iterative refinement.

        Returns None when the refined residual is still not small, so the
        caller can fall back to a dense factorization.
        """
        d, U = self.d, self.U
        if not np.all(d > 0):
            return None
        with np.errstate(all="ignore"):
            Di = 1.0 / d
            DU = Di[:, None] * U
            try:
                cap_f = np.linalg.cholesky(np.eye(U.shape[1]) + U.T @ DU)
            except np.linalg.LinAlgError:
                return None

            def hinv(B):
                y = Di[:, None] * B
                z = np.linalg.solve(cap_f.T, np.linalg.solve(cap_f, U.T @ y))
                return y - DU @ z

            p = len(rhs_eq)
            if p:
                HA = hinv(A.T)
                try:
                    S_f = np.linalg.cholesky(A @ HA)
                except np.linalg.LinAlgError:
                    return None

            def once(rx, re):
                hr = hinv(rx[:, None])[:, 0]
                if not p:
                    return hr, np.zeros(0)
                w = np.linalg.solve(S_f.T, np.linalg.solve(S_f, A @ hr - re))
                return hr - HA @ w, w

            dx, w = once(rhs_x, rhs_eq)
            scale_x = np.max(np.abs(rhs_x))
            for _ in range(refine + 1):
                if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(w))):
                    return None
                res_x = rhs_x - self.matvec(dx) - A.T @ w
                res_e = rhs_eq - A @ dx
                tol_x = 1e-10 * (scale_x + np.max(np.abs(self.d * dx)) + np.max(np.abs(A.T @ w), initial=0.0))
                tol_e = 1e-10 * (np.max(np.abs(A)) * np.max(np.abs(dx)) + np.max(np.abs(rhs_eq), initial=0.0))
                if np.max(np.abs(res_x)) <= tol_x and np.max(np.abs(res_e), initial=0.0) <= max(tol_e, 1e-300):
                    return dx, w
                ddx, dw = once(res_x, res_e)
                dx, w = dx + ddx, w + dw
        return None


class _Barrier:
    """Barrier function of one program at a fixed t (plus shared bookkeeping)."""

    def __init__(self, prog: SmoothProgram, opts: SolverOptions, trace, phase: str):
        self.prog = prog
        self.opts = opts
        self.trace = trace
        self.phase = phase
        self.lo_idx = np.flatnonzero(np.isfinite(prog.lower))
        self.up_idx = np.flatnonzero(np.isfinite(prog.upper))
        self.newton_count = 0
        self.m_nonlin = 0 if prog.constraints is None else len(prog.constraints(prog.x0).values)
        # LP barrier Hessian is diag + G' W G with few rows in G
        self.low_rank = prog.linear and prog.constraints is None and prog.n >= 64 and len(prog.h) < prog.n // 4
        # orthonormal basis of the row space of A, to keep feasible steps exactly in its null space
        self.row_basis = np.linalg.qr(prog.A.T)[0] if len(prog.c) else np.zeros((prog.n, 0))

    @property
    def m(self) -> int:
        return self.m_nonlin + len(self.prog.h) + len(self.lo_idx) + len(self.up_idx)

    def slacks(self, x):
        """Slacks -g_i(x) of every inequality row, grouped, and the nonlinear eval."""
        p = self.prog
        ev = p.constraints(x) if p.constraints is not None else None
        s_nl = -ev.values if ev is not None else np.zeros(0)
        s_lin = p.h - p.G @ x
        s_lo = x[self.lo_idx] - p.lower[self.lo_idx]
        s_up = p.upper[self.up_idx] - x[self.up_idx]
        return ev, s_nl, s_lin, s_lo, s_up

    def inside(self, x) -> bool:
        _, *groups = self.slacks(x)
        return bool(np.all(np.concatenate(groups) > 0))

    def value(self, x, t):
        """phi_t(x) = -t f(x) - sum log s_i; +inf outside the domain."""
        _, *groups = self.slacks(x)
        s = np.concatenate(groups)
        if not np.all(s > 0):
            return np.inf
        f = self.prog.objective(x)[0]
        if not np.isfinite(f):
            return np.inf
        return -t * f - float(np.sum(np.log(s)))

    def derivatives(self, x, t):
        """Objective value, barrier gradient and the Hessian as a :class:`_Split`."""
        p = self.prog
        f, gf, Hf = p.objective(x)
        ev, s_nl, s_lin, s_lo, s_up = self.slacks(x)
        grad = -t * np.asarray(gf, float)
        diag = np.zeros(p.n)
        # index arrays are unique, so fancy-index accumulation is safe
        grad[self.lo_idx] -= 1.0 / s_lo
        diag[self.lo_idx] += 1.0 / s_lo**2
        grad[self.up_idx] += 1.0 / s_up
        diag[self.up_idx] += 1.0 / s_up**2
        inv_lin = 1.0 / s_lin
        grad = grad + p.G.T @ inv_lin
        if self.low_rank:
            return f, grad, _LowRank(diag, p.G.T * inv_lin)
        B = -t * np.asarray(Hf, float)
        rows = [p.G.T * inv_lin]
        if ev is not None and len(s_nl):
            inv = 1.0 / s_nl
            grad = grad + ev.jacobian.T @ inv
            B = B + ev.hessian(inv)
            rows.insert(0, ev.jacobian.T * inv)
        B[np.diag_indices(p.n)] += diag
        return f, grad, _Split(B, np.hstack(rows))

    def kkt_solve(self, H, rhs_x, rhs_eq):
        """Solve [H A'; A 0] [dx; w] = [rhs_x; rhs_eq] for H = B + U U'."""
        if isinstance(H, _LowRank):
            sol = H.kkt_solve(self.prog.A, rhs_x, rhs_eq)
            if sol is not None:
                return sol
            B = H.full_b()
        else:
            B = H.B
        U, A = H.U, self.prog.A
        n, r, p = B.shape[0], U.shape[1], A.shape[0]
        # augmented form [B U A'; U' -I 0; A 0 0] with y = U' dx, Jacobi-scaled on the x block
        hdiag = np.abs(np.diag(B)) + np.sum(U**2, axis=1)
        floor = 1e-12 * max(1.0, np.max(hdiag, initial=0.0))
        d = np.where(hdiag > floor, 1.0 / np.sqrt(np.maximum(hdiag, floor)), 1.0)
        Us, As = U * d[:, None], A * d[None, :]
        # equilibrate the equality rows too, so that a vertex with every slack tiny keeps O(1) pivots
        amax = np.max(np.abs(As), axis=1, initial=0.0)
        e = np.where(amax > 0, 1.0 / np.where(amax > 0, amax, 1.0), 1.0)
        As = As * e[:, None]
        m = n + r + p
        K = np.zeros((m, m))
        K[:n, n:n + r] = Us
        K[n:n + r, :n] = Us.T
        K[n:n + r, n:n + r] = -np.eye(r)
        K[:n, n + r:] = As.T
        K[n + r:, :n] = As
        Bs = B * d[:, None] * d[None, :]
        rhs = np.concatenate([rhs_x * d, np.zeros(r), rhs_eq * e])
        reg = 0.0
        while True:
            K[:n, :n] = Bs + reg * np.eye(n) if reg else Bs
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                    lu = scipy.linalg.lu_factor(K, check_finite=False)
                piv = np.abs(np.diag(lu[0]))
                # near-zero pivots mean a singular x block that LU does not report
                if np.min(piv) > 1e-13 * np.max(piv):
                    sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                    if np.all(np.isfinite(sol)):
                        break
            except (np.linalg.LinAlgError, ValueError, scipy.linalg.LinAlgWarning):
                pass
            reg = self.opts.reg0 if reg == 0.0 else reg * 10.0
            if reg > 1.0:
                raise _NumericFailure("Newton system not solvable after regularization")
        # iterative refinement against the unregularized system
        K[:n, :n] = Bs
        res = rhs - K @ sol
        scale = np.max(np.abs(rhs), initial=0.0) + 1e-300
        for _ in range(3):
            if np.max(np.abs(res)) <= 1e-15 * scale:
                break
            cand = sol + scipy.linalg.lu_solve(lu, res, check_finite=False)
            res_c = rhs - K @ cand
            if not np.max(np.abs(res_c)) < np.max(np.abs(res)):
                break
            sol, res = cand, res_c
        if p:
            # the x rows cancel terms of order t, so their rounding noise leaks into A dx;
            # a correction driven by the equality residual alone restores A dx = rhs_eq
            r_eq = np.zeros(m)
            r_eq[n + r:] = rhs_eq * e - As @ sol[:n]
            sol = sol + scipy.linalg.lu_solve(lu, r_eq, check_finite=False)
        return sol[:n] * d, sol[n + r:] * e

    def centre(self, x, nu, t, outer, stop=None):
        """Newton centering at parameter t; infeasible-start while A x != c."""
        p, o = self.prog, self.opts
        eq_scale = 1.0 + np.max(np.abs(p.c), initial=0.0)
        stalls = 0
        for _ in range(o.max_newton):
            if self.newton_count >= o.max_total_newton:
                return x, nu, False
            self.newton_count += 1
            f, grad, H = self.derivatives(x, t)
            r_eq = p.A @ x - p.c
            feasible_eq = np.max(np.abs(r_eq), initial=0.0) <= 0.1 * o.tol_feas * eq_scale
            if feasible_eq:
                dx, w = self.kkt_solve(H, -grad, np.zeros(len(p.c)))
                dx = dx - self.row_basis @ (self.row_basis.T @ dx)
                # dx' H dx, not -grad' dx: the latter carries w' A dx, which rounding makes O(1) at large t
                dec = float(dx @ H.matvec(dx))
                self._trace(outer, t, f, dec)
                if dec / 2.0 <= o.newton_eps:
                    return x, w, True
                phi = self.value(x, t)
                # phi differences below this are rounding noise
                noise = 1e-15 * max(1.0, abs(phi))
                step = 1.0
                while True:
                    xn = x + step * dx
                    phin = self.value(xn, t)
                    if phin <= phi - o.alpha * step * dec:
                        break
                    # quadratic-convergence region: the decrease is below what phi can resolve
                    if dec < 1e-3 and phin <= phi + noise:
                        break
                    step *= o.beta
                    if step < 1e-14:
                        return x, w, True
                stalls = stalls + 1 if (dec < 1e-3 and phin > phi - noise) else 0
                x, nu = xn, w
                if stalls >= 3:
                    return x, w, True
            else:
                # near-feasible: project onto A x = c in the barrier-Hessian metric
                if np.max(np.abs(r_eq)) <= 1e-6 * eq_scale:
                    xn = x + self.kkt_solve(H, np.zeros(p.n), -r_eq)[0]
                    if self.inside(xn) and np.max(np.abs(p.A @ xn - p.c)) < np.max(np.abs(r_eq)):
                        x = xn
                        continue
                # the right-hand side already carries A' nu, so the multiplier block is the step in nu
                dx, dnu = self.kkt_solve(H, -(grad + p.A.T @ nu), -r_eq)
                res0 = np.linalg.norm(np.concatenate([grad + p.A.T @ nu, r_eq]))
                self._trace(outer, t, f, res0)
                step = 1.0
                while True:
                    xn = x + step * dx
                    if self.inside(xn):
                        fn, gn, _ = self._grad_only(xn, t)
                        if np.isfinite(fn):
                            rn = np.linalg.norm(
                                np.concatenate([gn + p.A.T @ (nu + step * dnu), p.A @ xn - p.c])
                            )
                            if rn <= (1.0 - o.alpha * step) * res0:
                                break
                    step *= o.beta
                    if step < 1e-14:
                        raise _NumericFailure("infeasible-start line search stalled")
                x, nu = xn, nu + step * dnu
            if not np.all(np.abs(x) < 1e12):
                raise _Unbounded()
            if stop is not None and stop(x):
                return x, nu, True
        return x, nu, False

    def _grad_only(self, x, t):
        f, grad, _ = self.derivatives(x, t)
        return f, grad, None

    def _trace(self, outer, t, f, dec):
        if self.trace is not None:
            self.trace.writerow([self.phase, outer, self.newton_count, repr(t), repr(f), repr(dec)])

    def multipliers(self, x, t):
        _, s_nl, s_lin, s_lo, s_up = self.slacks(x)
        return {
            "nonlinear": 1.0 / (t * s_nl),
            "linear": 1.0 / (t * s_lin),
            "lower": 1.0 / (t * s_lo),
            "upper": 1.0 / (t * s_up),
        }

    def certify(self, x, t):
        """Stationarity residual (relative), primal infeasibility and multipliers."""
        p = self.prog
        f, gf, _ = p.objective(x)
        gf = np.asarray(gf, float)
        lam = self.multipliers(x, t)
        ev, s_nl, s_lin, s_lo, s_up = self.slacks(x)
        r = gf.copy()
        if ev is not None and len(s_nl):
            r -= ev.jacobian.T @ lam["nonlinear"]
        r -= p.G.T @ lam["linear"]
        np.add.at(r, self.lo_idx, lam["lower"])
        np.add.at(r, self.up_idx, -lam["upper"])
        if len(p.c):
            nu, *_ = np.linalg.lstsq(p.A.T, r, rcond=None)
            r = r - p.A.T @ nu
        else:
            nu = np.zeros(0)
        stat = float(np.max(np.abs(r), initial=0.0) / max(1.0, np.max(np.abs(gf), initial=0.0)))
        viol = [np.max(-s, initial=0.0) for s in (s_nl, s_lin, s_lo, s_up)]
        viol.append(np.max(np.abs(p.A @ x - p.c), initial=0.0))
        lam["equality"] = nu
        return stat, float(max(0.0, *viol)), lam


def _interior_start(prog: SmoothProgram) -> np.ndarray:
    x = prog.x0.copy()
    lo, up = prog.lower, prog.upper
    width = up - lo
    margin_lo = np.minimum(1e-6 * np.maximum(1.0, np.abs(lo)), 0.25 * width)
    margin_up = np.minimum(1e-6 * np.maximum(1.0, np.abs(up)), 0.25 * width)
    with np.errstate(invalid="ignore"):
        x = np.where(np.isfinite(lo), np.maximum(x, lo + margin_lo), x)
        x = np.where(np.isfinite(up), np.minimum(x, up - margin_up), x)
    both = np.isfinite(lo) & np.isfinite(up)
    with np.errstate(invalid="ignore"):
        x = np.where(both & (x >= up), 0.5 * (lo + up), x)
    return x


def _phase_one(prog: SmoothProgram, x0: np.ndarray, sigma0: float) -> SmoothProgram:
    n = prog.n

    def objective(y):
        g = np.zeros(n + 1)
        g[n] = -1.0
        return -y[n], g, np.zeros((n + 1, n + 1))

    constraints = None
    if prog.constraints is not None:
        inner = prog.constraints

        def constraints(y):
            ev = inner(y[:n])
            m = len(ev.values)
            J = np.hstack([ev.jacobian, -np.ones((m, 1))])

            def hess(w):
                out = np.zeros((n + 1, n + 1))
                out[:n, :n] = ev.hessian(w)
                return out

            return ConstraintEval(ev.values - y[n], J, hess)

    # with t0 = 1 the centre in sigma lies below floor + 1 even when x is unbounded, so it is strictly negative
    floor = -2.0 * max(1.0, abs(sigma0))
    return SmoothProgram(
        linear=prog.constraints is None,
        n=n + 1,
        objective=objective,
        x0=np.append(x0, sigma0),
        constraints=constraints,
        G=np.hstack([prog.G, -np.ones((len(prog.h), 1))]),
        h=prog.h,
        A=np.hstack([prog.A, np.zeros((len(prog.c), 1))]),
        c=prog.c,
        lower=np.append(prog.lower, floor),
        upper=np.append(prog.upper, np.inf),
    )


def _max_violation(bar: _Barrier, x) -> float:
    _, s_nl, s_lin, _, _ = bar.slacks(x)
    return float(max(np.max(-s_nl, initial=-np.inf), np.max(-s_lin, initial=-np.inf)))


def _barrier_path(bar: _Barrier, x, opts: SolverOptions, stop_outer=None, stop_inner=None):
    """Run the outer barrier loop from a strictly feasible x. Returns (x, nu, t, history, ok)."""
    t = opts.t0
    nu = np.zeros(len(bar.prog.c))
    history = []
    outer = 0
    while True:
        x, nu, centred = bar.centre(x, nu, t, outer, stop=stop_inner)
        f = bar.prog.objective(x)[0]
        history.append((t, float(f)))
        outer += 1
        if not centred:
            return x, nu, t, history, False
        if stop_outer is not None and stop_outer(x, t):
            return x, nu, t, history, True
        if bar.m == 0 or bar.m / t <= opts.tol_gap * (1.0 + abs(f)):
            return x, nu, t, history, True
        t *= opts.mu


def _check_convexity(prog: SmoothProgram, x0, rng=None, samples: int = 8):
    rng = np.random.default_rng(0) if rng is None else rng
    scale = 1e-2 * (1.0 + np.abs(x0))
    for _ in range(samples):
        a = x0 + scale * rng.standard_normal(prog.n)
        b = x0 + scale * rng.standard_normal(prog.n)
        mid = 0.5 * (a + b)
        fa, fb, fm = (prog.objective(v)[0] for v in (a, b, mid))
        if np.all(np.isfinite([fa, fb, fm])) and fm < 0.5 * (fa + fb) - 1e-9 * (1 + abs(fm)):
            log.warning("objective fails a concavity midpoint check")
        if prog.constraints is not None:
            ga, gb, gm = (prog.constraints(v).values for v in (a, b, mid))
            if np.any(gm > 0.5 * (ga + gb) + 1e-9 * (1 + np.abs(gm))):
                log.warning("constraint fails a convexity midpoint check")


def solve(prog: SmoothProgram, opts: Optional[SolverOptions] = None) -> SolveOutcome:
    opts = opts or SolverOptions()
    trace_file = open(opts.trace_path, "w", newline="") if opts.trace_path else None
    trace = None
    if trace_file is not None:
        trace = csv.writer(trace_file)
        trace.writerow(["phase", "outer", "newton", "t", "objective", "decrement"])
    try:
        return _solve(prog, opts, trace)
    finally:
        if trace_file is not None:
            trace_file.close()


def _solve(prog: SmoothProgram, opts: SolverOptions, trace) -> SolveOutcome:
    if np.any(prog.lower > prog.upper):
        return SolveOutcome(prog.x0, -np.inf, Status.INFEASIBLE, message="empty box")
    if opts.debug:
        _check_convexity(prog, prog.x0)
    bar = _Barrier(prog, opts, trace, "II")
    x = _interior_start(prog)
    needs_phase1 = (
        not bar.inside(x)
        or not np.isfinite(prog.objective(x)[0])
        or np.max(np.abs(prog.A @ x - prog.c), initial=0.0) > opts.tol_feas * (1 + np.max(np.abs(prog.c), initial=0.0))
    )
    newton = 0
    try:
        if needs_phase1:
            viol = _max_violation(bar, x)
            # a start inside every row still needs sigma > floor when only A x = c fails
            sigma0 = max(viol if np.isfinite(viol) else 0.0, 0.0) + 1.0
            p1 = _phase_one(prog, x, sigma0)
            bar1 = _Barrier(p1, opts, trace, "I")

            def strict(y, t):
                return y[-1] < 0.0 and np.max(np.abs(prog.A @ y[:-1] - prog.c), initial=0.0) <= opts.tol_feas * (
                    1 + np.max(np.abs(prog.c), initial=0.0)
                )

            y, _, t1, _, ok = _barrier_path(bar1, p1.x0, opts, stop_outer=strict,
                                            stop_inner=lambda y: strict(y, None))
            newton += bar1.newton_count
            if not strict(y, t1):
                sigma = y[-1]
                lower_bound = sigma - bar1.m / t1
                if lower_bound > opts.tol_feas:
                    return SolveOutcome(y[:-1], -np.inf, Status.INFEASIBLE, newton_iterations=newton,
                                        message=f"phase I slack bounded below by {lower_bound:.3e}")
                status = Status.MAX_ITER if not ok else Status.NUMERIC_FAILURE
                return SolveOutcome(y[:-1], -np.inf, status, newton_iterations=newton,
                                    message="no strictly feasible point found")
            x = y[:-1]
            if not np.isfinite(prog.objective(x)[0]):
                return SolveOutcome(x, -np.inf, Status.NUMERIC_FAILURE, newton_iterations=newton,
                                    message="phase I point outside objective domain")
        x, nu, t, history, ok = _barrier_path(bar, x, opts)
    except _NumericFailure as exc:
        return SolveOutcome(x, -np.inf, Status.NUMERIC_FAILURE, newton_iterations=newton + bar.newton_count,
                            message=str(exc))
    except _Unbounded:
        return SolveOutcome(x, np.inf, Status.UNBOUNDED, newton_iterations=newton + bar.newton_count)

    newton += bar.newton_count
    f = float(prog.objective(x)[0])
    stat, viol, lam = bar.certify(x, t)
    gap = bar.m / t
    out = SolveOutcome(x, f, Status.OPTIMAL, stat, viol, gap, newton, len(history), lam, history)
    if not ok:
        out.status = Status.MAX_ITER
    elif viol > opts.tol_feas or stat > opts.tol_stationarity or gap > opts.tol_gap * (1 + abs(f)):
        out.status = Status.NUMERIC_FAILURE
        out.message = f"certificate not met: stationarity={stat:.2e} violation={viol:.2e} gap={gap:.2e}"
    return out


def solve_lp(c, G=None, h=None, A=None, b=None, lower=None, upper=None, x0=None,
             opts: Optional[SolverOptions] = None) -> SolveOutcome:
    """Maximize c @ x over {G x <= h, A x = b, lower <= x <= upper}.

    On success ``dual_bound`` holds a valid upper bound on the LP optimum
    computed from the barrier multipliers, with any dual residual charged
    against the finite box.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    up = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    if x0 is None:
        with np.errstate(invalid="ignore"):
            x0 = np.where(np.isfinite(lo) & np.isfinite(up), 0.5 * (lo + up),
                          np.where(np.isfinite(lo), lo + 1.0, np.where(np.isfinite(up), up - 1.0, 0.0)))

    def objective(x):
        return float(c @ x), c, np.zeros((n, n))

    prog = SmoothProgram(n=n, objective=objective, x0=x0, G=G, h=h, A=A, c=b, lower=lo, upper=up, linear=True)
    out = solve(prog, opts)
    if out.status in (Status.OPTIMAL, Status.NUMERIC_FAILURE, Status.MAX_ITER) and np.isfinite(out.value):
        out.dual_bound = lp_dual_bound(c, prog, out.multipliers)
    return out


def lp_dual_bound(c, prog: SmoothProgram, multipliers: dict) -> float:
    """Weak-duality bound at the barrier's row multipliers.

    Any equality multiplier vector gives a valid bound; the barrier's own
    one is tight, a least-squares fit is kept as a fallback.
    """
    lam = np.maximum(multipliers.get("linear", np.zeros(len(prog.h))), 0.0)
    r0 = c - prog.G.T @ lam
    candidates = [np.zeros(0)]
    if len(prog.c):
        nu_ls, *_ = np.linalg.lstsq(prog.A.T, r0, rcond=None)
        candidates = [nu_ls]
        nu = multipliers.get("equality")
        if nu is not None and len(nu) == len(prog.c) and np.all(np.isfinite(nu)):
            candidates.insert(0, np.asarray(nu, float))
    best = np.inf
    for nu in candidates:
        r = r0 - prog.A.T @ nu
        with np.errstate(invalid="ignore"):
            box = np.where(r > 0, r * prog.upper, np.where(r < 0, r * prog.lower, 0.0))
        if np.all(np.isfinite(box)):
            best = min(best, float(lam @ prog.h + nu @ prog.c + np.sum(box)))
    return best
