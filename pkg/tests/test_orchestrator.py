import numpy as np
import pytest

from uavmec import model
from uavmec import orchestrator as O
from uavmec.orchestrator import InfeasibleInit, RestorationFailed, RunConfig, Scheme

from conftest import make_scenario

SMALL_UES = [(100.0, 250.0), (500.0, -150.0)]


def _small(D=0.0, **uav):
    return make_scenario([(x, y, D, 1000.0) for x, y in SMALL_UES], slots=6, horizon=60.0,
                         end_point=[600.0, 0.0], **uav)


def test_config_invariants():
    with pytest.raises(ValueError):
        RunConfig(tol_rel=0.0)
    with pytest.raises(ValueError):
        RunConfig(tol_abs=-1.0)
    with pytest.raises(ValueError):
        RunConfig(max_iter=0)
    assert RunConfig(scheme="scheme1").scheme is Scheme.SCHEME_I


def test_ring_init_respects_velocity_and_budget(default_scen):
    traj, pw = O.init_state(default_scen)
    speeds = np.linalg.norm(traj.steps, axis=1) / default_scen.dt
    assert np.all(speeds <= default_scen.uav.v_max)
    assert np.array_equal(traj.points[0], default_scen.uav.start_point)
    assert np.array_equal(traj.points[-1], default_scen.uav.end_point)
    assert np.all(pw.p == 0.3)
    # 50 slots * 2.4 s * 0.3 W = 36 J, exactly the uploading cap
    assert default_scen.dt * pw.p.sum(axis=1) == pytest.approx(np.full(default_scen.K, 36.0), rel=1e-14)
    assert model.audit(default_scen, traj, O.Association.from_served(np.zeros(50, int), 8),
                       pw).worst()["power_budget"] <= 1e-15


def test_ring_is_centred_on_the_ues(default_scen):
    traj, _ = O.init_state(default_scen)
    centre = default_scen.positions.mean(axis=0)
    m = int(np.ceil(default_scen.N / 5))
    r = np.linalg.norm(traj.points[m:default_scen.N - m + 1] - centre, axis=1)
    assert np.ptp(r) <= 1e-9 * r.max()


def test_degenerate_ring_falls_back_to_standing_still():
    scen = make_scenario([(50.0, 50.0, 0.0, 1000.0)], start_point=[50.0, 50.0], end_point=[50.0, 50.0])
    traj, _ = O.init_state(scen)
    assert np.all(traj.points == 50.0)
    assert np.all(np.linalg.norm(traj.steps, axis=1) == 0.0)


def test_unreachable_end_point_is_infeasible_init():
    scen = make_scenario([(0.0, 0.0, 0.0, 1000.0)], end_point=[5000.0, 0.0])
    with pytest.raises(InfeasibleInit):
        O.init_state(scen)


def test_huge_epsilon_stops_after_one_round():
    scen = _small()
    rep = O.run(scen, RunConfig(tol_abs=1e30))
    assert len(rep.iterations) == 1 and rep.converged and rep.status == "converged"
    sol = rep.solution
    assert model.audit(scen, sol.trajectory, sol.association, sol.power).feasible(1e-6)


def test_scheme_two_keeps_initial_trajectory_and_power():
    scen = _small()
    traj, pw = O.init_state(scen)
    rep = O.run(scen, RunConfig(scheme=Scheme.SCHEME_II))
    assert np.array_equal(rep.solution.trajectory.points, traj.points)
    assert np.array_equal(rep.solution.power.p, pw.p)


def test_scheme_ordering_on_a_small_instance():
    out = O.run_schemes(_small())
    s2, s1, sp = (out[s].bits for s in (Scheme.SCHEME_II, Scheme.SCHEME_I, Scheme.PROPOSED))
    assert sp >= s1 >= s2 * (1 - 1e-6)
    assert sp > s2


def test_outer_loop_is_monotone_and_audit_clean(default_scen):
    rep = O.run(default_scen)
    bits = rep.history
    assert all(b >= a - 1e-6 * abs(a) for a, b in zip(bits, bits[1:]))
    assert rep.converged and len(bits) <= 100
    assert abs(bits[-1] - bits[-2]) <= rep.epsilon
    assert rep.epsilon == pytest.approx(1e-4 * bits[0])
    for rec in rep.iterations:
        assert max(rec.residuals.values()) <= 1e-6
        assert set(rec.deltas) == {"b", "q", "p"}
    sol = rep.solution
    assert model.audit(default_scen, sol.trajectory, sol.association, sol.power).feasible(1e-6)
    assert rep.bits == pytest.approx(np.sum(rep.per_ue_bits), rel=1e-12)


def test_restoration_leaves_a_feasible_state_untouched():
    scen = _small(D=1e9)
    traj, pw = O.init_state(scen)
    t2, p2, restored, assoc = O.restore_feasibility(scen, traj, pw)
    assert t2 is traj and p2 is pw and not restored
    S, _, _ = model.evaluate(scen, traj, assoc, pw)
    assert np.all(S >= scen.min_bits)


def test_restoration_without_floors_is_immediate():
    scen = _small(D=0.0)
    traj, pw = O.init_state(scen)
    assert O.restore_feasibility(scen, traj, pw)[2] is False


def test_floor_above_the_analytic_cap_fails():
    scen = _small()
    cap = O.qos_cap(scen)
    # N dt B log2(1 + (E_U / (N dt)) rho0 / (H^2 sigma^2)) with the average power 0.6 W
    assert cap == pytest.approx(60.0 * 1e7 * np.log2(1 + 0.6 * 1e-5 / (2500.0 * 1e-14)), rel=1e-12)
    scen = _small(D=1.01 * cap)
    traj, pw = O.init_state(scen)
    with pytest.raises(RestorationFailed, match="QoS infeasible"):
        O.restore_feasibility(scen, traj, pw)


def test_restoration_recovers_an_infeasible_start():
    scen = _small(D=4e9)
    traj, pw = O.init_state(scen)
    assert O._p1_feasible(scen, traj, pw) is None
    rep = O.run(scen)
    assert rep.restored and rep.status == "converged"
    sol = rep.solution
    assert model.audit(scen, sol.trajectory, sol.association, sol.power).feasible(1e-6)
    assert np.all(rep.per_ue_bits >= scen.min_bits)


def test_scheme_two_cannot_restore():
    scen = _small(D=4e9)
    with pytest.raises(RestorationFailed):
        O.run(scen, RunConfig(scheme=Scheme.SCHEME_II))


def test_warm_start_never_loses_bits():
    scen = _small()
    cold = O.run(scen)
    warm = O.run(scen, init=cold.solution)
    assert warm.bits >= cold.bits * (1 - 1e-6)


def test_sweep_orders_points_and_is_monotone_in_battery():
    scen = _small()
    pts = O.sweep(scen, "battery_J", [60e3, 30e3, 120e3], schemes=(Scheme.PROPOSED, Scheme.SCHEME_II))
    assert [(p.value, p.scheme) for p in pts] == [
        (v, s) for v in (30e3, 60e3, 120e3) for s in (Scheme.PROPOSED, Scheme.SCHEME_II)]
    prop = [p.report.bits for p in pts if p.scheme is Scheme.PROPOSED and p.report is not None]
    assert all(b >= a * (1 - 1e-6) for a, b in zip(prop, prop[1:]))


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        O.sweep(_small(), "altitude", [1.0])
