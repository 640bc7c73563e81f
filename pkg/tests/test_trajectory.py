import numpy as np
import pytest

from uavmec import model, orchestrator
from uavmec import trajectory as T
from uavmec.model import Association, PowerSchedule

from conftest import make_scenario


def _true_rate(q, z, p, scen):
    u = np.sum((np.asarray(q) - z) ** 2, axis=-1)
    return model.rate(p, scen.channel.ref_gain / (scen.uav.altitude**2 + u), scen.channel.noise_power)


@pytest.fixture(scope="module")
def scen():
    return make_scenario([(120.0, 300.0, 0.0, 900.0), (450.0, 80.0, 0.0, 1200.0)])


def test_taylor_lower_is_tight_and_below_the_rate(scen, rng):
    z = np.array([120.0, 300.0])
    for _ in range(1000):
        p = rng.uniform(0.01, 5.0)
        q_r = z + rng.uniform(-800, 800, 2)
        q = z + rng.uniform(-800, 800, 2)
        A, W = T.taylor_lower(q_r, z, p, scen)
        assert A <= 0
        assert W == pytest.approx(_true_rate(q_r, z, p, scen), rel=1e-14)
        u, u_r = np.sum((q - z) ** 2), np.sum((q_r - z) ** 2)
        assert A * (u - u_r) + W <= _true_rate(q, z, p, scen) + 1e-12


def test_taylor_lower_zero_power(scen):
    A, W = T.taylor_lower([10.0, 0.0], [0.0, 0.0], 0.0, scen)
    assert A == 0.0 and W == 0.0


def test_gradient_vanishes_above_the_ue(scen):
    g, _ = T.rate_gradient_hessian([5.0, -3.0], [5.0, -3.0], 0.3, scen)
    assert np.array_equal(g, np.zeros(2))


def test_gradient_and_hessian_match_central_differences(scen, rng):
    z = np.array([120.0, 300.0])
    for _ in range(100):
        p = rng.uniform(0.01, 5.0)
        q = z + rng.uniform(-500, 500, 2)
        g, H = T.rate_gradient_hessian(q, z, p, scen)
        h = 1e-4 * (1 + np.linalg.norm(q))
        fd_g, fd_H = np.zeros(2), np.zeros((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd_g[i] = (_true_rate(q + e, z, p, scen) - _true_rate(q - e, z, p, scen)) / (2 * h)
            fd_H[:, i] = (T.rate_gradient_hessian(q + e, z, p, scen)[0]
                          - T.rate_gradient_hessian(q - e, z, p, scen)[0]) / (2 * h)
        assert np.linalg.norm(fd_g - g) <= 1e-6 * np.linalg.norm(g)
        assert np.linalg.norm(fd_H - H) <= 1e-5 * np.linalg.norm(H)


def test_lipschitz_zero_power(scen):
    assert T.lipschitz_constant([0.0, 0.0], 0.0, scen, 500.0) == 0.0


def test_lipschitz_dominates_sampled_hessians(scen, rng):
    z = np.array([120.0, 300.0])
    for p in (0.01, 0.3, 5.0):
        radius = 900.0
        L = T.lipschitz_constant(z, p, scen, radius)
        r = radius * np.sqrt(rng.uniform(0, 1, 1000))
        th = rng.uniform(0, 2 * np.pi, 1000)
        for q in z + np.column_stack([r * np.cos(th), r * np.sin(th)]):
            H = T.rate_gradient_hessian(q, z, p, scen)[1]
            assert L >= np.linalg.norm(H, 2)


def test_lipschitz_not_increased_by_a_smaller_arena(scen):
    radii = [2000.0, 900.0, 300.0, 60.0, 10.0]
    Ls = [T.lipschitz_constant([0.0, 0.0], 0.3, scen, r) for r in radii]
    assert all(a >= b for a, b in zip(Ls, Ls[1:]))


def test_upper_bound_examples(scen, rng):
    traj, pw = orchestrator.init_state(scen)
    served = np.arange(scen.N) % scen.K
    cols = np.arange(scen.N)
    sur = T.build_surrogate(scen, served, pw.p[served, cols], traj.serving)
    assert np.array_equal(T.upper_bound(traj.serving, sur), sur.W)
    looser = T.RateSurrogate(sur.q_r, sur.z, sur.W, sur.A, sur.grad, 2.0 * sur.L)
    q = traj.serving + rng.normal(scale=30.0, size=traj.serving.shape)
    assert np.all(T.upper_bound(q, looser) >= T.upper_bound(q, sur))


def test_sandwich_over_the_arena(scen, rng):
    traj, pw = orchestrator.init_state(scen)
    served = np.arange(scen.N) % scen.K
    p = rng.uniform(0.01, 1.0, scen.N)
    sur = T.build_surrogate(scen, served, p, traj.serving)
    R_r = _true_rate(traj.serving, sur.z, p, scen)
    for bound in (sur.lower(traj.serving), sur.upper(traj.serving)):
        assert np.allclose(bound, R_r, rtol=1e-10, atol=0)
    centre, radius = T.arena(scen)
    for _ in range(1000 // scen.N + 1):
        r = radius * np.sqrt(rng.uniform(0, 1, scen.N))
        th = rng.uniform(0, 2 * np.pi, scen.N)
        q = centre + np.column_stack([r * np.cos(th), r * np.sin(th)])
        R = _true_rate(q, sur.z, p, scen)
        assert np.all(sur.lower(q) <= R + 1e-12)
        assert np.all(R <= sur.upper(q) + 1e-12)


def test_single_slot_returns_fixed_trajectory():
    scen = make_scenario([(10.0, 10.0, 0.0, 1000.0)], slots=1, horizon=60.0)
    traj = orchestrator.straight_line(scen)
    step = T.solve_p2prime(scen, Association.from_served([0], 1), PowerSchedule.uniform(1, 1, 0.3), traj)
    assert step.trajectory is traj and not step.accepted


def _lens_instance(**uav):
    # start (0, 0), end (200, 0); 10 s slots at 15 m/s reach 150 m per step
    return make_scenario([(100.0, 200.0, 0.0, 1000.0)], slots=2, horizon=20.0, v_max=15.0,
                         end_point=[200.0, 0.0], **uav)


def test_two_slot_step_matches_grid_search():
    scen = _lens_instance(battery_J=1e7)
    assoc = Association.from_served([0, 0], 1)
    pw = PowerSchedule.uniform(1, 2, 0.3)
    traj = orchestrator.straight_line(scen)
    s0 = model.sum_bits(scen, traj, assoc, pw)
    first = T.solve_p2prime(scen, assoc, pw, traj)
    assert first.accepted and model.sum_bits(scen, first.trajectory, assoc, pw) > s0
    assert first.trajectory.points[1, 1] > traj.points[1, 1]  # moved toward the UE
    for _ in range(60):
        traj = T.solve_p2prime(scen, assoc, pw, traj).trajectory
    # grid over the free midpoint, keeping both steps within 150 m
    xs, ys = np.meshgrid(np.linspace(50, 150, 401), np.linspace(0, 150, 601))
    ok = (np.hypot(xs, ys) <= 150.0) & (np.hypot(xs - 200.0, ys) <= 150.0)
    R = _true_rate(np.stack([xs, ys], -1), np.array([100.0, 200.0]), 0.3, scen)
    i = np.unravel_index(np.argmax(np.where(ok, R, -np.inf)), R.shape)
    grid_best = np.array([xs[i], ys[i]])
    assert np.linalg.norm(traj.points[1] - grid_best) < 0.5
    assert traj.points[1] == pytest.approx([100.0, np.sqrt(150.0**2 - 100.0**2)], abs=1e-3)


def test_endpoints_pinned_and_audit_preserved(scen):
    traj, pw = orchestrator.init_state(scen)
    assoc = Association.from_served(np.arange(scen.N) % scen.K, scen.K)
    for _ in range(3):
        step = T.solve_p2prime(scen, assoc, pw, traj)
        assert np.array_equal(step.trajectory.points[[0, -1]], traj.points[[0, -1]])
        assert model.audit(scen, step.trajectory, assoc, pw).feasible(0.0)
        assert model.sum_bits(scen, step.trajectory, assoc, pw) >= model.sum_bits(scen, traj, assoc, pw)
        traj = step.trajectory


def test_binding_energy_row_is_active():
    base = _lens_instance(battery_J=1e7)
    assoc = Association.from_served([0, 0], 1)
    pw = PowerSchedule.uniform(1, 2, 0.3)
    traj = orchestrator.straight_line(base)
    _, _, ledger = model.evaluate(base, traj, assoc, pw)
    # a little more than the straight line needs, far less than reaching the lens tip would
    scen = base.replace(battery=ledger.total * 1.02)
    step = T.solve_p2prime(scen, assoc, pw, traj)
    assert step.accepted
    _, _, new = model.evaluate(scen, step.trajectory, assoc, pw)
    assert new.total <= scen.uav.battery
    sur = step.surrogate
    coef = scen.joules_per_bit()[0] * scen.dt * scen.channel.bandwidth
    e_up = coef * np.sum(sur.upper(step.trajectory.serving)) + new.flight
    assert e_up == pytest.approx(scen.uav.battery, rel=1e-6)
