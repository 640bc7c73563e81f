import numpy as np
import pytest

from uavmec import model, orchestrator
from uavmec import power as P
from uavmec.association import solve_association
from uavmec.model import Association, PowerSchedule, Trajectory

from conftest import make_scenario


def test_linearization_is_tight_and_dominates(rng):
    sigma2 = 1e-14
    for _ in range(1000):
        g = 10 ** rng.uniform(-11, -8)
        p_r, p = rng.uniform(0, 5, 2)
        value, slope = P.linearize_rate_in_power(p_r, g, sigma2)
        assert slope > 0
        assert value == model.rate(p_r, g, sigma2)
        assert value + slope * (p - p_r) >= model.rate(p, g, sigma2) - 1e-12


def test_linearization_zero_gain():
    value, slope = P.linearize_rate_in_power(0.3, 0.0, 1e-14)
    assert value == 0.0 and slope == 0.0


def _hover(K, N, horizon, ue_xy=(0.0, 0.0), D=0.0, **uav):
    scen = make_scenario([(*ue_xy, D, 1000.0)] * K, slots=N, horizon=horizon, end_point=[0.0, 0.0], **uav)
    return scen, Trajectory(np.zeros((N + 1, 2)))


def _energy_row(scen, traj, assoc, p_r, p):
    """Linearized battery row at p_r evaluated at p (both K x N)."""
    cols = np.arange(scen.N)
    s = assoc.served
    g = model.gains(scen, traj)[s, cols]
    value, slope = P.linearize_rate_in_power(p_r.p[s, cols], g, scen.channel.noise_power)
    coef = scen.joules_per_bit()[s] * scen.dt * scen.channel.bandwidth
    _, e_f = model.flight_energy(traj, scen)
    return e_f + np.sum(coef * (value + slope * (p.p[s, cols] - p_r.p[s, cols])))


def test_energy_row_dominates_true_energy(default_scen, rng):
    traj, p0 = orchestrator.init_state(default_scen)
    assoc = solve_association(default_scen, traj, p0, rel_gap=1e-3).association
    _, _, led0 = model.evaluate(default_scen, traj, assoc, p0)
    assert _energy_row(default_scen, traj, assoc, p0, p0) == pytest.approx(led0.total, rel=1e-12)
    for _ in range(200):
        p = PowerSchedule(rng.uniform(default_scen.budget.p_min, 5.0, p0.p.shape))
        _, _, led = model.evaluate(default_scen, traj, assoc, p)
        assert _energy_row(default_scen, traj, assoc, p0, p) >= led.total - 1e-9 * led.total


def _bisect(f, lo, hi, iters=200):
    """Largest x in [lo, hi] with f(x) <= 0 for increasing f."""
    if f(hi) <= 0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) <= 0 else (lo, mid)
    return lo


@pytest.mark.parametrize("battery", [1e6, None])
def test_single_served_slot_matches_bisection(battery):
    scen, traj = _hover(1, 1, 60.0)
    assoc = Association.from_served([0], 1)
    p_r = PowerSchedule.uniform(1, 1, 0.3)
    if battery is None:
        # binding: the row allows less than the uploading budget's 0.6 W
        battery = _energy_row(scen, traj, assoc, p_r, PowerSchedule.uniform(1, 1, 0.45))
    scen = scen.replace(battery=battery)
    cap = scen.budget.energy_cap / scen.dt
    expected = _bisect(lambda x: _energy_row(scen, traj, assoc, p_r, PowerSchedule.uniform(1, 1, x)) - battery,
                       0.3, cap)
    step = P.solve_p3prime(scen, assoc, traj, p_r)
    assert step.accepted
    assert step.power.p[0, 0] == pytest.approx(expected, rel=1e-6)
    if battery == 1e6:
        assert expected == cap == pytest.approx(0.6)
    else:
        assert expected == pytest.approx(0.45, rel=1e-9)


def test_equal_weights_split_power_equally():
    scen, traj = _hover(1, 2, 60.0, battery_J=1e6)
    step = P.solve_p3prime(scen, Association.from_served([0, 0], 1), traj, PowerSchedule.uniform(1, 2, 0.3))
    p = step.power.p[0]
    assert p[0] == pytest.approx(p[1], rel=1e-6)
    assert p.sum() * scen.dt == pytest.approx(scen.budget.energy_cap, rel=1e-6)


def test_unserved_entries_sit_at_the_floor(default_scen):
    traj, p0 = orchestrator.init_state(default_scen)
    assoc = solve_association(default_scen, traj, p0, rel_gap=1e-3).association
    step = P.solve_p3prime(default_scen, assoc, traj, p0)
    assert step.accepted
    assert np.all(step.power.p[assoc.b == 0] == default_scen.budget.p_min)
    worst = model.audit(default_scen, traj, assoc, step.power).worst()
    for family in ("power_floor", "power_budget", "qos", "energy"):
        assert worst[family] <= 0.0
    assert model.sum_bits(default_scen, traj, assoc, step.power) >= model.sum_bits(default_scen, traj, assoc, p0)


def test_tight_battery_pins_powers_near_the_floor():
    scen, traj = _hover(2, 6, 60.0, ue_xy=(30.0, 0.0))
    assoc = Association.from_served([0, 1, 0, 1, 0, 1], 2)
    p_min = scen.budget.p_min
    p_floor = PowerSchedule.uniform(2, 6, p_min)
    _, _, led = model.evaluate(scen, traj, assoc, p_floor)
    scen = scen.replace(battery=led.total * 1.001)
    step = P.solve_p3prime(scen, assoc, traj, p_floor)
    assert step.accepted
    p = step.power.p
    assert np.all(p >= p_min) and np.all(p <= 1.02 * p_min)
    _, _, new = model.evaluate(scen, traj, assoc, step.power)
    assert new.total <= scen.uav.battery
    assert _energy_row(scen, traj, assoc, p_floor, step.power) == pytest.approx(scen.uav.battery, rel=1e-6)


def test_infeasible_start_is_returned_unchanged():
    scen, traj = _hover(1, 2, 60.0, D=1e12)
    p_r = PowerSchedule.uniform(1, 2, 0.3)
    step = P.solve_p3prime(scen, Association.from_served([0, 0], 1), traj, p_r)
    assert not step.accepted and step.power is p_r
