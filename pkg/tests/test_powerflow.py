from __future__ import annotations

import math

import numpy as np
import pytest

from pevplan import load_builtin
from pevplan.network import Branch, Bus, Network, build_ybus
from pevplan.powerflow import (
    InjectionSet,
    NonConvergence,
    PowerFlowError,
    PowerFlowSolution,
    SingularJacobian,
    branch_table,
    bus_table,
    check_limits,
    compute_losses,
    compute_reactive_losses,
    solve,
)

from conftest import small_feeder


def loads_of(net) -> InjectionSet:
    return InjectionSet.from_loads(*net.load_vectors())


@pytest.fixture(scope="module")
def solved33(bus33):
    net = bus33.network
    return net, solve(net, loads_of(net))


# -- correctness against closed forms ---------------------------------------


def test_two_bus_matches_quadratic_formula():
    """One line, one load: |V2| obeys the standard quadratic in V2².

    V2⁴ + (2(PR + QX) − V1²)·V2² + (P² + Q²)|Z|² = 0, solved here with the
    quadratic formula — an oracle that shares no code with the solver.
    """
    case, _ = load_builtin(case_name="twobus.grid")
    net = case.network
    p, q = net.load_vectors()
    sol = solve(net, InjectionSet.from_loads(p, q), tol=1e-12)

    r = net.branches[0].resistance
    x = net.branches[0].reactance
    pl, ql = p[1], q[1]
    b = 2.0 * (pl * r + ql * x) - 1.0  # V1 = 1.0
    c = (pl**2 + ql**2) * (r**2 + x**2)
    v2_sq = (-b + math.sqrt(b**2 - 4.0 * c)) / 2.0
    assert sol.v_mag[1] == pytest.approx(math.sqrt(v2_sq), abs=1e-9)
    assert sol.converged and sol.max_mismatch <= 1e-12


def test_bus33_reference_full_load(solved33):
    # published full-load figures for this feeder: ~202.7 kW of loss and a
    # 0.9131 pu low point at bus 18
    net, sol = solved33
    loss_kw = sol.total_losses * net.base_mva * 1000.0
    assert loss_kw == pytest.approx(202.68, abs=0.05)
    assert sol.v_min == pytest.approx(0.91309, abs=5e-5)
    assert net.buses[int(np.argmin(sol.v_mag))].id == 18
    assert sol.iterations <= 5  # quadratic convergence from flat start


def test_power_balance(solved33):
    # slack output must equal load plus series losses, P and Q alike
    net, sol = solved33
    v = sol.v_complex
    y = build_ybus(net).values
    s_slack = (v * np.conj(y @ v))[net.slack_index]
    p_load, q_load = net.load_vectors()
    assert s_slack.real - p_load.sum() == pytest.approx(sol.total_losses, abs=1e-7)
    assert s_slack.imag - q_load.sum() == pytest.approx(
        compute_reactive_losses(net, sol), abs=1e-7
    )
    assert compute_losses(net, sol) == pytest.approx(sol.total_losses, abs=1e-15)


def test_zero_injection_flat_profile(feeder4):
    inj = InjectionSet(np.zeros(4), np.zeros(4))
    sol = solve(feeder4, inj)
    assert sol.iterations == 0
    assert sol.total_losses == 0.0
    np.testing.assert_allclose(sol.v_mag, 1.0, atol=1e-15)
    np.testing.assert_allclose(sol.v_ang, 0.0, atol=1e-15)


def test_heavier_load_sags_further(feeder4):
    p, q = feeder4.load_vectors()
    v_prev = 2.0
    for scale in (0.5, 1.0, 2.0, 4.0):
        sol = solve(feeder4, InjectionSet.from_loads(p * scale, q * scale))
        assert sol.v_min < v_prev
        v_prev = sol.v_min


def test_warm_start_reconverges_fast(solved33):
    net, sol = solved33
    inj = loads_of(net)
    warm = solve(net, inj, v0=sol.v_complex)
    assert warm.iterations <= 1
    np.testing.assert_allclose(warm.v_mag, sol.v_mag, atol=1e-10)
    # warm start from a slightly perturbed state still lands on the solution
    rng = np.random.default_rng(3)
    v0 = sol.v_complex * (1.0 + 0.001 * rng.standard_normal(net.n_bus))
    again = solve(net, inj, v0=v0)
    np.testing.assert_allclose(again.v_mag, sol.v_mag, atol=1e-8)


def test_slack_voltage_parameter(feeder4):
    sol = solve(feeder4, loads_of(feeder4), slack_voltage=1.05 + 0j)
    assert sol.v_mag[0] == pytest.approx(1.05)
    assert sol.v_ang[0] == 0.0


# -- failure modes -----------------------------------------------------------


def test_impossible_load_raises_with_partial_solution(feeder4):
    p, q = feeder4.load_vectors()
    with pytest.raises(NonConvergence) as err:
        solve(feeder4, InjectionSet.from_loads(p * 1e4, q * 1e4))
    partial = err.value.solution
    assert isinstance(partial, PowerFlowSolution)
    assert not partial.converged


def test_divergence_is_flagged(feeder4):
    p, q = feeder4.load_vectors()
    with pytest.raises(NonConvergence) as err:
        solve(feeder4, InjectionSet.from_loads(p * 1e7, q * 1e7))
    assert err.value.solution.diverged


def test_degenerate_start_raises_singular(feeder4):
    # a zero-magnitude seed voltage wipes out a Jacobian row
    v0 = np.array([1.0, 1.0, 0.0, 1.0], dtype=complex)
    with pytest.raises((SingularJacobian, NonConvergence)):
        solve(feeder4, loads_of(feeder4), v0=v0)


def test_injection_validation(feeder4):
    with pytest.raises(ValueError, match="does not match bus count"):
        solve(feeder4, InjectionSet(np.zeros(3), np.zeros(3)))
    with pytest.raises(ValueError, match="equal length"):
        InjectionSet(np.zeros(3), np.zeros(4))
    bad = InjectionSet(np.array([0.0, np.nan, 0.0, 0.0]), np.zeros(4))
    with pytest.raises(ValueError, match="non-finite injection"):
        solve(feeder4, bad)
    # non-finite slack entries are the solver's business, not an error
    ok = InjectionSet(np.array([np.nan, 0.0, 0.0, 0.0]), np.zeros(4))
    assert solve(feeder4, ok).converged
    with pytest.raises(ValueError, match="one entry per bus"):
        solve(feeder4, loads_of(feeder4), v0=np.ones(3, dtype=complex))


def test_loss_helpers_refuse_unconverged(feeder4):
    sol = solve(feeder4, loads_of(feeder4))
    stale = PowerFlowSolution(
        sol.v_mag, sol.v_ang, sol.branch_current, sol.branch_flow_from,
        sol.total_losses, sol.iterations, 1.0, converged=False,
    )
    with pytest.raises(PowerFlowError, match="non-converged"):
        compute_losses(feeder4, stale)
    with pytest.raises(PowerFlowError, match="non-converged"):
        compute_reactive_losses(feeder4, stale)
    with pytest.raises(PowerFlowError, match="non-converged"):
        check_limits(feeder4, stale)


# -- limit checking ----------------------------------------------------------


def test_full_load_violates_lower_band(solved33):
    net, sol = solved33
    report = check_limits(net, sol)
    assert not report.ok
    ids = [v.bus for v in report.voltage_violations]
    assert 18 in ids
    assert all(v.v < v.bound for v in report.voltage_violations)
    assert report.voltage_margin < 0
    # ampacity is generous on this feeder
    assert not report.thermal_violations
    assert report.thermal_margin > 0


def test_light_load_is_clean(solved33):
    net, _ = solved33
    p, q = net.load_vectors()
    sol = solve(net, InjectionSet.from_loads(p * 0.3, q * 0.3))
    report = check_limits(net, sol)
    assert report.ok
    assert report.voltage_margin > 0


def test_thermal_violation_detected():
    net = Network(
        (Bus(1, kind="slack"), Bus(2, normal_load_p=0.5, normal_load_q=0.1)),
        (Branch(1, 2, 0.01, 0.02, current_cap=0.25),),
    )
    sol = solve(net, loads_of(net))
    report = check_limits(net, sol)
    assert len(report.thermal_violations) == 1
    tv = report.thermal_violations[0]
    assert (tv.from_bus, tv.to_bus) == (1, 2)
    assert tv.i > tv.i_cap
    assert report.thermal_margin < 0


# -- report tables -----------------------------------------------------------


def test_bus_table_shape(solved33):
    net, sol = solved33
    lines = bus_table(net, sol).strip().splitlines()
    assert lines[0] == "bus,v_pu,angle_deg"
    assert len(lines) == net.n_bus + 1
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[1]) == pytest.approx(1.0)


def test_branch_table_parses_back(solved33):
    net, sol = solved33
    lines = branch_table(net, sol).strip().splitlines()
    assert lines[0] == "branch,from,to,i_pu,p_from_pu,q_from_pu,loss_pu"
    assert len(lines) == len(net.branches) + 1
    total = sum(float(row.split(",")[6]) for row in lines[1:])
    assert total == pytest.approx(sol.total_losses, abs=1e-6)
