from __future__ import annotations

import numpy as np
import pytest

from pevplan.devices import HOURS, PevLot, PvUnit, q_capability
from pevplan.dispatch import (
    MODES,
    Scenario,
    canonical_mode,
    dispatch_q,
    hour_injections,
    partial_objective,
)
from pevplan.powerflow import InjectionSet, NonConvergence, solve

from conftest import small_feeder

PEAK_HOUR = 19


def flat_profile(level: float) -> tuple[float, ...]:
    return tuple(level for _ in range(HOURS))


def support_devices():
    # one PV and one lot sized for the bundled feeder
    return [
        PvUnit(16, 0.05, flat_profile(0.02)),
        PevLot(30, 0.06, flat_profile(0.03), n_pev=60, cost_per_pev=0.05),
    ]


# -- configuration objects ---------------------------------------------------


def test_canonical_mode_accepts_aliases():
    assert canonical_mode("DGQ") == "dgq"
    assert canonical_mode("dgq-v2gq") == "dgq+v2gq"
    assert canonical_mode(" none ") == "none"
    with pytest.raises(ValueError, match="unknown scenario mode"):
        canonical_mode("all")


def test_scenario_validation():
    assert Scenario(mode="dgq-v2gq").mode == "dgq+v2gq"
    with pytest.raises(ValueError, match="three nonnegative"):
        Scenario(weights=(0.5, -0.1, 0.6))
    with pytest.raises(ValueError, match="three nonnegative"):
        Scenario(weights=(1.0, 1.0))
    with pytest.raises(ValueError, match="v_ref"):
        Scenario(v_ref=2.0)


def test_scenario_participation():
    devs = support_devices()
    assert Scenario(mode="none").participating(devs) == []
    dgq = Scenario(mode="dgq").participating(devs)
    assert [d.label for d in dgq] == ["pv@16"]
    both = Scenario(mode="dgq+v2gq").participating(devs)
    assert [d.label for d in both] == ["pv@16", "lot@30"]
    assert MODES == ("none", "dgq", "dgq+v2gq")


def test_hour_injections_signs(feeder4):
    devs = [
        PvUnit(2, 0.05, flat_profile(0.02)),
        PevLot(3, 0.06, flat_profile(0.03)),
    ]
    inj = hour_injections(feeder4, devs, 0)
    p_load, q_load = feeder4.load_vectors()
    # PV generation raises the net injection, lot charging lowers it
    assert inj.p[1] == pytest.approx(-p_load[1] + 0.02)
    assert inj.p[2] == pytest.approx(-p_load[2] - 0.03)
    np.testing.assert_allclose(inj.q, -q_load)

    inj2 = hour_injections(
        feeder4, devs, 0, q_settings={"pv@2": -0.01}, load_scale=0.5
    )
    assert inj2.p[1] == pytest.approx(-p_load[1] * 0.5 + 0.02)
    assert inj2.q[1] == pytest.approx(-q_load[1] * 0.5 + 0.01)


def test_partial_objective_arithmetic(feeder4):
    sol = solve(feeder4, InjectionSet.from_loads(*feeder4.load_vectors()))
    sc = Scenario(weights=(2.0, 5.0, 0.3))
    expect = 2.0 * np.sum(np.abs(1.0 - sol.v_mag)) + 5.0 * sol.total_losses
    assert partial_objective(feeder4, sol, sc) == pytest.approx(expect, abs=1e-15)


# -- dispatch behaviour ------------------------------------------------------


def test_mode_none_keeps_everything_at_zero(bus33, profiles33, devices33):
    res = dispatch_q(bus33.network, devices33, PEAK_HOUR, Scenario(mode="none"))
    assert all(v == 0.0 for v in res.q_settings.values())
    assert res.solution is res.base_solution
    assert res.score == res.base_score


def test_dispatch_never_hurts(bus33, devices33):
    for mode in ("dgq", "dgq+v2gq"):
        res = dispatch_q(bus33.network, devices33, PEAK_HOUR, Scenario(mode=mode))
        assert res.score <= res.base_score


def test_dispatch_helps_at_peak(bus33, devices33):
    # the bundled feeder sags at the evening peak, so PV vars must help
    res = dispatch_q(bus33.network, devices33, PEAK_HOUR, Scenario(mode="dgq"))
    assert res.score < res.base_score - 1e-4
    assert res.solution.v_min > res.base_solution.v_min


def test_staged_modes_are_ordered_per_hour(bus33, devices33):
    net = bus33.network
    scores = {
        mode: dispatch_q(net, devices33, PEAK_HOUR, Scenario(mode=mode)).score
        for mode in MODES
    }
    assert scores["dgq+v2gq"] <= scores["dgq"] + 1e-12
    assert scores["dgq"] <= scores["none"] + 1e-12


def test_undervoltage_draws_var_injection(bus33, devices33):
    # V < v_ref everywhere, so accepted setpoints generate vars (negative,
    # load-sign convention)
    res = dispatch_q(bus33.network, devices33, PEAK_HOUR, Scenario(mode="dgq+v2gq"))
    accepted = [v for v in res.q_settings.values() if v != 0.0]
    assert accepted, "expected at least one active setpoint at the peak"
    assert all(v < 0 for v in accepted)


def test_dispatch_respects_capability_at_final_voltages(bus33, devices33):
    net = bus33.network
    res = dispatch_q(net, devices33, PEAK_HOUR, Scenario(mode="dgq+v2gq"))
    for dev in devices33:
        q = res.q_settings[dev.label]
        v_bus = float(res.solution.v_mag[net.index_of(dev.bus)])
        cap = q_capability(dev, dev.p_at(PEAK_HOUR), v_bus)
        assert cap.contains(q, tol=1e-9)


def test_dispatch_is_deterministic(bus33, devices33):
    sc = Scenario(mode="dgq+v2gq")
    a = dispatch_q(bus33.network, devices33, PEAK_HOUR, sc)
    b = dispatch_q(bus33.network, devices33, PEAK_HOUR, sc)
    assert a.q_settings == b.q_settings
    assert a.score == b.score


def test_fully_loaded_converter_cannot_move():
    net = small_feeder(4)
    devs = [PvUnit(3, 0.02, flat_profile(0.02))]  # P = S all day
    res = dispatch_q(net, devs, 0, Scenario(mode="dgq"))
    assert res.q_settings["pv@3"] == 0.0


def test_infeasible_converter_is_parked_and_reported():
    net = small_feeder(4)
    # coupling reactance so large the dc-link circle excludes every Q
    weird = PvUnit(3, 0.01, flat_profile(0.009), x_coupling=150.0)
    sane = PvUnit(2, 0.05, flat_profile(0.01))
    res = dispatch_q(net, [weird, sane], 0, Scenario(mode="dgq"))
    assert "pv@3" in res.infeasible_devices
    assert res.q_settings["pv@3"] == 0.0
    assert res.score <= res.base_score


def test_dispatch_propagates_base_divergence(feeder4):
    devs = [PvUnit(2, 0.05, flat_profile(0.0))]
    with pytest.raises(NonConvergence):
        dispatch_q(feeder4, devs, 0, Scenario(mode="dgq"), load_scale=1e7)


def test_load_scale_shifts_base_solution(bus33, devices33):
    net = bus33.network
    light = dispatch_q(net, devices33, PEAK_HOUR, Scenario(mode="none"), load_scale=0.4)
    heavy = dispatch_q(net, devices33, PEAK_HOUR, Scenario(mode="none"), load_scale=1.0)
    assert light.base_solution.v_min > heavy.base_solution.v_min
