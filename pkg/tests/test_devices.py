from __future__ import annotations

import math

import numpy as np
import pytest

from pevplan.devices import (
    HOURS,
    PROFILE_SHAPES,
    HourlyProfile,
    PevLot,
    PvUnit,
    QCapability,
    capability_violation,
    compose_load,
    q_capability,
    synth_profile,
    synth_profiles,
)

FLAT = tuple(0.02 for _ in range(HOURS))


def pv(s=0.05, x=0.05, vc=1.1, p=0.02, dc=True):
    return PvUnit(7, s, tuple(p for _ in range(HOURS)), x, vc, apply_dc_link=dc)


def lot(s=0.06, x=0.05, vc=1.1, p=0.03, **kw):
    return PevLot(19, s, tuple(p for _ in range(HOURS)), x, vc, **kw)


# -- profiles ----------------------------------------------------------------


def test_profile_validation():
    with pytest.raises(ValueError, match="expected 24 values"):
        HourlyProfile("short", (1.0, 2.0))
    with pytest.raises(ValueError, match="finite"):
        HourlyProfile("bad", tuple([math.nan] + [0.0] * 23))
    with pytest.raises(ValueError):
        HourlyProfile("neg", tuple([-0.1] + [0.0] * 23))


def test_profile_scaling_and_indexing():
    prof = HourlyProfile("flat", tuple(0.5 for _ in range(HOURS)))
    assert prof[3] == 0.5
    assert prof.scaled(2.0) == tuple(1.0 for _ in range(HOURS))


def test_synth_profiles_deterministic():
    a = synth_profile("pv-bell", seed=5)
    b = synth_profile("pv-bell", seed=5)
    assert a == b
    assert synth_profile("pv-bell", seed=6) != a
    assert set(synth_profiles(seed=2)) == set(PROFILE_SHAPES)


def test_synth_pv_bell_keeps_night_dark():
    # jitter is multiplicative, so zero hours stay exactly zero
    prof = synth_profile("pv-bell", seed=99)
    assert prof.values[0] == 0.0
    assert prof.values[23] == 0.0
    assert max(prof.values) > 0.8


def test_synth_flat_level():
    prof = synth_profile("flat", level=0.3)
    assert prof.values == tuple(0.3 for _ in range(HOURS))
    with pytest.raises(ValueError, match="unknown profile shape"):
        synth_profile("sawtooth")


# -- device dataclasses ------------------------------------------------------


def test_device_labels_and_hourly_power():
    assert pv().label == "pv@7"
    assert lot().label == "lot@19"
    assert pv(p=0.02).p_at(11) == 0.02
    assert lot(p=0.03).p_at(0) == 0.03


def test_device_validation():
    with pytest.raises(ValueError, match="s_rated must be positive"):
        pv(s=0.0)
    with pytest.raises(ValueError, match="converter parameters"):
        pv(x=-0.05)
    with pytest.raises(ValueError, match="outside \\[0, s_rated\\]"):
        pv(s=0.01, p=0.02)  # profile above rating
    with pytest.raises(ValueError, match="needs 24 values"):
        PvUnit(7, 0.05, (0.01, 0.02))
    with pytest.raises(ValueError, match="n_pev"):
        lot(n_pev=0)
    with pytest.raises(ValueError, match="cost_per_pev"):
        lot(cost_per_pev=-1.0)


def test_lot_moved_to_changes_only_bus():
    a = lot(n_pev=60, cost_per_pev=0.05)
    b = a.moved_to(25)
    assert b.bus == 25
    assert (b.s_rated, b.n_pev, b.cost_per_pev) == (a.s_rated, a.n_pev, a.cost_per_pev)
    assert a.bus == 19  # original untouched


# -- reactive capability -----------------------------------------------------


def test_capability_hand_case():
    """S=1, P=0.5, V=1, X=0.05, Vc=1.1: rating circle binds both ends.

    Rating bound: sqrt(1 - 0.25) = 0.8660...; dc-link upper bound
    -V^2/X + sqrt((Vc*V/X)^2 - P^2) = -20 + sqrt(484 - 0.25) = 1.9943 is
    far looser, so q_max comes from the rating.
    """
    dev = PvUnit(1, 1.0, tuple(0.5 for _ in range(HOURS)), 0.05, 1.1)
    cap = q_capability(dev, 0.5, 1.0)
    assert cap.feasible
    root = math.sqrt(0.75)
    assert cap.q_max == pytest.approx(root, abs=1e-12)
    assert cap.q_min == pytest.approx(-root, abs=1e-12)
    assert cap.rating_bound == pytest.approx(root, abs=1e-12)
    assert cap.dc_link_bound == pytest.approx(-20.0 + math.sqrt(484.0 - 0.25), abs=1e-9)


def test_capability_boundaries_satisfy_constraints():
    # both interval ends must satisfy every constraint to within 1e-9
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(300):
        s = float(rng.uniform(0.2, 2.0))
        dev = PvUnit(
            1,
            s,
            tuple(0.0 for _ in range(HOURS)),
            float(rng.uniform(0.01, 0.1)),
            float(rng.uniform(1.05, 1.3)),
        )
        p = float(rng.uniform(0.0, 1.0)) * s
        v = float(rng.uniform(0.95, 1.05))
        cap = q_capability(dev, p, v)
        if not cap.feasible:
            continue
        for q in (cap.q_min, cap.q_max):
            assert capability_violation(dev, p, q, v) <= 1e-9
        checked += 1
    assert checked > 250  # the sampled box is almost entirely feasible


def test_capability_at_full_active_power_is_degenerate():
    dev = pv(s=0.05, p=0.05)
    cap = q_capability(dev, 0.05, 1.0)
    assert cap.feasible
    assert cap.q_min == cap.q_max == 0.0
    assert cap.width == 0.0
    assert cap.contains(0.0)


def test_capability_infeasible_is_not_degenerate():
    # dc-link radius^2 < P^2 leaves no admissible Q at all; that must be
    # reported as infeasible, not as the valid point interval [0, 0]
    dev = PvUnit(1, 1.0, tuple(0.9 for _ in range(HOURS)), 2.0, 1.1)
    cap = q_capability(dev, 0.9, 0.5)
    assert not cap.feasible
    assert not cap.contains(0.0)
    assert cap.width == 0.0
    with pytest.raises(ValueError, match="infeasible"):
        cap.clamp(0.0)
    degenerate = q_capability(pv(s=0.05, p=0.05), 0.05, 1.0)
    assert degenerate.feasible != cap.feasible


def test_capability_without_dc_link_is_pure_rating_circle():
    dev = pv(dc=False, s=0.05, p=0.03)
    cap = q_capability(dev, 0.03, 1.0)
    assert cap.q_max == pytest.approx(0.04, abs=1e-15)
    assert cap.q_min == pytest.approx(-0.04, abs=1e-15)
    assert cap.dc_link_bound == math.inf


def test_capability_input_validation():
    with pytest.raises(ValueError, match="bus voltage"):
        q_capability(pv(), 0.02, 0.0)
    with pytest.raises(ValueError, match="outside"):
        q_capability(pv(s=0.05), 0.06, 1.0)


def test_capability_clamp_and_contains():
    cap = QCapability(-0.3, 0.2)
    assert cap.clamp(0.5) == 0.2
    assert cap.clamp(-1.0) == -0.3
    assert cap.clamp(0.1) == 0.1
    assert cap.contains(0.2)
    assert not cap.contains(0.2000001)
    assert cap.contains(0.2000001, tol=1e-6)


def test_violation_positive_outside_interval():
    dev = pv(s=0.05, p=0.0)
    cap = q_capability(dev, 0.0, 1.0)
    outside = cap.q_max * 1.001 + 1e-6
    assert capability_violation(dev, 0.0, outside, 1.0) > 0.0
    assert capability_violation(dev, 0.0, cap.q_max * 0.5, 1.0) == 0.0


# -- load composition --------------------------------------------------------


def test_compose_load_signs():
    devices = [pv(p=0.02), lot(p=0.03)]
    p, q = compose_load(0.10, 0.05, devices, hour=6)
    # PV generates (subtracts), the lot charges (adds)
    assert p == pytest.approx(0.10 - 0.02 + 0.03)
    assert q == pytest.approx(0.05)
    p2, q2 = compose_load(
        0.10, 0.05, devices, 6, q_settings={"pv@7": -0.01, "lot@19": 0.004}
    )
    assert p2 == pytest.approx(p)
    assert q2 == pytest.approx(0.05 - 0.01 + 0.004)


def test_compose_load_ignores_unknown_labels():
    p, q = compose_load(0.1, 0.0, [pv()], 0, q_settings={"lot@99": 1.0})
    assert q == 0.0
    assert p == pytest.approx(0.1 - 0.02)
