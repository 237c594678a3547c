"""Per-hour reactive-power dispatch of converter devices.

Three participation modes: ``none`` (all converters idle on the reactive
axis), ``dgq`` (PV inverters support voltage), ``dgq+v2gq`` (PV inverters
plus PEV-lot converters).  Dispatch is a coordinate-descent sweep: each
participating device in turn gets a bounded one-dimensional search over its
capability interval, scored by a fresh power-flow solve.  Moves are accepted
only when they improve the hour's partial objective, so the dispatched state
is never worse than the undispatched one.  The ``dgq+v2gq`` mode runs the
PV-only stage first and adds the lots afterwards, which makes the three
modes monotone by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .devices import Device, PevLot, PvUnit, q_capability
from .network import Network
from .powerflow import (
    DEFAULT_TOL,
    InjectionSet,
    NonConvergence,
    PowerFlowSolution,
    solve,
)

MODES = ("none", "dgq", "dgq+v2gq")
_MODE_ALIASES = {"dgq-v2gq": "dgq+v2gq"}

MAX_SWEEPS = 10
SWEEP_IMPROVEMENT_TOL = 1e-6
CAPABILITY_RECHECK_TOL = 1e-9
_TRIAL_PENALTY = 1e9
_SEARCH_REL_XATOL = 0.08
_SEARCH_MIN_XATOL = 1e-4
_SEARCH_MAXITER = 10


def canonical_mode(mode: str) -> str:
    m = mode.strip().lower()
    m = _MODE_ALIASES.get(m, m)
    if m not in MODES:
        raise ValueError(f"unknown scenario mode {mode!r}; expected one of {MODES}")
    return m


@dataclass(frozen=True)
class Scenario:
    """Study configuration: participation mode, objective weights, reference.

    ``v_ref`` is the target voltage (scalar, applied to every bus).
    ``load_profile_id`` optionally names a profile that scales all normal
    loads hour by hour; ``None`` holds them constant.
    """

    mode: str = "none"
    weights: tuple[float, float, float] = (0.6, 0.1, 0.3)
    v_ref: float = 1.0
    load_profile_id: str | None = None
    pf_tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        w = tuple(float(x) for x in self.weights)
        if len(w) != 3 or any(x < 0 for x in w):
            raise ValueError("weights must be three nonnegative numbers")
        object.__setattr__(self, "weights", w)
        if not 0.5 <= self.v_ref <= 1.5:
            raise ValueError("v_ref out of plausible per-unit range")

    def participating(self, devices: Sequence[Device]) -> list[Device]:
        if self.mode == "none":
            return []
        if self.mode == "dgq":
            return [d for d in devices if isinstance(d, PvUnit)]
        return list(devices)


def hour_injections(
    net: Network,
    devices: Sequence[Device],
    hour: int,
    q_settings: Mapping[str, float] | None = None,
    load_scale: float = 1.0,
) -> InjectionSet:
    """Net injections for one hour: scaled normal loads plus device powers."""
    p_load, q_load = net.load_vectors()
    p = -p_load * load_scale
    q = -q_load * load_scale
    q_settings = q_settings or {}
    for dev in devices:
        pos = net.index_of(dev.bus)
        if isinstance(dev, PevLot):
            p[pos] -= dev.p_at(hour)
        else:
            p[pos] += dev.p_at(hour)
        q[pos] -= q_settings.get(dev.label, 0.0)
    return InjectionSet(p, q)


def partial_objective(net: Network, sol: PowerFlowSolution, scenario: Scenario) -> float:
    """The hour's dispatch score: a·Σ|v_ref − V| + b·P_Loss."""
    a, b, _ = scenario.weights
    return a * float(np.sum(np.abs(scenario.v_ref - sol.v_mag))) + b * sol.total_losses


@dataclass(frozen=True)
class DispatchResult:
    """One hour's dispatched state."""

    hour: int
    q_settings: dict[str, float]  # every device label, zeros when idle
    solution: PowerFlowSolution
    base_solution: PowerFlowSolution
    score: float
    base_score: float
    infeasible_devices: tuple[str, ...] = ()
    reverted: bool = False


def dispatch_q(
    net: Network,
    devices: Sequence[Device],
    hour: int,
    scenario: Scenario,
    load_scale: float = 1.0,
    ybus=None,
    v0: np.ndarray | None = None,
) -> DispatchResult:
    """Choose reactive setpoints for one hour under the scenario's mode.

    Raises :class:`NonConvergence` if even the undispatched power flow fails;
    trial failures inside the search are absorbed (the trial is discarded).
    """
    q: dict[str, float] = {dev.label: 0.0 for dev in devices}

    # Injections differ between trials only in device Q, so the P vector and
    # the scaled normal-load Q vector are fixed for the whole hour.
    p_load, q_load = net.load_vectors()
    p_inj = -p_load * load_scale
    q_base = -q_load * load_scale
    dev_pos = [(dev, net.index_of(dev.bus)) for dev in devices]
    for dev, pos in dev_pos:
        if isinstance(dev, PevLot):
            p_inj[pos] -= dev.p_at(hour)
        else:
            p_inj[pos] += dev.p_at(hour)

    def pf(settings: Mapping[str, float], warm: np.ndarray | None) -> PowerFlowSolution:
        q_inj = q_base.copy()
        for dev, pos in dev_pos:
            q_inj[pos] -= settings.get(dev.label, 0.0)
        inj = InjectionSet(p_inj, q_inj)
        return solve(net, inj, tol=scenario.pf_tol, v0=warm, ybus=ybus)

    base = pf(q, v0)
    base_score = partial_objective(net, base, scenario)

    participants = scenario.participating(devices)
    if not participants:
        return DispatchResult(hour, q, base, base, base_score, base_score)

    stages: list[list[Device]]
    if scenario.mode == "dgq+v2gq":
        stages = [[d for d in participants if isinstance(d, PvUnit)], participants]
    else:
        stages = [participants]

    current_sol = base
    current_score = base_score
    infeasible: list[str] = []

    # A device whose surroundings have not changed since its last search
    # would rerun an identical (deterministic) search, so only "dirty"
    # devices are searched; the clean set survives across stages.
    clean: set[str] = set()
    for stage in stages:
        if not stage:
            continue
        dirty = {dev.label for dev in stage} - clean
        for _ in range(MAX_SWEEPS):
            score_at_sweep_start = current_score
            for dev in stage:
                if dev.label not in dirty:
                    continue
                dirty.discard(dev.label)
                clean.add(dev.label)
                p_now = dev.p_at(hour)
                v_bus = float(current_sol.v_mag[net.index_of(dev.bus)])
                cap = q_capability(dev, p_now, v_bus)
                if not cap.feasible:
                    if dev.label not in infeasible:
                        infeasible.append(dev.label)
                    q[dev.label] = 0.0
                    continue
                if cap.width <= 1e-12:
                    q[dev.label] = cap.clamp(0.0) if cap.contains(0.0) else cap.q_min
                    continue

                warm = current_sol.v_complex

                def trial(qv: float, _dev=dev, _warm=warm) -> float:
                    trial_q = dict(q)
                    trial_q[_dev.label] = float(qv)
                    try:
                        sol = pf(trial_q, _warm)
                    except NonConvergence:
                        return _TRIAL_PENALTY
                    return partial_objective(net, sol, scenario)

                xatol = max(_SEARCH_MIN_XATOL, _SEARCH_REL_XATOL * cap.width)
                res = minimize_scalar(
                    trial,
                    bounds=(cap.q_min, cap.q_max),
                    method="bounded",
                    options={"xatol": xatol, "maxiter": _SEARCH_MAXITER},
                )
                q_candidate = cap.clamp(float(res.x))
                trial_q = dict(q)
                trial_q[dev.label] = q_candidate
                try:
                    sol = pf(trial_q, warm)
                except NonConvergence:
                    continue
                score = partial_objective(net, sol, scenario)
                if score < current_score:
                    q[dev.label] = q_candidate
                    current_sol = sol
                    current_score = score
                    dirty.update(d.label for d in stage if d.label != dev.label)
                    clean.intersection_update({dev.label})
            if not dirty or score_at_sweep_start - current_score < SWEEP_IMPROVEMENT_TOL:
                break

    current_sol, current_score, reverted = _recheck_capability(
        net, devices, participants, hour, scenario, q, current_sol, current_score,
        base, base_score, pf, infeasible,
    )
    return DispatchResult(
        hour, q, current_sol, base, current_score, base_score,
        tuple(infeasible), reverted,
    )


def _recheck_capability(
    net, devices, participants, hour, scenario, q, current_sol, current_score,
    base, base_score, pf, infeasible,
):
    """Clamp setpoints into the capability interval at the final voltages.

    The interval depends on the device's own bus voltage, which moved during
    the search, so the check iterates clamp-and-resolve until stable.  If the
    clamped state scores worse than the undispatched base, everything reverts
    to zero.
    """
    for _ in range(5):
        adjusted = False
        for dev in participants:
            v_bus = float(current_sol.v_mag[net.index_of(dev.bus)])
            cap = q_capability(dev, dev.p_at(hour), v_bus)
            if not cap.feasible:
                if q[dev.label] != 0.0:
                    q[dev.label] = 0.0
                    adjusted = True
                if dev.label not in infeasible:
                    infeasible.append(dev.label)
                continue
            if not cap.contains(q[dev.label], tol=CAPABILITY_RECHECK_TOL):
                q[dev.label] = cap.clamp(q[dev.label])
                adjusted = True
        if not adjusted:
            break
        current_sol = pf(q, current_sol.v_complex)
        current_score = partial_objective(net, current_sol, scenario)

    if current_score > base_score:
        for dev in participants:
            q[dev.label] = 0.0
        return base, base_score, True
    return current_sol, current_score, False
