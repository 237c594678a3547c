"""Day-long evaluation of the weighted planning objective.

The score of a parking-lot placement over 24 hours is

    scalar = a · Σ_t Σ_i |v_ref − V(i,t)|  +  b · Σ_t P_Loss(t)
           + c · Σ_lots n_pev · cost_per_pev

with voltage-band, ampacity, and converter-capability checks folded into a
separate feasibility flag and violation magnitude so that constraint
handling never distorts the reported objective values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .devices import Device, HourlyProfile, PevLot, capability_violation
from .dispatch import DispatchResult, Scenario, dispatch_q
from .network import Network, build_ybus
from .powerflow import NonConvergence, check_limits

HOURS = 24
_DIVERGENT_HOUR_PENALTY = 1e3


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """The three objective terms, their weighted sum, and constraint status."""

    v_dev: float
    loss: float
    cost: float
    scalar: float
    feasible: bool
    violation_penalty: float = 0.0

    @property
    def vector(self) -> tuple[float, float, float]:
        return (self.v_dev, self.loss, self.cost)


def combine(v_dev: float, loss: float, cost: float,
            weights: Sequence[float]) -> float:
    """The scalar objective; exported so reports can recompute it."""
    a, b, c = weights
    return a * v_dev + b * loss + c * cost


@dataclass(frozen=True)
class DayResult:
    """Breakdown plus the per-hour dispatch trail behind it."""

    lot_buses: tuple[int, ...]
    breakdown: ObjectiveBreakdown
    hours: tuple[DispatchResult, ...]

    @property
    def min_voltage(self) -> float:
        return min(h.solution.v_min for h in self.hours)


def place_lots(devices: Sequence[Device], lot_buses: Sequence[int],
               net: Network) -> list[Device]:
    """Relocate the PEV lots onto ``lot_buses`` (ascending), PVs untouched."""
    buses = sorted(int(b) for b in lot_buses)
    if len(set(buses)) != len(buses):
        raise ValueError(f"duplicate lot buses {buses}")
    lots = [d for d in devices if isinstance(d, PevLot)]
    if len(buses) != len(lots):
        raise ValueError(f"{len(lots)} lots but {len(buses)} lot buses given")
    for b in buses:
        if b == net.slack_id:
            raise ValueError("cannot place a lot at the slack bus")
        if b not in net.bus_ids():
            raise ValueError(f"lot bus {b} not in network")
    it = iter(buses)
    return [d.moved_to(next(it)) if isinstance(d, PevLot) else d for d in devices]


class DayEvaluator:
    """Evaluates lot placements over one 24-hour day, memoized per placement.

    The network, PV fleet, lot templates, profiles, and scenario are fixed at
    construction; :meth:`evaluate` varies only the lot buses, so repeated
    genomes during a search cost one dictionary lookup.
    """

    def __init__(
        self,
        net: Network,
        devices: Sequence[Device],
        profiles: dict[str, HourlyProfile] | None,
        scenario: Scenario,
    ) -> None:
        self.net = net
        self.devices = list(devices)
        self.scenario = scenario
        self._ybus = build_ybus(net)
        if scenario.load_profile_id is not None:
            if not profiles or scenario.load_profile_id not in profiles:
                raise ValueError(
                    f"load profile {scenario.load_profile_id!r} not found"
                )
            self._load_shape = profiles[scenario.load_profile_id].values
        else:
            self._load_shape = (1.0,) * HOURS
        self._cache: dict[tuple[int, ...], DayResult] = {}

    @property
    def lot_count(self) -> int:
        return sum(isinstance(d, PevLot) for d in self.devices)

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def evaluate(self, lot_buses: Sequence[int] | None = None) -> DayResult:
        if lot_buses is None:
            key = tuple(sorted(d.bus for d in self.devices if isinstance(d, PevLot)))
        else:
            key = tuple(sorted(int(b) for b in lot_buses))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        devices = place_lots(self.devices, key, self.net) if key else list(self.devices)
        result = self._evaluate_day(key, devices)
        self._cache[key] = result
        return result

    def _evaluate_day(self, key: tuple[int, ...], devices: list[Device]) -> DayResult:
        net = self.net
        scenario = self.scenario
        v_dev = 0.0
        loss = 0.0
        violation = 0.0
        feasible = True
        hours: list[DispatchResult] = []
        warm = None

        for hour in range(HOURS):
            scale = self._load_shape[hour]
            try:
                result = dispatch_q(
                    net, devices, hour, scenario,
                    load_scale=scale, ybus=self._ybus, v0=warm,
                )
            except NonConvergence:
                try:
                    result = dispatch_q(
                        net, devices, hour, scenario,
                        load_scale=scale, ybus=self._ybus, v0=None,
                    )
                except NonConvergence:
                    feasible = False
                    violation += _DIVERGENT_HOUR_PENALTY
                    warm = None
                    continue

            sol = result.solution
            v_dev += float(np.sum(np.abs(scenario.v_ref - sol.v_mag)))
            loss += sol.total_losses
            hours.append(result)
            warm = result.base_solution.v_complex

            report = check_limits(net, sol)
            for vv in report.voltage_violations:
                feasible = False
                violation += abs(vv.v - vv.bound)
            for tv in report.thermal_violations:
                feasible = False
                violation += tv.i - tv.i_cap
            for dev in devices:
                q = result.q_settings.get(dev.label, 0.0)
                v_bus = float(sol.v_mag[net.index_of(dev.bus)])
                excess = capability_violation(dev, dev.p_at(hour), q, v_bus)
                if excess > 1e-9:
                    feasible = False
                    violation += excess

        cost = sum(d.n_pev * d.cost_per_pev for d in devices if isinstance(d, PevLot))
        scalar = combine(v_dev, loss, cost, scenario.weights)
        breakdown = ObjectiveBreakdown(
            v_dev=v_dev, loss=loss, cost=cost, scalar=scalar,
            feasible=feasible, violation_penalty=violation,
        )
        return DayResult(lot_buses=key, breakdown=breakdown, hours=tuple(hours))


def evaluate_objective(
    net: Network,
    lot_buses: Sequence[int] | None,
    devices: Sequence[Device],
    profiles: dict[str, HourlyProfile] | None,
    scenario: Scenario,
) -> ObjectiveBreakdown:
    """One-shot evaluation of a placement (see :class:`DayEvaluator`)."""
    return DayEvaluator(net, devices, profiles, scenario).evaluate(lot_buses).breakdown
