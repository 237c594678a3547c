"""Converter-coupled devices: PV units and PEV parking lots.

Both device types share the same reactive-capability model: the apparent
power rating caps P² + Q², and the dc-link voltage together with the
coupling reactance caps the shifted circle (Q + V²/X)² + P².  Reactive
power is signed load-style: positive Q means the device consumes vars,
negative Q means it feeds vars into the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

HOURS = 24

# Placeholder converter parameters used when a case file leaves them out.
DEFAULT_X_COUPLING = 0.05
DEFAULT_VC_MAX = 1.1
DEFAULT_N_PEV = 50
DEFAULT_COST_PER_PEV = 1.0

PROFILE_SHAPES = ("pv-bell", "pev-evening-peak", "load-double-peak", "flat")


@dataclass(frozen=True)
class HourlyProfile:
    """24 hourly per-unit scalars with an id for case-file linkage."""

    profile_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if len(values) != HOURS:
            raise ValueError(
                f"profile {self.profile_id!r}: expected {HOURS} values, "
                f"got {len(values)}"
            )
        if not all(math.isfinite(v) and v >= 0.0 for v in values):
            raise ValueError(f"profile {self.profile_id!r}: values must be finite and >= 0")
        object.__setattr__(self, "values", values)

    def __getitem__(self, hour: int) -> float:
        return self.values[hour]

    def scaled(self, factor: float) -> tuple[float, ...]:
        return tuple(v * factor for v in self.values)


@dataclass(frozen=True)
class PvUnit:
    """Grid-tied PV inverter with an hourly active-power output profile."""

    bus: int
    s_rated: float
    p_profile: tuple[float, ...]
    x_coupling: float = DEFAULT_X_COUPLING
    vc_max: float = DEFAULT_VC_MAX
    apply_dc_link: bool = True

    def __post_init__(self) -> None:
        _check_device_profile(self, self.p_profile, "p_profile")

    @property
    def label(self) -> str:
        return f"pv@{self.bus}"

    def p_at(self, hour: int) -> float:
        return self.p_profile[hour]


@dataclass(frozen=True)
class PevLot:
    """Aggregated PEV parking lot behind one converter.

    Charging demand is inelastic: ``charge_profile`` is served in full and
    only the leftover converter capacity is available for reactive support.
    """

    bus: int
    s_rated: float
    charge_profile: tuple[float, ...]
    x_coupling: float = DEFAULT_X_COUPLING
    vc_max: float = DEFAULT_VC_MAX
    n_pev: int = DEFAULT_N_PEV
    cost_per_pev: float = DEFAULT_COST_PER_PEV
    apply_dc_link: bool = True

    def __post_init__(self) -> None:
        _check_device_profile(self, self.charge_profile, "charge_profile")
        if self.n_pev <= 0:
            raise ValueError(f"lot at bus {self.bus}: n_pev must be positive")
        if self.cost_per_pev <= 0:
            raise ValueError(f"lot at bus {self.bus}: cost_per_pev must be positive")

    @property
    def label(self) -> str:
        return f"lot@{self.bus}"

    def p_at(self, hour: int) -> float:
        return self.charge_profile[hour]

    def moved_to(self, bus: int) -> "PevLot":
        """Same lot placed at another bus (used by the placement search)."""
        return replace(self, bus=bus)


Device = Union[PvUnit, PevLot]


def _check_device_profile(dev, values: Sequence[float], name: str) -> None:
    values = tuple(float(v) for v in values)
    if len(values) != HOURS:
        raise ValueError(f"device at bus {dev.bus}: {name} needs {HOURS} values")
    if dev.s_rated <= 0:
        raise ValueError(f"device at bus {dev.bus}: s_rated must be positive")
    if dev.x_coupling <= 0 or dev.vc_max <= 0:
        raise ValueError(f"device at bus {dev.bus}: converter parameters must be positive")
    bad = [h for h, v in enumerate(values) if not 0.0 <= v <= dev.s_rated + 1e-12]
    if bad:
        raise ValueError(
            f"device at bus {dev.bus}: {name} outside [0, s_rated] at hours {bad}"
        )
    object.__setattr__(dev, name, values)


@dataclass(frozen=True)
class QCapability:
    """Feasible reactive-power interval of a converter at one operating point.

    ``feasible`` is False when the dc-link circle admits no Q at all for the
    given active power and bus voltage; that case is distinct from the
    degenerate-but-valid interval [0, 0] at P = S.
    """

    q_min: float
    q_max: float
    feasible: bool = True
    rating_bound: float = 0.0
    dc_link_bound: float = float("inf")

    @property
    def width(self) -> float:
        return self.q_max - self.q_min if self.feasible else 0.0

    def clamp(self, q: float) -> float:
        if not self.feasible:
            raise ValueError("cannot clamp into an infeasible capability interval")
        return min(max(q, self.q_min), self.q_max)

    def contains(self, q: float, tol: float = 0.0) -> bool:
        return self.feasible and self.q_min - tol <= q <= self.q_max + tol


def q_capability(dev: Device, p_now: float, v_bus: float) -> QCapability:
    """Reactive limits of a device converter at active power ``p_now``.

    Intersects the rating circle Q² <= S² − P² with the dc-link circle
    (Q + V²/X)² <= (Vc·V/X)² − P².  The result is the exact interval; an
    empty intersection is reported through ``feasible=False``.
    """
    if v_bus <= 0:
        raise ValueError("bus voltage must be positive")
    if not -1e-12 <= p_now <= dev.s_rated + 1e-12:
        raise ValueError(
            f"{dev.label}: active power {p_now} outside [0, {dev.s_rated}]"
        )
    p_now = min(max(p_now, 0.0), dev.s_rated)

    rating = math.sqrt(max(dev.s_rated**2 - p_now**2, 0.0))
    q_min, q_max = -rating, rating
    dc_upper = float("inf")
    if dev.apply_dc_link:
        center = v_bus**2 / dev.x_coupling
        radius_sq = (dev.vc_max * v_bus / dev.x_coupling) ** 2 - p_now**2
        if radius_sq < 0.0:
            return QCapability(0.0, 0.0, feasible=False, rating_bound=rating)
        radius = math.sqrt(radius_sq)
        dc_upper = -center + radius
        q_max = min(q_max, dc_upper)
        q_min = max(q_min, -center - radius)
    if q_min > q_max:
        return QCapability(
            0.0, 0.0, feasible=False, rating_bound=rating, dc_link_bound=dc_upper
        )
    return QCapability(q_min, q_max, rating_bound=rating, dc_link_bound=dc_upper)


def capability_violation(dev: Device, p_now: float, q: float, v_bus: float) -> float:
    """Largest constraint overshoot of (p_now, q) at voltage ``v_bus``; 0 if inside."""
    over_rating = p_now**2 + q**2 - dev.s_rated**2
    worst = over_rating
    if dev.apply_dc_link:
        center = v_bus**2 / dev.x_coupling
        lhs = (q + center) ** 2 + p_now**2
        rhs = (dev.vc_max * v_bus / dev.x_coupling) ** 2
        worst = max(worst, lhs - rhs)
    return max(worst, 0.0)


def compose_load(
    normal_p: float,
    normal_q: float,
    devices: Iterable[Device],
    hour: int,
    q_settings: Mapping[str, float] | None = None,
) -> tuple[float, float]:
    """Total (P, Q) load at a bus: normal load plus device contributions.

    PEV charging adds to P, PV generation subtracts from it, and dispatched
    device Q adds with the load-style sign (positive = consumption).
    """
    q_settings = q_settings or {}
    p_total = normal_p
    q_total = normal_q
    for dev in devices:
        if isinstance(dev, PevLot):
            p_total += dev.p_at(hour)
        else:
            p_total -= dev.p_at(hour)
        q_total += q_settings.get(dev.label, 0.0)
    return p_total, q_total


# Hour-by-hour templates for the synthetic profile shapes, unit peak.
_PV_BELL = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    0.06, 0.21, 0.45, 0.66, 0.82, 0.94,
    1.0, 0.98, 0.88, 0.73, 0.53, 0.31,
    0.12, 0.0, 0.0, 0.0, 0.0, 0.0,
)
_PEV_EVENING = (
    0.16, 0.10, 0.08, 0.06, 0.06, 0.08,
    0.20, 0.36, 0.44, 0.36, 0.28, 0.24,
    0.24, 0.24, 0.28, 0.36, 0.52, 0.76,
    0.92, 1.0, 0.92, 0.68, 0.44, 0.24,
)
_LOAD_DOUBLE = (
    0.68, 0.65, 0.61, 0.61, 0.65, 0.71,
    0.81, 0.90, 0.97, 0.94, 0.90, 0.87,
    0.84, 0.81, 0.77, 0.77, 0.81, 0.87,
    0.94, 1.0, 0.97, 0.90, 0.81, 0.73,
)


def synth_profile(shape: str, seed: int = 0, level: float = 1.0) -> HourlyProfile:
    """Deterministic synthetic 24-hour profile for a named shape.

    ``level`` scales the whole profile (for "flat" it is the constant value).
    The same (shape, seed, level) always yields the same profile; seeds vary
    the profile by a small multiplicative jitter that preserves zero hours.
    """
    if shape == "flat":
        base = np.full(HOURS, 1.0)
    elif shape == "pv-bell":
        base = np.array(_PV_BELL)
    elif shape == "pev-evening-peak":
        base = np.array(_PEV_EVENING)
    elif shape == "load-double-peak":
        base = np.array(_LOAD_DOUBLE)
    else:
        raise ValueError(f"unknown profile shape {shape!r}, expected one of {PROFILE_SHAPES}")

    values = base * level
    if seed != 0:
        rng = np.random.default_rng(seed)
        jitter = 1.0 + 0.05 * rng.standard_normal(HOURS)
        values = np.clip(values * jitter, 0.0, None)
    return HourlyProfile(f"{shape}-s{seed}", tuple(values))


def synth_profiles(seed: int = 0, level: float = 1.0) -> dict[str, HourlyProfile]:
    """One profile per standard shape, keyed by shape tag."""
    return {shape: synth_profile(shape, seed, level) for shape in PROFILE_SHAPES}
