"""Network data model and node admittance matrix.

Buses and branches are stored in per-unit on a single system base; unit
conversion happens only in the case-file layer.  A built ``Network`` is
immutable and safe to share between concurrent solver runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np

BusKind = Literal["slack", "load"]

DEFAULT_V_MIN = 0.95
DEFAULT_V_MAX = 1.05


class ValidationError(ValueError):
    """Structural problem in network data (bad reference, wrong topology, ...)."""


@dataclass(frozen=True)
class Bus:
    """One node of the feeder.

    Attributes:
        id: 1-based bus number as used in the source data.
        kind: "slack" for the substation bus, "load" otherwise.
        normal_load_p: active power of the normal (non-PEV) load, pu.
        normal_load_q: reactive power of the normal load, pu.
        v_min: lower voltage limit, pu.
        v_max: upper voltage limit, pu.
    """

    id: int
    kind: BusKind = "load"
    normal_load_p: float = 0.0
    normal_load_q: float = 0.0
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self) -> None:
        if self.kind not in ("slack", "load"):
            raise ValidationError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not self.v_min < self.v_max:
            raise ValidationError(
                f"bus {self.id}: v_min {self.v_min} must be below v_max {self.v_max}"
            )


@dataclass(frozen=True)
class Branch:
    """Series R+jX element between two buses.

    ``current_cap`` is the thermal ampacity in pu of the system current base.
    """

    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    current_cap: float = float("inf")

    def __post_init__(self) -> None:
        name = f"branch {self.from_bus}-{self.to_bus}"
        if self.from_bus == self.to_bus:
            raise ValidationError(f"{name}: self-loop")
        if self.resistance < 0.0:
            raise ValidationError(f"{name}: negative resistance {self.resistance}")
        if self.reactance <= 0.0:
            raise ValidationError(
                f"{name}: reactance must be positive, got {self.reactance}"
            )
        if not self.current_cap > 0.0:
            raise ValidationError(f"{name}: current_cap must be positive")

    @property
    def impedance(self) -> complex:
        return complex(self.resistance, self.reactance)


@dataclass(frozen=True)
class Network:
    """Validated feeder model: ordered buses, branches, and the pu base."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 10.0
    base_kv: float = 12.66
    radial: bool = True
    # id -> position lookup, filled in __post_init__
    _index: dict[int, int] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.base_mva <= 0 or self.base_kv <= 0:
            raise ValidationError("system base values must be positive")
        index: dict[int, int] = {}
        for pos, bus in enumerate(self.buses):
            if bus.id in index:
                raise ValidationError(f"duplicate bus id {bus.id}")
            index[bus.id] = pos
        object.__setattr__(self, "_index", index)

        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if len(slacks) != 1:
            raise ValidationError(
                f"exactly one slack bus required, found {len(slacks)}: {slacks}"
            )
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in index:
                    raise ValidationError(
                        f"branch {br.from_bus}-{br.to_bus} references "
                        f"nonexistent bus {end}"
                    )
        self._check_connected()
        if self.radial and len(self.branches) != len(self.buses) - 1:
            raise ValidationError(
                f"radial network needs {len(self.buses) - 1} branches, "
                f"found {len(self.branches)}"
            )

    def _check_connected(self) -> None:
        if not self.buses:
            raise ValidationError("network has no buses")
        adjacency: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            adjacency[br.from_bus].append(br.to_bus)
            adjacency[br.to_bus].append(br.from_bus)
        seen = {self.slack_id}
        stack = [self.slack_id]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        missing = sorted(set(adjacency) - seen)
        if missing:
            raise ValidationError(
                f"buses {missing} are not connected to the slack bus"
            )

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack_id(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def slack_index(self) -> int:
        return self._index[self.slack_id]

    def index_of(self, bus_id: int) -> int:
        """Position of a bus id in the internal ordering."""
        try:
            return self._index[bus_id]
        except KeyError:
            raise KeyError(f"no bus with id {bus_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.index_of(bus_id)]

    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    def load_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Normal-load P and Q per bus position, pu."""
        p = np.array([b.normal_load_p for b in self.buses], dtype=float)
        q = np.array([b.normal_load_q for b in self.buses], dtype=float)
        return p, q

    def voltage_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([b.v_min for b in self.buses], dtype=float)
        hi = np.array([b.v_max for b in self.buses], dtype=float)
        return lo, hi

    def with_loads(self, p: Iterable[float], q: Iterable[float]) -> "Network":
        """Copy of the network with replaced normal loads (same ordering)."""
        p = list(p)
        q = list(q)
        if len(p) != self.n_bus or len(q) != self.n_bus:
            raise ValueError("load vectors must match bus count")
        buses = tuple(
            replace(b, normal_load_p=pi, normal_load_q=qi)
            for b, pi, qi in zip(self.buses, p, q)
        )
        return Network(buses, self.branches, self.base_mva, self.base_kv, self.radial)

    # unit conversion helpers (system base)
    @property
    def z_base_ohm(self) -> float:
        return self.base_kv**2 / self.base_mva

    @property
    def i_base_a(self) -> float:
        # three-phase base current in amperes for a line-to-line kV base
        return self.base_mva * 1e3 / (np.sqrt(3.0) * self.base_kv)


class AdmittanceMatrix:
    """Dense bus admittance matrix with polar accessors.

    Entries follow the usual convention: off-diagonals are the negated series
    admittance of the connecting branch, diagonals the sum of incident branch
    admittances.  No shunt elements are modeled, so every row sums to zero.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("admittance matrix must be square")
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        """Complex matrix (read-only view)."""
        return self._values

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self._values)

    @property
    def angle(self) -> np.ndarray:
        return np.angle(self._values)

    @property
    def n(self) -> int:
        return self._values.shape[0]

    def __getitem__(self, key) -> complex:
        return self._values[key]

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self._values - self._values.T) <= tol))

    def row_sums(self) -> np.ndarray:
        return self._values.sum(axis=1)


def build_ybus(net: Network) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix from the branch list."""
    n = net.n_bus
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        i = net.index_of(br.from_bus)
        j = net.index_of(br.to_bus)
        y_series = 1.0 / br.impedance
        y[i, j] -= y_series
        y[j, i] -= y_series
        y[i, i] += y_series
        y[j, j] += y_series
    return AdmittanceMatrix(y)
