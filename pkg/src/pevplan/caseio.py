"""Case-file and profile-file input/output.

Two interchangeable on-disk forms are supported:

* ``grid`` — line-oriented text.  Sections ``[SYSTEM]``, ``[BUS]``,
  ``[BRANCH]``, ``[DEVICE]``; ``#`` starts a comment; each table section
  opens with a mandatory header line.  Columns:

  - ``[SYSTEM]``: ``key = value`` pairs (base_mva, base_kv, v_min, v_max,
    radial) rather than a table.
  - ``[BUS]``: ``id,kind,p_load_kw,q_load_kvar``
  - ``[BRANCH]``: ``from,to,r_ohm,x_ohm,i_cap_a``
  - ``[DEVICE]``: ``bus,type,s_rated_kva,x_coupling_pu,vc_max_pu,profile_id``
    with optional trailing ``n_pev,cost_per_pev`` for parking lots.

* ``json`` — the same content as one structured object, all quantities
  already per-unit, for programmatic use.

Loading converts engineering units to per-unit exactly once; saving solves
the conversion backwards so that save-then-load reproduces every float
bit for bit.

Profiles live in a separate CSV (``profile_id,h0..h23``) holding per-unit
(of device rating) values; ``bind_devices`` joins them with device rows.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .devices import (
    DEFAULT_COST_PER_PEV,
    DEFAULT_N_PEV,
    HOURS,
    Device,
    HourlyProfile,
    PevLot,
    PvUnit,
)
from .network import (
    DEFAULT_V_MAX,
    DEFAULT_V_MIN,
    Branch,
    Bus,
    Network,
    ValidationError,
)

_BUS_HEADER = ["id", "kind", "p_load_kw", "q_load_kvar"]
_BRANCH_HEADER = ["from", "to", "r_ohm", "x_ohm", "i_cap_a"]
_DEVICE_HEADER = ["bus", "type", "s_rated_kva", "x_coupling_pu", "vc_max_pu", "profile_id"]
_DEVICE_HEADER_LOT = _DEVICE_HEADER + ["n_pev", "cost_per_pev"]
_SYSTEM_KEYS = {"base_mva", "base_kv", "v_min", "v_max", "radial"}
_DEVICE_TYPES = ("pv", "pevlot")


class CaseParseError(ValueError):
    """A case or profile file failed to parse; message carries file and line."""


@dataclass(frozen=True)
class DeviceSpec:
    """One device table row, engineering units, not yet bound to a profile."""

    bus: int
    type: str
    s_rated_kva: float
    x_coupling_pu: float
    vc_max_pu: float
    profile_id: str
    n_pev: int = DEFAULT_N_PEV
    cost_per_pev: float = DEFAULT_COST_PER_PEV

    def __post_init__(self) -> None:
        if self.type not in _DEVICE_TYPES:
            raise ValidationError(
                f"device at bus {self.bus}: unknown type {self.type!r}"
            )


@dataclass(frozen=True)
class Case:
    """A parsed case: the bare network plus its device table."""

    network: Network
    devices: tuple[DeviceSpec, ...]


def _exact_engineering(pu: float, scale: float) -> float:
    """Engineering-unit value ``w`` whose quotient ``w / scale`` equals ``pu``.

    ``pu * scale`` rounds, so dividing it back can land one ulp off; walk the
    neighbouring floats until the division reproduces ``pu`` exactly.
    """
    if pu == 0.0 or not math.isfinite(pu):
        return pu * scale
    w = pu * scale
    if w / scale == pu:
        return w
    lo = hi = w
    for _ in range(64):
        lo = math.nextafter(lo, -math.inf)
        if lo / scale == pu:
            return lo
        hi = math.nextafter(hi, math.inf)
        if hi / scale == pu:
            return hi
    raise ValueError(f"no engineering-unit encoding of {pu!r} at scale {scale!r}")


def _fmt(x: float) -> str:
    return repr(float(x))


class _Scales:
    """Per-unit conversion divisors for one (base_mva, base_kv) pair."""

    def __init__(self, base_mva: float, base_kv: float) -> None:
        self.power_kw = 1000.0 * base_mva
        self.impedance_ohm = base_kv**2 / base_mva
        self.current_a = base_mva * 1e3 / (math.sqrt(3.0) * base_kv)


# ---------------------------------------------------------------------------
# text ("grid") format


def _parse_bool(token: str, where: str) -> bool:
    if token.lower() in ("true", "1", "yes"):
        return True
    if token.lower() in ("false", "0", "no"):
        return False
    raise CaseParseError(f"{where}: expected boolean, got {token!r}")


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise CaseParseError(f"{where}: expected number, got {token!r}") from None


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise CaseParseError(f"{where}: expected integer, got {token!r}") from None


def _read_grid_text(text: str, source: str) -> Case:
    system: dict[str, str] = {}
    bus_rows: list[tuple[list[str], str]] = []
    branch_rows: list[tuple[list[str], str]] = []
    device_rows: list[tuple[list[str], str]] = []
    device_has_lot_columns = False

    section: str | None = None
    header_done = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().upper()
            if section not in ("SYSTEM", "BUS", "BRANCH", "DEVICE"):
                raise CaseParseError(f"{where}: unknown section [{section}]")
            header_done = section == "SYSTEM"
            continue
        if section is None:
            raise CaseParseError(f"{where}: content before any section header")

        if section == "SYSTEM":
            if "=" not in line:
                raise CaseParseError(f"{where}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key not in _SYSTEM_KEYS:
                raise CaseParseError(f"{where}: unknown system key {key!r}")
            system[key] = value.strip()
            continue

        cells = [c.strip() for c in line.split(",")]
        if not header_done:
            expected = {
                "BUS": [_BUS_HEADER],
                "BRANCH": [_BRANCH_HEADER],
                "DEVICE": [_DEVICE_HEADER, _DEVICE_HEADER_LOT],
            }[section]
            lowered = [c.lower() for c in cells]
            if lowered not in expected:
                raise CaseParseError(
                    f"{where}: bad [{section}] header {cells!r}; "
                    f"expected {' or '.join(','.join(h) for h in expected)}"
                )
            device_has_lot_columns = section == "DEVICE" and lowered == _DEVICE_HEADER_LOT
            header_done = True
            continue

        target = {"BUS": bus_rows, "BRANCH": branch_rows, "DEVICE": device_rows}[section]
        target.append((cells, where))

    base_mva = _parse_float(system.get("base_mva", "10.0"), f"{source}:[SYSTEM] base_mva")
    base_kv = _parse_float(system.get("base_kv", "12.66"), f"{source}:[SYSTEM] base_kv")
    v_min = _parse_float(system.get("v_min", str(DEFAULT_V_MIN)), f"{source}:[SYSTEM] v_min")
    v_max = _parse_float(system.get("v_max", str(DEFAULT_V_MAX)), f"{source}:[SYSTEM] v_max")
    radial = _parse_bool(system.get("radial", "true"), f"{source}:[SYSTEM] radial")
    scales = _Scales(base_mva, base_kv)

    buses = []
    for cells, where in bus_rows:
        if len(cells) != len(_BUS_HEADER):
            raise CaseParseError(f"{where}: expected {len(_BUS_HEADER)} bus columns")
        buses.append(
            Bus(
                id=_parse_int(cells[0], where),
                kind=cells[1],
                normal_load_p=_parse_float(cells[2], where) / scales.power_kw,
                normal_load_q=_parse_float(cells[3], where) / scales.power_kw,
                v_min=v_min,
                v_max=v_max,
            )
        )

    branches = []
    for cells, where in branch_rows:
        if len(cells) != len(_BRANCH_HEADER):
            raise CaseParseError(f"{where}: expected {len(_BRANCH_HEADER)} branch columns")
        branches.append(
            Branch(
                from_bus=_parse_int(cells[0], where),
                to_bus=_parse_int(cells[1], where),
                resistance=_parse_float(cells[2], where) / scales.impedance_ohm,
                reactance=_parse_float(cells[3], where) / scales.impedance_ohm,
                current_cap=_parse_float(cells[4], where) / scales.current_a,
            )
        )

    devices = []
    n_cols = len(_DEVICE_HEADER_LOT if device_has_lot_columns else _DEVICE_HEADER)
    for cells, where in device_rows:
        if len(cells) != n_cols:
            raise CaseParseError(f"{where}: expected {n_cols} device columns")
        extra = {}
        if device_has_lot_columns:
            extra = {
                "n_pev": _parse_int(cells[6], where),
                "cost_per_pev": _parse_float(cells[7], where),
            }
        devices.append(
            DeviceSpec(
                bus=_parse_int(cells[0], where),
                type=cells[1],
                s_rated_kva=_parse_float(cells[2], where),
                x_coupling_pu=_parse_float(cells[3], where),
                vc_max_pu=_parse_float(cells[4], where),
                profile_id=cells[5],
                **extra,
            )
        )

    net = Network(buses=buses, branches=branches, base_mva=base_mva, base_kv=base_kv, radial=radial)
    for spec in devices:
        if spec.bus not in net.bus_ids():
            raise ValidationError(f"device references nonexistent bus {spec.bus}")
    return Case(network=net, devices=tuple(devices))


def _write_grid_text(case: Case) -> str:
    net = case.network
    scales = _Scales(net.base_mva, net.base_kv)
    lo, hi = net.voltage_bounds()
    out = ["[SYSTEM]"]
    out.append(f"base_mva = {_fmt(net.base_mva)}")
    out.append(f"base_kv = {_fmt(net.base_kv)}")
    out.append(f"v_min = {_fmt(lo.min())}")
    out.append(f"v_max = {_fmt(hi.max())}")
    out.append(f"radial = {'true' if net.radial else 'false'}")

    out.append("")
    out.append("[BUS]")
    out.append(",".join(_BUS_HEADER))
    for b in net.buses:
        p_kw = _exact_engineering(b.normal_load_p, scales.power_kw)
        q_kvar = _exact_engineering(b.normal_load_q, scales.power_kw)
        out.append(f"{b.id},{b.kind},{_fmt(p_kw)},{_fmt(q_kvar)}")

    out.append("")
    out.append("[BRANCH]")
    out.append(",".join(_BRANCH_HEADER))
    for br in net.branches:
        r = _exact_engineering(br.resistance, scales.impedance_ohm)
        x = _exact_engineering(br.reactance, scales.impedance_ohm)
        cap = _exact_engineering(br.current_cap, scales.current_a)
        out.append(f"{br.from_bus},{br.to_bus},{_fmt(r)},{_fmt(x)},{_fmt(cap)}")

    if case.devices:
        out.append("")
        out.append("[DEVICE]")
        has_lots = any(d.type == "pevlot" for d in case.devices)
        out.append(",".join(_DEVICE_HEADER_LOT if has_lots else _DEVICE_HEADER))
        for d in case.devices:
            row = [
                str(d.bus),
                d.type,
                _fmt(d.s_rated_kva),
                _fmt(d.x_coupling_pu),
                _fmt(d.vc_max_pu),
                d.profile_id,
            ]
            if has_lots:
                row += [str(d.n_pev), _fmt(d.cost_per_pev)]
            out.append(",".join(row))
    out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# structured-object ("json") format — everything already per-unit


def case_to_dict(case: Case) -> dict:
    net = case.network
    return {
        "system": {
            "base_mva": net.base_mva,
            "base_kv": net.base_kv,
            "radial": net.radial,
        },
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "p_load": b.normal_load_p,
                "q_load": b.normal_load_q,
                "v_min": b.v_min,
                "v_max": b.v_max,
            }
            for b in net.buses
        ],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "r": br.resistance,
                "x": br.reactance,
                "i_cap": br.current_cap,
            }
            for br in net.branches
        ],
        "devices": [
            {
                "bus": d.bus,
                "type": d.type,
                "s_rated_kva": d.s_rated_kva,
                "x_coupling_pu": d.x_coupling_pu,
                "vc_max_pu": d.vc_max_pu,
                "profile_id": d.profile_id,
                "n_pev": d.n_pev,
                "cost_per_pev": d.cost_per_pev,
            }
            for d in case.devices
        ],
    }


def case_from_dict(data: dict) -> Case:
    try:
        sysd = data["system"]
        buses = [
            Bus(
                id=b["id"],
                kind=b["kind"],
                normal_load_p=b["p_load"],
                normal_load_q=b["q_load"],
                v_min=b.get("v_min", DEFAULT_V_MIN),
                v_max=b.get("v_max", DEFAULT_V_MAX),
            )
            for b in data["buses"]
        ]
        branches = [
            Branch(
                from_bus=br["from"],
                to_bus=br["to"],
                resistance=br["r"],
                reactance=br["x"],
                current_cap=br.get("i_cap", math.inf),
            )
            for br in data["branches"]
        ]
        devices = tuple(
            DeviceSpec(
                bus=d["bus"],
                type=d["type"],
                s_rated_kva=d["s_rated_kva"],
                x_coupling_pu=d.get("x_coupling_pu", 0.05),
                vc_max_pu=d.get("vc_max_pu", 1.1),
                profile_id=d["profile_id"],
                n_pev=d.get("n_pev", DEFAULT_N_PEV),
                cost_per_pev=d.get("cost_per_pev", DEFAULT_COST_PER_PEV),
            )
            for d in data.get("devices", [])
        )
    except (KeyError, TypeError) as exc:
        raise CaseParseError(f"malformed case object: {exc}") from exc
    net = Network(
        buses=buses,
        branches=branches,
        base_mva=sysd.get("base_mva", 10.0),
        base_kv=sysd.get("base_kv", 12.66),
        radial=sysd.get("radial", True),
    )
    return Case(network=net, devices=devices)


# ---------------------------------------------------------------------------
# public entry points


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("grid", "json"):
            raise CaseParseError(f"unknown case format {fmt!r}")
        return fmt
    return "json" if path.suffix.lower() == ".json" else "grid"


def load_case(path: str | Path, fmt: str | None = None) -> Case:
    """Parse a case file into a validated :class:`Case`.

    ``fmt`` is ``"grid"`` or ``"json"``; by default it is inferred from the
    file suffix (``.json`` → json, anything else → grid).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"case file not found: {path}")
    text = path.read_text()
    if _infer_format(path, fmt) == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CaseParseError(f"{path}: invalid JSON: {exc}") from exc
        return case_from_dict(data)
    return _read_grid_text(text, str(path))


def save_case(case: Case, path: str | Path, fmt: str | None = None) -> None:
    """Write a case so that :func:`load_case` reproduces it exactly."""
    path = Path(path)
    if _infer_format(path, fmt) == "json":
        path.write_text(json.dumps(case_to_dict(case), indent=2) + "\n")
    else:
        path.write_text(_write_grid_text(case))


def load_profiles(path: str | Path) -> dict[str, HourlyProfile]:
    """Read a ``profile_id,h0..h23`` CSV into profiles keyed by id."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"profile file not found: {path}")
    expected = ["profile_id"] + [f"h{i}" for i in range(HOURS)]
    profiles: dict[str, HourlyProfile] = {}
    with path.open(newline="") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise CaseParseError(f"{path}: empty profile file") from None
        if [h.strip().lower() for h in header] != expected:
            raise CaseParseError(f"{path}: bad profile header; expected {','.join(expected)}")
        for lineno, row in enumerate(rows, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != HOURS + 1:
                raise CaseParseError(f"{path}:{lineno}: expected {HOURS + 1} columns")
            pid = row[0].strip()
            if pid in profiles:
                raise CaseParseError(f"{path}:{lineno}: duplicate profile id {pid!r}")
            values = [_parse_float(tok, f"{path}:{lineno}") for tok in row[1:]]
            try:
                profiles[pid] = HourlyProfile(pid, tuple(values))
            except ValueError as exc:
                raise CaseParseError(f"{path}:{lineno}: {exc}") from exc
    return profiles


def save_profiles(profiles: dict[str, HourlyProfile], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["profile_id"] + [f"h{i}" for i in range(HOURS)])
        for pid in sorted(profiles):
            writer.writerow([pid] + [_fmt(v) for v in profiles[pid].values])


def bind_devices(
    case: Case, profiles: dict[str, HourlyProfile]
) -> list[Device]:
    """Join device rows with their profiles and convert ratings to per-unit.

    Profile values are per-unit of the device rating; the bound device
    carries absolute per-unit (system base) hourly powers.
    """
    net = case.network
    devices: list[Device] = []
    scales = _Scales(net.base_mva, net.base_kv)
    for spec in case.devices:
        profile = profiles.get(spec.profile_id)
        if profile is None:
            raise CaseParseError(
                f"device at bus {spec.bus}: profile {spec.profile_id!r} not found"
            )
        s_pu = spec.s_rated_kva / scales.power_kw
        hourly = profile.scaled(s_pu)
        if spec.type == "pv":
            devices.append(
                PvUnit(
                    bus=spec.bus,
                    s_rated=s_pu,
                    p_profile=hourly,
                    x_coupling=spec.x_coupling_pu,
                    vc_max=spec.vc_max_pu,
                )
            )
        else:
            devices.append(
                PevLot(
                    bus=spec.bus,
                    s_rated=s_pu,
                    charge_profile=hourly,
                    x_coupling=spec.x_coupling_pu,
                    vc_max=spec.vc_max_pu,
                    n_pev=spec.n_pev,
                    cost_per_pev=spec.cost_per_pev,
                )
            )
    return devices


def builtin_path(name: str) -> Path:
    """Filesystem path of a bundled data file (case or profile CSV)."""
    candidate = resources.files("pevplan.data").joinpath(name)
    path = Path(str(candidate))
    if not path.exists():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return path


def load_builtin(case_name: str = "bus33.grid", profile_name: str = "profiles33.csv"):
    """Bundled case and profiles: ``(Case, profiles dict)``."""
    case = load_case(builtin_path(case_name))
    profiles = load_profiles(builtin_path(profile_name))
    return case, profiles
