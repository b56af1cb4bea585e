"""Radial feeder model: parsing, validation and per-unit normalisation.

Feeder files are plain CSV split into ``[section]`` blocks::

    [bases]            v_base_kv,<kV>  /  s_base_mva,<MVA>
    [root]             <bus>
    [lines]            from,to,r_ohm,x_ohm
    [loads]            bus,peak_mva[,n_exp]
    [shunt_caps]       bus,mvar
    [inverters]        bus,s_rated_mva[,c_s,c_v,c_r]
    [pv]               bus,capacity_mw
    [voltage_limits]   bus|*,v_min,v_max

Lines starting with ``#`` are comments.  Every bus mentioned anywhere is part
of the model; buses without a load row have zero demand.
"""
from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

DEFAULT_V_MIN = 0.97
DEFAULT_V_MAX = 1.03
DEFAULT_LOAD_EXPONENT = 1.0
DEFAULT_LOSS_COEFFS = (0.01, 0.01, 0.01)

BUNDLED_FEEDER = "sce56.csv"


class FeederError(ValueError):
    """Raised for malformed or non-radial feeder descriptions."""


@dataclass(frozen=True)
class Bases:
    v_base: float  # V
    s_base: float  # VA

    def __post_init__(self):
        if not (self.v_base > 0 and self.s_base > 0):
            raise FeederError(f"bases must be positive, got {self.v_base}, {self.s_base}")

    @property
    def z_base(self) -> float:
        return self.v_base**2 / self.s_base


@dataclass(frozen=True)
class InverterSpec:
    """Inverter nameplate and loss model.

    ``loss_coeffs`` are (c_s, c_v, c_r) normalised to the rating, so the real
    power loss in per-unit is ``S*(c_s + c_v*(s/S) + c_r*(s/S)**2)`` for
    apparent output ``s`` and rating ``S``.  ``p_capacity`` is the nameplate of
    the PV array behind the inverter (defaults to the inverter rating).
    """

    s_rated: float
    loss_coeffs: tuple[float, float, float] = DEFAULT_LOSS_COEFFS
    p_capacity: float | None = None

    def __post_init__(self):
        if not self.s_rated > 0:
            raise FeederError("inverter rating must be positive")
        if len(self.loss_coeffs) != 3 or min(self.loss_coeffs) < 0:
            raise FeederError(f"bad inverter loss coefficients {self.loss_coeffs}")
        if self.p_capacity is not None and not 0 < self.p_capacity <= self.s_rated:
            raise FeederError("PV capacity must lie in (0, s_rated]")

    @property
    def pv_capacity(self) -> float:
        return self.s_rated if self.p_capacity is None else self.p_capacity

    def absolute_coeffs(self) -> tuple[float, float, float]:
        """Loss coefficients in per-unit: constant, per unit s, per unit s**2."""
        c_s, c_v, c_r = self.loss_coeffs
        return c_s * self.s_rated, c_v, c_r / self.s_rated

    def var_limit(self, p_g: float) -> float:
        """Largest |q| available at real output ``p_g``."""
        if p_g > self.s_rated * (1 + 1e-12):
            raise FeederError(f"real output {p_g} exceeds inverter rating {self.s_rated}")
        return float(np.sqrt(max(self.s_rated**2 - p_g**2, 0.0)))


@dataclass(frozen=True)
class Bus:
    id: int
    peak_load: float = 0.0  # peak apparent power, pu
    load_exponent: float = DEFAULT_LOAD_EXPONENT
    shunt_cap: float = 0.0  # var rating at nu = 1, pu
    inverter: InverterSpec | None = None
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self):
        if not 0 <= self.load_exponent <= 2:
            raise FeederError(f"bus {self.id}: load exponent must be in [0, 2]")
        if not 0 < self.v_min < self.v_max:
            raise FeederError(f"bus {self.id}: need 0 < v_min < v_max")
        if self.peak_load < 0 or self.shunt_cap < 0:
            raise FeederError(f"bus {self.id}: negative load or capacitor rating")

    def load_at(self, scale: float, power_factor: float) -> complex:
        s = self.peak_load * scale
        return complex(s * power_factor, s * np.sqrt(1.0 - power_factor**2))


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float

    def __post_init__(self):
        if self.r < 0:
            raise FeederError(f"line {self.from_bus}-{self.to_bus}: negative resistance")


def validate_radial(buses, lines: Sequence[Line] | None = None, root: int | None = None):
    """Breadth-first ordering of a radial network.

    Accepts either a model-like object (``.buses``, ``.lines``, ``.root``) or
    the three pieces separately.  Returns ``(order, parent)`` where ``order``
    lists bus ids root first and ``parent`` maps every non-root bus to its
    parent.  Raises :class:`FeederError` on cycles, unreachable buses or
    unknown bus ids.
    """
    if lines is None:
        buses, lines, root = buses.buses, buses.lines, buses.root
    ids = [b.id if isinstance(b, Bus) else int(b) for b in buses]
    known = set(ids)
    if len(known) != len(ids):
        raise FeederError("duplicate bus id")
    if root not in known:
        raise FeederError(f"root bus {root} is not a bus")
    adj: dict[int, list[int]] = {i: [] for i in ids}
    for ln in lines:
        for end in (ln.from_bus, ln.to_bus):
            if end not in known:
                raise FeederError(f"line {ln.from_bus}-{ln.to_bus} references unknown bus {end}")
        if ln.from_bus == ln.to_bus:
            raise FeederError("cycle detected: self-loop")
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)

    order = [root]
    parent: dict[int, int] = {}
    seen = {root}
    queue = deque([root])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if j == parent.get(i):
                continue
            if j in seen:
                raise FeederError("cycle detected")
            seen.add(j)
            parent[j] = i
            order.append(j)
            queue.append(j)
    if len(lines) != len(ids) - 1:
        # a parallel line between the same pair slips past the BFS above
        raise FeederError("cycle detected" if len(lines) >= len(ids) else "unreachable bus")
    if len(order) != len(ids):
        missing = sorted(known - seen)
        raise FeederError(f"unreachable bus(es) {missing}")
    return order, parent


@dataclass(frozen=True)
class FeederModel:
    """Immutable per-unit radial feeder.

    Buses are stored root first in breadth-first order and ``lines[k]`` feeds
    ``buses[k + 1]``, so bus position and line position are tied together.
    """

    bases: Bases
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    root: int
    parent: Mapping[int, int] = field(init=False, repr=False)
    children: Mapping[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        order, parent = validate_radial(self.buses, self.lines, self.root)
        by_id = {b.id: b for b in self.buses}
        by_to = {}
        for ln in self.lines:
            if parent.get(ln.to_bus) == ln.from_bus:
                by_to[ln.to_bus] = ln
            else:
                by_to[ln.from_bus] = Line(ln.to_bus, ln.from_bus, ln.r, ln.x)
        children: dict[int, list[int]] = {i: [] for i in order}
        for j in order[1:]:
            children[parent[j]].append(j)
        object.__setattr__(self, "buses", tuple(by_id[i] for i in order))
        object.__setattr__(self, "lines", tuple(by_to[j] for j in order[1:]))
        object.__setattr__(self, "parent", dict(parent))
        object.__setattr__(self, "children", {i: tuple(c) for i, c in children.items()})

    # -- indexing -----------------------------------------------------------
    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def index(self, bus_id: int) -> int:
        return self._pos[bus_id]

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._pos[bus_id]]

    @property
    def inverter_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.inverter is not None]

    @property
    def capacitor_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.shunt_cap > 0]

    # -- cached numeric views --------------------------------------------------
    @property
    def _pos(self) -> dict[int, int]:
        return self._cache("pos", lambda: {b.id: k for k, b in enumerate(self.buses)})

    @property
    def line_from(self) -> np.ndarray:
        """Position of each line's sending bus."""
        return self._cache("from", lambda: np.array([self._pos[ln.from_bus] for ln in self.lines], dtype=int))

    @property
    def r(self) -> np.ndarray:
        return self._cache("r", lambda: np.array([ln.r for ln in self.lines]))

    @property
    def x(self) -> np.ndarray:
        return self._cache("x", lambda: np.array([ln.x for ln in self.lines]))

    @property
    def downstream(self) -> np.ndarray:
        """``D[k, i] = 1`` when bus ``i`` is fed through line ``k``."""

        def build():
            n = self.n_bus
            D = np.zeros((self.n_line, n))
            for i in range(n - 1, 0, -1):
                D[i - 1, i] = 1.0
            # parents come before children, so sweep children-to-root
            frm = self.line_from
            for k in range(self.n_line - 1, -1, -1):
                p = frm[k]
                if p > 0:
                    D[p - 1] += D[k]
            return D

        return self._cache("D", build)

    def _cache(self, key, fn):
        store = self.__dict__.setdefault("_numeric_cache", {})
        if key not in store:
            store[key] = fn()
        return store[key]

    # -- derived models ------------------------------------------------------
    def with_voltage_limits(self, v_min: float, v_max: float) -> "FeederModel":
        buses = tuple(dataclasses.replace(b, v_min=v_min, v_max=v_max) for b in self.buses)
        return FeederModel(self.bases, buses, self.lines, self.root)

    def with_voltage_tolerance(self, tol: float) -> "FeederModel":
        """Bounds ``1 -/+ tol`` on every bus, e.g. ``tol=0.03`` for 3%."""
        return self.with_voltage_limits(1.0 - tol, 1.0 + tol)

    def with_loss_coeffs(self, coeffs: tuple[float, float, float]) -> "FeederModel":
        buses = tuple(
            dataclasses.replace(b, inverter=dataclasses.replace(b.inverter, loss_coeffs=tuple(coeffs)))
            if b.inverter is not None else b
            for b in self.buses
        )
        return FeederModel(self.bases, buses, self.lines, self.root)

    def with_load_exponent(self, n: float) -> "FeederModel":
        buses = tuple(dataclasses.replace(b, load_exponent=n) for b in self.buses)
        return FeederModel(self.bases, buses, self.lines, self.root)

    def to_physical(self) -> dict:
        """Tables in ohms / MVA / Mvar, the inverse of per-unit parsing."""
        z, s_mva = self.bases.z_base, self.bases.s_base / 1e6
        return {
            "lines": [(ln.from_bus, ln.to_bus, ln.r * z, ln.x * z) for ln in self.lines],
            "loads": {b.id: b.peak_load * s_mva for b in self.buses if b.peak_load > 0},
            "shunt_caps": {b.id: b.shunt_cap * s_mva for b in self.buses if b.shunt_cap > 0},
            "inverters": {b.id: b.inverter.s_rated * s_mva for b in self.buses if b.inverter},
        }


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = {"bases", "root", "lines", "loads", "shunt_caps", "inverters", "pv", "voltage_limits"}


def _split_sections(text: str) -> dict[str, list[list[str]]]:
    sections: dict[str, list[list[str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise FeederError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise FeederError(f"line {lineno}: repeated section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise FeederError(f"line {lineno}: data before any section header")
        sections[current].append([c.strip() for c in line.split(",")])
    return sections


def _floats(row, n_min, n_max, what):
    if not n_min <= len(row) <= n_max:
        raise FeederError(f"{what}: expected {n_min}..{n_max} fields, got {row}")
    try:
        return [float(c) for c in row]
    except ValueError as exc:
        raise FeederError(f"{what}: non-numeric field in {row}") from exc


def parse_feeder(text: str) -> FeederModel:
    """Parse feeder-file content into a per-unit :class:`FeederModel`."""
    sec = _split_sections(text)

    base_kv = {"v_base_kv": 1e3, "v_base_v": 1.0, "s_base_mva": 1e6, "s_base_va": 1.0}
    v_base = s_base = None
    for row in sec.get("bases", []):
        if len(row) != 2 or row[0].lower() not in base_kv:
            raise FeederError(f"bad [bases] row {row}")
        value = float(row[1]) * base_kv[row[0].lower()]
        if row[0].lower().startswith("v_"):
            v_base = value
        else:
            s_base = value
    if v_base is None or s_base is None:
        raise FeederError("[bases] must give both voltage and power bases")
    bases = Bases(v_base, s_base)
    z_base, s_mva = bases.z_base, s_base / 1e6

    lines = []
    ids: list[int] = []
    for row in sec.get("lines", []):
        f, t, r, x = _floats(row, 4, 4, "[lines]")
        lines.append(Line(int(f), int(t), r / z_base, x / z_base))
        for b in (int(f), int(t)):
            if b not in ids:
                ids.append(b)

    root_rows = sec.get("root")
    if root_rows:
        root = int(root_rows[0][0])
    elif lines:
        root = lines[0].from_bus
    else:
        raise FeederError("feeder has no lines and no [root]")
    if root not in ids:
        ids.insert(0, root)

    attrs: dict[int, dict] = {i: {} for i in ids}

    def slot(bus, what):
        if bus not in attrs:
            raise FeederError(f"{what} references unknown bus {bus}")
        return attrs[bus]

    def once(d, key, value, bus, what):
        if key in d:
            raise FeederError(f"duplicate bus id {bus} in {what}")
        d[key] = value

    for row in sec.get("loads", []):
        vals = _floats(row, 2, 3, "[loads]")
        d = slot(int(vals[0]), "[loads]")
        once(d, "peak_load", vals[1] / s_mva, int(vals[0]), "[loads]")
        if len(vals) == 3:
            d["load_exponent"] = vals[2]
    for row in sec.get("shunt_caps", []):
        b, q = _floats(row, 2, 2, "[shunt_caps]")
        once(slot(int(b), "[shunt_caps]"), "shunt_cap", q / s_mva, int(b), "[shunt_caps]")
    inverter_args: dict[int, dict] = {}
    for row in sec.get("inverters", []):
        vals = _floats(row, 2, 5, "[inverters]")
        if len(vals) not in (2, 5):
            raise FeederError(f"[inverters]: give 2 or 5 fields, got {row}")
        b = int(vals[0])
        slot(b, "[inverters]")
        if b in inverter_args:
            raise FeederError(f"duplicate bus id {b} in [inverters]")
        kw = {"s_rated": vals[1] / s_mva}
        if len(vals) == 5:
            kw["loss_coeffs"] = tuple(vals[2:])
        inverter_args[b] = kw
    for row in sec.get("pv", []):
        b, p = _floats(row, 2, 2, "[pv]")
        if int(b) not in inverter_args:
            raise FeederError(f"[pv] at bus {int(b)} without an inverter")
        inverter_args[int(b)]["p_capacity"] = p / s_mva
    for b, kw in inverter_args.items():
        attrs[b]["inverter"] = InverterSpec(**kw)

    default_limits = {}
    for row in sec.get("voltage_limits", []):
        if len(row) != 3:
            raise FeederError(f"bad [voltage_limits] row {row}")
        lims = {"v_min": float(row[1]), "v_max": float(row[2])}
        if row[0] == "*":
            default_limits = lims
        else:
            slot(int(row[0]), "[voltage_limits]").update(lims)

    buses = tuple(Bus(i, **{**default_limits, **attrs[i]}) for i in ids)
    return FeederModel(bases, buses, tuple(lines), root)


def load_feeder(path: str | Path) -> FeederModel:
    return parse_feeder(Path(path).read_text(encoding="utf-8"))


def bundled_feeder_path() -> Path:
    """Filesystem path of the bundled 56-bus feeder file."""
    return Path(str(resources.files("voltvar") / "data" / BUNDLED_FEEDER))


def bundled_feeder() -> FeederModel:
    return load_feeder(bundled_feeder_path())


def path_feeder(n_bus: int, r: float, x: float, loads: Mapping[int, float] | None = None,
                inverters: Mapping[int, InverterSpec] | None = None,
                v_min: float = DEFAULT_V_MIN, v_max: float = DEFAULT_V_MAX,
                bases: Bases | None = None) -> FeederModel:
    """Buses ``1..n_bus`` in a chain with identical per-unit impedances."""
    loads = loads or {}
    inverters = inverters or {}
    buses = tuple(
        Bus(i, peak_load=loads.get(i, 0.0), inverter=inverters.get(i), v_min=v_min, v_max=v_max)
        for i in range(1, n_bus + 1)
    )
    lines = tuple(Line(i, i + 1, r, x) for i in range(1, n_bus))
    return FeederModel(bases or Bases(12e3, 1e6), buses, lines, 1)


def random_feeder(rng: np.random.Generator, n_bus: int, *, total_peak: float = 2.0,
                  n_inverters: int = 1, inverter_rating: float = 2.0,
                  n_caps: int = 0) -> FeederModel:
    """Random radial feeder with realistic per-unit impedances.

    Each new bus attaches to a uniformly chosen earlier bus; line impedances are
    drawn from ranges typical of 12 kV overhead lines on a 1 MVA base.
    """
    parents = [0] + [int(rng.integers(0, k)) for k in range(1, n_bus)]
    lines = tuple(
        Line(parents[k] + 1, k + 1, float(rng.uniform(0.05, 1.5)) / 144, float(rng.uniform(0.1, 1.0)) / 144)
        for k in range(1, n_bus)
    )
    weights = rng.uniform(0, 1, n_bus)
    weights[0] = 0.0
    weights *= total_peak / weights.sum()
    inv_at = set(rng.choice(np.arange(2, n_bus + 1), size=n_inverters, replace=False).tolist())
    cap_at = set(rng.choice(np.arange(2, n_bus + 1), size=n_caps, replace=False).tolist()) if n_caps else set()
    buses = tuple(
        Bus(i, peak_load=float(weights[i - 1]),
            load_exponent=float(rng.uniform(0, 2)),
            shunt_cap=0.3 if i in cap_at else 0.0,
            inverter=InverterSpec(inverter_rating) if i in inv_at else None)
        for i in range(1, n_bus + 1)
    )
    return FeederModel(Bases(12e3, 1e6), buses, lines, 1)
