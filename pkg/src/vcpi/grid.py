"""Network data model, case files, admittance matrix and data coefficients.

Buses are stored loads first, then generators, so that index ``k < n`` is a
load bus and ``k >= n`` a generator bus.  The original case ids are kept on
each :class:`Bus` and used for everything user facing.
"""

from __future__ import annotations

import enum
import json
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CaseError(ValueError):
    """Raised when a case file or an in-memory network is invalid."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ConventionWarning(UserWarning):
    """A branch violates g >= 0, b <= 0."""


class BusKind(enum.Enum):
    LOAD = "load"
    GENERATOR = "generator"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_inject: float
    q_inject: float = 0.0
    v_setpoint: float | None = None
    q_max: float | None = None
    shunt_admittance: complex = 0j

    def __post_init__(self):
        if self.kind is BusKind.LOAD:
            if self.v_setpoint is not None or self.q_max is not None:
                raise CaseError("load buses take no v_set / q_max", f"bus {self.id}")
        else:
            if self.v_setpoint is None:
                raise CaseError("generator bus needs v_set", f"bus {self.id}")
            if not self.v_setpoint > 0:
                raise CaseError(f"nonpositive v_set {self.v_setpoint}", f"bus {self.id}")

    @property
    def is_load(self) -> bool:
        return self.kind is BusKind.LOAD


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    admittance: complex

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseError("self loop", f"branch {self.from_bus}-{self.to_bus}")

    @property
    def key(self) -> frozenset:
        return frozenset((self.from_bus, self.to_bus))

    @property
    def follows_convention(self) -> bool:
        return self.admittance.real >= 0 and self.admittance.imag <= 0


def build_admittance(buses: Sequence[Bus], branches: Iterable[Branch]) -> np.ndarray:
    """Bus admittance matrix, indexed in the order of ``buses``.

    Off-diagonals are ``-y_ij``; the diagonal is ``sum_j y_ij + y_shunt,i``.
    """
    index = {b.id: k for k, b in enumerate(buses)}
    Y = np.zeros((len(buses), len(buses)), dtype=complex)
    for br in branches:
        i, j = index[br.from_bus], index[br.to_bus]
        y = br.admittance
        Y[i, j] -= y
        Y[j, i] -= y
        Y[i, i] += y
        Y[j, j] += y
    for k, b in enumerate(buses):
        Y[k, k] += b.shunt_admittance
    return Y


def _merge_parallel(branches: Iterable[Branch]) -> tuple[Branch, ...]:
    merged: dict[frozenset, Branch] = {}
    for br in branches:
        if br.key in merged:
            old = merged[br.key]
            merged[br.key] = replace(old, admittance=old.admittance + br.admittance)
        else:
            merged[br.key] = br
    return tuple(merged.values())


def _check_connected(ids: Sequence[int], branches: Iterable[Branch]) -> None:
    adj = defaultdict(set)
    for br in branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {ids[0]}
    queue = deque([ids[0]])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    missing = sorted(set(ids) - seen)
    if missing:
        raise CaseError(f"network is disconnected; unreachable buses {missing}", "branches")


@dataclass(frozen=True)
class Network:
    """Immutable grid: buses (loads first), merged branches and ``Y``."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0
    Y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        buses = tuple(self.buses)
        ids = [b.id for b in buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CaseError(f"duplicate bus id(s) {dup}", "buses")
        if not buses:
            raise CaseError("no buses", "buses")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseError(f"unknown bus {end}", f"branch {br.from_bus}-{br.to_bus}")
        # stable sort: loads first, generators after, case order kept otherwise
        buses = tuple(sorted(buses, key=lambda b: not b.is_load))
        branches = _merge_parallel(self.branches)
        if len(buses) > 1:
            _check_connected(ids, branches)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "branches", branches)
        Y = build_admittance(buses, branches)
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.buses == other.buses
            and set(self.branches) == set(other.branches)
            and self.base_mva == other.base_mva
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return sum(1 for b in self.buses if b.is_load)

    @property
    def m(self) -> int:
        return len(self.buses) - self.n

    @property
    def size(self) -> int:
        return len(self.buses)

    @property
    def ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def index(self, bus_id: int) -> int:
        try:
            return self._index_map[bus_id]
        except KeyError:
            raise KeyError(f"no bus with id {bus_id}") from None

    @property
    def _index_map(self) -> dict[int, int]:
        cached = self.__dict__.get("_idx")
        if cached is None:
            cached = {b.id: k for k, b in enumerate(self.buses)}
            object.__setattr__(self, "_idx", cached)
        return cached

    @property
    def G(self) -> np.ndarray:
        return self.Y.real

    @property
    def B(self) -> np.ndarray:
        return self.Y.imag

    def neighbors(self, k: int) -> list[int]:
        """Internal indices adjacent to internal index ``k``."""
        cached = self.__dict__.get("_adj")
        if cached is None:
            adj: list[set] = [set() for _ in self.buses]
            for br in self.branches:
                i, j = self.index(br.from_bus), self.index(br.to_bus)
                adj[i].add(j)
                adj[j].add(i)
            cached = [sorted(a) for a in adj]
            object.__setattr__(self, "_adj", cached)
        return cached[k]

    def edges(self) -> list[tuple[int, int]]:
        return sorted(
            tuple(sorted((self.index(br.from_bus), self.index(br.to_bus))))
            for br in self.branches
        )

    def convention_violations(self) -> list[Branch]:
        return [br for br in self.branches if not br.follows_convention]

    @property
    def p_spec(self) -> np.ndarray:
        return np.array([b.p_inject for b in self.buses])

    @property
    def q_spec(self) -> np.ndarray:
        return np.array([b.q_inject for b in self.buses])

    def with_buses(self, buses: Iterable[Bus]) -> "Network":
        return Network(tuple(buses), self.branches, self.base_mva)

    def with_injections(self, p: Sequence[float], q: Sequence[float] | None = None) -> "Network":
        """Copy with new injections (internal order); ``q`` only touches loads."""
        new = []
        for k, b in enumerate(self.buses):
            qk = q[k] if (q is not None and b.is_load) else b.q_inject
            new.append(replace(b, p_inject=float(p[k]), q_inject=float(qk)))
        return self.with_buses(new)

    def retype_as_load(self, bus_id: int, q_inject: float) -> "Network":
        """Generator ``bus_id`` becomes a PQ bus injecting ``q_inject``."""
        new = []
        for b in self.buses:
            if b.id == bus_id:
                if b.is_load:
                    raise CaseError("bus is already a load", f"bus {bus_id}")
                b = Bus(b.id, BusKind.LOAD, b.p_inject, q_inject, None, None, b.shunt_admittance)
            new.append(b)
        return self.with_buses(new)


@dataclass(frozen=True)
class PhasorSnapshot:
    theta: np.ndarray
    v_mag: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        v = np.array(self.v_mag, dtype=float)
        if theta.shape != v.shape:
            raise ValueError("theta and v_mag differ in shape")
        if np.any(v <= 0):
            raise ValueError("voltage magnitudes must be strictly positive")
        theta.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "v_mag", v)

    @classmethod
    def from_degrees(cls, theta_deg, v_mag, timestamp: float = 0.0) -> "PhasorSnapshot":
        return cls(np.deg2rad(np.asarray(theta_deg, dtype=float)), v_mag, timestamp)

    @property
    def phasors(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.theta)


def data_coefficients(network: Network, snapshot: PhasorSnapshot) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``d`` and ``D`` built from ``Y`` and the voltage phasors.

    ``d_ij = V_i V_j (G_ij sin(th_i - th_j) - B_ij cos(th_i - th_j))`` and
    ``D_ij = V_i V_j (G_ij cos(th_i - th_j) + B_ij sin(th_i - th_j))``.
    Entries vanish off the branch pattern because ``Y`` does.
    """
    G, B = network.G, network.B
    v, th = snapshot.v_mag, snapshot.theta
    diff = th[:, None] - th[None, :]
    vv = np.outer(v, v)
    s, c = np.sin(diff), np.cos(diff)
    d = vv * (G * s - B * c)
    D = vv * (G * c + B * s)
    pattern = network.Y != 0
    return np.where(pattern, d, 0.0), np.where(pattern, D, 0.0)


# --- case files -----------------------------------------------------------

def _num(record: dict, key: str, where: str, default=None) -> float:
    if key not in record:
        if default is None:
            raise CaseError(f"missing field '{key}'", where)
        return default
    val = record[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CaseError(f"field '{key}' must be a number, got {val!r}", where)
    return float(val)


def parse_case(data: dict, source: str = "<case>") -> Network:
    if not isinstance(data, dict):
        raise CaseError("top level must be an object", source)
    for key in ("buses", "branches"):
        if not isinstance(data.get(key), list):
            raise CaseError(f"'{key}' must be a list", source)
    base = _num(data, "base_mva", source, default=100.0)
    buses = []
    seen: dict[int, str] = {}
    for k, rec in enumerate(data["buses"]):
        where = f"{source}: buses[{k}]"
        if not isinstance(rec, dict):
            raise CaseError("bus entry must be an object", where)
        if not isinstance(rec.get("id"), int) or isinstance(rec.get("id"), bool):
            raise CaseError("bus 'id' must be an integer", where)
        bid = rec["id"]
        if bid in seen:
            raise CaseError(f"duplicate bus id {bid} (first at {seen[bid]})", where)
        seen[bid] = where
        try:
            kind = BusKind(rec.get("kind"))
        except ValueError:
            raise CaseError(f"kind must be 'load' or 'generator', got {rec.get('kind')!r}", where) from None
        shunt = complex(_num(rec, "shunt_g", where, 0.0), _num(rec, "shunt_b", where, 0.0))
        v_set = _num(rec, "v_set", where, None) if "v_set" in rec else None
        q_max = _num(rec, "q_max", where, None) if "q_max" in rec else None
        try:
            buses.append(Bus(bid, kind, _num(rec, "p", where, 0.0), _num(rec, "q", where, 0.0),
                             v_set, q_max, shunt))
        except CaseError as exc:
            raise CaseError(str(exc), where) from None
    branches = []
    for k, rec in enumerate(data["branches"]):
        where = f"{source}: branches[{k}]"
        if not isinstance(rec, dict):
            raise CaseError("branch entry must be an object", where)
        ends = []
        for key in ("from", "to"):
            if not isinstance(rec.get(key), int) or rec[key] not in seen:
                raise CaseError(f"'{key}' must reference a bus id, got {rec.get(key)!r}", where)
            ends.append(rec[key])
        if ends[0] == ends[1]:
            raise CaseError("branch connects a bus to itself", where)
        br = Branch(ends[0], ends[1], complex(_num(rec, "g", where), _num(rec, "b", where)))
        if not br.follows_convention:
            warnings.warn(f"{where}: admittance {br.admittance} violates g >= 0, b <= 0",
                          ConventionWarning, stacklevel=2)
        branches.append(br)
    try:
        return Network(tuple(buses), tuple(branches), base)
    except CaseError as exc:
        raise CaseError(str(exc), source) from None


def load_case(path) -> Network:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CaseError(f"not valid JSON: {exc.msg} (line {exc.lineno})", str(path)) from None
    return parse_case(data, str(path))


def case_to_dict(network: Network) -> dict:
    buses = []
    for b in network.buses:
        rec = {"id": b.id, "kind": b.kind.value, "p": b.p_inject, "q": b.q_inject}
        if b.v_setpoint is not None:
            rec["v_set"] = b.v_setpoint
        if b.q_max is not None:
            rec["q_max"] = b.q_max
        if b.shunt_admittance:
            rec["shunt_g"] = b.shunt_admittance.real
            rec["shunt_b"] = b.shunt_admittance.imag
        buses.append(rec)
    branches = [{"from": br.from_bus, "to": br.to_bus, "g": br.admittance.real,
                 "b": br.admittance.imag} for br in network.branches]
    return {"base_mva": network.base_mva, "buses": buses, "branches": branches}


def save_case(network: Network, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(network), indent=1) + "\n", encoding="utf-8")


def bundled_case(name: str) -> Path:
    """Path of a case shipped in ``vcpi/data`` (``"case3"``, ``"ne39"``, ...)."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(path)
    return path
