"""Per-bus agent state, messages and scheme configuration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from ..grid import Network
from ..oracle import IndexKind
from ..powerflow import GenMode


class LocalityError(RuntimeError):
    """An agent update touched data from a bus that is not a neighbour."""


class Scheme(enum.Enum):
    EULER = "euler"
    JACOBI = "jacobi"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.EULER
    h: float = 0.01
    index_kind: IndexKind = IndexKind.DVLDVG
    hysteresis_window: float = 5.0
    consensus_period: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "index_kind", IndexKind.parse(self.index_kind))
        if self.scheme is Scheme.EULER and not self.h > 0:
            raise ValueError("Euler step h must be positive")
        if self.hysteresis_window < 0 or self.consensus_period <= 0:
            raise ValueError("hysteresis window must be >= 0 and consensus period > 0")


@dataclass(frozen=True)
class LocalData:
    """What the processor at one bus knows about the grid."""

    bus: int
    generator: bool
    incident: dict  # neighbour id -> branch admittance y_ij
    shunt: complex = 0j
    q_max: float | None = None

    @property
    def neighbors(self) -> frozenset:
        return frozenset(self.incident)

    @property
    def G_self(self) -> float:
        return sum(y.real for y in self.incident.values()) + self.shunt.real

    @property
    def B_self(self) -> float:
        return sum(y.imag for y in self.incident.values()) + self.shunt.imag


def local_data(network: Network) -> dict[int, LocalData]:
    inc: dict[int, dict] = {b.id: {} for b in network.buses}
    for br in network.branches:
        inc[br.from_bus][br.to_bus] = br.admittance
        inc[br.to_bus][br.from_bus] = br.admittance
    return {b.id: LocalData(b.id, not b.is_load, inc[b.id], b.shunt_admittance, b.q_max)
            for b in network.buses}


@dataclass(frozen=True)
class LocalMeasurement:
    v: float
    theta: float
    p: float
    q: float
    t: float = 0.0


@dataclass(frozen=True)
class NeighborMessage:
    sender: int
    v: float
    theta: float
    x: float | None
    y: float
    z: float | None = None
    mode_changed: bool = False
    alert: bool = False
    round: int = 0
    w: float | None = None
    w_bus: int | None = None

    def to_dict(self) -> dict:
        states = {"y": self.y}
        if self.x is not None:
            states["x"] = self.x
        if self.z is not None:
            states["z"] = self.z
        out = {"round": self.round, "sender": self.sender,
               "phasor": {"v": self.v, "theta": self.theta}, "states": states}
        if self.mode_changed:
            out["mode_changed"] = True
        if self.alert:
            out["alert"] = True
        return out


@dataclass(slots=True)
class AgentState:
    bus: int
    y: float = 0.0
    x: float | None = None
    z: float | None = None
    w: float = 0.0
    w_bus: int | None = None
    mode: GenMode | None = None
    tau: float = 1.0
    gamma: float | None = None
    alert: bool = False
    mode_changed: bool = False
    # hysteresis bookkeeping: time at which the current condition started
    over_since: float | None = None
    under_since: float | None = None
    above_since: float | None = None
    below_since: float | None = None

    def __post_init__(self):
        if not self.tau > 0 or not math.isfinite(self.tau):
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def load_like(self) -> bool:
        return self.x is not None


def initial_state(local: LocalData, kind: IndexKind, tau: float, *, x0: float = 0.0,
                  y0: float = 0.0, z0: float = 0.0, gamma: float | None = None) -> AgentState:
    kind = IndexKind.parse(kind)
    z = z0 if kind is IndexKind.DQGDQL else None
    mode = GenMode.PV if local.generator else None
    return AgentState(local.bus, y=y0, x=None if local.generator else x0, z=z,
                      w=kind.open_circuit, mode=mode, tau=tau, gamma=gamma)


@dataclass
class Inbox:
    """Messages delivered to one agent; reading a non-neighbour aborts."""

    owner: int
    allowed: frozenset
    messages: dict = field(default_factory=dict)

    def __post_init__(self):
        extra = set(self.messages) - set(self.allowed)
        if extra:
            raise LocalityError(f"bus {self.owner} received messages from non-neighbours {sorted(extra)}")

    def __getitem__(self, sender: int) -> NeighborMessage:
        if sender not in self.allowed:
            raise LocalityError(f"bus {self.owner} read state of non-neighbour {sender}")
        return self.messages[sender]

    def complete(self) -> bool:
        return set(self.messages) == set(self.allowed)

    def items(self):
        return self.messages.items()
