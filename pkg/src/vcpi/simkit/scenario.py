"""Scenario description: case, load events, noise, filter time constants."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import tomli

from ..agents.state import Scheme
from ..grid import bundled_case
from ..oracle import IndexKind


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class RampLoads:
    """Scale all injections linearly from their current level to ``factor`` over [t, t_end]."""

    t: float
    factor: float
    t_end: float


@dataclass(frozen=True)
class ShedLoads:
    """Drop back to the reference (base case) injections at once."""

    t: float


@dataclass(frozen=True)
class SetLoad:
    t: float
    bus: int
    p: float
    q: float


Event = RampLoads | ShedLoads | SetLoad


@dataclass(frozen=True)
class NoiseModel:
    sigma_vmag: float = 0.001
    sigma_theta: float = math.radians(0.01)

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(0.0, 0.0)

    @property
    def enabled(self) -> bool:
        return self.sigma_vmag > 0 or self.sigma_theta > 0

    def total_phasor_error(self, k: float = 2.0) -> float:
        """``k``-sigma total vector error of a unit phasor (small-angle)."""
        return k * math.hypot(self.sigma_vmag, self.sigma_theta)


@dataclass(frozen=True)
class TauUniform:
    lo: float
    hi: float


@dataclass(frozen=True)
class TauFixed:
    tau: float


@dataclass(frozen=True)
class Scenario:
    case: str
    index_kind: IndexKind = IndexKind.DVLDVG
    events: tuple = ()
    duration: float = 300.0
    dt_physics: float = 0.5
    dt_agent: float = 0.01
    noise: NoiseModel = field(default_factory=NoiseModel)
    tau: TauUniform | TauFixed = TauFixed(10.0)
    seed: int = 0
    reference_bus: int | None = None
    warmup: float = 0.0
    scheme: Scheme = Scheme.EULER
    hysteresis_window: float = 5.0
    consensus_period: float = 30.0
    gamma: float | None = None
    var_limits: bool = True

    def __post_init__(self):
        object.__setattr__(self, "index_kind", IndexKind.parse(self.index_kind))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "events", tuple(self.events))
        if not (0 < self.dt_agent <= self.dt_physics):
            raise ScenarioError("need 0 < dt_agent <= dt_physics")
        ratio = self.dt_physics / self.dt_agent
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioError("dt_physics must be a whole number of agent rounds")
        if self.duration <= 0 or self.warmup < 0:
            raise ScenarioError("duration must be positive and warmup non-negative")
        last = -math.inf
        for ev in self.events:
            if ev.t < last:
                raise ScenarioError("events must be time-ordered")
            if not 0 <= ev.t <= self.duration:
                raise ScenarioError(f"event at t={ev.t} outside [0, {self.duration}]")
            if isinstance(ev, RampLoads) and not ev.t < ev.t_end <= self.duration:
                raise ScenarioError("ramp needs t < t_end <= duration")
            last = ev.t
        if isinstance(self.tau, TauUniform) and not 0 < self.tau.lo <= self.tau.hi:
            raise ScenarioError("tau range must satisfy 0 < lo <= hi")
        if isinstance(self.tau, TauFixed) and not self.tau.tau > 0:
            raise ScenarioError("tau must be positive")

    @property
    def rounds_per_physics(self) -> int:
        return int(round(self.dt_physics / self.dt_agent))

    @property
    def max_tau(self) -> float:
        return self.tau.hi if isinstance(self.tau, TauUniform) else self.tau.tau

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["index_kind"] = self.index_kind.value
        d["scheme"] = self.scheme.value
        d["events"] = [{"action": type(e).__name__, **asdict(e)} for e in self.events]
        d["tau"] = {"kind": type(self.tau).__name__, **asdict(self.tau)}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- TOML ingestion -------------------------------------------------------

_ACTIONS = {"ramp": RampLoads, "shed": ShedLoads, "set": SetLoad}


def _event(rec: dict) -> Event:
    rec = dict(rec)
    action = rec.pop("action", None)
    if action not in _ACTIONS:
        raise ScenarioError(f"unknown event action {action!r} (use one of {sorted(_ACTIONS)})")
    try:
        return _ACTIONS[action](**rec)
    except TypeError as exc:
        raise ScenarioError(f"bad {action} event: {exc}") from None


def resolve_case(case: str, base: Path | None = None) -> Path:
    """``bundled:<name>`` or a path relative to the scenario file."""
    if case.startswith("bundled:"):
        return bundled_case(case.split(":", 1)[1])
    p = Path(case)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def scenario_from_dict(data: dict, base: Path | None = None) -> Scenario:
    data = dict(data)
    try:
        case = str(resolve_case(data.pop("case"), base))
    except KeyError:
        raise ScenarioError("scenario needs a 'case'") from None
    events = tuple(_event(e) for e in data.pop("events", []))
    noise = data.pop("noise", {})
    if noise is False or noise == {"enabled": False}:
        noise_model = NoiseModel.off()
    else:
        sig_th = noise.get("sigma_theta_deg")
        noise_model = NoiseModel(
            noise.get("sigma_vmag", 0.001),
            math.radians(sig_th) if sig_th is not None else noise.get("sigma_theta", math.radians(0.01)),
        )
    tau = data.pop("tau", {"fixed": 10.0})
    if "uniform" in tau:
        lo, hi = tau["uniform"]
        tau_model = TauUniform(float(lo), float(hi))
    elif "fixed" in tau:
        tau_model = TauFixed(float(tau["fixed"]))
    else:
        raise ScenarioError("tau needs 'uniform = [lo, hi]' or 'fixed = value'")
    known = {f for f in Scenario.__dataclass_fields__} - {"case", "events", "noise", "tau"}
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown scenario fields {sorted(unknown)}")
    try:
        return Scenario(case=case, events=events, noise=noise_model, tau=tau_model, **data)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file") from None
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_dict(data, path.parent)


def bundled_scenario(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "data" / f"{name}.toml"
