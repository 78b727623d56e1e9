"""Quasi-static co-simulation of the grid and the bus agents.

The grid is a sequence of solved power flows, one every ``dt_physics``
seconds, each warm-started from the last.  Between solves the agents run
``dt_physics / dt_agent`` rounds on noisy phasor samples of the latest
solution.  Generator reactive limits act on the grid immediately; agents
only learn about them through their own hysteresis.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..agents.network import AgentNetwork, measurements_from
from ..grid import Network, PhasorSnapshot, load_case
from ..oracle import CollapseError, compute_index
from ..powerflow import (OperatingPoint, PowerFlowError, assemble_jacobian, injections,
                         solve_power_flow)
from .noise import NoiseStreams, sample_measurement
from .scenario import RampLoads, Scenario, SetLoad, ShedLoads, TauUniform

log = logging.getLogger(__name__)

# grid-side reactive limit margin (pu)
Q_MARGIN = 1e-9
MAX_LIMIT_PASSES = 10


# --- grid side -------------------------------------------------------------

class LoadProfile:
    """Injection scale factor and per-bus overrides as functions of time."""

    def __init__(self, events):
        self.events = list(events)

    def at(self, t: float) -> tuple[float, dict]:
        factor, overrides = 1.0, {}
        for ev in self.events:
            if ev.t > t:
                break
            if isinstance(ev, RampLoads):
                start = factor
                frac = min(1.0, (t - ev.t) / (ev.t_end - ev.t))
                factor = start + (ev.factor - start) * frac
            elif isinstance(ev, ShedLoads):
                factor, overrides = 1.0, {}
            elif isinstance(ev, SetLoad):
                overrides[ev.bus] = (ev.p, ev.q)
        return factor, overrides


def _reorder(snapshot: PhasorSnapshot, src: Network, dst: Network) -> PhasorSnapshot:
    idx = [src.index(b) for b in dst.ids]
    return PhasorSnapshot(snapshot.theta[idx], snapshot.v_mag[idx], snapshot.timestamp)


class GridPhysics:
    """Loads and generator limits applied to a fixed base network."""

    def __init__(self, base: Network, reference: int, var_limits: bool = True):
        self.base = base
        self.reference = reference
        self.var_limits = var_limits
        self.limited: set[int] = set()
        self.point: OperatingPoint | None = None

    def scheduled(self, factor: float, overrides: dict) -> Network:
        """Base network with every active injection and every load's reactive one scaled."""
        p = self.base.p_spec * factor
        q = self.base.q_spec * factor
        for bus, (pp, qq) in overrides.items():
            k = self.base.index(bus)
            p[k], q[k] = pp * factor, qq * factor
        return self.base.with_injections(p, q)

    def _typed(self, net: Network) -> Network:
        for bid in sorted(self.limited):
            net = net.retype_as_load(bid, net.buses[net.index(bid)].q_max)
        return net

    def solve(self, factor: float, overrides: dict, t: float) -> OperatingPoint:
        """Solve and enforce reactive limits; raises PowerFlowError on collapse."""
        sched = self.scheduled(factor, overrides)
        for _ in range(MAX_LIMIT_PASSES):
            net = self._typed(sched)
            warm = _reorder(self.point.snapshot, self.point.network, net) if self.point else None
            pt = solve_power_flow(net, self.reference, warm)
            changed = False
            if self.var_limits:
                for b in sched.buses:
                    if b.is_load or b.id == self.reference or b.q_max is None:
                        continue
                    k = net.index(b.id)
                    if b.id not in self.limited and pt.q[k] > b.q_max + Q_MARGIN:
                        self.limited.add(b.id)
                        changed = True
                    elif b.id in self.limited and pt.snapshot.v_mag[k] > b.v_setpoint + Q_MARGIN:
                        self.limited.discard(b.id)
                        changed = True
            self.point = pt
            if not changed:
                return OperatingPoint(pt.network, PhasorSnapshot(pt.snapshot.theta, pt.snapshot.v_mag, t),
                                      pt.p, pt.q, pt.reference, pt.iterations,
                                      {b: "PQ-at-limit" for b in self.limited})
        raise PowerFlowError("reactive-limit switching did not settle")


# --- trace ---------------------------------------------------------------

@dataclass
class ScenarioTrace:
    """Per-round agent records plus per-solve grid records, base-network bus order."""

    scenario: Scenario
    bus_ids: tuple
    load_ids: tuple
    gen_ids: tuple
    taus: dict
    times: np.ndarray
    x: np.ndarray            # rounds x buses, NaN where the agent has no estimate
    w: np.ndarray            # rounds x buses, consensus value
    alerts: np.ndarray       # rounds x buses
    limited: np.ndarray      # rounds x generators, agent in load-law mode
    physics_of_round: np.ndarray
    phys_times: np.ndarray
    v: np.ndarray            # solves x buses (noise-free)
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    oracle: np.ndarray       # solves x buses, NaN at PV generators
    residuals: np.ndarray    # power-flow mismatch at each recorded solve
    events: list = field(default_factory=list)
    collapse: dict | None = None

    @property
    def config_hash(self) -> str:
        return self.scenario.config_hash()

    @property
    def metadata(self) -> dict:
        return {"config_hash": self.config_hash, "seed": self.scenario.seed,
                "index_kind": self.scenario.index_kind.value,
                "scenario": self.scenario.to_dict(), "collapse": self.collapse}

    def col(self, bus: int) -> int:
        return self.bus_ids.index(bus)

    def round_at(self, t: float) -> int:
        return int(np.clip(np.searchsorted(self.times, t - 1e-9), 0, len(self.times) - 1))

    def estimate(self, bus: int) -> np.ndarray:
        return self.x[:, self.col(bus)]

    def oracle_per_round(self) -> np.ndarray:
        return self.oracle[self.physics_of_round]

    def window_mean(self, t0: float, t1: float, which: str = "x") -> np.ndarray:
        """Time-average over [t0, t1) of agent estimates or oracle values."""
        sel = (self.times >= t0) & (self.times < t1)
        data = self.x if which == "x" else self.oracle_per_round()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(data[sel], axis=0)

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e["event"] == kind]

    def records(self, every: int = 1):
        for r in range(0, len(self.times), every):
            k = self.physics_of_round[r]
            buses = {}
            for c, b in enumerate(self.bus_ids):
                rec = {"v": self.v[k, c], "theta": self.theta[k, c], "p": self.p[k, c],
                       "q": self.q[k, c], "w": self.w[r, c]}
                if not np.isnan(self.x[r, c]):
                    rec["x"] = self.x[r, c]
                if not np.isnan(self.oracle[k, c]):
                    rec["oracle"] = self.oracle[k, c]
                if self.alerts[r, c]:
                    rec["alert"] = True
                buses[str(b)] = rec
            modes = {str(g): "PQ-at-limit" if self.limited[r, i] else "PV"
                     for i, g in enumerate(self.gen_ids)}
            yield {"round": r, "t": float(self.times[r]), "buses": buses, "modes": modes}

    def write_ndjson(self, path, every: int = 1) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"meta": self.metadata}) + "\n")
            for rec in self.records(every):
                fh.write(json.dumps(rec) + "\n")

    def write_csv(self, path, every: int = 1, buses=None) -> None:
        """Long format ``time,bus,series,value``; metadata in leading ``#`` lines."""
        buses = list(self.bus_ids) if buses is None else list(buses)
        orc = self.oracle_per_round()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash}\n# seed={self.scenario.seed}\n")
            fh.write(f"# index_kind={self.scenario.index_kind.value}\n")
            wr = csv.writer(fh)
            wr.writerow(["time", "bus", "series", "value"])
            for r in range(0, len(self.times), every):
                t = f"{self.times[r]:.4f}"
                k = self.physics_of_round[r]
                for b in buses:
                    c = self.col(b)
                    for name, val in (("x", self.x[r, c]), ("oracle", orc[r, c]),
                                      ("v", self.v[k, c]), ("w", self.w[r, c])):
                        if not np.isnan(val):
                            wr.writerow([t, b, name, repr(float(val))])


# --- main loop -------------------------------------------------------------

def draw_taus(scenario: Scenario, bus_ids) -> dict[int, float]:
    """Per-bus time constants; uniform draws use one stream per bus id."""
    if isinstance(scenario.tau, TauUniform):
        lo, hi = scenario.tau.lo, scenario.tau.hi
        return {b: float(np.random.default_rng([scenario.seed, b, 7]).uniform(lo, hi))
                for b in bus_ids}
    return {b: scenario.tau.tau for b in bus_ids}


def _oracle_row(pt: OperatingPoint, kind, base: Network) -> np.ndarray:
    row = np.full(base.size, np.nan)
    idx = compute_index(kind, assemble_jacobian(pt.network, pt), pt)
    for b, val in idx.as_dict().items():
        row[base.index(b)] = val
    return row


def run_scenario(scenario: Scenario, network: Network | None = None) -> ScenarioTrace:
    """Run the scenario; a failed grid solve ends the trace with a collapse marker."""
    base = network if network is not None else load_case(scenario.case)
    ids = tuple(base.ids)
    reference = scenario.reference_bus if scenario.reference_bus is not None else ids[base.n]
    kind = scenario.index_kind
    physics = GridPhysics(base, reference, scenario.var_limits)
    profile = LoadProfile(scenario.events)
    taus = draw_taus(scenario, ids)
    gamma = scenario.gamma
    agents = AgentNetwork(base, kind, taus, gamma=gamma)
    streams = NoiseStreams(ids, scenario.seed)
    gen_ids = ids[base.n:]

    R = scenario.rounds_per_physics
    dt = scenario.dt_agent
    warm_solves = int(round(scenario.warmup / scenario.dt_physics))
    n_solves = int(round(scenario.duration / scenario.dt_physics))
    n_rounds = n_solves * R + 1
    t_first = -warm_solves * scenario.dt_physics

    times = np.empty(n_rounds)
    xs = np.full((n_rounds, base.size), np.nan)
    ws = np.full((n_rounds, base.size), np.nan)
    alerts = np.zeros((n_rounds, base.size), dtype=bool)
    limited = np.zeros((n_rounds, base.m), dtype=bool)
    phys_of = np.zeros(n_rounds, dtype=int)
    phys_t, V, TH, P, Q, ORC, RES = [], [], [], [], [], [], []
    events: list[dict] = []
    collapse = None

    consensus_live = False
    next_consensus = 0.0
    rec = 0
    total_rounds = (warm_solves + n_solves) * R + 1
    for r in range(total_rounds):
        t = t_first + r * dt
        recording = r >= warm_solves * R
        if r % R == 0:
            factor, overrides = profile.at(max(t, 0.0))
            before = set(physics.limited)
            try:
                pt = physics.solve(factor, overrides, t)
                orc = _oracle_row(pt, kind, base) if recording else None
            except (PowerFlowError, CollapseError) as exc:
                collapse = {"t": t, "reason": str(exc)}
                events.append({"t": t, "bus": None, "event": "collapse"})
                log.warning("collapse at t=%.2f: %s", t, exc)
                break
            for b in sorted(physics.limited ^ before):
                events.append({"t": t, "bus": b, "event": "grid-limit" if b in physics.limited
                               else "grid-release", "source": "grid"})
            perm = [pt.network.index(b) for b in ids]
            v_true = pt.snapshot.v_mag[perm]
            th_true = pt.snapshot.theta[perm]
            p_true, q_true = pt.p[perm], pt.q[perm]
            snap_true = PhasorSnapshot(th_true, v_true, t)
            if recording:
                phys_t.append(t)
                V.append(v_true); TH.append(th_true); P.append(p_true); Q.append(q_true)
                ORC.append(orc)
                p_chk, q_chk = injections(pt.network, pt.snapshot)
                RES.append(max(np.abs(p_chk - pt.p).max(), np.abs(q_chk - pt.q).max()))
            q_by_bus = dict(zip(ids, q_true.tolist()))

        meas = sample_measurement(snap_true, scenario.noise, streams)
        if recording:
            # the record for this instant is taken before the agents act on it
            s = agents.state_vector()
            times[rec] = t
            xs[rec] = agents.x_network_order(s)
            ws[rec] = [agents.agents[b].state.w for b in ids]
            alerts[rec] = [agents.agents[b].state.alert for b in ids]
            limited[rec] = [agents.agents[b].state.x is not None for b in gen_ids]
            phys_of[rec] = len(phys_t) - 1
            rec += 1
            if rec == n_rounds:
                break

        agents.step_vector(meas.theta, meas.v_mag, p_true, q_true, dt, scenario.scheme)
        for bus, ev in agents.supervise(q_by_bus, t, scenario.hysteresis_window, exempt={reference}):
            events.append({"t": t, "bus": bus, "event": ev, "source": "agent"})

        if t >= next_consensus - 1e-9:
            agents.run_consensus(measurements_from(base, meas, p_true, q_true, t), rounds=0)
            consensus_live, c_rounds = True, 0
            next_consensus += scenario.consensus_period
        if consensus_live:
            snap = [(a.state.w, a.state.w_bus) for a in agents.agents.values()]
            agents.consensus_round(measurements_from(base, meas, p_true, q_true, t))
            if snap == [(a.state.w, a.state.w_bus) for a in agents.agents.values()]:
                consensus_live = False
                events.append({"t": t, "bus": None, "event": "consensus", "rounds": c_rounds,
                               "w": _consensus_value(agents)})
            else:
                c_rounds += 1

    sl = slice(0, rec)
    return ScenarioTrace(
        scenario=scenario, bus_ids=ids, load_ids=ids[: base.n], gen_ids=gen_ids, taus=taus,
        times=times[sl], x=xs[sl], w=ws[sl], alerts=alerts[sl], limited=limited[sl],
        physics_of_round=phys_of[sl], phys_times=np.array(phys_t), v=np.array(V).reshape(-1, base.size),
        theta=np.array(TH).reshape(-1, base.size), p=np.array(P).reshape(-1, base.size),
        q=np.array(Q).reshape(-1, base.size), oracle=np.array(ORC).reshape(-1, base.size),
        residuals=np.array(RES), events=events, collapse=collapse,
    )


def _consensus_value(agents: AgentNetwork):
    st = next(iter(agents.agents.values())).state
    return {"w": st.w, "bus": st.w_bus}
