"""Synchronous rounds of bus agents: measure, exchange along branches, update.

:class:`AgentNetwork` owns one :class:`~vcpi.agents.laws.Agent` per bus and
runs rounds two ways.  :meth:`AgentNetwork.step` is the reference path: each
agent is handed only its own measurement and an inbox of neighbour
messages.  :meth:`AgentNetwork.step_vector` performs the same arithmetic as
one sparse-pattern matrix update over all agents, which is what long
scenarios use; tests hold the two paths to rounding agreement.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..grid import Network, PhasorSnapshot
from ..oracle import IndexKind
from ..powerflow import _partials
from .laws import Agent, update_agent
from .supervisory import (consensus_init, max_consensus_step, switch_mode,
                          threshold_alert, var_limit_update)
from .state import (Inbox, LocalMeasurement, NeighborMessage, Scheme, initial_state,
                    local_data)


def measurements_from(network: Network, snapshot: PhasorSnapshot, p, q,
                      t: float = 0.0) -> dict[int, LocalMeasurement]:
    """Split a network-ordered snapshot into per-bus measurements."""
    return {bid: LocalMeasurement(float(snapshot.v_mag[k]), float(snapshot.theta[k]),
                                  float(p[k]), float(q[k]), t)
            for k, bid in enumerate(network.ids)}


def dense_system(kind: IndexKind, network: Network, theta, v, p, q):
    """Dense ``(A, b)`` of a filter, rows in the network's internal order.

    Same matrices as the oracle's sparse builders, evaluated from measured
    phasors and injections.  Unknowns are ``(x, y)`` or ``(x, y, z)``.
    """
    n = network.n
    dP_dth, dP_dV, dQ_dth, dQ_dV = _partials(network, PhasorSnapshot(theta, v), p, q)
    L, G = slice(0, n), slice(n, None)
    if kind is IndexKind.DVDQ:
        vl = v[:n]
        A = np.block([[dQ_dV[L, L] * vl, dQ_dth[L]], [dP_dV[:, L] * vl, dP_dth]])
        b = np.concatenate([q[:n], np.zeros(len(v))])
    elif kind is IndexKind.DVLDVG:
        A = np.block([[dQ_dV[L, L], dQ_dth[L]], [dP_dV[:, L], dP_dth]])
        b = -np.concatenate([dQ_dV[L, G].sum(axis=1), dP_dV[:, G].sum(axis=1)])
    else:
        N = len(v)
        PVt = dP_dV[:, L].T
        A = np.block([
            [dQ_dV[L, L].T, PVt, -PVt],
            [dQ_dth[L].T, dP_dth.T, np.zeros((N, N))],
            [np.zeros((N, n)), np.zeros((N, N)), dP_dth.T],
        ])
        b = np.concatenate([dQ_dV[G, L].sum(axis=0), np.zeros(N), -dQ_dth[G].sum(axis=0)])
    return A, b


class AgentNetwork:
    """Per-bus filter agents over a fixed physical topology.

    ``tau`` is a scalar or a ``{bus: tau}`` mapping.  ``init`` optionally maps
    bus ids to ``(x0, y0, z0)`` triples; missing entries start at zero.
    """

    def __init__(self, network: Network, kind, tau=10.0, *, init: Mapping | None = None,
                 gamma: Mapping | float | None = None):
        self.network = network
        self.kind = IndexKind.parse(kind)
        self.locals = local_data(network)
        self.round = 0
        init = init or {}
        self.agents: dict[int, Agent] = {}
        for bid, loc in self.locals.items():
            t = tau[bid] if isinstance(tau, Mapping) else tau
            g = gamma.get(bid) if isinstance(gamma, Mapping) else gamma
            x0, y0, z0 = init.get(bid, (0.0, 0.0, 0.0))
            self.agents[bid] = Agent(loc, initial_state(loc, self.kind, float(t), x0=x0,
                                                        y0=y0, z0=z0, gamma=g))
        self._layout = None
        self._layout_key = None

    # --- bookkeeping ------------------------------------------------------

    @property
    def limited(self) -> frozenset:
        """Generators whose agents currently run the load law."""
        return frozenset(b for b, a in self.agents.items()
                         if a.local.generator and a.state.x is not None)

    def set_limit_mode(self, bus: int, at_limit: bool) -> bool:
        """Switch a generator agent between the generator and load laws."""
        return switch_mode(self.agents[bus], at_limit)

    def estimates(self) -> dict[int, float]:
        """Current ``x`` of every agent running the load law."""
        return {b: a.state.x for b, a in self.agents.items() if a.state.x is not None}

    def load_estimates(self) -> np.ndarray:
        """``x`` over the physical load buses, in network order."""
        return np.array([self.agents[b].state.x for b in self.network.ids[: self.network.n]])

    # --- reference path ---------------------------------------------------

    def outgoing(self, measurements: Mapping[int, LocalMeasurement]) -> dict[int, NeighborMessage]:
        out = {}
        for bid, agent in self.agents.items():
            st, m = agent.state, measurements[bid]
            out[bid] = NeighborMessage(bid, m.v, m.theta, st.x, st.y, st.z,
                                       st.mode_changed, st.alert, self.round, st.w, st.w_bus)
        return out

    def deliver(self, outgoing: Mapping[int, NeighborMessage], dropped=()) -> dict[int, Inbox]:
        """Route each message along physical branches; ``dropped`` holds (sender, receiver) pairs."""
        dropped = set(dropped)
        inboxes = {}
        for bid, loc in self.locals.items():
            msgs = {j: outgoing[j] for j in loc.incident if (j, bid) not in dropped}
            inboxes[bid] = Inbox(bid, loc.neighbors, msgs)
        return inboxes

    def step(self, measurements: Mapping[int, LocalMeasurement], h: float,
             scheme: Scheme = Scheme.EULER, dropped=()) -> dict[int, bool]:
        """One synchronous round; returns which agents updated."""
        inboxes = self.deliver(self.outgoing(measurements), dropped)
        done = {bid: update_agent(self.kind, agent, inboxes[bid], measurements[bid], h, scheme)
                for bid, agent in self.agents.items()}
        self._end_round()
        return done

    def consensus_round(self, measurements: Mapping[int, LocalMeasurement]) -> None:
        max_consensus_step(self.agents, self.deliver(self.outgoing(measurements)), self.kind)

    def run_consensus(self, measurements: Mapping[int, LocalMeasurement],
                      rounds: int | None = None) -> int:
        """Re-seed and run consensus; returns rounds until no value changed.

        With ``rounds`` given, exactly that many rounds run.
        """
        consensus_init(self.agents, self.kind)
        k = 0
        while rounds is None or k < rounds:
            before = [(a.state.w, a.state.w_bus) for a in self.agents.values()]
            self.consensus_round(measurements)
            k += 1
            if rounds is None and before == [(a.state.w, a.state.w_bus) for a in self.agents.values()]:
                return k - 1
        return k

    def supervise(self, q_measured: Mapping[int, float], clock: float, window: float,
                  exempt=()) -> list:
        """VAR-limit and alert rules for every agent; returns ``(bus, event)`` pairs.

        Generators in ``exempt`` (e.g. the angle reference) never switch.
        """
        events = []
        for bus, agent in self.agents.items():
            if agent.local.generator and bus not in exempt and var_limit_update(agent, q_measured[bus], clock, window):
                events.append((bus, "limit" if agent.state.x is not None else "release"))
            if threshold_alert(agent, self.kind, clock, window):
                events.append((bus, "alert" if agent.state.alert else "clear"))
        return events

    def _end_round(self):
        for a in self.agents.values():
            a.state.mode_changed = False
        self.round += 1

    # --- vector path ------------------------------------------------------

    def effective_network(self) -> Network:
        """The network as the agents see it: limited generators typed as loads."""
        net = self.network
        for bid in sorted(self.limited):
            net = net.retype_as_load(bid, net.buses[net.index(bid)].q_inject)
        return net

    def layout(self):
        """Cached effective network plus index maps into it."""
        key = self.limited
        if self._layout is None or self._layout_key != key:
            self._layout_key = key
            eff = self.effective_network()
            perm = np.array([self.network.index(b) for b in eff.ids])
            N, n = eff.size, eff.n
            rows = list(eff.ids[:n]) + list(eff.ids)
            if self.kind is IndexKind.DQGDQL:
                rows += list(eff.ids)
            tau = np.array([self.agents[b].state.tau for b in rows])
            self._layout = (eff, perm, n, N, rows, tau)
        return self._layout

    def state_vector(self) -> np.ndarray:
        eff, _, n, N, rows, _ = self.layout()
        ids = eff.ids
        parts = [[self.agents[b].state.x for b in ids[:n]], [self.agents[b].state.y for b in ids]]
        if self.kind is IndexKind.DQGDQL:
            parts.append([self.agents[b].state.z for b in ids])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def set_state_vector(self, vec: np.ndarray) -> None:
        eff, _, n, N, _, _ = self.layout()
        ids = eff.ids
        for k in range(n):
            self.agents[ids[k]].state.x = float(vec[k])
        for k in range(N):
            self.agents[ids[k]].state.y = float(vec[n + k])
        if self.kind is IndexKind.DQGDQL:
            for k in range(N):
                self.agents[ids[k]].state.z = float(vec[n + N + k])

    def system(self, theta, v, p, q):
        """``(A, b)`` from network-ordered measurement arrays, in effective order."""
        eff, perm, *_ = self.layout()
        return dense_system(self.kind, eff, theta[perm], v[perm], p[perm], q[perm])

    def step_vector(self, theta, v, p, q, h: float, scheme: Scheme = Scheme.EULER) -> np.ndarray:
        """One round of every agent at once, from network-ordered arrays.

        Returns the new state vector (effective order, see :meth:`layout`).
        """
        A, b = self.system(np.asarray(theta), np.asarray(v), np.asarray(p), np.asarray(q))
        s = self.state_vector()
        f = b - A @ s
        tau = self.layout()[5]
        s = s + (f * (h / tau) if scheme is Scheme.EULER else f / np.diag(A))
        self.set_state_vector(s)
        self._end_round()
        return s

    def x_network_order(self, s: np.ndarray | None = None) -> np.ndarray:
        """``x`` per bus in network order, NaN where an agent has none."""
        eff, perm, n, *_ = self.layout()
        s = self.state_vector() if s is None else s
        out = np.full(self.network.size, np.nan)
        out[perm[:n]] = s[:n]
        return out
