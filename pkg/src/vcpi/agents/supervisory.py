"""Reactive-limit switching, threshold alerts and max-consensus.

All three are per-agent rules driven by a local clock.  Time-persistence
(hysteresis) is tracked by remembering when the current condition began.
"""

from __future__ import annotations

from typing import Mapping

from ..oracle import IndexKind
from ..powerflow import GenMode
from .laws import Agent
from .state import AgentState, Inbox

# reactive outputs within this margin of the limit count as "at the limit"
Q_LIMIT_TOL = 1e-9


def switch_mode(agent: Agent, at_limit: bool) -> bool:
    """Move a generator agent onto the load law (or back); True if it changed."""
    st = agent.state
    if not agent.local.generator:
        raise ValueError(f"bus {agent.bus} is not a generator")
    if at_limit == (st.x is not None):
        return False
    st.x = 0.0 if at_limit else None
    st.mode = GenMode.PQ_LIMIT if at_limit else GenMode.PV
    st.mode_changed = True
    st.over_since = st.under_since = None
    return True


def _persisted(since: float | None, cond: bool, clock: float, window: float):
    """Update a condition start time; return (new start, held for >= window)."""
    if not cond:
        return None, False
    if since is None:
        since = clock
    return since, clock - since >= window


def var_limit_update(agent: Agent, q_measured: float, clock: float, window: float) -> bool:
    """Hysteresis on the reactive limit; returns True when the mode switched.

    A PV agent whose output sits at or above ``q_max`` for ``window`` seconds
    takes up the load law with ``x = 0``.  A limited agent returns to PV once
    its output has stayed below ``q_max`` for the same window.
    """
    st, qmax = agent.state, agent.local.q_max
    if qmax is None or not agent.local.generator:
        return False
    over = q_measured >= qmax - Q_LIMIT_TOL
    if st.x is None:
        st.over_since, held = _persisted(st.over_since, over, clock, window)
        return switch_mode(agent, True) if held else False
    st.under_since, held = _persisted(st.under_since, not over, clock, window)
    return switch_mode(agent, False) if held else False


def severity(kind: IndexKind, x: float) -> float:
    """Distance-to-collapse reading of an index value (grows toward collapse).

    dV/dQ is judged by magnitude: its sign follows the sign convention of
    reactive injections, which is negative for consuming loads.
    """
    if kind is IndexKind.DVDQ:
        return abs(x)
    if kind is IndexKind.DVLDVG:
        return x
    return -x


def threshold_alert(agent: Agent, kind: IndexKind, clock: float, window: float) -> bool:
    """Raise (or clear) the alert once severity stays above (below) gamma for ``window``.

    Returns True when the flag changed.  Agents without ``x`` or ``gamma``
    never alert.
    """
    st = agent.state
    if st.gamma is None or st.x is None:
        changed = st.alert
        st.alert = False
        st.above_since = st.below_since = None
        return changed
    above = severity(kind, st.x) > st.gamma
    if not st.alert:
        st.above_since, held = _persisted(st.above_since, above, clock, window)
        st.below_since = None
    else:
        st.below_since, held = _persisted(st.below_since, not above, clock, window)
        st.above_since = None
    if held:
        st.alert = not st.alert
        st.above_since = st.below_since = None
        return True
    return False


# --- max-consensus --------------------------------------------------------

def consensus_init(agents: Mapping[int, Agent], kind: IndexKind) -> None:
    """Agents with an estimate start from it; the rest from the open-circuit value.

    dV/dQ starts from ``|x|`` (worst case is the largest magnitude) and
    dQG/dQL runs min-consensus on ``x``.
    """
    kind = IndexKind.parse(kind)
    for bus, agent in agents.items():
        st = agent.state
        if st.x is None:
            st.w, st.w_bus = kind.open_circuit, None
        else:
            st.w = abs(st.x) if kind is IndexKind.DVDQ else st.x
            st.w_bus = bus


def _better(kind: IndexKind, a: tuple, b: tuple) -> bool:
    """Is candidate ``a = (w, bus)`` strictly preferred over ``b``?"""
    (wa, ba), (wb, bb) = a, b
    if wa != wb:
        return wa > wb if kind.worst_is_max else wa < wb
    if ba is None:
        return False
    return bb is None or ba < bb


def consensus_update(state: AgentState, inbox: Inbox, kind: IndexKind) -> None:
    best = (state.w, state.w_bus)
    for _, msg in inbox.items():
        cand = (msg.w, msg.w_bus)
        if _better(kind, cand, best):
            best = cand
    state.w, state.w_bus = best


def max_consensus_step(agents: Mapping[int, Agent], messages: Mapping[int, Inbox], kind) -> None:
    """One synchronous round of max- (min- for dQG/dQL) consensus.

    ``messages`` must be built from the pre-round states, so in-place
    updates here cannot leak within the round.
    """
    kind = IndexKind.parse(kind)
    for bus, agent in agents.items():
        consensus_update(agent.state, messages[bus], kind)
