"""Component-wise filter laws run by each bus processor.

Every function here sees one agent: its constants, its own measurement and
the inbox of messages from physically adjacent buses.  Nothing global is
passed in.  Agents carrying ``x`` (loads and generators switched to their
reactive limit) run the load law; the rest run the generator law.  A
neighbour counts as a load exactly when its message carries ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..oracle import IndexKind
from .state import AgentState, Inbox, LocalData, LocalMeasurement, Scheme


@dataclass
class Agent:
    local: LocalData
    state: AgentState

    @property
    def bus(self) -> int:
        return self.local.bus


def _coefficients(local: LocalData, meas: LocalMeasurement, inbox: Inbox):
    """Yield ``(msg, d_ij, D_ij, d_ji, D_ji, V_j)`` for each neighbour."""
    vi, ti = meas.v, meas.theta
    for j, y in local.incident.items():
        msg = inbox[j]
        G, B = -y.real, -y.imag
        dth = ti - msg.theta
        s, c = math.sin(dth), math.cos(dth)
        vv = vi * msg.v
        yield (msg, vv * (G * s - B * c), vv * (G * c + B * s),
               vv * (-G * s - B * c), vv * (G * c - B * s), msg.v)


def rhs_dvdq(local, st: AgentState, meas, inbox):
    P, Q, V = meas.p, meas.q, meas.v
    dii, Dii = -V * V * local.B_self, V * V * local.G_self
    sLd = sLD = sVd = sVD = 0.0
    for msg, d, D, _, _, _ in _coefficients(local, meas, inbox):
        if msg.x is not None:
            sLd += d * msg.x
            sLD += D * msg.x
        sVd += d * msg.y
        sVD += D * msg.y
    y = st.y
    if st.x is not None:
        x = st.x
        fx = Q * (1 - x) - P * y - (dii * x + sLd) + (Dii * y + sVD)
        fy = Q * y - P * x - (Dii * x + sLD) - (dii * y + sVd)
        return (fx, fy, None), (Q + dii, -Q + dii, None)
    fy = Q * y - sLD - (dii * y + sVd)
    return (None, fy, None), (None, -Q + dii, None)


def rhs_dvldvg(local, st: AgentState, meas, inbox):
    P, Q, V = meas.p, meas.q, meas.v
    dii, Dii = -V * V * local.B_self, V * V * local.G_self
    sLd = sLD = sVd = sVD = sGd = sGD = 0.0
    for msg, d, D, _, _, vj in _coefficients(local, meas, inbox):
        if msg.x is not None:
            sLd += d / vj * msg.x
            sLD += D / vj * msg.x
        else:
            sGd += d / vj
            sGD += D / vj
        sVd += d * msg.y
        sVD += D * msg.y
    y = st.y
    if st.x is not None:
        x = st.x
        fx = -Q / V * x - P * y - (dii / V * x + sLd) + (Dii * y + sVD) - sGd
        fy = Q * y - P / V * x - (Dii / V * x + sLD) - (dii * y + sVd) - sGD
        return (fx, fy, None), ((Q + dii) / V, -Q + dii, None)
    fy = -P / V + Q * y - sLD - (dii * y + sVd) - (Dii / V + sGD)
    return (None, fy, None), (None, -Q + dii, None)


def rhs_dqgdql(local, st: AgentState, meas, inbox):
    P, Q, V = meas.p, meas.q, meas.v
    dii, Dii = -V * V * local.B_self, V * V * local.G_self
    sLd = sLD = sVd = sVD = sVdz = sGd = sGD = 0.0
    for msg, _, _, dji, Dji, _ in _coefficients(local, meas, inbox):
        if msg.x is not None:
            sLd += dji * msg.x
            sLD += Dji * msg.x
        else:
            sGd += dji
            sGD += Dji
        sVd += dji * msg.y
        sVD += Dji * (msg.y - msg.z)
        sVdz += dji * msg.z
    y, z = st.y, st.z
    a_yz = -Q + dii
    if st.x is not None:
        x = st.x
        fx = (-Q * x - P * (y - z) - (dii * x + sLd) - (Dii * (y - z) + sVD) + sGd) / V
        fy = Q * y - P * x + (Dii * x + sLD) - (dii * y + sVd)
        fz = Q * z - (dii * z + sVdz) + sGD
        return (fx, fy, fz), ((Q + dii) / V, a_yz, a_yz)
    fy = Q * y + sLD - (dii * y + sVd)
    fz = -P + Q * z - (dii * z + sVdz) + (Dii + sGD)
    return (None, fy, fz), (None, a_yz, a_yz)


LAWS = {IndexKind.DVDQ: rhs_dvdq, IndexKind.DVLDVG: rhs_dvldvg, IndexKind.DQGDQL: rhs_dqgdql}


def update_agent(kind: IndexKind, agent: Agent, inbox: Inbox, meas: LocalMeasurement,
                 h: float, scheme: Scheme = Scheme.EULER) -> bool:
    """One local update in place; returns False (no update) on a missing message."""
    if not inbox.complete():
        return False
    st = agent.state
    f, a = LAWS[kind](agent.local, st, meas, inbox)
    if scheme is Scheme.EULER:
        g = h / st.tau
        step = [None if fk is None else g * fk for fk in f]
    else:
        step = [None if fk is None else fk / ak for fk, ak in zip(f, a)]
    if step[0] is not None:
        st.x += step[0]
    st.y += step[1]
    if step[2] is not None:
        st.z += step[2]
    return True


def _step_all(kind, agents: Mapping[int, Agent], messages: Mapping[int, Inbox],
              measurements: Mapping[int, LocalMeasurement], h: float, scheme=Scheme.EULER):
    # every agent reads the same pre-round messages, so in-place order is irrelevant
    updated = {}
    for bus, agent in agents.items():
        updated[bus] = update_agent(kind, agent, messages[bus], measurements[bus], h, scheme)
    return updated


def step_dvdq(agents, messages, measurements, h):
    return _step_all(IndexKind.DVDQ, agents, messages, measurements, h)


def step_dvldvg(agents, messages, measurements, h):
    return _step_all(IndexKind.DVLDVG, agents, messages, measurements, h)


def step_dqgdql(agents, messages, measurements, h):
    return _step_all(IndexKind.DQGDQL, agents, messages, measurements, h)


def jacobi_step(kind, agents, messages, measurements):
    """One Jacobi sweep: each agent solves its own rows with neighbours frozen."""
    return _step_all(IndexKind.parse(kind), agents, messages, measurements, 0.0, Scheme.JACOBI)
