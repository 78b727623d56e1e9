import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcpi.agents import (Agent, AgentNetwork, Inbox, LocalData, LocalityError, NeighborMessage,
                         Scheme, SchemeConfig, dense_system, euler_diverges,
                         euler_stability_bound, grow_areas, initial_state,
                         jacobi_spectral_radius, max_consensus_step, measurements_from,
                         partition_multiarea, severity, threshold_alert, var_limit_update)
from vcpi.grid import CaseError, bundled_case, load_case
from vcpi.oracle import IndexKind, compute_index
from vcpi.powerflow import assemble_jacobian, solve_power_flow
from vcpi.randcase import random_network


def _settle(net, pt, kind, rounds, tau=1.0, h=0.02, **kw):
    agents = AgentNetwork(net, kind, tau, **kw)
    s = pt.snapshot
    for _ in range(rounds):
        agents.step_vector(s.theta, s.v_mag, pt.p, pt.q, h)
    return agents


def _oracle(net, pt, kind):
    return compute_index(kind, assemble_jacobian(net, pt), pt).values


# --- locality ---------------------------------------------------------------

def test_inbox_rejects_non_neighbours():
    msg = NeighborMessage(9, 1.0, 0.0, 0.0, 0.0)
    with pytest.raises(LocalityError):
        Inbox(1, frozenset({2, 3}), {9: msg})
    box = Inbox(1, frozenset({2}), {})
    with pytest.raises(LocalityError):
        box[9]
    assert not box.complete()


def test_messages_only_travel_along_branches(case3):
    agents = AgentNetwork(case3, IndexKind.DVDQ)
    pt = solve_power_flow(case3)
    meas = measurements_from(case3, pt.snapshot, pt.p, pt.q)
    boxes = agents.deliver(agents.outgoing(meas))
    graph = {1: {2}, 2: {1, 3}, 3: {2}}
    assert {b: set(box.messages) for b, box in boxes.items()} == graph


def test_message_serialisation_is_flat():
    d = NeighborMessage(4, 1.01, -0.1, None, 0.5, 0.2, mode_changed=True, round=7).to_dict()
    assert d == {"round": 7, "sender": 4, "phasor": {"v": 1.01, "theta": -0.1},
                 "states": {"y": 0.5, "z": 0.2}, "mode_changed": True}


# --- convergence ------------------------------------------------------------

@pytest.mark.parametrize("kind", list(IndexKind))
def test_message_passing_matches_vector_path(case3, kind):
    pt = solve_power_flow(case3)
    meas = measurements_from(case3, pt.snapshot, pt.p, pt.q)
    a = AgentNetwork(case3, kind, 2.0)
    b = AgentNetwork(case3, kind, 2.0)
    s = pt.snapshot
    for _ in range(200):
        a.step(meas, 0.05)
        b.step_vector(s.theta, s.v_mag, pt.p, pt.q, 0.05)
    assert a.estimates() == pytest.approx(b.estimates(), abs=1e-13)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(list(IndexKind)),
       init=st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_limit_does_not_depend_on_initial_state(seed, kind, init):
    net = random_network(seed, 5)
    pt = solve_power_flow(net)
    x0, y0, _ = init
    # dQG/dQL needs its auxiliary states to start balanced (zero sum), zero does that
    aux = 0.0 if kind is IndexKind.DQGDQL else y0
    start = {b: (x0 * (k + 1), aux * k, 0.0) for k, b in enumerate(net.ids)}
    h = 0.5 * euler_stability_bound(np.linalg.eigvals(
        dense_system(kind, net, pt.snapshot.theta, pt.snapshot.v_mag, pt.p, pt.q)[0]), 1.0)
    agents = _settle(net, pt, kind, 4000, h=min(h, 0.05), init=start)
    assert np.abs(agents.load_estimates() - _oracle(net, pt, kind)).max() < 1e-6


def test_nonuniform_time_constants_same_limit_when_lossless():
    net = random_network(5, 6, lossy=False)
    pt = solve_power_flow(net)
    taus = {b: 1.0 + 0.3 * k for k, b in enumerate(net.ids)}
    agents = _settle(net, pt, IndexKind.DVLDVG, 6000, tau=taus)
    assert np.abs(agents.load_estimates() - _oracle(net, pt, IndexKind.DVLDVG)).max() < 1e-8


def test_dropped_messages_hold_the_receiver(case3):
    pt = solve_power_flow(case3)
    meas = measurements_from(case3, pt.snapshot, pt.p, pt.q)
    agents = AgentNetwork(case3, IndexKind.DVLDVG, 1.0)
    agents.step(meas, 0.02)
    before = agents.agents[3].state.x
    done = agents.step(meas, 0.02, dropped={(2, 3)})
    assert done == {1: True, 2: True, 3: False}
    assert agents.agents[3].state.x == before
    orc = _oracle(case3, pt, IndexKind.DVLDVG)
    for _ in range(1500):
        agents.step(meas, 0.02, dropped={(2, 3)} if agents.round % 5 == 0 else ())
    # skipped rounds act like a slower filter at bus 3, which shifts the lossy limit slightly
    assert np.abs(agents.load_estimates() - orc).max() < 1e-4
    for _ in range(1500):
        agents.step(meas, 0.02)
    assert np.abs(agents.load_estimates() - orc).max() < 1e-9


def test_jacobi_reaches_euler_limit_when_lossless():
    net = random_network(7, 8, lossy=False)
    pt = solve_power_flow(net)
    s = pt.snapshot
    A, _ = dense_system(IndexKind.DVDQ, net, s.theta, s.v_mag, pt.p, pt.q)
    assert jacobi_spectral_radius(A) < 1
    agents = AgentNetwork(net, IndexKind.DVDQ)
    for _ in range(3000):
        agents.step_vector(s.theta, s.v_mag, pt.p, pt.q, 0.0, Scheme.JACOBI)
    assert np.abs(agents.load_estimates() - _oracle(net, pt, IndexKind.DVDQ)).max() < 1e-9


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(Scheme.EULER, h=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(consensus_period=0)
    assert SchemeConfig(Scheme.JACOBI, h=0.0).index_kind is IndexKind.DVLDVG


# --- step-size bounds -------------------------------------------------------

@pytest.mark.parametrize("eigs, tau, bound", [([1.0, 10.0], 1.0, 0.2), ([2.0], 1.0, 1.0),
                                              ([0.0, 2.0], 3.0, 3.0), ([1 + 1j, 1 - 1j], 1.0, 1.0)])
def test_euler_bound(eigs, tau, bound):
    assert euler_stability_bound(np.array(eigs), tau) == pytest.approx(bound)


def test_euler_divergence_brackets_bound():
    A = np.diag([1.0, 10.0])
    assert not euler_diverges(A, 1.0, 0.19)
    assert euler_diverges(A, 1.0, 0.21)


def test_jacobi_radius_of_resistive_triangle():
    net = load_case(bundled_case("case3_resistive"))
    pt = solve_power_flow(net)
    A, _ = dense_system(IndexKind.DVDQ, net, pt.snapshot.theta, pt.snapshot.v_mag, pt.p, pt.q)
    assert jacobi_spectral_radius(A) > 1.5


# --- supervisory rules ------------------------------------------------------

def _gen_agent(q_max=1.0, kind=IndexKind.DVLDVG, gamma=None):
    loc = LocalData(7, True, {}, 0j, q_max)
    return Agent(loc, initial_state(loc, kind, 1.0, gamma=gamma))


def test_sustained_limit_switches_once_then_releases():
    agent = _gen_agent()
    t = np.arange(0, 30, 0.01)
    q = np.where(t < 15, 1.2, 0.8)
    events = [tt for tt, qq in zip(t, q) if var_limit_update(agent, qq, tt, 5.0)]
    assert events == pytest.approx([5.0, 20.0])
    assert agent.state.x is None


def test_hysteresis_ignores_short_excursions():
    agent = _gen_agent()
    t = np.arange(0, 100, 0.01)
    q = 1.0 + 0.1 * np.sign(np.sin(2 * np.pi * t / 8.0) + 1e-12)
    assert not any(var_limit_update(agent, qq, tt, 5.0) for tt, qq in zip(t, q))


def test_switching_resets_estimate():
    agent = _gen_agent()
    for tt in np.arange(0, 6, 0.5):
        var_limit_update(agent, 2.0, tt, 5.0)
    assert agent.state.x == 0.0 and agent.state.mode_changed


def test_threshold_alert_persistence():
    loc = LocalData(3, False, {}, 0j)
    agent = Agent(loc, initial_state(loc, IndexKind.DVLDVG, 1.0, gamma=1.2))
    flips = []
    for tt in np.arange(0, 40, 0.1):
        agent.state.x = 1.3 if 5 <= tt < 20 else 1.0
        if threshold_alert(agent, IndexKind.DVLDVG, tt, 5.0):
            flips.append((round(tt, 1), agent.state.alert))
    assert flips == [(10.0, True), (25.0, False)]


@pytest.mark.parametrize("kind, x, s", [(IndexKind.DVDQ, -0.3, 0.3), (IndexKind.DVLDVG, 1.2, 1.2),
                                        (IndexKind.DQGDQL, -1.4, 1.4)])
def test_severity_orientation(kind, x, s):
    assert severity(kind, x) == s


# --- max-consensus ----------------------------------------------------------

@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 12))
    parents = [draw(st.integers(0, k - 1)) for k in range(1, n)]
    g = nx.Graph([(p, k) for k, p in enumerate(parents, start=1)])
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=n))
    g.add_edges_from((a, b) for a, b in extra if a != b)
    values = draw(st.lists(st.sampled_from([0.5, 1.0, 1.5, 2.0, 2.5]), min_size=n, max_size=n))
    return g, values


@settings(max_examples=60, deadline=None)
@given(case=connected_graphs(), kind=st.sampled_from(list(IndexKind)))
def test_consensus_reaches_extreme_within_diameter(case, kind):
    g, values = case
    values = [v - 3 if kind is IndexKind.DQGDQL else v for v in values]
    agents = {}
    for k in g.nodes:
        loc = LocalData(k, False, {j: 1j for j in g.neighbors(k)})
        st_ = initial_state(loc, kind, 1.0, x0=values[k])
        st_.w, st_.w_bus = (abs(values[k]) if kind is IndexKind.DVDQ else values[k]), k
        agents[k] = Agent(loc, st_)
    for _ in range(nx.diameter(g)):
        msgs = {k: NeighborMessage(k, 1.0, 0.0, a.state.x, 0.0, w=a.state.w, w_bus=a.state.w_bus)
                for k, a in agents.items()}
        boxes = {k: Inbox(k, agents[k].local.neighbors, {j: msgs[j] for j in g.neighbors(k)})
                 for k in agents}
        max_consensus_step(agents, boxes, kind)
    key = [severity(kind, v) for v in values]
    target_bus = min(k for k in g.nodes if key[k] == max(key))
    assert {(a.state.w_bus) for a in agents.values()} == {target_bus}


def test_consensus_on_ne39_identifies_worst_bus(ne39, ne39_point):
    kind = IndexKind.DVLDVG
    agents = _settle(ne39, ne39_point, kind, 10000, tau=10.0, h=0.01)
    meas = measurements_from(ne39, ne39_point.snapshot, ne39_point.p, ne39_point.q)
    rounds = agents.run_consensus(meas)
    assert rounds <= nx.diameter(nx.Graph([(b.from_bus, b.to_bus) for b in ne39.branches]))
    assert {a.state.w_bus for a in agents.agents.values()} == {12}


# --- multi-area ---------------------------------------------------------------

def test_area_growth_partitions_all_buses(ne39):
    areas = grow_areas(ne39, [1, 16, 29])
    assert set(areas) == set(ne39.ids) and set(areas.values()) == {0, 1, 2}


def test_partition_validation(ne39):
    with pytest.raises(CaseError, match="partition"):
        partition_multiarea(ne39, {b: 0 for b in ne39.ids[:-1]})
    split = {b: 0 for b in ne39.ids}
    split[1] = split[9] = 1         # joined only through bus 39, which stays in area 0
    with pytest.raises(CaseError, match="connected"):
        partition_multiarea(ne39, split)


def test_three_areas_match_single_area(ne39, ne39_point):
    s = ne39_point.snapshot
    args = (s.theta, s.v_mag, ne39_point.p, ne39_point.q)
    one = partition_multiarea(ne39, {b: 0 for b in ne39.ids}, IndexKind.DVDQ, 10.0).centralized_solve(*args)
    three = partition_multiarea(ne39, grow_areas(ne39, [1, 16, 29]), IndexKind.DVDQ, 10.0).run(*args, 0.01, 8000)
    assert np.abs(one - three).max() < 1e-9
    assert np.abs(one[: ne39.n] - _oracle(ne39, ne39_point, IndexKind.DVDQ)).max() < 1e-10
