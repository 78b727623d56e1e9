import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcpi.grid import (Branch, Bus, BusKind, CaseError, ConventionWarning,
                       PhasorSnapshot, case_to_dict, data_coefficients, load_case,
                       parse_case, save_case)
from vcpi.powerflow import injections
from vcpi.randcase import random_network


def _case(**over):
    base = {
        "buses": [
            {"id": 1, "kind": "generator", "p": 0.5, "v_set": 1.0},
            {"id": 2, "kind": "load", "p": -0.3, "q": -0.1},
            {"id": 3, "kind": "load", "p": -0.2, "q": -0.05},
        ],
        "branches": [{"from": 1, "to": 2, "g": 1.0, "b": -10.0},
                     {"from": 2, "to": 3, "g": 1.0, "b": -10.0}],
    }
    base.update(over)
    return base


def test_loads_are_ordered_first():
    net = parse_case(_case())
    assert net.ids == [2, 3, 1]
    assert (net.n, net.m) == (2, 1)


def test_admittance_rows_sum_to_shunt():
    data = _case()
    data["buses"][1]["shunt_b"] = 0.2
    net = parse_case(data)
    Y = net.Y
    assert np.allclose(Y, Y.T)
    assert np.allclose(Y.sum(axis=1), [b.shunt_admittance for b in net.buses])
    assert Y[net.index(1), net.index(2)] == -(1 - 10j)


def test_parallel_branches_merge():
    data = _case(branches=_case()["branches"] + [{"from": 2, "to": 1, "g": 0.5, "b": -5.0}])
    net = parse_case(data)
    assert len(net.branches) == 2
    assert net.Y[net.index(1), net.index(2)] == -(1.5 - 15j)


def test_disconnected_case_rejected():
    data = _case(branches=[{"from": 1, "to": 2, "g": 1.0, "b": -10.0}])
    with pytest.raises(CaseError, match="disconnected"):
        parse_case(data)


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d["buses"].append({"id": 2, "kind": "load"}), "duplicate"),
    (lambda d: d["buses"][0].pop("v_set"), "v_set"),
    (lambda d: d["buses"][1].update(kind="slack"), "kind"),
    (lambda d: d["branches"].append({"from": 3, "to": 9, "g": 0, "b": -1}), "'to'"),
    (lambda d: d["branches"].append({"from": 3, "to": 3, "g": 0, "b": -1}), "itself"),
    (lambda d: d["buses"][1].update(p="heavy"), "number"),
])
def test_bad_cases_name_the_location(mutate, msg):
    data = _case()
    mutate(data)
    with pytest.raises(CaseError, match=msg):
        parse_case(data)


def test_convention_warning():
    data = _case()
    data["branches"][0]["b"] = 3.0
    with pytest.warns(ConventionWarning, match="branches\\[0\\]"):
        parse_case(data)


def test_json_round_trip(tmp_path):
    net = random_network(3)
    save_case(net, tmp_path / "c.json")
    assert load_case(tmp_path / "c.json") == net
    assert json.loads(json.dumps(case_to_dict(net))) == case_to_dict(net)


def test_invalid_json_is_a_case_error(tmp_path):
    (tmp_path / "bad.json").write_text("{buses: ")
    with pytest.raises(CaseError, match="JSON"):
        load_case(tmp_path / "bad.json")


def test_retype_keeps_injection():
    net = parse_case(_case())
    pq = net.retype_as_load(1, 0.3)
    bus = pq.buses[pq.index(1)]
    assert bus.kind is BusKind.LOAD and bus.q_inject == 0.3 and bus.p_inject == 0.5


def test_snapshot_rejects_nonpositive_voltage():
    with pytest.raises(ValueError):
        PhasorSnapshot([0.0, 0.1], [1.0, 0.0])


def test_bus_validation():
    with pytest.raises(CaseError):
        Bus(1, BusKind.LOAD, 0.0, v_setpoint=1.0)
    with pytest.raises(CaseError):
        Branch(1, 1, 1j)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_coefficients_sum_to_injections(seed, data):
    net = random_network(seed)
    th = np.array(data.draw(st.lists(st.floats(-0.5, 0.5), min_size=net.size, max_size=net.size)))
    v = np.array(data.draw(st.lists(st.floats(0.8, 1.2), min_size=net.size, max_size=net.size)))
    snap = PhasorSnapshot(th, v)
    d, D = data_coefficients(net, snap)
    p, q = injections(net, snap)
    assert np.allclose(D.sum(axis=1), p, atol=1e-12)
    assert np.allclose(d.sum(axis=1), q, atol=1e-12)
    # the coefficients vanish wherever there is no branch
    assert np.all(d[net.Y == 0] == 0)
