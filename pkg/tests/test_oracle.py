import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vcpi.grid import bundled_case, load_case
from vcpi.oracle import (IndexKind, IndexVector, compute_index, index_dvdq_dense, oracle_fd,
                         worst_case)
from vcpi.powerflow import assemble_jacobian, solve_power_flow
from vcpi.randcase import random_network


def _indices(net, ref=None):
    pt = solve_power_flow(net, ref)
    blk = assemble_jacobian(net, pt)
    return pt, {k: compute_index(k, blk, pt) for k in IndexKind}


def test_open_circuit_values():
    _, idx = _indices(load_case(bundled_case("case3_open")))
    for kind, vec in idx.items():
        assert np.abs(vec.values - kind.open_circuit).max() < 1e-12


def test_zero_reactive_load_gives_zero_dvdq():
    _, idx = _indices(load_case(bundled_case("case3_noq")))
    assert np.abs(idx[IndexKind.DVDQ].values).max() < 1e-12


# values from the finite-difference oracle (eps 1e-6, re-solves to 1e-12)
CASE3 = {
    IndexKind.DVDQ: [-0.010245743, -0.0155512122],
    IndexKind.DVLDVG: [1.0273898538, 1.0371649745],
    IndexKind.DQGDQL: [-1.0337880975, -1.0463351856],
}


def test_case3_values(case3):
    _, idx = _indices(case3)
    for k, expected in CASE3.items():
        assert idx[k].bus_ids == (2, 3)
        assert np.allclose(idx[k].values, expected, rtol=1e-6)
    # bus 3 sits at the far end of the chain
    assert {worst_case(v)[0] for v in idx.values()} == {3}


def test_dense_route_matches_sparse(ne39, ne39_point):
    blk = assemble_jacobian(ne39, ne39_point)
    a = compute_index(IndexKind.DVDQ, blk, ne39_point).values
    b = index_dvdq_dense(blk, ne39_point).values
    assert np.abs(a - b).max() < 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000), kind=st.sampled_from(list(IndexKind)))
def test_linear_solve_matches_finite_differences(seed, kind):
    net = random_network(seed)
    pt = solve_power_flow(net)
    lin = compute_index(kind, assemble_jacobian(net, pt), pt).values
    fd = oracle_fd(net, pt, kind).values
    assert np.abs(lin - fd).max() <= 1e-6 * max(np.abs(fd).max(), 1e-12)


def test_reference_choice_does_not_matter(ne39, ne39_point):
    balanced = ne39.with_injections(ne39_point.p)
    base = None
    for ref in ne39.ids[ne39.n:]:
        _, idx = _indices(balanced, ref)
        vals = np.concatenate([idx[k].values for k in IndexKind])
        if base is None:
            base = vals
        assert np.abs(vals - base).max() < 1e-9


def test_lossless_needs_no_slack_correction():
    net = random_network(11, 6, lossy=False)
    pt, idx = _indices(net)
    for k in IndexKind:
        assert np.allclose(idx[k].values, oracle_fd(net, pt, k).values, rtol=1e-6)


@pytest.mark.parametrize("kind, values, bus", [
    (IndexKind.DVDQ, [-0.2, 0.1, -0.3], 3),
    (IndexKind.DVLDVG, [1.2, 1.3, 1.3], 2),
    (IndexKind.DQGDQL, [-1.1, -1.4, -1.2], 2),
])
def test_worst_case_direction_and_ties(kind, values, bus):
    assert worst_case(IndexVector(kind, np.array(values), (1, 2, 3)))[0] == bus


def test_kind_parsing():
    assert IndexKind.parse("dvldvg") is IndexKind.DVLDVG
    assert IndexKind.parse("DQGDQL") is IndexKind.DQGDQL
    with pytest.raises(ValueError):
        IndexKind.parse("L-index")


def test_index_grows_toward_collapse(case3):
    # heavier loading -> larger dVL/dVG at every load bus
    prev = None
    for f in (1.0, 2.0, 3.0):
        net = case3.with_injections(case3.p_spec * f, case3.q_spec * f)
        _, idx = _indices(net)
        vals = idx[IndexKind.DVLDVG].values
        if prev is not None:
            assert np.all(vals > prev)
        prev = vals
