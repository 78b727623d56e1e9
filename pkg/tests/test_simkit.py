import json
import math

import numpy as np
import pytest

from vcpi.grid import PhasorSnapshot
from vcpi.oracle import IndexKind
from vcpi.simkit import (LoadProfile, NoiseModel, NoiseStreams, RampLoads, Scenario,
                         ScenarioError, SetLoad, ShedLoads, TauFixed, TauUniform,
                         compare_to_oracle, draw_taus, load_scenario, run_scenario,
                         sample_measurement, scenario_from_dict)


# --- noise ------------------------------------------------------------------

def test_noise_statistics():
    noise = NoiseModel(0.001, math.radians(0.01))
    streams = NoiseStreams(range(20), seed=3)
    snap = PhasorSnapshot(np.zeros(20), np.ones(20))
    draws = np.array([(s.v_mag - 1.0, s.theta) for s in
                      (sample_measurement(snap, noise, streams) for _ in range(5000))])
    v, th = draws[:, 0].ravel(), draws[:, 1].ravel()
    assert abs(v.mean()) < 3 * 0.001 / math.sqrt(v.size)
    assert v.std() == pytest.approx(0.001, rel=0.02)
    assert th.std() == pytest.approx(math.radians(0.01), rel=0.02)
    # no cross-bus correlation
    c = np.corrcoef(draws[:, 0].T)
    assert np.abs(c - np.eye(20)).max() < 0.06


def test_noise_stream_per_bus_is_stable():
    a = NoiseStreams([1, 2, 3], seed=9, chunk=7)
    b = NoiseStreams([3, 1], seed=9, chunk=1000)
    xa = np.array([a.next() for _ in range(20)])
    xb = np.array([b.next() for _ in range(20)])
    assert np.array_equal(xa[:, 2], xb[:, 0])
    assert np.array_equal(xa[:, 0], xb[:, 1])


def test_zero_noise_is_identity():
    snap = PhasorSnapshot([0.1, 0.2], [1.0, 0.99])
    assert sample_measurement(snap, NoiseModel.off(), NoiseStreams([1, 2], 0)) is snap


def test_total_phasor_error():
    assert NoiseModel().total_phasor_error() == pytest.approx(2 * math.hypot(1e-3, math.radians(0.01)))


# --- scenario description ---------------------------------------------------

def test_load_profile():
    prof = LoadProfile([RampLoads(10, 1.2, 20), SetLoad(25, 2, -0.5, -0.1), ShedLoads(30)])
    assert prof.at(5) == (1.0, {})
    assert prof.at(15)[0] == pytest.approx(1.1)
    assert prof.at(27) == (pytest.approx(1.2), {2: (-0.5, -0.1)})
    assert prof.at(31) == (1.0, {})


@pytest.mark.parametrize("over, msg", [
    ({"events": [ShedLoads(5), ShedLoads(1)]}, "ordered"),
    ({"dt_physics": 0.25, "dt_agent": 0.1}, "whole number"),
    ({"events": [RampLoads(5, 1.1, 500)]}, "t_end"),
    ({"tau": TauUniform(5, 1)}, "tau"),
])
def test_scenario_validation(over, msg):
    with pytest.raises(ScenarioError, match=msg):
        Scenario("x.json", **over)


def test_toml_parsing(data_dir):
    sc = load_scenario(data_dir / "case3_ramp.toml")
    assert sc.index_kind is IndexKind.DVLDVG
    assert sc.events == (RampLoads(5.0, 1.2, 10.0), ShedLoads(25.0))
    assert not sc.noise.enabled and sc.tau == TauFixed(1.0)
    assert sc.rounds_per_physics == 50


@pytest.mark.parametrize("data, msg", [
    ({}, "case"),
    ({"case": "bundled:case3", "events": [{"action": "explode", "t": 1}]}, "action"),
    ({"case": "bundled:case3", "tau": {"gamma": 3}}, "tau"),
    ({"case": "bundled:case3", "duraton": 3}, "unknown"),
])
def test_bad_scenarios(data, msg):
    with pytest.raises(ScenarioError, match=msg):
        scenario_from_dict(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ScenarioError, match="no such file"):
        load_scenario(tmp_path / "none.toml")
    (tmp_path / "bad.toml").write_text("case = \n")
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "bad.toml")


def test_config_hash_tracks_content(data_dir):
    sc = load_scenario(data_dir / "case3_ramp.toml")
    assert sc.config_hash() == load_scenario(data_dir / "case3_ramp.toml").config_hash()
    assert sc.config_hash() != sc.with_overrides(seed=8).config_hash()


def test_taus_are_keyed_by_bus(data_dir):
    sc = load_scenario(data_dir / "case3_ramp.toml").with_overrides(tau=TauUniform(10, 20))
    a, b = draw_taus(sc, [1, 2, 3]), draw_taus(sc, [3, 2])
    assert a[3] == b[3] and all(10 <= t <= 20 for t in a.values())


# --- runs ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def clean_trace():
    from conftest import DATA
    return run_scenario(load_scenario(DATA / "case3_ramp.toml"))


def test_zero_noise_tracks_oracle(clean_trace):
    report = compare_to_oracle(clean_trace)
    assert report.passed
    assert all(w.statistic == "max" and w.worst < 1e-6 for w in report.windows)
    lag = report.ramps[0].lag
    # estimates trail a rising target by a fraction of tau (the coupled modes are faster)
    assert all(0.0 < v < 1.0 for v in lag.values())
    assert max(report.ramps[0].overshoot.values()) < 1e-6


def test_index_rises_with_ramp_and_returns(clean_trace):
    tr = clean_trace
    cols = [tr.col(b) for b in tr.load_ids]
    pre, peak = tr.x[tr.round_at(4.9), cols], tr.x[tr.round_at(24.9), cols]
    post = tr.x[tr.round_at(39.9), cols]
    assert np.all(peak > pre)
    assert np.abs(post - pre).max() < 1e-6


def test_runs_are_reproducible(data_dir):
    sc = load_scenario(data_dir / "case3_ramp.toml").with_overrides(
        noise=NoiseModel(), duration=8.0, events=(), warmup=0.0)
    a, b = run_scenario(sc), run_scenario(sc)
    assert np.array_equal(a.x, b.x, equal_nan=True)
    c = run_scenario(sc.with_overrides(seed=99))
    assert not np.array_equal(a.x, c.x, equal_nan=True)


def test_collapse_is_marked(data_dir):
    sc = load_scenario(data_dir / "case3_ramp.toml").with_overrides(
        events=(RampLoads(1.0, 40.0, 10.0),), duration=12.0, warmup=0.0)
    tr = run_scenario(sc)
    assert tr.collapse is not None and 1.0 < tr.collapse["t"] < 10.0
    assert tr.events_of("collapse")
    assert not compare_to_oracle(tr).passed


def test_trace_files(clean_trace, tmp_path):
    clean_trace.write_ndjson(tmp_path / "t.ndjson", every=100)
    lines = (tmp_path / "t.ndjson").read_text().splitlines()
    meta = json.loads(lines[0])["meta"]
    assert meta["config_hash"] == clean_trace.config_hash and meta["seed"] == 7
    rec = json.loads(lines[1])
    assert set(rec) == {"round", "t", "buses", "modes"}
    assert "x" in rec["buses"]["2"] and "x" not in rec["buses"]["1"]
    clean_trace.write_csv(tmp_path / "t.csv", every=100, buses=[3])
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert rows[3] == "time,bus,series,value"
    assert {r.split(",")[2] for r in rows[4:]} == {"x", "oracle", "v", "w"}
