"""End-to-end acceptance checks, shared by the test suite and ``vcpi selftest``.

Each check returns a :class:`CheckResult`; tolerances are module constants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .agents import (AgentNetwork, Scheme, empirical_onset, euler_stability_bound,
                     grow_areas, jacobi_spectral_radius, partition_multiarea,
                     var_limit_update)
from .agents.laws import Agent
from .agents.network import dense_system, measurements_from
from .agents.state import LocalData, initial_state
from .grid import Network, PhasorSnapshot, bundled_case, load_case
from .oracle import IndexKind, compute_index, oracle_fd, worst_case
from .powerflow import (_partials, assemble_jacobian, fd_partials,
                        solve_power_flow)
from .randcase import random_network
from .simkit import GridPhysics, bundled_scenario, load_scenario, run_scenario

FD_REL_TOL = 1e-6
AGENT_TOL = 1e-6
OPEN_CIRCUIT_TOL = 1e-9
JACOBIAN_TOL = 1e-6
ONSET_RTOL = 0.02
SCHEME_TOL = 1e-9
AREA_TOL = 1e-9
REFERENCE_TOL = 1e-9
SHED_TOL = 1e-3

NE39_REFERENCE = 31
TAU = 10.0
H = 0.01


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d}. {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _ne39():
    net = load_case(bundled_case("ne39"))
    return net, solve_power_flow(net, NE39_REFERENCE)


def _rel(a, b) -> float:
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def settle_agents(net: Network, point, kind, rounds: int, tau=TAU, h=H,
                  scheme=Scheme.EULER, limited=(), init=None) -> AgentNetwork:
    """Run agents at a fixed operating point; measurements in ``net`` order."""
    agents = AgentNetwork(net, kind, tau, init=init)
    for b in limited:
        agents.set_limit_mode(b, True)
    order = [point.network.index(b) for b in net.ids]
    th, v = point.snapshot.theta[order], point.snapshot.v_mag[order]
    p, q = point.p[order], point.q[order]
    for _ in range(rounds):
        agents.step_vector(th, v, p, q, h, scheme)
    return agents


# --- 1 ---------------------------------------------------------------------

def check_oracle_cross_validation(n_random: int = 10) -> CheckResult:
    t0 = time.perf_counter()
    cases = [("case3", load_case(bundled_case("case3")))]
    for seed in range(n_random):
        cases.append((f"random{seed}", random_network(1000 + seed, 4 + seed % 3)))
    worst = 0.0
    for _, net in cases:
        pt = solve_power_flow(net)
        blk = assemble_jacobian(net, pt)
        for kind in IndexKind:
            worst = max(worst, _rel(compute_index(kind, blk, pt).values,
                                    oracle_fd(net, pt, kind).values))
    dt = time.perf_counter() - t0
    ok = worst <= FD_REL_TOL and dt < 10
    return CheckResult(1, "oracle cross-validation", ok,
                       f"max rel err {worst:.2e} over {len(cases)} cases x 3 kinds, {dt:.1f}s < 10s",
                       dt, {"max_rel": worst})


# --- 2 ---------------------------------------------------------------------

def check_distributed_equals_centralized() -> CheckResult:
    t0 = time.perf_counter()
    net, pt = _ne39()
    blk = assemble_jacobian(net, pt)
    rounds = int(round(10 * TAU / H))
    errs = {}
    for kind in IndexKind:
        agents = settle_agents(net, pt, kind, rounds)
        errs[kind.value] = float(np.abs(agents.load_estimates() - compute_index(kind, blk, pt).values).max())
    worst = max(errs.values())
    return CheckResult(2, "distributed = centralized (39-bus)", worst <= AGENT_TOL,
                       f"max abs err {worst:.2e} after 10 tau = {10 * TAU:.0f}s "
                       f"(tau={TAU}, h={H}) " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()),
                       time.perf_counter() - t0, errs)


# --- 3 ---------------------------------------------------------------------

def check_open_circuit() -> CheckResult:
    t0 = time.perf_counter()
    net = load_case(bundled_case("case3_open"))
    pt = solve_power_flow(net)
    blk = assemble_jacobian(net, pt)
    worst = 0.0
    for kind in IndexKind:
        target = kind.open_circuit
        orc = compute_index(kind, blk, pt).values
        agents = settle_agents(net, pt, kind, 20000, tau=1.0, h=0.02)
        worst = max(worst, np.abs(orc - target).max(), np.abs(agents.load_estimates() - target).max())
    return CheckResult(3, "open-circuit limits", worst <= OPEN_CIRCUIT_TOL,
                       f"max deviation from (0, 1, -1) {worst:.1e}", time.perf_counter() - t0)


# --- 4 ---------------------------------------------------------------------

def check_jacobian(n_cases: int = 10) -> CheckResult:
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(n_cases):
        net = random_network(2000 + seed)
        pt = solve_power_flow(net)
        an = _partials(net, pt.snapshot, pt.p, pt.q)
        fd = fd_partials(net, pt.snapshot, 1e-6)
        worst = max(worst, max(float(np.abs(a - f).max()) for a, f in zip(an, fd)))
    return CheckResult(4, "Jacobian vs finite differences", worst <= JACOBIAN_TOL,
                       f"max abs err {worst:.1e} on {n_cases} random cases",
                       time.perf_counter() - t0)


# --- 5 ---------------------------------------------------------------------

def check_euler_boundary() -> CheckResult:
    t0 = time.perf_counter()
    net, pt = _ne39()
    s = pt.snapshot
    A, _ = dense_system(IndexKind.DVDQ, net, s.theta, s.v_mag, pt.p, pt.q)
    bound = euler_stability_bound(np.linalg.eigvals(A), TAU)
    onset = empirical_onset(A, TAU, 0.5 * bound, 2.0 * bound)
    rel = abs(onset - bound) / bound
    return CheckResult(5, "Euler stability boundary", rel <= ONSET_RTOL,
                       f"bound {bound:.5f}s vs empirical onset {onset:.5f}s (tau={TAU}), "
                       f"rel diff {rel:.1e}", time.perf_counter() - t0,
                       {"bound": bound, "onset": onset})


# --- 6 ---------------------------------------------------------------------

def jacobi_run(net: Network, point, kind, sweeps: int):
    """Jacobi sweeps from zero; returns (final x, growth of the last x update)."""
    agents = AgentNetwork(net, kind, TAU)
    s = point.snapshot
    prev = agents.load_estimates()
    first = last = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(sweeps):
            agents.step_vector(s.theta, s.v_mag, point.p, point.q, 0.0, Scheme.JACOBI)
            x = agents.load_estimates()
            step = float(np.abs(x - prev).max())
            if k == 10:
                first = step
            last = step
            prev = x
            if not np.isfinite(step) or step > 1e12:
                break
    return prev, first, last


def jacobi_diverged(first, last) -> bool:
    return not np.isfinite(last) or last > 1e3 * max(first, 1e-300)


def check_jacobi() -> CheckResult:
    t0 = time.perf_counter()
    net, pt = _ne39()
    s = pt.snapshot
    blk = assemble_jacobian(net, pt)
    diffs, rhos = {}, {}
    for kind in IndexKind:
        A, _ = dense_system(kind, net, s.theta, s.v_mag, pt.p, pt.q)
        rhos[kind.value] = jacobi_spectral_radius(A)
        xj, _, _ = jacobi_run(net, pt, kind, 3000)
        xe = settle_agents(net, pt, kind, 10000).load_estimates()
        diffs[kind.value] = float(np.abs(xj - xe).max())
        assert np.abs(xe - compute_index(kind, blk, pt).values).max() < AGENT_TOL
    agree = max(diffs.values()) <= SCHEME_TOL

    # same comparison without series resistance, where the two fixed points coincide
    lossless = random_network(7, 8, lossy=False)
    lpt = solve_power_flow(lossless)
    lossless_diff = max(
        float(np.abs(jacobi_run(lossless, lpt, kind, 3000)[0]
                     - settle_agents(lossless, lpt, kind, 10000).load_estimates()).max())
        for kind in IndexKind)

    bad = load_case(bundled_case("case3_resistive"))
    bpt = solve_power_flow(bad)
    A, _ = dense_system(IndexKind.DVDQ, bad, bpt.snapshot.theta, bpt.snapshot.v_mag, bpt.p, bpt.q)
    rho_bad = jacobi_spectral_radius(A)
    _, first, last = jacobi_run(bad, bpt, IndexKind.DVDQ, 200)
    detected = rho_bad >= 1 and jacobi_diverged(first, last)
    return CheckResult(6, "Jacobi fixed point", agree and detected,
                       f"39-bus rho {max(rhos.values()):.4f}, |Jacobi - Euler| "
                       + ", ".join(f"{k} {v:.1e}" for k, v in diffs.items())
                       + f" (tol {SCHEME_TOL:.0e}); lossless 8-bus {lossless_diff:.1e}; resistive 3-bus rho {rho_bad:.2f}, "
                       f"divergence {'detected' if detected else 'missed'}",
                       time.perf_counter() - t0, {"diffs": diffs, "rho": rhos, "rho_bad": rho_bad,
                                                  "lossless": lossless_diff})


# --- 7 ---------------------------------------------------------------------

def ramped_point(net: Network, factor: float = 1.15):
    phys = GridPhysics(net, NE39_REFERENCE)
    phys.solve(1.0, {}, 0.0)
    steps = 10
    for k in range(1, steps + 1):
        pt = phys.solve(1.0 + (factor - 1.0) * k / steps, {}, 0.0)
    return pt, set(phys.limited)


def check_consensus() -> CheckResult:
    t0 = time.perf_counter()
    net, _ = _ne39()
    pt, limited = ramped_point(net)
    kind = IndexKind.DVLDVG
    agents = settle_agents(net, pt, kind, 10000, limited=limited)
    g = nx.Graph(list((b.from_bus, b.to_bus) for b in net.branches))
    diam = nx.diameter(g)
    order = [pt.network.index(b) for b in net.ids]
    meas = measurements_from(net, PhasorSnapshot(pt.snapshot.theta[order], pt.snapshot.v_mag[order]),
                             pt.p[order], pt.q[order])
    rounds = agents.run_consensus(meas)
    ws = {(a.state.w, a.state.w_bus) for a in agents.agents.values()}
    est = agents.estimates()
    top = max(est.items(), key=lambda kv: (kv[1], -kv[0]))
    orc = compute_index(kind, assemble_jacobian(pt.network, pt), pt)
    wbus, wval = worst_case(orc)
    (w, w_bus), = ws if len(ws) == 1 else [(np.nan, None)]
    ok = len(ws) == 1 and rounds <= diam and w == top[1] and w_bus == wbus
    return CheckResult(7, "max-consensus", ok,
                       f"{rounds} rounds (diameter {diam}); consensus bus {w_bus} value {w:.4f}; "
                       f"oracle worst bus {wbus} ({wval:.4f}) at 15% ramp",
                       time.perf_counter() - t0, {"rounds": rounds, "bus": w_bus, "oracle_bus": wbus})


# --- 8 ---------------------------------------------------------------------

def check_var_limits(bus: int = 34) -> CheckResult:
    t0 = time.perf_counter()
    net, _ = _ne39()
    clamped = net.retype_as_load(bus, net.buses[net.index(bus)].q_max)
    pt = solve_power_flow(clamped, NE39_REFERENCE)
    blk = assemble_jacobian(clamped, pt)
    worst = 0.0
    for kind in IndexKind:
        agents = settle_agents(net, pt, kind, 10000, limited=[bus])
        est = agents.estimates()
        orc = compute_index(kind, blk, pt).as_dict()
        worst = max(worst, max(abs(est[b] - v) for b, v in orc.items()))
    # hysteresis: Q crosses q_max every 2 s against a 5 s window
    loc = LocalData(bus, True, {}, 0j, 1.0)
    agent = Agent(loc, initial_state(loc, IndexKind.DVLDVG, TAU))
    switches = sum(var_limit_update(agent, 1.0 + (0.1 if int(t / 2.0) % 2 == 0 else -0.1), t, 5.0)
                   for t in np.arange(0, 120, H))
    ok = worst <= AGENT_TOL and switches == 0
    return CheckResult(8, "VAR-limit switching", ok,
                       f"bus {bus} clamped: max abs err {worst:.1e}; "
                       f"{switches} switches under 4 s-period oscillation (window 5 s)",
                       time.perf_counter() - t0)


# --- 9 ---------------------------------------------------------------------

# regression pins for the bundled scenario (seed 2024)
PINNED_LIMIT_EVENTS = 1


def check_scenario_shape(scenario_path=None) -> CheckResult:
    t0 = time.perf_counter()
    sc = load_scenario(scenario_path or bundled_scenario("ne39_ramp"))
    tr = run_scenario(sc)
    dt = time.perf_counter() - t0
    cols = [tr.col(b) for b in tr.load_ids]
    x10, x100 = tr.x[tr.round_at(10.0), cols], tr.x[tr.round_at(100.0), cols]
    rising = bool(np.all(x100 > x10))
    pre = tr.window_mean(0.0, 20.0)[cols]
    shed = [e.t for e in sc.events if type(e).__name__ == "ShedLoads"][0]
    settle = 5 * max(tr.taus.values())
    post = tr.window_mean(shed + settle, sc.duration + 1)[cols]
    back = float(np.abs(post - pre).max())
    # does the ramp push a non-reference generator past its limit?
    net = load_case(sc.case)
    free = GridPhysics(net, sc.reference_bus, var_limits=False)
    pt = free.solve(max(e.factor for e in sc.events if hasattr(e, "factor")), {}, 0.0)
    exceeded = sorted(b.id for b in net.buses if not b.is_load and b.id != sc.reference_bus
                      and b.q_max is not None and pt.q[pt.network.index(b.id)] > b.q_max)
    limit_events = [e for e in tr.events if e["event"] == "limit"]
    events_ok = (len(limit_events) > 0) == bool(exceeded) and len(limit_events) == PINNED_LIMIT_EVENTS
    ok = rising and back <= SHED_TOL and events_ok and dt < 60 and tr.collapse is None
    return CheckResult(9, "scenario shape (39-bus ramp and shed)", ok,
                       f"(a) rise at all {len(cols)} loads: {rising}, min rise {float((x100 - x10).min()):.4f}; "
                       f"(b) post-shed vs pre-ramp {back:.1e} <= {SHED_TOL:.0e}; "
                       f"(c) limit events {[(e['bus'], round(e['t'], 2)) for e in limit_events]}, "
                       f"exceeded {exceeded}; runtime {dt:.1f}s < 60s",
                       dt, {"trace": tr})


# --- 10 --------------------------------------------------------------------

def check_multiarea() -> CheckResult:
    t0 = time.perf_counter()
    net, pt = _ne39()
    s = pt.snapshot
    args = (s.theta, s.v_mag, pt.p, pt.q)
    worst = 0.0
    for kind in IndexKind:
        one = partition_multiarea(net, {b: 0 for b in net.ids}, kind, TAU).centralized_solve(*args)
        three = partition_multiarea(net, grow_areas(net, [1, 16, 29]), kind, TAU).run(*args, H, 8000)
        each = partition_multiarea(net, {b: b for b in net.ids}, kind, TAU).run(*args, H, 8000)
        worst = max(worst, np.abs(one - three).max(), np.abs(one - each).max())
    return CheckResult(10, "multi-area equivalence", worst <= AREA_TOL,
                       f"p in (1, 3, {net.size}): max disagreement {worst:.1e}",
                       time.perf_counter() - t0)


# --- 11 --------------------------------------------------------------------

def check_reference_invariance() -> CheckResult:
    """Same operating point, every generator tried as angle reference.

    Injections are pinned to a solved point first; otherwise each choice of
    slack bus would pick up the mismatch and move the operating point itself.
    """
    t0 = time.perf_counter()
    net = load_case(bundled_case("ne39"))
    base = solve_power_flow(net, NE39_REFERENCE)
    balanced = net.with_injections(base.p, None)
    points = [solve_power_flow(balanced, ref) for ref in net.ids[net.n:]]
    worst = 0.0
    for kind in IndexKind:
        vals = [compute_index(kind, assemble_jacobian(balanced, pt), pt).values for pt in points]
        worst = max(worst, float(np.ptp(np.array(vals), axis=0).max()))
    return CheckResult(11, "reference invariance", worst <= REFERENCE_TOL,
                       f"max spread over {net.m} reference choices {worst:.1e}",
                       time.perf_counter() - t0)


CHECKS = [check_oracle_cross_validation, check_distributed_equals_centralized,
          check_open_circuit, check_jacobian, check_euler_boundary, check_jacobi,
          check_consensus, check_var_limits, check_scenario_shape, check_multiarea,
          check_reference_invariance]


def run_all(echo=print) -> list[CheckResult]:
    out = []
    for fn in CHECKS:
        res = fn()
        echo(res.line())
        out.append(res)
    return out
