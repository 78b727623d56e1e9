"""Command-line front end: ``vcpi {indices,simulate,check,selftest}``."""

from __future__ import annotations

import argparse
import enum
import json
import logging
import sys
import warnings
from pathlib import Path

import networkx as nx
import numpy as np

from .agents import Scheme, SchemeConfig, dense_system, euler_stability_bound, jacobi_spectral_radius
from .grid import CaseError, ConventionWarning, PhasorSnapshot, bundled_case, load_case
from .oracle import CollapseError, IndexKind, compute_index, oracle_fd, worst_case
from .powerflow import PowerFlowError, assemble_jacobian, check_spectral_condition, flat_start, solve_power_flow
from .simkit import (ScenarioError, TauFixed, bundled_scenario, compare_to_oracle, load_scenario,
                     run_scenario)
from .simkit.scenario import NoiseModel

log = logging.getLogger("vcpi")


class Exit(enum.IntEnum):
    OK = 0
    REFUSED = 1         # configuration rejected, or an acceptance check failed
    USAGE = 2           # argparse
    PARSE = 3
    POWER_FLOW = 4
    SPECTRAL = 5        # spectral condition violated or singular sensitivity system
    COLLAPSE = 6        # grid solve failed part-way through a scenario


class CliError(Exception):
    def __init__(self, code: Exit, msg: str):
        super().__init__(msg)
        self.code = code


def _case_path(spec: str) -> Path:
    if spec.startswith("bundled:"):
        return bundled_case(spec.split(":", 1)[1])
    return Path(spec)


def _load(spec: str):
    try:
        return load_case(_case_path(spec))
    except (CaseError, OSError, json.JSONDecodeError) as exc:
        raise CliError(Exit.PARSE, f"cannot load case {spec}: {exc}") from None


def _solve(net, reference, init_v=None):
    init = None
    if init_v is not None:
        flat = flat_start(net)
        v = flat.v_mag.copy()
        v[: net.n] = init_v
        init = PhasorSnapshot(flat.theta, v)
    try:
        return solve_power_flow(net, reference, init)
    except (PowerFlowError, ValueError) as exc:
        raise CliError(Exit.POWER_FLOW, f"power flow failed: {exc}") from None


def _spectral(net, pt):
    blocks = assemble_jacobian(net, pt)
    return blocks, check_spectral_condition(blocks, pt.v_load)


def _fmt_spectrum(report) -> list[str]:
    out = []
    for s in (report.theta_block, report.reduced, report.scaled):
        out.append(f"  {s.name:<10} {'ok  ' if s.holds else 'FAIL'} simple zero={s.zero_is_simple} "
                   f"min Re(nonzero)={s.min_nonzero_real:.4g}")
    return out


# --- indices ---------------------------------------------------------------

def cmd_indices(args) -> int:
    net = _load(args.case)
    pt = _solve(net, args.reference, args.init_v)
    blocks, report = _spectral(net, pt)
    if not report.holds:
        raise CliError(Exit.SPECTRAL, "Jacobian spectral condition violated at this operating "
                       "point (low-voltage branch or past the nose?)\n" + "\n".join(_fmt_spectrum(report)))
    kinds = list(IndexKind) if args.kind == "all" else [IndexKind.parse(args.kind)]
    out = {}
    for kind in kinds:
        try:
            idx = compute_index(kind, blocks, pt)
        except CollapseError as exc:
            raise CliError(Exit.SPECTRAL, str(exc)) from None
        bus, val = worst_case(idx)
        entry = {"values": idx.as_dict(), "worst_bus": bus, "worst_value": val}
        if args.fd:
            fd = oracle_fd(net, pt, kind)
            entry["fd_max_rel_dev"] = float(np.abs(idx.values - fd.values).max()
                                            / max(np.abs(fd.values).max(), 1e-300))
        out[kind.value] = entry
    if args.json:
        print(json.dumps(out, indent=1))
        return Exit.OK
    for k, entry in out.items():
        print(f"{k}:")
        for b, v in entry["values"].items():
            print(f"  bus {b:>4}  {v: .8f}")
        print(f"  worst: bus {entry['worst_bus']} ({entry['worst_value']:.6f})")
        if "fd_max_rel_dev" in entry:
            print(f"  finite-difference max rel deviation: {entry['fd_max_rel_dev']:.2e}")
    return Exit.OK


# --- check -----------------------------------------------------------------

def cmd_check(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConventionWarning)
        try:
            net = load_case(_case_path(args.case))
        except CaseError as exc:
            print(f"connectivity/format: FAIL ({exc})")
            return Exit.PARSE
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(Exit.PARSE, f"cannot load case {args.case}: {exc}") from None
    g = nx.Graph([(b.from_bus, b.to_bus) for b in net.branches])
    g.add_nodes_from(net.ids)
    print(f"case: {net.n} load buses, {net.m} generators, {len(net.branches)} branches")
    print(f"connectivity: ok (diameter {nx.diameter(g)})")
    conv = [w for w in caught if issubclass(w.category, ConventionWarning)]
    print(f"conventions: {'ok' if not conv else 'WARN'}")
    for w in conv:
        print(f"  {w.message}")
    pt = _solve(net, args.reference, args.init_v)
    print(f"power flow: converged in {pt.iterations} iterations, residual {pt.residual():.1e}")
    blocks, report = _spectral(net, pt)
    print(f"spectral condition: {'holds' if report.holds else 'VIOLATED'}")
    for line in _fmt_spectrum(report):
        print(line)
    if not report.holds:
        return Exit.SPECTRAL
    s = pt.snapshot
    for kind in IndexKind:
        A, _ = dense_system(kind, net, s.theta, s.v_mag, pt.p, pt.q)
        h = euler_stability_bound(np.linalg.eigvals(A), args.tau)
        try:
            rho = f"{jacobi_spectral_radius(A):.4f}"
        except ValueError as exc:
            rho = f"n/a ({exc})"
        print(f"{kind.value:>7}: Euler h_max {h:.5g} s (tau {args.tau:g} s), Jacobi rho {rho}")
    return Exit.OK


# --- simulate --------------------------------------------------------------

def _scenario(args):
    spec = args.scenario
    try:
        path = bundled_scenario(spec.split(":", 1)[1]) if spec.startswith("bundled:") else Path(spec)
        sc = load_scenario(path)
        over = dict(seed=args.seed, index_kind=args.kind, scheme=args.scheme, dt_agent=args.h)
        if args.no_noise:
            over["noise"] = NoiseModel.off()
        if args.tau is not None:
            over["tau"] = TauFixed(args.tau)
        sc = sc.with_overrides(**over)
        SchemeConfig(sc.scheme, sc.dt_agent, sc.index_kind, sc.hysteresis_window,
                     sc.consensus_period)
    except (ScenarioError, ValueError) as exc:
        raise CliError(Exit.PARSE if isinstance(exc, ScenarioError) else Exit.REFUSED,
                       f"scenario: {exc}") from None
    return sc


def _jacobi_guard(sc, net):
    ref = sc.reference_bus if sc.reference_bus is not None else net.ids[net.n]
    pt = _solve(net, ref)
    s = pt.snapshot
    A, _ = dense_system(sc.index_kind, net, s.theta, s.v_mag, pt.p, pt.q)
    rho = jacobi_spectral_radius(A)
    if rho >= 1:
        raise CliError(Exit.REFUSED, f"refusing Jacobi: spectral radius {rho:.4f} >= 1 at the "
                       "base operating point, the iteration would diverge; use --scheme euler")
    log.info("Jacobi spectral radius %.4f", rho)


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    net = _load(sc.case)
    if sc.scheme is Scheme.JACOBI:
        _jacobi_guard(sc, net)
    log.info("running %s (config %s)", args.scenario, sc.config_hash())
    trace = run_scenario(sc, net)
    out = Path(args.out or f"run-{sc.config_hash()}")
    out.mkdir(parents=True, exist_ok=True)
    trace.write_ndjson(out / "trace.ndjson", args.record_every)
    buses = [int(b) for b in args.buses.split(",")] if args.buses else None
    trace.write_csv(out / "trace.csv", args.record_every, buses)
    report = compare_to_oracle(trace)
    (out / "report.json").write_text(json.dumps(
        {"meta": trace.metadata, "comparison": report.to_dict(), "events": trace.events},
        indent=1, default=float), encoding="utf-8")

    print(f"config {sc.config_hash()}  seed {sc.seed}  kind {sc.index_kind.value}  -> {out}")
    alerts = {}
    for e in trace.events:
        if e["event"] in ("alert", "clear", "limit", "release"):
            alerts.setdefault(e["bus"], []).append(f"{e['event']}@{e['t']:.1f}")
    for b in (buses or trace.load_ids + trace.gen_ids):
        errs = [w.mean_error[b] if w.statistic == "mean" else w.max_abs_error[b]
                for w in report.windows if b in w.mean_error]
        worst = f"{max(abs(e) for e in errs):.2e}" if errs else "n/a (PV)"
        print(f"  bus {b:>4}  steady-state error {worst:<9} {' '.join(alerts.get(b, []))}")
    stat = report.windows[0].statistic if report.windows else "max"
    print(f"comparison ({stat} error): {'PASS' if report.passed else 'FAIL'}")
    if trace.collapse is not None:
        print(f"collapse at t={trace.collapse['t']:.2f}: {trace.collapse['reason']}", file=sys.stderr)
        return Exit.COLLAPSE
    return Exit.OK


# --- selftest --------------------------------------------------------------

def cmd_selftest(args) -> int:
    from . import acceptance

    results = acceptance.run_all()
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed"
          + (f"; failed: {failed}" if failed else ""))
    return Exit.REFUSED if failed else Exit.OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcpi", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def case_args(sp):
        sp.add_argument("case", help="case JSON path or bundled:<name>")
        sp.add_argument("--reference", type=int, help="reference generator id")
        sp.add_argument("--init-v", type=float, help="initial load-bus voltage magnitude")

    sp = sub.add_parser("indices", help="centralized indices at the solved operating point")
    case_args(sp)
    sp.add_argument("--kind", default="all", choices=["all"] + [k.value for k in IndexKind])
    sp.add_argument("--fd", action="store_true", help="cross-check against finite differences")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_indices)

    sp = sub.add_parser("check", help="validate a case and report step-size limits")
    case_args(sp)
    sp.add_argument("--tau", type=float, default=10.0, help="time constant for the Euler bound")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("simulate", help="run a scenario and write traces")
    sp.add_argument("scenario", help="scenario TOML path or bundled:<name>")
    sp.add_argument("--out", help="output directory (default run-<config hash>)")
    sp.add_argument("--no-noise", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--kind", choices=[k.value for k in IndexKind])
    sp.add_argument("--scheme", choices=[s.value for s in Scheme])
    sp.add_argument("--h", type=float, help="agent step in seconds")
    sp.add_argument("--tau", type=float, help="same time constant at every bus")
    sp.add_argument("--record-every", type=int, default=10, help="keep every k-th round")
    sp.add_argument("--buses", help="comma-separated buses for the CSV and summary")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("selftest", help="run the acceptance checks")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return int(args.func(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(exc.code)


if __name__ == "__main__":
    sys.exit(main())
