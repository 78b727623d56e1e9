"""Agent estimates against the centralized values recorded in a trace."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .scenario import RampLoads, SetLoad, ShedLoads


@dataclass
class WindowStats:
    t0: float
    t1: float
    mean_error: dict            # bus -> time-mean of (x - oracle)
    max_abs_error: dict         # bus -> max |x - oracle|
    std: dict                   # bus -> std of x over the window
    statistic: str
    tol: float

    @property
    def worst(self) -> float:
        src = self.max_abs_error if self.statistic == "max" else self.mean_error
        return max((abs(v) for v in src.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


@dataclass
class RampStats:
    t0: float
    t1: float
    lag: dict                   # bus -> (oracle - x) / oracle slope, seconds
    overshoot: dict             # bus -> excursion past the settled value after the ramp


@dataclass
class ComparisonReport:
    windows: list = field(default_factory=list)
    ramps: list = field(default_factory=list)
    collapse: dict | None = None

    @property
    def passed(self) -> bool:
        return self.collapse is None and all(w.passed for w in self.windows)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "collapse": self.collapse,
                "windows": [dict(asdict(w), worst=w.worst, passed=w.passed) for w in self.windows],
                "ramps": [asdict(r) for r in self.ramps]}


def change_times(trace) -> list[float]:
    """Instants after which the agents' target moves: load events and mode switches."""
    ts = []
    for ev in trace.scenario.events:
        if isinstance(ev, RampLoads):
            ts += [ev.t, ev.t_end]
        elif isinstance(ev, (ShedLoads, SetLoad)):
            ts.append(ev.t)
    ts += [e["t"] for e in trace.events
           if e["event"] in ("grid-limit", "grid-release", "limit", "release")]
    return sorted(set(ts))


def steady_windows(trace, settle: float) -> list[tuple[float, float]]:
    """Intervals with constant target, each starting ``settle`` s after the last change."""
    start = -trace.scenario.warmup
    end = float(trace.times[-1]) + trace.scenario.dt_agent if len(trace.times) else 0.0
    cuts = [t for t in change_times(trace) if t < end]
    out = []
    for a, b in zip([start] + cuts, cuts + [end]):
        lo = max(a + settle, 0.0)
        if b - lo > 0:
            out.append((lo, b))
    return out


def compare_to_oracle(trace, tol: float | None = None, settle: float | None = None) -> ComparisonReport:
    """Per-window steady-state errors, plus lag and overshoot around ramps.

    ``settle`` defaults to five of the largest time constants.  Zero-noise
    traces are judged on the worst absolute error (default tolerance 1e-6);
    noisy traces on the worst time-mean error (default 1e-3).
    """
    noisy = trace.scenario.noise.enabled
    stat = "mean" if noisy else "max"
    tol = tol if tol is not None else (1e-3 if noisy else 1e-6)
    settle = settle if settle is not None else 5 * max(trace.taus.values())
    orc = trace.oracle_per_round()
    err = trace.x - orc
    report = ComparisonReport(collapse=trace.collapse)
    cols = {b: trace.col(b) for b in trace.bus_ids}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for t0, t1 in steady_windows(trace, settle):
            sel = (trace.times >= t0) & (trace.times < t1)
            e = err[sel]
            mean = {b: float(np.nanmean(e[:, c])) for b, c in cols.items()
                    if not np.all(np.isnan(e[:, c]))}
            mx = {b: float(np.nanmax(np.abs(e[:, cols[b]]))) for b in mean}
            sd = {b: float(np.nanstd(trace.x[sel, cols[b]])) for b in mean}
            report.windows.append(WindowStats(t0, t1, mean, mx, sd, stat, tol))
        for ev in trace.scenario.events:
            if isinstance(ev, RampLoads):
                report.ramps.append(_ramp_stats(trace, ev, err, orc, cols, settle))
    return report


def _ramp_stats(trace, ev: RampLoads, err, orc, cols, settle) -> RampStats:
    mid = 0.5 * (ev.t + ev.t_end)
    ramp = (trace.times >= mid) & (trace.times < ev.t_end)
    after = (trace.times >= ev.t_end) & (trace.times < ev.t_end + settle)
    lag, over = {}, {}
    if not ramp.any():
        return RampStats(ev.t, ev.t_end, lag, over)
    t = trace.times[ramp]
    for b, c in cols.items():
        o = orc[ramp, c]
        if np.any(np.isnan(o)) or np.any(np.isnan(trace.x[ramp, c])):
            continue
        slope = np.polyfit(t, o, 1)[0]
        if abs(slope) > 1e-12:
            lag[b] = float(np.mean(-err[ramp, c]) / slope)
        if after.any():
            xa = trace.x[after, c]
            final = orc[after, c][-1]
            sign = np.sign(final - orc[ramp, c][0])
            over[b] = float(max(0.0, np.nanmax(sign * (xa - final))))
    return RampStats(ev.t, ev.t_end, lag, over)
