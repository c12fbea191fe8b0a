"""Time-stepping integration of the closed loop with trace recording.

Explicit Euler on the projected field is the reference scheme: the field is
discontinuous at the sector boundary, so classical high-order error theory
does not apply, and first-order stepping with drift correction is honest
and testable.  Steps land exactly on input breakpoints, so integration
restarts cleanly segment by segment.  A midpoint variant exists behind an
option and carries no accuracy claim.

Each trace row stores the raw state produced by the step together with its
sector residual; when that state drifts out of the sector by more than the
membership tolerance, the controller output is clamped back onto the
admissible interval (a correction along the controller directions only,
never along plant states) before the next step, and the row is flagged.
Recording the pre-correction residual keeps the first-order drift visible:
halving the step should roughly halve the worst residual.

The simulator produces one Caratheodory-consistent approximation; it makes
no uniqueness claim.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .errors import InitialStateOutsideSet, StateExploded
from .geometry import _as_vector, _readonly
from .pbc import ClosedLoopSystem, closed_loop_rhs

DEFAULT_STEP = 1e-3
DEFAULT_BLOWUP = 1e12


# ---------------------------------------------------------------------------
# piecewise-continuous input signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSegment:
    value: float

    def __call__(self, tau: float) -> float:
        return self.value

    def to_json(self) -> dict:
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class RampSegment:
    offset: float
    slope: float

    def __call__(self, tau: float) -> float:
        return self.offset + self.slope * tau

    def to_json(self) -> dict:
        return {"kind": "ramp", "offset": self.offset, "slope": self.slope}


@dataclass(frozen=True)
class SinusoidSegment:
    amplitude: float
    omega: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, tau: float) -> float:
        return self.offset + self.amplitude * math.sin(self.omega * tau + self.phase)

    def to_json(self) -> dict:
        return {
            "kind": "sinusoid",
            "amplitude": self.amplitude,
            "omega": self.omega,
            "phase": self.phase,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class PolynomialSegment:
    coeffs: tuple[float, ...]  # c0 + c1 tau + c2 tau^2 + ...

    def __call__(self, tau: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * tau + c
        return acc

    def to_json(self) -> dict:
        return {"kind": "polynomial", "coeffs": list(self.coeffs)}


def segment_from_json(doc: dict):
    kind = doc.get("kind")
    if kind == "constant":
        return ConstantSegment(float(doc["value"]))
    if kind == "ramp":
        return RampSegment(float(doc["offset"]), float(doc["slope"]))
    if kind == "sinusoid":
        return SinusoidSegment(
            float(doc["amplitude"]),
            float(doc["omega"]),
            float(doc.get("phase", 0.0)),
            float(doc.get("offset", 0.0)),
        )
    if kind == "polynomial":
        return PolynomialSegment(tuple(float(c) for c in doc["coeffs"]))
    raise ValueError(f"unknown segment kind {kind!r}")


@dataclass(frozen=True)
class InputSignal:
    """Right-continuous piecewise signal on [0, end] (end=None: unbounded).

    Segment k applies on [breakpoints[k], breakpoints[k+1]); each analytic
    form is continuous within its interval and evaluated in local time, so
    the value at a breakpoint is the right limit.
    """

    breakpoints: tuple[float, ...]
    segments: tuple
    end: float | None = None

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        if not bps or bps[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(bps) != len(self.segments):
            raise ValueError("one segment per breakpoint is required")
        if self.end is not None and self.end <= bps[-1]:
            raise ValueError("end must exceed the last breakpoint")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def constant(cls, value: float) -> "InputSignal":
        return cls(breakpoints=(0.0,), segments=(ConstantSegment(float(value)),))

    @classmethod
    def steps(cls, times, values) -> "InputSignal":
        return cls(
            breakpoints=tuple(times),
            segments=tuple(ConstantSegment(float(v)) for v in values),
        )

    def to_json(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "segments": [s.to_json() for s in self.segments],
            "end": self.end,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InputSignal":
        return cls(
            breakpoints=tuple(float(b) for b in doc["breakpoints"]),
            segments=tuple(segment_from_json(s) for s in doc["segments"]),
            end=None if doc.get("end") is None else float(doc["end"]),
        )


def eval_input(sig: InputSignal, t: float) -> float:
    """Right-continuous evaluation, exact at breakpoints."""
    if t < 0.0:
        raise ValueError("input signals are defined for t >= 0")
    if sig.end is not None and t > sig.end:
        raise ValueError(f"t={t} is beyond the last defined segment (end={sig.end})")
    k = bisect.bisect_right(sig.breakpoints, t) - 1
    return float(sig.segments[k](t - sig.breakpoints[k]))


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

TRACE_BRANCHES = ("interior", "K", "minusK", "corner")


@dataclass(frozen=True)
class Trace:
    """Time-indexed record of a run; one row per step plus the initial row."""

    t: np.ndarray
    xi: np.ndarray
    e: np.ndarray
    u: np.ndarray
    edot: np.ndarray
    vstar: np.ndarray
    branch: tuple[str, ...]
    correction_norm: np.ndarray
    sector_residual: np.ndarray
    drift_corrected: np.ndarray
    h: float

    def __post_init__(self):
        for name in ("t", "e", "u", "edot", "vstar", "correction_norm", "sector_residual"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "xi", _readonly(self.xi))
        dc = np.asarray(self.drift_corrected, dtype=bool)
        dc.flags.writeable = False
        object.__setattr__(self, "drift_corrected", dc)
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @property
    def n_rows(self) -> int:
        return self.t.shape[0]

    @property
    def max_violation(self) -> float:
        """Largest positive sector residual over all rows (0 if none)."""
        return float(max(0.0, float(np.max(self.sector_residual))))

    def time_in_branch(self) -> dict[str, float]:
        out = {b: 0.0 for b in TRACE_BRANCHES}
        dts = np.diff(self.t)
        for k, dt in enumerate(dts):
            out[self.branch[k]] += float(dt)
        return out

    def summary(self) -> dict:
        return {
            "max_sector_residual": float(np.max(self.sector_residual)),
            "steps": int(self.n_rows - 1),
            "drift_corrections": int(np.sum(self.drift_corrected)),
            "time_in_branch": self.time_in_branch(),
            "terminal_state": [float(v) for v in self.xi[-1]],
        }

    def to_csv(self, path) -> None:
        dim = self.xi.shape[1]
        header = (
            ["t"]
            + [f"xi_{i}" for i in range(dim)]
            + [
                "e",
                "u",
                "edot",
                "vstar",
                "branch",
                "correction_norm",
                "sector_residual",
                "drift_corrected",
            ]
        )
        fmt = lambda x: f"{x:.17g}"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(self.n_rows):
                row = (
                    [fmt(self.t[k])]
                    + [fmt(v) for v in self.xi[k]]
                    + [
                        fmt(self.e[k]),
                        fmt(self.u[k]),
                        fmt(self.edot[k]),
                        fmt(self.vstar[k]),
                        self.branch[k],
                        fmt(self.correction_norm[k]),
                        fmt(self.sector_residual[k]),
                        "1" if self.drift_corrected[k] else "0",
                    ]
                )
                fh.write(",".join(row) + "\n")


class _Recorder:
    def __init__(self, h: float):
        self.h = h
        self.rows: list[tuple] = []

    def add(self, t, xi, e, u, edot, vstar, branch, corr, residual, drift):
        self.rows.append((t, np.array(xi), e, u, edot, vstar, branch, corr, residual, drift))

    def finish(self) -> Trace:
        cols = list(zip(*self.rows))
        return Trace(
            t=np.array(cols[0]),
            xi=np.vstack(cols[1]),
            e=np.array(cols[2]),
            u=np.array(cols[3]),
            edot=np.array(cols[4]),
            vstar=np.array(cols[5]),
            branch=tuple(cols[6]),
            correction_norm=np.array(cols[7]),
            sector_residual=np.array(cols[8]),
            drift_corrected=np.array(cols[9], dtype=bool),
            h=self.h,
        )


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegrateOptions:
    blowup_bound: float = DEFAULT_BLOWUP
    method: str = "euler"  # or "midpoint" (no accuracy claim)

    def __post_init__(self):
        if self.method not in ("euler", "midpoint"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.blowup_bound <= 0:
            raise ValueError("blowup_bound must be positive")


def drift_correct(sys: ClosedLoopSystem, xi) -> tuple[np.ndarray, bool]:
    """Clamp the controller output back into the sector, along E only.

    When H xi violates the sector beyond the membership tolerance, z1 is
    replaced by its clamp into the interval between k1*e and k2*e; plant
    states are never touched.
    """
    xi = _as_vector(xi, sys.dim)
    eu = sys.output_pair(xi)
    if sys.sector.contains(eu):
        return xi, False
    e = float(eu[0])
    lo = min(sys.sector.k1 * e, sys.sector.k2 * e)
    hi = max(sys.sector.k1 * e, sys.sector.k2 * e)
    out = xi.copy()
    out[sys.n] = min(max(float(eu[1]), lo), hi)
    return out, True


def _step_schedule(signal: InputSignal, T: float, h: float):
    """(t, dt, t_next) triples; steps land exactly on breakpoints and T."""
    knots = [b for b in signal.breakpoints if 0.0 < b < T] + [T]
    t = 0.0
    for target in knots:
        while t < target:
            remaining = target - t
            if remaining <= h * (1.0 + 1e-9):
                yield t, remaining, target
                t = target
            else:
                t_next = t + h
                yield t, h, t_next
                t = t_next


def _run(
    sys: ClosedLoopSystem,
    xi0,
    signal: InputSignal,
    T: float,
    h: float,
    opts: IntegrateOptions,
    embed_time: bool,
) -> Trace:
    xi0 = _as_vector(xi0, sys.dim)
    if not (h > 0.0 and T > 0.0):
        raise ValueError("need h > 0 and T > 0")
    if signal.end is not None and T > signal.end:
        raise ValueError("horizon exceeds the input signal's domain")
    if not sys.in_set(xi0):
        raise InitialStateOutsideSet(
            f"output pair {sys.output_pair(xi0).tolist()} is outside the sector"
        )

    rec = _Recorder(h)
    raw = xi0.copy()
    clock = 0.0  # embedded-time state; mirrors the schedule exactly

    def record(t, state_raw, rhs, corrected):
        eu = sys.output_pair(state_raw)
        rec.add(
            t,
            state_raw,
            float(eu[0]),
            float(eu[1]),
            rhs.edot,
            rhs.vstar,
            rhs.branch,
            rhs.correction_norm,
            sys.sector.residual(eu),
            corrected,
        )

    for t, dt, t_next in _step_schedule(signal, T, h):
        stepped, was_corrected = drift_correct(sys, raw)
        w = eval_input(signal, clock if embed_time else t)
        r = closed_loop_rhs(sys, stepped, w)
        record(t, raw, r, was_corrected)
        if opts.method == "midpoint":
            mid_raw = stepped + (0.5 * dt) * r.field
            mid, _ = drift_correct(sys, mid_raw)
            w_mid = eval_input(signal, min(t + 0.5 * dt, T))
            field = closed_loop_rhs(sys, mid, w_mid).field
        else:
            field = r.field
        raw = stepped + dt * field
        if embed_time:
            # The unit clock integrates exactly under Euler; assigning the
            # scheduled landing removes 1-ulp drift so both integrators
            # share one clock (and one input sample sequence).
            euler_clock = clock + dt * 1.0
            if abs(euler_clock - t_next) > 8.0 * np.finfo(float).eps * max(1.0, t_next):
                raise AssertionError("embedded clock diverged from the schedule")
            clock = t_next
        norm = float(np.linalg.norm(raw))
        if norm > opts.blowup_bound:
            raise StateExploded(t_next, norm, opts.blowup_bound)

    final, was_corrected = drift_correct(sys, raw)
    r = closed_loop_rhs(sys, final, eval_input(signal, T))
    record(T, raw, r, was_corrected)
    return rec.finish()


def integrate(
    sys: ClosedLoopSystem,
    xi0,
    signal: InputSignal,
    T: float,
    h: float = DEFAULT_STEP,
    opts: IntegrateOptions | None = None,
) -> Trace:
    """Explicit Euler on the projected field, with drift correction.

    Rows record the raw post-step states (see the module docstring for the
    correction bookkeeping).  Raises InitialStateOutsideSet when xi0
    violates the lifted set and StateExploded past the blow-up bound, which
    signals possible finite escape when the linear-growth bound fails.
    """
    return _run(sys, xi0, signal, T, h, opts or IntegrateOptions(), embed_time=False)


@dataclass(frozen=True)
class TimeEmbedded:
    """Autonomous embedding chi = (xi, t) of a run with an external input.

    The constraint set becomes (lifted set) x R>=0, corrections act on
    (controller states) x {0}, and the field is (f(xi, w(t)), 1): the clock
    is a state whose rate is one and is never projected.
    """

    system: ClosedLoopSystem
    signal: InputSignal

    @property
    def dim(self) -> int:
        return self.system.dim + 1

    def contains(self, chi) -> bool:
        chi = _as_vector(chi, self.dim)
        return chi[-1] >= 0.0 and self.system.in_set(chi[:-1])

    def rhs(self, chi) -> np.ndarray:
        """Projected embedded field; the last component is always 1."""
        chi = _as_vector(chi, self.dim)
        w = eval_input(self.signal, float(chi[-1]))
        r = closed_loop_rhs(self.system, chi[:-1], w)
        return np.concatenate([r.field, [1.0]])


def integrate_time_embedded(
    emb: TimeEmbedded,
    xi0,
    T: float,
    h: float = DEFAULT_STEP,
    opts: IntegrateOptions | None = None,
) -> Trace:
    """Integrate the time-embedded system; the trace reports the xi part.

    Shares the step schedule and the floating-point update sequence with
    ``integrate``, so on the same scenario the traces are bitwise equal.
    """
    return _run(
        emb.system, xi0, emb.signal, T, h, opts or IntegrateOptions(), embed_time=True
    )


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-step-size residual maxima, observed orders and terminal deltas."""

    entries: tuple[dict, ...]
    observed_orders: tuple[float, ...]
    terminal_deltas: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "entries": [dict(e) for e in self.entries],
            "observed_orders": list(self.observed_orders),
            "terminal_deltas": list(self.terminal_deltas),
        }


def convergence_study(
    sys: ClosedLoopSystem,
    xi0,
    signal: InputSignal,
    T: float,
    h_list,
    opts: IntegrateOptions | None = None,
) -> ConvergenceReport:
    """Rerun the integration per step size and fit the residual decay order.

    ``h_list`` must be strictly decreasing.  Blow-ups are surfaced per step
    size in the corresponding entry rather than aborting the study.
    """
    hs = [float(h) for h in h_list]
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("h_list must be strictly decreasing")
    entries: list[dict] = []
    traces: list[Trace | None] = []
    for h in hs:
        try:
            tr = integrate(sys, xi0, signal, T, h, opts)
        except StateExploded as exc:
            entries.append({"h": h, "status": "StateExploded", "t": exc.t, "norm": exc.norm})
            traces.append(None)
            continue
        entries.append(
            {
                "h": h,
                "status": "ok",
                "max_violation": tr.max_violation,
                "terminal_state": [float(v) for v in tr.xi[-1]],
            }
        )
        traces.append(tr)
    orders: list[float] = []
    deltas: list[float] = []
    for (h1, t1), (h2, t2) in zip(zip(hs, traces), zip(hs[1:], traces[1:])):
        if t1 is None or t2 is None:
            continue
        v1, v2 = t1.max_violation, t2.max_violation
        if v1 > 0.0 and v2 > 0.0:
            orders.append(float(math.log(v1 / v2) / math.log(h1 / h2)))
        deltas.append(float(np.linalg.norm(t1.xi[-1] - t2.xi[-1])))
    return ConvergenceReport(
        entries=tuple(entries),
        observed_orders=tuple(orders),
        terminal_deltas=tuple(deltas),
    )
