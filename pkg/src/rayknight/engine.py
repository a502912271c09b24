"""Generic executor for jump processes with terminated rates.

A process is specified by per-neighbour jump intensities that may depend on
elapsed time and on the path so far, together with a stopping boundary along
a pure stay.  Each holding period is realized the classical way: one unit
exponential per neighbour, inverted through the integrated hazard, with the
earliest clock winning.  Specs can hand the engine an exact inverse of the
integrated hazard; otherwise adaptive quadrature plus root bracketing is
used at 1e-10 relative time accuracy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.optimize

from .errors import DomainError, NumericalInversionFailure
from .trees import PathRecord, RootedTree

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10
TIME_TOL = 1e-10

CAUSE_RATE_CLOCK = "rate-clock"
CAUSE_RESURRECT = "resurrect"
CAUSE_PERC_OPEN = "percolation-open"
CAUSE_PERC_CLOSE = "percolation-close"

TERMINAL_ROOT_EXHAUSTED = "root-time-exhausted"
TERMINAL_EXPLOSION = "explosion-cap"
TERMINAL_KILLED = "killed"
TERMINAL_TIME_CAP = "time-cap"


@dataclass
class EventLog:
    """Per-jump records plus the terminal cause of the run."""

    events: list = field(default_factory=list)  # (time, src, dst, cause)
    terminal: str | None = None

    def append(self, time: float, src: int, dst: int, cause: str):
        self.events.append((time, src, dst, cause))

    def count(self, cause: str) -> int:
        return sum(1 for e in self.events if e[3] == cause)

    def to_lines(self, run_id, ids: Sequence[str] | None = None):
        """One structured record per line: run_id,time,from,to,cause."""
        for time, src, dst, cause in self.events:
            a = ids[src] if ids is not None else src
            b = ids[dst] if ids is not None else dst
            yield f"{run_id},{time!r},{a},{b},{cause}"
        yield f"{run_id},end,,,{self.terminal}"


@dataclass
class EngineState:
    """Mutable per-run state the spec callbacks read and update."""

    current: int
    t: float = 0.0
    n_jumps: int = 0
    user: object = None


@dataclass
class TerminatedRateSpec:
    """Jump intensities terminated by a stopping boundary.

    ``rate(state, y, s)`` is the intensity toward ``y`` after staying ``s``
    beyond ``state.t`` with the path frozen; it must be continuous in ``s``
    up to the boundary.  ``stay_limit`` gives the supremum of the admissible
    further stay (the stopping time along a pure stay); it must shrink
    exactly with consumed time, which is what makes it monotone.  ``clock``
    optionally maps a unit-exponential level to the exact stay at which the
    integrated hazard reaches it (``None`` meaning the clock never fires
    before the boundary).
    """

    neighbors: Callable[[EngineState], Sequence[int]]
    rate: Callable[[EngineState, int, float], float]
    stay_limit: Callable[[EngineState], float] = lambda state: math.inf
    clock: Optional[Callable[[EngineState, int, float], Optional[float]]] = None
    is_final_death: Callable[[EngineState], bool] = lambda state: True
    resurrect_target: Optional[Callable[[EngineState], int]] = None
    on_advance: Optional[Callable[[EngineState, float], None]] = None
    on_jump: Optional[Callable[[EngineState, int, str], None]] = None


@dataclass
class Caps:
    max_jumps: int = 10_000_000
    max_time: float = math.inf


def _numeric_clock(spec: TerminatedRateSpec, state: EngineState, y: int, gamma: float, horizon: float):
    """Invert the integrated hazard toward ``y`` by quadrature and bracketing."""
    if horizon <= 0.0:
        return None

    def rate_at(s):
        try:
            value = spec.rate(state, y, s)
        except (ZeroDivisionError, OverflowError) as exc:
            raise NumericalInversionFailure(
                f"rate toward {y} blows up at stay {s}; supply a closed-form clock"
            ) from exc
        if not math.isfinite(value) or value < 0.0:
            raise NumericalInversionFailure(
                f"rate toward {y} not finite at stay {s}; supply a closed-form clock"
            )
        return value

    # accumulate hazard over a geometric grid until gamma is bracketed
    hazard = 0.0
    lo = 0.0
    grid_hi = min(horizon, 1.0) if math.isfinite(horizon) else 1.0
    while True:
        hi = min(grid_hi, horizon)
        piece, err = scipy.integrate.quad(rate_at, lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        if err > 1e-6 * max(1.0, abs(piece)) + 1e-8:
            raise NumericalInversionFailure(
                f"quadrature failed toward {y} on [{lo}, {hi}] (err {err})"
            )
        if hazard + piece >= gamma:
            break
        hazard += piece
        lo = hi
        if hi >= horizon:
            return None
        grid_hi *= 4.0

    target = gamma - hazard

    def shifted(s):
        value, _ = scipy.integrate.quad(rate_at, lo, s, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        return value - target

    if shifted(hi) < 0.0:  # tolerance slack: treat as firing at the grid edge
        return hi
    root = scipy.optimize.brentq(shifted, lo, hi, xtol=TIME_TOL, rtol=8.9e-16)
    return float(root)


def _run(spec: TerminatedRateSpec, start: int, rng: np.random.Generator,
         caps: Caps, resurrect: bool, tree: RootedTree | None, user=None):
    state = EngineState(current=start, user=user)
    log = EventLog()
    times, targets = [], []

    while True:
        if state.n_jumps >= caps.max_jumps:
            log.terminal = TERMINAL_EXPLOSION
            break
        s_max = spec.stay_limit(state)
        if math.isinf(caps.max_time):
            horizon = s_max
        else:
            horizon = min(s_max, caps.max_time - state.t)
        best_s = math.inf
        best_y = None
        for y in spec.neighbors(state):
            gamma = rng.exponential()
            if spec.clock is not None:
                s = spec.clock(state, y, gamma)
            else:
                s = _numeric_clock(spec, state, y, gamma, horizon)
            if s is None:
                continue
            if s < best_s:
                best_s, best_y = s, y
            elif s == best_s and best_y is not None and y < best_y:
                logger.info("tie between clocks at stay %s; lowest index wins", s)
                best_y = y

        if best_y is None or best_s >= horizon:
            # the stopping boundary (or the time cap) fires first
            stay = horizon
            if spec.on_advance is not None and stay > 0.0:
                spec.on_advance(state, stay)
            state.t += stay
            if horizon < s_max:
                log.terminal = TERMINAL_TIME_CAP
                break
            if spec.is_final_death(state):
                log.terminal = TERMINAL_ROOT_EXHAUSTED
                break
            if resurrect and spec.resurrect_target is not None:
                target = spec.resurrect_target(state)
                src = state.current
                state.current = target
                state.n_jumps += 1
                state.t = math.nextafter(state.t, math.inf)
                times.append(state.t)
                targets.append(target)
                log.append(state.t, src, target, CAUSE_RESURRECT)
                if spec.on_jump is not None:
                    spec.on_jump(state, target, CAUSE_RESURRECT)
                continue
            log.terminal = TERMINAL_KILLED
            break

        if spec.on_advance is not None:
            spec.on_advance(state, best_s)
        state.t += best_s
        src = state.current
        state.current = best_y
        state.n_jumps += 1
        times.append(state.t)
        targets.append(best_y)
        log.append(state.t, src, best_y, CAUSE_RATE_CLOCK)
        if spec.on_jump is not None:
            spec.on_jump(state, best_y, CAUSE_RATE_CLOCK)

    path = None
    if tree is not None:
        path = PathRecord(
            tree=tree,
            start=start,
            times=np.asarray(times),
            targets=np.asarray(targets),
            lifetime=state.t,
            killed=log.terminal == TERMINAL_KILLED,
        )
    return path, log, state


def run_terminated(spec: TerminatedRateSpec, start: int, rng: np.random.Generator,
                   caps: Caps | None = None, tree: RootedTree | None = None, user=None):
    """Run the process until its stopping time, an explosion cap, or the horizon."""
    return _run(spec, start, rng, caps or Caps(), resurrect=False, tree=tree, user=user)


def run_with_resurrection(spec: TerminatedRateSpec, start: int, rng: np.random.Generator,
                          caps: Caps | None = None, tree: RootedTree | None = None, user=None):
    """Run with forced parent jumps at non-final deaths (local-time exhaustion).

    Whenever the boundary fires at a state the spec does not consider final,
    the process is restarted from ``resurrect_target`` with the updated
    remaining-time field; the final stop only happens at a final death or a
    cap.
    """
    if spec.resurrect_target is None:
        raise DomainError("resurrection requires a resurrect_target")
    return _run(spec, start, rng, caps or Caps(), resurrect=True, tree=tree, user=user)


# ---------------------------------------------------------------------------
# Exact path density


def path_log_density(spec: TerminatedRateSpec, path: PathRecord, horizon: float,
                     make_state: Callable[[], EngineState]) -> float:
    """log density of a finite-jump path over [0, horizon].

    Sum of log jump intensities at the jump times minus the integrated total
    intensity along the path (the survival factor), the latter by adaptive
    quadrature.  ``make_state`` must return a fresh state at the path start;
    the spec's ``on_advance``/``on_jump`` hooks are replayed along the path.
    """
    if horizon < (path.times[-1] if path.n_jumps else 0.0):
        raise DomainError("horizon precedes the last jump")
    state = make_state()
    total = 0.0
    seg_start = 0.0
    jump_iter = list(zip(path.times, path.targets)) + [(horizon, None)]
    for jump_time, target in jump_iter:
        stay = jump_time - seg_start
        if stay < 0.0:
            raise DomainError("jump times out of order")
        nbrs = list(spec.neighbors(state))

        def total_rate(s):
            return sum(spec.rate(state, y, s) for y in nbrs)

        if stay > 0.0:
            value, _ = scipy.integrate.quad(
                total_rate, 0.0, stay, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200
            )
            total -= value
        if target is None:
            break
        y = int(target)
        r = spec.rate(state, y, stay)
        if r <= 0.0:
            return -math.inf
        total += math.log(r)
        if spec.on_advance is not None:
            spec.on_advance(state, stay)
        state.t = jump_time
        state.current = y
        state.n_jumps += 1
        if spec.on_jump is not None:
            spec.on_jump(state, y, CAUSE_RATE_CLOCK)
        seg_start = jump_time
    return total
