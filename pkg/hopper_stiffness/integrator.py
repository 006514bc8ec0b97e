# hopper_stiffness/integrator.py
"""Adaptive Dormand-Prince 5(4) integration of one hybrid phase with guard events.

A phase runs until the first directional zero crossing of a terminal guard or
until ``max_phase_duration`` elapses. Crossings are bracketed on the dense
output of each accepted step and located by bisection. A guard that dips
through zero and back between two sample points is caught by bracketing the
sign change of its time derivative. Once an event is located the step is
repeated with its length cut to the event time and polished by a few secant
iterations on real steps, so the published trajectory ends on an integrator
sample where the guard is zero.

``method="rk4"`` swaps in a fixed-step classical Runge-Kutta stepper with cubic
Hermite dense output. It shares the event machinery and serves as the
brute-force reference for the adaptive solver.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from hopper_stiffness.errors import NonFiniteState, NoSignChange, StepUnderflow

Dynamics = Callable[[float, np.ndarray], np.ndarray]
Guard = Callable[[float, np.ndarray], float]

MIN_STEP = 1e-15

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERROR_EXPONENT = -1.0 / 5.0

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    ]
)
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])

# 4th-order continuous extension, y(t + x h) = y + h * K^T P [x, x^2, x^3, x^4]
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


# ======================================================
# Configuration and event types
# ======================================================
class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    method: Literal["dopri5", "rk4"] = "dopri5"
    rel_tol: float = Field(default=1e-8, ge=1e-14)
    abs_tol: PositiveFloat = 1e-10
    max_step: PositiveFloat = 2e-3
    event_time_tol: PositiveFloat = 1e-12
    max_phase_duration: PositiveFloat = 2.0
    fixed_step: PositiveFloat = 1e-6
    # guard evaluations per accepted step, so double crossings inside one step are seen
    event_samples: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def _event_tol_below_step(self) -> "IntegratorConfig":
        if self.event_time_tol >= self.max_step:
            raise ValueError("event_time_tol must be smaller than max_step")
        return self


class Direction(IntEnum):
    FALLING = -1
    EITHER = 0
    RISING = 1


@dataclass(frozen=True)
class EventSpec:
    name: str
    guard: Guard
    direction: Direction = Direction.EITHER
    terminal: bool = True


@dataclass(frozen=True)
class EventHit:
    name: str
    time: float
    state: np.ndarray


@dataclass
class PhaseTrajectory:
    times: np.ndarray
    states: np.ndarray
    event: str | None
    timed_out: bool
    hits: list[EventHit] = field(default_factory=list)

    @property
    def terminal_time(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    def hits_named(self, name: str) -> list[EventHit]:
        return [hit for hit in self.hits if hit.name == name]


# ======================================================
# Dense output
# ======================================================
class _DopriDense:
    def __init__(self, t_old: float, h: float, y_old: np.ndarray, stages: np.ndarray):
        self.t_old = t_old
        self.h = h
        self.y_old = y_old
        self.Q = stages.T @ _P

    def __call__(self, t: float) -> np.ndarray:
        x = (t - self.t_old) / self.h
        powers = np.array([x, x * x, x**3, x**4])
        return self.y_old + self.h * (self.Q @ powers)

    def derivative(self, t: float) -> np.ndarray:
        x = (t - self.t_old) / self.h
        return self.Q @ np.array([1.0, 2.0 * x, 3.0 * x * x, 4.0 * x**3])


class _HermiteDense:
    def __init__(
        self,
        t_old: float,
        h: float,
        y_old: np.ndarray,
        y_new: np.ndarray,
        f_old: np.ndarray,
        f_new: np.ndarray,
    ):
        self.t_old, self.h = t_old, h
        self.y_old, self.y_new = y_old, y_new
        self.f_old, self.f_new = f_old, f_new

    def __call__(self, t: float) -> np.ndarray:
        x = (t - self.t_old) / self.h
        x2, x3 = x * x, x**3
        return (
            (2 * x3 - 3 * x2 + 1) * self.y_old
            + (x3 - 2 * x2 + x) * self.h * self.f_old
            + (-2 * x3 + 3 * x2) * self.y_new
            + (x3 - x2) * self.h * self.f_new
        )

    def derivative(self, t: float) -> np.ndarray:
        x = (t - self.t_old) / self.h
        x2 = x * x
        return (
            (6 * x2 - 6 * x) * (self.y_old - self.y_new) / self.h
            + (3 * x2 - 4 * x + 1) * self.f_old
            + (3 * x2 - 2 * x) * self.f_new
        )


# ======================================================
# Steppers
# ======================================================
def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _dopri5_step(fun: Dynamics, t: float, y: np.ndarray, f: np.ndarray, h: float):
    stages = np.empty((7, y.size))
    stages[0] = f
    for s in range(1, 6):
        dy = h * (stages[:s].T @ _A[s, :s])
        stages[s] = fun(t + _C[s] * h, y + dy)
    y_new = y + h * (stages[:6].T @ _B)
    f_new = fun(t + h, y_new)
    stages[6] = f_new
    error = h * (stages.T @ _E)
    return y_new, f_new, error, _DopriDense(t, h, y, stages)


def _rk4_step(fun: Dynamics, t: float, y: np.ndarray, f: np.ndarray, h: float):
    k2 = fun(t + 0.5 * h, y + 0.5 * h * f)
    k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(t + h, y + h * k3)
    y_new = y + (h / 6.0) * (f + 2.0 * k2 + 2.0 * k3 + k4)
    f_new = fun(t + h, y_new)
    return y_new, f_new, None, _HermiteDense(t, h, y, y_new, f, f_new)


def _initial_step(fun: Dynamics, t: float, y: np.ndarray, f: np.ndarray, cfg: IntegratorConfig):
    scale = cfg.abs_tol + np.abs(y) * cfg.rel_tol
    d0, d1 = _rms(y / scale), _rms(f / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step)
    f1 = fun(t + h0, y + h0 * f)
    d2 = _rms((f1 - f) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1, cfg.max_step)


# ======================================================
# Event localization
# ======================================================
def _crossed(direction: Direction, g_a: float, g_b: float) -> bool:
    if direction >= 0 and g_a < 0.0 <= g_b:
        return True
    if direction <= 0 and g_a > 0.0 >= g_b:
        return True
    return False


def locate_event(
    t_lo: float,
    t_hi: float,
    guard: Callable[[float], float],
    direction: Direction = Direction.EITHER,
    tol: float = 1e-12,
    g_lo: float | None = None,
    g_hi: float | None = None,
) -> float:
    """Bisect ``[t_lo, t_hi]`` down to ``tol`` for the directional zero of ``guard(t)``.

    Returns the upper end of the final bracket, i.e. the first time the guard is
    known to sit on the far side of zero.
    """
    g_lo = guard(t_lo) if g_lo is None else g_lo
    g_hi = guard(t_hi) if g_hi is None else g_hi
    if not _crossed(direction, g_lo, g_hi):
        raise NoSignChange(f"guard does not cross zero on [{t_lo}, {t_hi}]")

    while t_hi - t_lo > tol:
        t_mid = 0.5 * (t_lo + t_hi)
        if not t_lo < t_mid < t_hi:
            break
        g_mid = guard(t_mid)
        if _crossed(direction, g_lo, g_mid):
            t_hi = t_mid
        else:
            t_lo, g_lo = t_mid, g_mid
    return t_hi


def _scan_events(
    events: Sequence[EventSpec],
    guards: list[float],
    t: float,
    t_new: float,
    y_new: np.ndarray,
    dense,
    cfg: IntegratorConfig,
) -> list[tuple[float, EventSpec]]:
    """Crossings inside one accepted step, in time order, up to the first terminal one.

    Between two sample nodes a guard that keeps its sign can still dip through
    zero and come back. Such a dip shows up as a sign change of the guard's time
    derivative; the extremum is bracketed on that change and, when it lies on
    the far side of zero, the first crossing is located between the left node
    and the extremum.
    """
    found: list[tuple[float, EventSpec]] = []
    n = cfg.event_samples
    eps = 1e-7 * max(t_new - t, MIN_STEP)
    t_prev, g_prev = t, guards
    rate_prev = [_guard_rate(ev.guard, dense, t, eps) for ev in events]

    for j in range(1, n + 1):
        t_node = t_new if j == n else t + (t_new - t) * j / n
        y_node = y_new if j == n else dense(t_node)
        g_node = [ev.guard(t_node, y_node) for ev in events]
        rate_node = [_guard_rate(ev.guard, dense, t_node, eps) for ev in events]

        crossings = []
        for k, ev in enumerate(events):
            g_a, g_b = g_prev[k], g_node[k]
            on_dense = lambda s, ev=ev: ev.guard(s, dense(s))  # noqa: E731
            t_far, g_far = t_node, g_b
            if not _crossed(ev.direction, g_a, g_b):
                extremum = _interior_extremum(
                    ev, on_dense, dense, t_prev, t_node, g_a, g_b, rate_prev[k], rate_node[k], eps, cfg
                )
                if extremum is None:
                    continue
                t_far, g_far = extremum
            t_hit = locate_event(
                t_prev, t_far, on_dense, ev.direction, cfg.event_time_tol, g_lo=g_a, g_hi=g_far
            )
            crossings.append((t_hit, ev))

        for hit in sorted(crossings, key=lambda item: item[0]):
            found.append(hit)
            if hit[1].terminal:
                return found

        t_prev, g_prev, rate_prev = t_node, g_node, rate_node
    return found


def _guard_rate(guard: Guard, dense, t: float, eps: float) -> float:
    """Time derivative of ``guard`` along the dense output, by a central difference."""
    y, dy = dense(t), dense.derivative(t)
    return (guard(t + eps, y + eps * dy) - guard(t - eps, y - eps * dy)) / (2.0 * eps)


def _interior_extremum(
    ev: EventSpec,
    on_dense: Callable[[float], float],
    dense,
    t_a: float,
    t_b: float,
    g_a: float,
    g_b: float,
    rate_a: float,
    rate_b: float,
    eps: float,
    cfg: IntegratorConfig,
) -> tuple[float, float] | None:
    # a minimum can hide a falling crossing, a maximum a rising one
    if ev.direction <= 0 and g_a > 0.0 and g_b > 0.0 and rate_a < 0.0 < rate_b:
        turn = Direction.RISING
    elif ev.direction >= 0 and g_a < 0.0 and g_b < 0.0 and rate_a > 0.0 > rate_b:
        turn = Direction.FALLING
    else:
        return None

    t_ext = locate_event(
        t_a,
        t_b,
        lambda s: _guard_rate(ev.guard, dense, s, eps),
        turn,
        cfg.event_time_tol,
        g_lo=rate_a,
        g_hi=rate_b,
    )
    g_ext = on_dense(t_ext)
    if not _crossed(ev.direction, g_a, g_ext):
        return None
    return t_ext, g_ext


def _land_on_event(
    step,
    dynamics: Dynamics,
    t: float,
    y: np.ndarray,
    f: np.ndarray,
    t_hit: float,
    guard: Guard,
    t_new: float,
    iterations: int = 4,
) -> tuple[float, np.ndarray]:
    """Real step from ``t`` to the located event, refined by secant on the stepped guard.

    The dense output and a real step differ by the local error, so the guard is
    re-zeroed on actual steps; the refined time stays inside ``(t, t_new]``.
    """
    s_b = t_hit - t
    y_b = step(dynamics, t, y, f, s_b)[0]
    g_b = guard(t + s_b, y_b)
    best = (abs(g_b), s_b, y_b)

    s_a = s_b * (1.0 - 1e-4)
    g_a = guard(t + s_a, step(dynamics, t, y, f, s_a)[0])
    for _ in range(iterations):
        if g_b == 0.0 or g_b == g_a:
            break
        s_c = s_b - g_b * (s_b - s_a) / (g_b - g_a)
        if not 0.0 < s_c <= t_new - t:
            break
        y_c = step(dynamics, t, y, f, s_c)[0]
        g_c = guard(t + s_c, y_c)
        if abs(g_c) < best[0]:
            best = (abs(g_c), s_c, y_c)
        s_a, g_a, s_b, g_b = s_b, g_b, s_c, g_c

    _, s, y_hit = best
    return t + s, y_hit


# ======================================================
# Phase integration
# ======================================================
def integrate_phase(
    t0: float,
    y0: np.ndarray,
    dynamics: Dynamics,
    events: Sequence[EventSpec],
    cfg: IntegratorConfig,
) -> PhaseTrajectory:
    """Integrate ``dynamics`` from ``(t0, y0)`` until a terminal event or the phase timeout.

    Raises StepUnderflow when the step size collapses and NonFiniteState when the
    state leaves the reals. A timeout is reported through ``timed_out``.
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"initial state is not finite: {y}")

    fixed = cfg.method == "rk4"
    step = _rk4_step if fixed else _dopri5_step

    t = float(t0)
    t_end = t + cfg.max_phase_duration
    f = dynamics(t, y)
    if not np.all(np.isfinite(f)):
        raise NonFiniteState(f"state rate is not finite at t={t:.9f} s: {f}")
    h = cfg.fixed_step if fixed else _initial_step(dynamics, t, y, f, cfg)

    times, states, hits = [t], [y], []
    guards = [ev.guard(t, y) for ev in events]

    def finish(event: str | None, timed_out: bool) -> PhaseTrajectory:
        return PhaseTrajectory(
            times=np.array(times), states=np.vstack(states), event=event, timed_out=timed_out, hits=hits
        )

    while True:
        remaining = t_end - t
        if remaining <= MIN_STEP:
            return finish(None, True)

        h = min(cfg.fixed_step if fixed else h, cfg.max_step, remaining)
        if h < MIN_STEP:
            raise StepUnderflow(f"step size {h:.3e} s collapsed at t={t:.9f} s")

        y_new, f_new, error, dense = step(dynamics, t, y, f, h)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            if fixed or h * 0.25 < MIN_STEP:
                raise NonFiniteState(f"state left the reals at t={t + h:.9f} s")
            h *= 0.25
            continue

        err_norm = 0.0
        if error is not None:
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = _rms(error / scale)
            if err_norm > 1.0:
                h *= max(_MIN_FACTOR, _SAFETY * err_norm**_ERROR_EXPONENT)
                continue

        t_new = t + h
        if events:
            for t_hit, ev in _scan_events(events, guards, t, t_new, y_new, dense, cfg):
                if not ev.terminal:
                    hits.append(EventHit(ev.name, t_hit, dense(t_hit)))
                    continue
                # land the published trajectory on the event time with a real step
                t_hit, y_hit = _land_on_event(step, dynamics, t, y, f, t_hit, ev.guard, t_new)
                times.append(t_hit)
                states.append(y_hit)
                hits.append(EventHit(ev.name, t_hit, y_hit))
                return finish(ev.name, False)

        t, y, f = t_new, y_new, f_new
        times.append(t)
        states.append(y)
        guards = [ev.guard(t, y) for ev in events]

        if error is not None:
            factor = _MAX_FACTOR if err_norm == 0.0 else _SAFETY * err_norm**_ERROR_EXPONENT
            h *= min(_MAX_FACTOR, factor)
