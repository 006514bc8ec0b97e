# hopper_stiffness/emulator.py
"""Ground emulator maths: linkage kinematics, PD rendering, oscillator fits, gain calibration.

The emulated surface is driven by a motor through a five-bar linkage. A PD loop
renders the ground spring-damper; the rendered profile is identified by
dropping a known mass on it and fitting an underdamped oscillator

    r(t) = A exp(-beta t) cos(sqrt(alpha - beta^2) t + phi) - g / alpha

whose parameters relate to the rendered ground as ``k_g = alpha m_w`` and
``d_g = 2 beta m_w``.
"""

from dataclasses import dataclass
import math

from loguru import logger
import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, PositiveFloat, PositiveInt
from pydantic import model_validator
from scipy.optimize import least_squares
from scipy.stats import linregress

from hopper_stiffness.config import GRAVITY
from hopper_stiffness.errors import DegenerateTrace, FitNoConvergence, HopperValueError
from hopper_stiffness.errors import InsufficientSpread, OutOfDomain, Overdamped, TraceFormatError
from hopper_stiffness.model import GroundProfile

MIN_TRACE_SAMPLES = 20
ACCEPT_R2 = 0.9

_FROZEN = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


# ======================================================
# Linkage kinematics and rendering force
# ======================================================
class LinkageGeometry(BaseModel):
    model_config = _FROZEN

    link1: PositiveFloat = 0.1
    link2: PositiveFloat = 0.2

    @model_validator(mode="after")
    def _crank_shorter(self) -> "LinkageGeometry":
        if not self.link1 < self.link2:
            raise ValueError(f"link1 ({self.link1}) must be shorter than link2 ({self.link2})")
        return self


class PdGains(BaseModel):
    model_config = _FROZEN

    kp: NonNegativeFloat
    kd: NonNegativeFloat


def forward_kinematics(theta_g, geom: LinkageGeometry):
    """Ground surface displacement ``r_g`` for motor angle ``theta_g`` (scalar or array)."""
    l1, l2 = geom.link1, geom.link2
    radicand = -0.5 * l1**2 + l2**2 + 0.5 * l1**2 * np.cos(2.0 * theta_g)
    return -l1 * np.cos(theta_g) + np.sqrt(radicand)


def kinematic_jacobian(theta_g, geom: LinkageGeometry):
    """``d r_g / d theta_g``."""
    l1, l2 = geom.link1, geom.link2
    radicand = -0.5 * l1**2 + l2**2 + 0.5 * l1**2 * np.cos(2.0 * theta_g)
    return l1 * np.sin(theta_g) - 0.5 * l1**2 * np.sin(2.0 * theta_g) / np.sqrt(radicand)


def motor_torque(force, theta_g, geom: LinkageGeometry):
    return force * kinematic_jacobian(theta_g, geom)


def torque_profile(thetas, forces, geom: LinkageGeometry) -> np.ndarray:
    """Motor torque along a trajectory of angles and rendered forces."""
    thetas = np.asarray(thetas, dtype=float)
    forces = np.asarray(forces, dtype=float)
    if thetas.shape != forces.shape:
        raise HopperValueError(f"shape mismatch: angles {thetas.shape}, forces {forces.shape}")
    return motor_torque(forces, thetas, geom)


def pd_render_force(delta_r: float, r_dot: float, gains: PdGains) -> float:
    return gains.kp * delta_r + gains.kd * r_dot


# ======================================================
# Oscillation traces
# ======================================================
@dataclass(frozen=True)
class OscillationTrace:
    times: np.ndarray
    positions: np.ndarray
    mass: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        r = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.shape != r.shape:
            raise TraceFormatError(f"time and position columns differ: {t.shape} vs {r.shape}")
        if t.size < MIN_TRACE_SAMPLES:
            raise TraceFormatError(f"trace has {t.size} samples, need at least {MIN_TRACE_SAMPLES}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(r))):
            raise TraceFormatError("trace contains non-finite samples")
        if np.any(np.diff(t) <= 0):
            raise TraceFormatError("trace times must be strictly increasing")
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise TraceFormatError(f"test mass must be positive, got {self.mass}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", r)

    def __len__(self) -> int:
        return int(self.times.size)


def oscillator_signal(t, amplitude: float, alpha: float, beta: float, phase: float, g: float = GRAVITY):
    omega = math.sqrt(alpha - beta**2)
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-beta * t) * np.cos(omega * t + phase) - g / alpha


def synthesize_trace(
    ground_stiffness: float,
    ground_damping: float,
    mass: float,
    amplitude: float = 0.02,
    phase: float = 0.0,
    duration: float = 1.0,
    samples: int = 1000,
    noise_std: float = 0.0,
    seed: int | None = None,
    g: float = GRAVITY,
) -> OscillationTrace:
    """Drop-test trace of a mass on the rendered ground, optionally with Gaussian noise."""
    alpha = ground_stiffness / mass
    beta = ground_damping / (2.0 * mass)
    if alpha <= beta**2:
        raise Overdamped(f"k_g={ground_stiffness}, d_g={ground_damping}, m={mass} does not oscillate")

    t = np.linspace(0.0, duration, samples)
    r = oscillator_signal(t, amplitude, alpha, beta, phase, g)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        r = r + rng.normal(0.0, noise_std, size=r.shape)
    return OscillationTrace(times=t, positions=r, mass=mass)


def trim_to_release(trace: OscillationTrace) -> OscillationTrace:
    """Drop leading samples before the first negative-going peak (first local minimum)."""
    r = trace.positions
    minima = np.flatnonzero((r[1:-1] < r[:-2]) & (r[1:-1] <= r[2:])) + 1
    if minima.size == 0:
        return trace
    start = int(minima[0])
    if trace.times.size - start < MIN_TRACE_SAMPLES:
        raise DegenerateTrace(f"only {trace.times.size - start} samples remain after the release point")
    return OscillationTrace(trace.times[start:], r[start:], trace.mass)


# ======================================================
# Oscillator fit
# ======================================================
class FitGuess(BaseModel):
    model_config = _FROZEN

    amplitude: float
    alpha: PositiveFloat
    beta: NonNegativeFloat
    phase: float = 0.0
    offset: float | None = None


class FitConfig(BaseModel):
    model_config = _FROZEN

    free_offset: bool = False
    min_r_squared: float = ACCEPT_R2
    max_evaluations: PositiveInt = 5000
    tolerance: PositiveFloat = 1e-12
    gravity: PositiveFloat = GRAVITY


class OscillatorFit(BaseModel):
    model_config = _FROZEN

    amplitude: NonNegativeFloat
    alpha: PositiveFloat
    beta: float
    phase: float
    offset: float
    residual_rms: NonNegativeFloat
    r_squared: float
    mass: PositiveFloat
    evaluations: int = 0
    min_r_squared: float = ACCEPT_R2

    @property
    def ground_stiffness(self) -> float:
        return self.alpha * self.mass

    @property
    def ground_damping(self) -> float:
        return 2.0 * self.beta * self.mass

    @property
    def accepted(self) -> bool:
        return self.r_squared >= self.min_r_squared

    def to_profile(self) -> GroundProfile:
        return GroundProfile(ground_stiffness=self.ground_stiffness, ground_damping=max(self.ground_damping, 0.0))


def _wrap_angle(phi: float) -> float:
    wrapped = math.atan2(math.sin(phi), math.cos(phi))
    return math.pi if wrapped == -math.pi else wrapped


def initial_guess(trace: OscillationTrace, cfg: FitConfig | None = None) -> FitGuess:
    """Signal heuristics: tail-mean offset, zero-crossing period, log peak-envelope decay."""
    cfg = cfg or FitConfig()
    t, r = trace.times, trace.positions
    if np.ptp(r) <= 1e-12 * max(1.0, float(np.max(np.abs(r)))):
        raise DegenerateTrace("trace is constant")

    offset = float(np.mean(r[-max(len(r) // 4, 1) :]))
    x = r - offset

    # hysteresis on +-5% of the swing so noise does not create spurious crossings
    band = 0.05 * float(np.max(np.abs(x)))
    crossings, sign = [], 0
    for i, value in enumerate(x):
        state = 1 if value > band else -1 if value < -band else 0
        if state and sign and state != sign:
            crossings.append(i)
        if state:
            sign = state
    if len(crossings) < 3:
        raise DegenerateTrace(f"found {len(crossings)} crossings, need two full oscillation periods")

    half_periods = np.diff(t[crossings])
    omega = math.pi / float(np.mean(half_periods))

    bounds = [0, *crossings, len(x)]
    peak_t, peak_x = [], []
    for lo, hi in zip(bounds, bounds[1:]):
        k = lo + int(np.argmax(np.abs(x[lo:hi])))
        peak_t.append(t[k])
        peak_x.append(abs(x[k]))
    slope = linregress(peak_t, np.log(np.maximum(peak_x, 1e-15))).slope
    beta = max(-float(slope), 0.0)

    # amplitude and phase from a linear fit with omega and beta frozen
    envelope = np.exp(-beta * t)
    basis = np.column_stack([envelope * np.cos(omega * t), envelope * np.sin(omega * t)])
    (a, b), *_ = np.linalg.lstsq(basis, x, rcond=None)
    amplitude = math.hypot(a, b)
    phase = math.atan2(-b, a)

    return FitGuess(
        amplitude=amplitude,
        alpha=omega**2 + beta**2,
        beta=beta,
        phase=phase,
        offset=offset if cfg.free_offset else None,
    )


def fit_oscillator(
    trace: OscillationTrace,
    init: FitGuess | None = None,
    cfg: FitConfig | None = None,
) -> OscillatorFit:
    """Levenberg-Marquardt fit in ``(A, omega, beta, phi[, c])`` with ``alpha = omega^2 + beta^2``."""
    cfg = cfg or FitConfig()
    g = cfg.gravity
    t, r = trace.times, trace.positions
    if np.ptp(r) <= 1e-12 * max(1.0, float(np.max(np.abs(r)))):
        raise DegenerateTrace("trace is constant")

    guess = init or initial_guess(trace, cfg)
    omega0 = math.sqrt(max(guess.alpha - guess.beta**2, 1e-12))
    x0 = [guess.amplitude, omega0, guess.beta, guess.phase]
    if cfg.free_offset:
        x0.append(guess.offset if guess.offset is not None else -g / guess.alpha)

    def unpack(p):
        amp, omega, beta, phi = p[:4]
        alpha = omega**2 + beta**2
        offset = p[4] if cfg.free_offset else -g / alpha
        return amp, omega, beta, phi, alpha, offset

    def residuals(p):
        amp, omega, beta, phi, _, offset = unpack(p)
        return amp * np.exp(-beta * t) * np.cos(omega * t + phi) + offset - r

    def jacobian(p):
        amp, omega, beta, phi, alpha, _ = unpack(p)
        decay = np.exp(-beta * t)
        cos, sin = np.cos(omega * t + phi), np.sin(omega * t + phi)
        cols = [
            decay * cos,
            -amp * t * decay * sin,
            -amp * t * decay * cos,
            -amp * decay * sin,
        ]
        if cfg.free_offset:
            cols.append(np.ones_like(t))
        else:
            # d(-g/alpha) = g/alpha^2 * d(alpha)
            cols[1] = cols[1] + 2.0 * g * omega / alpha**2
            cols[2] = cols[2] + 2.0 * g * beta / alpha**2
        return np.column_stack(cols)

    result = least_squares(
        residuals,
        np.asarray(x0, dtype=float),
        jac=jacobian,
        method="lm",
        x_scale="jac",
        ftol=cfg.tolerance,
        xtol=cfg.tolerance,
        gtol=cfg.tolerance,
        max_nfev=cfg.max_evaluations,
    )
    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise FitNoConvergence(f"least squares stopped: {result.message}")

    amp, omega, beta, phi, alpha, offset = unpack(result.x)
    if abs(omega) <= 1e-9 * math.sqrt(alpha):
        raise Overdamped(f"alpha={alpha:.6g} is not above beta^2={beta**2:.6g}")
    if omega < 0:
        omega, phi = -omega, -phi
    if amp < 0:
        amp, phi = -amp, phi + math.pi

    res = result.fun
    ss_res = float(np.sum(res**2))
    ss_tot = float(np.sum((r - np.mean(r)) ** 2))
    fit = OscillatorFit(
        amplitude=amp,
        alpha=alpha,
        beta=beta,
        phase=_wrap_angle(phi),
        offset=offset,
        residual_rms=math.sqrt(ss_res / len(r)),
        r_squared=1.0 - ss_res / ss_tot,
        mass=trace.mass,
        evaluations=int(result.nfev),
        min_r_squared=cfg.min_r_squared,
    )
    if not fit.accepted:
        logger.warning(f"oscillator fit R^2={fit.r_squared:.4f} is below {cfg.min_r_squared}")
    logger.debug(
        f"fit: k_g={fit.ground_stiffness:.2f} N/m, d_g={fit.ground_damping:.3f} Ns/m, R^2={fit.r_squared:.5f}"
    )
    return fit


# ======================================================
# Gain calibration
# ======================================================
class AffineMap(BaseModel):
    model_config = _FROZEN

    slope: float
    intercept: float
    r_squared: float

    def __call__(self, x):
        return self.slope * x + self.intercept

    def inverse(self, y):
        if self.slope == 0:
            raise HopperValueError("affine map with zero slope has no inverse")
        return (y - self.intercept) / self.slope


class GainCalibration(BaseModel):
    """``k_g = f_k(K_p)`` and ``d_g = f_d(K_d)``."""

    model_config = _FROZEN

    stiffness_map: AffineMap
    damping_map: AffineMap
    samples: int

    def gains_for(self, profile: GroundProfile) -> PdGains:
        kp = float(self.stiffness_map.inverse(profile.ground_stiffness))
        kd = float(self.damping_map.inverse(profile.ground_damping))
        if kp < 0 or kd < 0:
            raise OutOfDomain(f"{profile} needs negative gains (K_p={kp:.3f}, K_d={kd:.3f})")
        return PdGains(kp=kp, kd=kd)


def _affine(x: np.ndarray, y: np.ndarray) -> AffineMap:
    fit = linregress(x, y)
    return AffineMap(slope=float(fit.slope), intercept=float(fit.intercept), r_squared=float(fit.rvalue**2))


def calibrate_gain_maps(
    fits: list[tuple[PdGains, OscillatorFit]], accepted_only: bool = True
) -> GainCalibration:
    usable = [(gains, fit) for gains, fit in fits if fit.accepted or not accepted_only]
    if len(usable) < len(fits):
        logger.warning(f"Dropping {len(fits) - len(usable)} fits below their R^2 acceptance bar")

    kp = np.array([gains.kp for gains, _ in usable], dtype=float)
    kd = np.array([gains.kd for gains, _ in usable], dtype=float)
    if np.unique(kp).size < 2 or np.unique(kd).size < 2:
        raise InsufficientSpread(
            f"need two distinct K_p and K_d values, got {np.unique(kp).size} and {np.unique(kd).size}"
        )

    k_g = np.array([fit.ground_stiffness for _, fit in usable])
    d_g = np.array([fit.ground_damping for _, fit in usable])
    calibration = GainCalibration(stiffness_map=_affine(kp, k_g), damping_map=_affine(kd, d_g), samples=len(usable))
    logger.info(
        f"k_g = {calibration.stiffness_map.slope:.4f} K_p + {calibration.stiffness_map.intercept:.3f}; "
        f"d_g = {calibration.damping_map.slope:.4f} K_d + {calibration.damping_map.intercept:.3f}"
    )
    return calibration
