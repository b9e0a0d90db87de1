"""Physical models of the polarization controller and the fiber channel.

The controllable plant is an electronic polarization controller (EPC) built
from four fiber squeezers.  Each squeezer rotates the state of polarization
about its stress axis by an angle proportional to the applied voltage; the
squeezer axes alternate between two orthogonal equatorial directions, and the
axes themselves wander slowly over time.

The channel between transmitter and receiver is one of three models: a static
misalignment, an isotropic random walk standing in for slow drift of installed
fiber, or a deterministic scrambler that rotates the state about a fixed axis
at a constant rate.

States are immutable values evolved by pure step functions taking explicit
random generators; independent simulation instances may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .poincare import (
    IDENTITY,
    Rotation,
    StokesVector,
    apply_rotation,
    compose,
    rotation_from_axis_angle,
)

# Voltage-to-angle map is linear, angle = gain * voltage.  The default gain
# and range let a single squeezer cover a full turn of the sphere.
DEFAULT_GAIN = math.pi / 75.0  # rad per volt
DEFAULT_V_MIN = 0.0
DEFAULT_V_MAX = 150.0
DEFAULT_GAIN_JITTER = 0.1  # relative squeezer-to-squeezer spread

DEFAULT_AXIS_DRIFT_SIGMA = 0.002  # rad per feedback cycle
DEFAULT_MAX_AXIS_WANDER = math.radians(10.0)  # cone half-angle around nominal

SQUEEZER_AXIS_A = StokesVector(1.0, 0.0, 0.0)
SQUEEZER_AXIS_B = StokesVector(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class SqueezerState:
    """One fiber squeezer: rotation axis, voltage-to-angle gain, drive state."""

    axis: StokesVector
    nominal_axis: StokesVector
    gain: float
    voltage: float
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self) -> None:
        if not (self.v_min < self.v_max):
            raise ValueError("squeezer voltage range is empty")
        if not (self.v_min <= self.voltage <= self.v_max):
            raise ValueError(
                f"voltage {self.voltage!r} outside [{self.v_min!r}, {self.v_max!r}]"
            )
        if not (self.gain > 0.0 and math.isfinite(self.gain)):
            raise ValueError("squeezer gain must be positive and finite")

    @property
    def center(self) -> float:
        """Center of the drive range, the reset target for endless control."""
        return 0.5 * (self.v_min + self.v_max)


@dataclass(frozen=True)
class EpcState:
    """Four squeezers in light-path order; stages 1 and 3 share a nominal axis,
    stages 2 and 4 share the orthogonal equatorial one."""

    squeezers: tuple[SqueezerState, SqueezerState, SqueezerState, SqueezerState]

    def __post_init__(self) -> None:
        if len(self.squeezers) != 4:
            raise ValueError("an EPC has exactly 4 squeezers")
        n = [sq.nominal_axis for sq in self.squeezers]
        if n[0].dot(n[2]) < 1.0 - 1e-9 or n[1].dot(n[3]) < 1.0 - 1e-9:
            raise ValueError("squeezers 1/3 and 2/4 must share nominal axes")
        if abs(n[0].dot(n[1])) > 1e-9:
            raise ValueError("the two nominal axes must be orthogonal")
        if abs(n[0].s3) > 1e-9 or abs(n[1].s3) > 1e-9:
            raise ValueError("nominal axes must lie on the sphere equator")

    @property
    def voltages(self) -> tuple[float, float, float, float]:
        return tuple(sq.voltage for sq in self.squeezers)  # type: ignore[return-value]

    def with_voltage(self, i: int, voltage: float) -> "EpcState":
        """Copy with squeezer ``i`` driven at ``voltage``."""
        sqs = list(self.squeezers)
        sqs[i] = replace(sqs[i], voltage=voltage)
        return EpcState(tuple(sqs))


def default_epc(
    rng: np.random.Generator | None = None,
    *,
    gain: float = DEFAULT_GAIN,
    gain_jitter: float = 0.0,
    v_min: float = DEFAULT_V_MIN,
    v_max: float = DEFAULT_V_MAX,
) -> EpcState:
    """EPC with nominal axes, all voltages at the range center.

    ``gain_jitter`` models squeezer-to-squeezer inconsistency: each stage's
    gain is drawn uniformly within ``gain * (1 +/- gain_jitter)``.
    """
    if gain_jitter > 0.0 and rng is None:
        raise ValueError("gain_jitter requires an rng")
    axes = (SQUEEZER_AXIS_A, SQUEEZER_AXIS_B, SQUEEZER_AXIS_A, SQUEEZER_AXIS_B)
    center = 0.5 * (v_min + v_max)
    squeezers = []
    for axis in axes:
        g = gain
        if gain_jitter > 0.0:
            g = gain * (1.0 + gain_jitter * rng.uniform(-1.0, 1.0))
        squeezers.append(
            SqueezerState(
                axis=axis,
                nominal_axis=axis,
                gain=g,
                voltage=center,
                v_min=v_min,
                v_max=v_max,
            )
        )
    return EpcState(tuple(squeezers))


def squeezer_rotation(sq: SqueezerState) -> Rotation:
    """Rotation applied by one squeezer, angle = gain * voltage about its axis."""
    return rotation_from_axis_angle(sq.axis, sq.gain * sq.voltage)


def epc_rotation(epc: EpcState) -> Rotation:
    """Composite rotation of the whole EPC; light traverses squeezer 1 first."""
    r = squeezer_rotation(epc.squeezers[0])
    for sq in epc.squeezers[1:]:
        r = compose(squeezer_rotation(sq), r)
    return r


def _tangent_basis(v: StokesVector) -> tuple[StokesVector, StokesVector]:
    """Two orthonormal directions perpendicular to ``v``."""
    ref = (0.0, 0.0, 1.0) if abs(v.s3) < 0.9 else (1.0, 0.0, 0.0)
    cx = v.s2 * ref[2] - v.s3 * ref[1]
    cy = v.s3 * ref[0] - v.s1 * ref[2]
    cz = v.s1 * ref[1] - v.s2 * ref[0]
    e1 = StokesVector.unit(cx, cy, cz)
    e2 = StokesVector.unit(
        v.s2 * e1.s3 - v.s3 * e1.s2,
        v.s3 * e1.s1 - v.s1 * e1.s3,
        v.s1 * e1.s2 - v.s2 * e1.s1,
    )
    return e1, e2


def _clamp_to_cone(axis: StokesVector, nominal: StokesVector, max_wander: float) -> StokesVector:
    """Pull ``axis`` back onto the wander cone around ``nominal`` if outside."""
    c = axis.dot(nominal)
    if c >= math.cos(max_wander):
        return axis
    t1 = axis.s1 - c * nominal.s1
    t2 = axis.s2 - c * nominal.s2
    t3 = axis.s3 - c * nominal.s3
    tn = math.sqrt(t1 * t1 + t2 * t2 + t3 * t3)
    if tn < 1e-12:
        # antipodal corner case; fall back to an arbitrary tangent direction
        t, _ = _tangent_basis(nominal)
        t1, t2, t3, tn = t.s1, t.s2, t.s3, 1.0
    cw, sw = math.cos(max_wander), math.sin(max_wander)
    return StokesVector.unit(
        cw * nominal.s1 + sw * t1 / tn,
        cw * nominal.s2 + sw * t2 / tn,
        cw * nominal.s3 + sw * t3 / tn,
    )


def drift_axes(
    epc: EpcState,
    dt: float,
    rng: np.random.Generator,
    *,
    sigma: float = DEFAULT_AXIS_DRIFT_SIGMA,
    max_wander: float = DEFAULT_MAX_AXIS_WANDER,
) -> EpcState:
    """Random mechanical wander of the squeezer axes over ``dt`` feedback cycles.

    Each axis is tipped in a uniformly random tangent direction by an angle
    drawn from N(0, sigma*sqrt(dt)), then clamped to stay within
    ``max_wander`` of its nominal orientation.  Deterministic given the rng.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0 or sigma == 0.0:
        return epc
    scale = sigma * math.sqrt(dt)
    squeezers = []
    for sq in epc.squeezers:
        angle = rng.normal(0.0, scale)
        psi = rng.uniform(0.0, 2.0 * math.pi)
        e1, e2 = _tangent_basis(sq.axis)
        tip_axis = StokesVector.unit(
            math.cos(psi) * e1.s1 + math.sin(psi) * e2.s1,
            math.cos(psi) * e1.s2 + math.sin(psi) * e2.s2,
            math.cos(psi) * e1.s3 + math.sin(psi) * e2.s3,
        )
        moved = apply_rotation(rotation_from_axis_angle(tip_axis, angle), sq.axis)
        squeezers.append(replace(sq, axis=_clamp_to_cone(moved, sq.nominal_axis, max_wander)))
    return EpcState(tuple(squeezers))


@dataclass(frozen=True)
class StaticChannel:
    """Fixed misalignment between transmitter and receiver frames."""

    rotation: Rotation


@dataclass(frozen=True)
class ScramblerChannel:
    """Deterministic rotation about a fixed axis at a constant angular rate."""

    axis: StokesVector
    rate: float  # degrees per feedback cycle
    accumulated: float = 0.0  # degrees, wraps modulo 360


@dataclass(frozen=True)
class RandomWalkChannel:
    """Isotropic small-step rotation diffusion, a stand-in for slow fiber drift.

    Every ``axis_resample_period`` cycles a fresh random walk axis is drawn;
    between redraws steps accumulate about the same axis.
    """

    step_sigma: float  # radians per feedback cycle
    current: Rotation = IDENTITY
    axis_resample_period: int = 1
    walk_axis: StokesVector | None = None
    age: int = 0


ChannelModel = StaticChannel | ScramblerChannel | RandomWalkChannel


def random_unit_vector(rng: np.random.Generator) -> StokesVector:
    """Isotropically random point on the sphere."""
    while True:
        x, y, z = rng.normal(size=3)
        n = math.sqrt(x * x + y * y + z * z)
        if n > 1e-12:
            return StokesVector(x / n, y / n, z / n)


def channel_step(
    ch: ChannelModel, dt: float, rng: np.random.Generator
) -> tuple[ChannelModel, Rotation]:
    """Advance the channel by ``dt`` feedback cycles.

    Returns the updated model and the rotation the channel currently applies.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if isinstance(ch, StaticChannel):
        return ch, ch.rotation
    if isinstance(ch, ScramblerChannel):
        accumulated = (ch.accumulated + ch.rate * dt) % 360.0
        rot = rotation_from_axis_angle(ch.axis, math.radians(accumulated))
        return replace(ch, accumulated=accumulated), rot
    if isinstance(ch, RandomWalkChannel):
        steps = int(dt)
        if steps != dt:
            raise ValueError("random-walk channel advances by whole cycles")
        current, axis, age = ch.current, ch.walk_axis, ch.age
        for _ in range(steps):
            if axis is None or age % ch.axis_resample_period == 0:
                axis = random_unit_vector(rng)
            angle = rng.normal(0.0, ch.step_sigma)
            current = compose(rotation_from_axis_angle(axis, angle), current)
            age += 1
        return replace(ch, current=current, walk_axis=axis, age=age), current
    raise TypeError(f"unknown channel model {type(ch).__name__}")


@dataclass(frozen=True)
class LinkBudget:
    """Fiber loss plus receiver detection efficiency."""

    alpha: float  # dB per km
    length: float  # km
    eta_bob: float  # receiver detection efficiency

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")
        if self.length < 0.0:
            raise ValueError("length must be non-negative")
        if not (0.0 < self.eta_bob <= 1.0):
            raise ValueError("eta_bob must be in (0, 1]")


def transmittance(lb: LinkBudget) -> float:
    """Overall transmission and detection efficiency, 10^(-alpha*l/10) * eta_bob."""
    return 10.0 ** (-lb.alpha * lb.length / 10.0) * lb.eta_bob
