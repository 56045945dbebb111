"""Analytic target trajectories and canned scenario presets.

Tracks are closed-form functions of time because the knot times move with the
(decision-variable) step size; every track can be evaluated at a casadi symbol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import casadi as ca
import numpy as np

from dmcc._cas import dual
from dmcc.errors import UnknownPreset, ValidationError

KINDS = ("static", "linear", "circular", "waypoints")
MOVING_SPEED_MIN = 1e-6


@dataclass(frozen=True)
class TargetTrack:
    kind: str
    position0: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0)
    radius: float = 0.0
    rate: float = 0.0
    phase: float = 0.0
    altitude: float = 0.0
    points: tuple = ()
    speed: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError({"target.kind": f"must be one of {KINDS}"})
        object.__setattr__(self, "position0", tuple(float(v) for v in self.position0))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "points", tuple(tuple(float(c) for c in p) for p in self.points))
        if self.kind == "waypoints" and not self.points:
            raise ValidationError({"target.points": "waypoint track needs at least one point"})

    @classmethod
    def static(cls, position):
        return cls("static", position0=tuple(position))

    @classmethod
    def linear(cls, start, velocity):
        return cls("linear", position0=tuple(start), velocity=tuple(velocity))

    @classmethod
    def circular(cls, center, radius, rate, altitude, phase=0.0):
        return cls("circular", center=tuple(center), radius=radius, rate=rate, altitude=altitude, phase=phase)

    @classmethod
    def waypoints(cls, points, speed=1.0):
        return cls("waypoints", points=tuple(map(tuple, points)), speed=speed)

    @property
    def is_moving(self) -> bool:
        if self.kind == "static":
            return False
        if self.kind == "linear":
            return float(np.linalg.norm(self.velocity)) > MOVING_SPEED_MIN
        if self.kind == "circular":
            return abs(self.radius * self.rate) > MOVING_SPEED_MIN
        return len(self.points) > 1 and self.speed > MOVING_SPEED_MIN

    def position(self, t):
        return target_position(self, t)

    def velocity_at(self, t):
        return target_velocity(self, t)

    def to_dict(self) -> dict:
        base = {"kind": self.kind}
        if self.kind == "static":
            base["position"] = list(self.position0)
        elif self.kind == "linear":
            base.update(start=list(self.position0), velocity=list(self.velocity))
        elif self.kind == "circular":
            base.update(center=list(self.center), radius=self.radius, rate=self.rate,
                        phase=self.phase, altitude=self.altitude)
        else:
            base.update(points=[list(p) for p in self.points], speed=self.speed)
        return base

    @classmethod
    def from_dict(cls, d: dict) -> "TargetTrack":
        d = dict(d)
        kind = d.pop("kind", None)
        try:
            if kind == "static":
                track = cls.static(d.pop("position"))
            elif kind == "linear":
                track = cls.linear(d.pop("start"), d.pop("velocity"))
            elif kind == "circular":
                track = cls.circular(d.pop("center"), float(d.pop("radius")), float(d.pop("rate")),
                                     float(d.pop("altitude")), float(d.pop("phase", 0.0)))
            elif kind == "waypoints":
                track = cls.waypoints(d.pop("points"), float(d.pop("speed", 1.0)))
            else:
                raise ValidationError({"target.kind": f"must be one of {KINDS}, got {kind!r}"})
        except ValidationError:
            raise
        except KeyError as exc:
            raise ValidationError({f"target.{exc.args[0]}": "missing"}) from None
        except (TypeError, ValueError) as exc:
            raise ValidationError({"target": str(exc)}) from None
        if d:
            raise ValidationError({f"target.{k}": "unknown field" for k in sorted(d)})
        return track


def _polyline(track: TargetTrack, t, derivative: bool):
    pts = [np.array(p) for p in track.points]
    if len(pts) == 1:
        return ca.DM(pts[0]) if not derivative else ca.DM.zeros(3)
    out = ca.DM(pts[-1]) if not derivative else ca.DM.zeros(3)
    t_start = 0.0
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.linalg.norm(b - a))
        dur = length / track.speed if length > 0 else 0.0
        segs.append((t_start, dur, a, b))
        t_start += dur
    for t0, dur, a, b in reversed(segs):
        if dur == 0:
            continue
        direction = (b - a) / dur
        seg = ca.DM(direction) if derivative else ca.DM(a) + (t - t0) * ca.DM(direction)
        out = ca.if_else(t < t0 + dur, seg, out)
    return out


@dual
def target_position(track: TargetTrack, t):
    if track.kind == "static":
        return ca.DM(track.position0) + 0 * t
    if track.kind == "linear":
        return ca.DM(track.position0) + t * ca.DM(track.velocity)
    if track.kind == "circular":
        ang = track.rate * t + track.phase
        return ca.vertcat(
            track.radius * ca.sin(ang) + track.center[0],
            track.radius * ca.cos(ang) + track.center[1],
            track.altitude + 0 * t,
        )
    return _polyline(track, t, derivative=False)


@dual
def target_velocity(track: TargetTrack, t):
    if track.kind == "static":
        return ca.DM.zeros(3) + 0 * t
    if track.kind == "linear":
        return ca.DM(track.velocity) + 0 * t
    if track.kind == "circular":
        ang = track.rate * t + track.phase
        w = track.radius * track.rate
        return ca.vertcat(w * ca.cos(ang), -w * ca.sin(ang), 0 * t)
    return _polyline(track, t, derivative=True)


# --- presets ----------------------------------------------------------------

HANDOVER_START = (0.0, 0.0, 0.65)
HANDOVER_END = (2.5, 0.0, 0.65)
RACE_START = (0.0, 0.0, 0.55)
RACE_END = (2.5, 0.0, 0.55)
RACE_SEED = 7


def circle_track() -> TargetTrack:
    return TargetTrack.circular(center=(1.1, 0.0), radius=0.4, rate=0.3, altitude=0.4)


def race_course(n: int, seed: int = RACE_SEED) -> np.ndarray:
    """``n`` waypoints between the race start and end on a fixed seeded course."""
    rng = np.random.default_rng(seed)
    xs = np.linspace(RACE_START[0], RACE_END[0], n + 2)[1:-1]
    offsets = rng.uniform([-0.25, 0.3], [0.25, 0.6], size=(max(n, 1), 2))
    pts = []
    for i, x in enumerate(xs):
        y, z = offsets[i]
        pts.append([x, y if i % 2 == 0 else -y, z])
    return np.array(pts).reshape(n, 3)


def preset(name: str):
    from dmcc.planner import HandoverSpec
    from dmcc.racing import RaceSpec

    start = [*HANDOVER_START, 0.0, 0.0, 0.0, math.pi / 2]
    end = [*HANDOVER_END, 0.0, 0.0, 0.0, math.pi / 2]
    if name == "static":
        return HandoverSpec(q_start=start, q_end=end, target=TargetTrack.static((1.0, 0.0, 0.4)))
    if name == "linear":
        return HandoverSpec(q_start=start, q_end=end,
                            target=TargetTrack.linear((1.0, 0.0, 0.4), (0.1, 0.0, 0.0)))
    if name == "circle":
        return HandoverSpec(q_start=start, q_end=end, target=circle_track())
    if name.startswith("race-"):
        try:
            n = int(name.split("-", 1)[1])
        except ValueError:
            raise UnknownPreset(name) from None
        if n < 0:
            raise UnknownPreset(name)
        return RaceSpec(
            waypoints=race_course(n).tolist(),
            q_start=[*RACE_START, 0.0, 0.0, 0.0],
            q_end=[*RACE_END, 0.0, 0.0, 0.0],
        )
    raise UnknownPreset(name)


PRESETS = ("static", "linear", "circle", "race-1", "race-2", "race-3", "race-4")
