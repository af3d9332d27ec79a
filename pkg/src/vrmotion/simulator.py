"""Multiuser redirected-walking simulator.

Synthetic walkers follow virtual-environment paths inside a square physical
space.  Steering is an artificial-potential-field scheme: walls and other
users repel with force inversely proportional to distance, and the force is
turned into curvature / rotation / translation gains bounded by
noticeability thresholds.  When a walker gets too close to an obstacle a
reset is issued: the walker stops, physically turns 180 degrees toward the
force direction at a fixed rate while the virtual scene rotates at twice
that rate (a full 360 in the virtual environment).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import stream_rng, wrap_angle


class ConfigError(ValueError):
    """Invalid simulator configuration."""


class SimulationError(RuntimeError):
    """The simulator violated its own safety contract (a bug by definition)."""


@dataclass(frozen=True)
class Environment:
    """Axis-aligned square room [0, side] x [0, side]."""

    side: float = 15.0
    num_users: int = 1

    def __post_init__(self):
        if self.side <= 0:
            raise ConfigError("environment side must be > 0")
        if not 1 <= self.num_users <= 3:
            raise ConfigError("num_users must be in 1..3")

    def wall_distance(self, x, y):
        return min(x, self.side - x, y, self.side - y)


@dataclass(frozen=True)
class NoticeabilityThresholds:
    min_curvature_radius: float = 22.0
    rotation_gain_range: tuple = (0.67, 1.24)
    translation_gain_range: tuple = (0.86, 1.26)

    def __post_init__(self):
        if self.min_curvature_radius <= 0:
            raise ConfigError("min_curvature_radius must be > 0")
        for lo, hi in (self.rotation_gain_range, self.translation_gain_range):
            if not (0 < lo <= 1 <= hi):
                raise ConfigError("gain range must satisfy 0 < low <= 1 <= high")


@dataclass
class ForceVector:
    fx: float
    fy: float
    saturated: bool = False

    @property
    def magnitude(self):
        return math.hypot(self.fx, self.fy)

    @property
    def direction_deg(self):
        return math.degrees(math.atan2(self.fy, self.fx))


@dataclass
class AppliedGains:
    curvature: float  # signed, 1/m
    rotation: float
    translation: float


@dataclass
class ResetEvent:
    user_id: int
    time: float
    physical_turn: float  # planned/executed physical turn, degrees
    trigger: str  # "boundary" | "user"
    physical_executed: float = 0.0
    virtual_executed: float = 0.0


@dataclass
class UserState:
    phys_x: float
    phys_y: float
    phys_heading: float
    virt_x: float
    virt_y: float
    virt_heading: float
    speed: float = 1.0
    in_reset: bool = False
    reset_progress: float = 0.0
    reset_sign: float = 1.0
    path_time: float = 0.0  # virtual path clock, paused during resets


@dataclass(frozen=True)
class SimConfig:
    side: float = 15.0
    num_users: int = 1
    path_kind: str = "straight"  # "straight" | "random_curved"
    duration: float = 300.0
    rate: float = 20.0
    thresholds: NoticeabilityThresholds = field(default_factory=NoticeabilityThresholds)
    speed_mean: float = 1.0
    speed_sigma: float = 0.05
    reset_trigger_distance: float = 0.5
    # hard floors: a step that would close below these is reverted and a
    # reset forced, so repeated resets can never ratchet entities together
    user_safety_distance: float = 0.45
    wall_safety_distance: float = 0.2
    reset_turn_rate: float = 90.0  # deg/s, physical, during a reset
    user_weight: float = 1.4  # user repulsion weighted above walls
    curvature_feedback: float = 1.0
    max_turn_rate: float = 45.0  # deg/s cap for random virtual paths
    turn_knot_spacing: float = 0.75  # s between turn-rate control points

    def __post_init__(self):
        if self.duration <= 0 or self.duration > 600:
            raise ConfigError("duration must be in (0, 600] seconds")
        if self.rate not in (10.0, 20.0, 50.0, 100.0):
            raise ConfigError("rate must be one of {10, 20, 50, 100} Hz")
        if self.path_kind not in ("straight", "random_curved"):
            raise ConfigError(f"unknown path kind: {self.path_kind!r}")
        if not 1 <= self.num_users <= 3:
            raise ConfigError("num_users must be in 1..3")

    def environment(self):
        return Environment(side=self.side, num_users=self.num_users)

    def to_dict(self):
        d = asdict(self)
        d["thresholds"]["rotation_gain_range"] = list(self.thresholds.rotation_gain_range)
        d["thresholds"]["translation_gain_range"] = list(self.thresholds.translation_gain_range)
        return d


# ---------------------------------------------------------------------------
# virtual paths


class StraightPath:
    """Constant-heading virtual path."""

    kind = "straight"

    def __init__(self, heading_deg):
        self.heading0 = float(heading_deg)

    def heading_deg(self, t):
        return self.heading0


class RandomCurvedPath:
    """Smooth random-heading path: turn rate is linearly interpolated
    between seeded control points clipped to +/- max_turn_rate, so the
    instantaneous heading rate never exceeds the bound."""

    kind = "random_curved"

    def __init__(self, heading_deg, knot_rates, knot_spacing):
        self.heading0 = float(heading_deg)
        self.rates = np.asarray(knot_rates, dtype=float)
        self.spacing = float(knot_spacing)
        # cumulative heading at knots (trapezoid integral of the rate)
        inc = 0.5 * (self.rates[:-1] + self.rates[1:]) * self.spacing
        self.cum = np.concatenate([[0.0], np.cumsum(inc)])

    def heading_deg(self, t):
        k = int(t / self.spacing)
        k = min(k, len(self.rates) - 2)
        tau = t - k * self.spacing
        r0, r1 = self.rates[k], self.rates[k + 1]
        return (
            self.heading0
            + self.cum[k]
            + r0 * tau
            + (r1 - r0) * tau * tau / (2.0 * self.spacing)
        )


def gen_virtual_path(kind, duration, seed, initial_heading=None,
                     max_turn_rate=45.0, knot_spacing=0.75):
    """Build a virtual path function for one walker.

    straight: constant heading.  random_curved: seeded smooth random turn
    rates, |d heading / dt| <= max_turn_rate everywhere.
    """
    if duration <= 0:
        raise ConfigError("path duration must be > 0")
    rng = stream_rng(seed, "virtual-path", kind)
    h0 = rng.uniform(-180.0, 180.0) if initial_heading is None else float(initial_heading)
    if kind == "straight":
        return StraightPath(h0)
    if kind == "random_curved":
        n_knots = int(math.ceil(duration / knot_spacing)) + 2
        rates = np.clip(
            rng.normal(0.0, 0.6 * max_turn_rate, size=n_knots),
            -max_turn_rate,
            max_turn_rate,
        )
        return RandomCurvedPath(h0, rates, knot_spacing)
    raise ConfigError(f"unknown path kind: {kind!r}")


# ---------------------------------------------------------------------------
# forces and steering

_DIST_EPS = 1e-6


def apf_force(user, env, others, user_weight=1.4):
    """Repulsive force on a user from the four walls and the other users.

    Each wall contributes (unit inward normal) / (perpendicular distance);
    each other user contributes (unit separation direction) * weight /
    distance.  Distances below 1e-6 m are clamped and flagged.
    """
    x, y = user.phys_x, user.phys_y
    side = env.side
    saturated = False

    def inv(d):
        nonlocal saturated
        if d < _DIST_EPS:
            saturated = True
            d = _DIST_EPS
        return 1.0 / d

    fx = inv(x) - inv(side - x)
    fy = inv(y) - inv(side - y)
    for other in others:
        dx = x - other.phys_x
        dy = y - other.phys_y
        d = math.hypot(dx, dy)
        if d < _DIST_EPS:
            saturated = True
            d = _DIST_EPS
        fx += user_weight * dx / (d * d)
        fy += user_weight * dy / (d * d)
    return ForceVector(fx, fy, saturated)


def steer_step(user, force, thresholds, dt, virt_heading_target=None,
               curvature_feedback=1.0):
    """Advance a walking (not resetting) user by one tick.

    The walker advances along its virtual path at its current speed.  The
    physical motion is the virtual motion modified by a curvature gain that
    bends the physical heading toward the force direction (capped by the
    minimum curvature radius), a translation gain applied only when it slows
    the approach toward obstacles, and a rotation gain applied only while
    the virtual heading is changing.  Mutates `user`, returns AppliedGains.
    """
    if dt <= 0:
        raise ConfigError("dt must be > 0")
    if user.in_reset:
        raise RuntimeError("steer_step called on a resetting user")

    if virt_heading_target is None:
        virt_heading_target = user.virt_heading
    dtheta_v = wrap_angle(virt_heading_target - user.virt_heading)

    v_step = user.speed * dt
    fmag = force.magnitude
    heading_err = 0.0
    if fmag > 0.0:
        heading_err = wrap_angle(force.direction_deg - user.phys_heading)

    # translation gain: shorten physical steps only while moving against
    # the force (i.e. toward obstacles)
    ux = math.cos(math.radians(user.phys_heading))
    uy = math.sin(math.radians(user.phys_heading))
    approaching = (force.fx * ux + force.fy * uy) < 0.0
    g_trans = thresholds.translation_gain_range[1] if (approaching and fmag > 0.0) else 1.0
    p_step = v_step / g_trans

    # rotation gain: amplify physical turns that move the heading toward
    # the force direction, dampen the opposite ones
    g_rot = 1.0
    dtheta_rot = 0.0
    if abs(dtheta_v) > 1e-12:
        if fmag > 0.0 and (dtheta_v > 0) == (heading_err > 0):
            g_rot = thresholds.rotation_gain_range[0]
        elif fmag > 0.0:
            g_rot = thresholds.rotation_gain_range[1]
        dtheta_rot = dtheta_v / g_rot

    # curvature gain: bend physical heading toward the force
    kappa_cap = 1.0 / thresholds.min_curvature_radius
    kappa_des = curvature_feedback * fmag * math.radians(heading_err)
    kappa = max(-kappa_cap, min(kappa_cap, kappa_des))
    dtheta_curv = math.degrees(kappa * p_step)

    # virtual update
    user.virt_heading = wrap_angle(virt_heading_target)
    vr = math.radians(user.virt_heading)
    user.virt_x += v_step * math.cos(vr)
    user.virt_y += v_step * math.sin(vr)

    # physical update
    user.phys_heading = wrap_angle(user.phys_heading + dtheta_rot + dtheta_curv)
    pr = math.radians(user.phys_heading)
    user.phys_x += p_step * math.cos(pr)
    user.phys_y += p_step * math.sin(pr)

    return AppliedGains(curvature=kappa, rotation=g_rot, translation=g_trans)


def check_reset(user, env, others, force, trigger_distance=0.5,
                prev_distances=None, time=0.0, user_id=0):
    """Return a ResetEvent plan iff an obstacle is both inside the trigger
    distance and getting closer (the closing test prevents immediate
    re-triggering right after a completed reset).

    prev_distances: (wall_dist, [dist to each other]) from the previous
    tick, or None to trigger on distance alone.
    """
    d_wall = env.wall_distance(user.phys_x, user.phys_y)
    candidates = []
    prev_wall = None if prev_distances is None else prev_distances[0]
    if d_wall < trigger_distance and (prev_wall is None or d_wall < prev_wall - 1e-12):
        candidates.append((d_wall, "boundary"))
    for j, other in enumerate(others):
        d = math.hypot(user.phys_x - other.phys_x, user.phys_y - other.phys_y)
        prev = None if prev_distances is None else prev_distances[1][j]
        if d < trigger_distance and (prev is None or d < prev - 1e-12):
            candidates.append((d, "user"))
    if not candidates:
        return None
    _, trigger = min(candidates, key=lambda c: c[0])
    return ResetEvent(user_id=user_id, time=time, physical_turn=180.0, trigger=trigger)


def _reset_turn_sign(user, force):
    if force.magnitude > 0.0:
        err = wrap_angle(force.direction_deg - user.phys_heading)
        return 1.0 if err >= 0 else -1.0
    return 1.0


# ---------------------------------------------------------------------------
# session loop


@dataclass
class SessionTrace:
    """Time-aligned per-user physical and virtual trajectories from one run."""

    rate: float
    t: np.ndarray  # (n,)
    phys: np.ndarray  # (users, n, 2)
    virt: np.ndarray  # (users, n, 2)
    phys_heading: np.ndarray  # (users, n)
    virt_heading: np.ndarray  # (users, n)
    reset: np.ndarray  # (users, n) int, 1 while resetting
    reset_events: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def num_users(self):
        return self.phys.shape[0]

    @property
    def n_ticks(self):
        return self.t.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("t,user,phys_x,phys_y,virt_x,virt_y,phys_heading,virt_heading,reset\n")
            for i in range(self.n_ticks):
                for u in range(self.num_users):
                    fh.write(
                        f"{self.t[i]:.6f},{u},"
                        f"{self.phys[u, i, 0]:.6f},{self.phys[u, i, 1]:.6f},"
                        f"{self.virt[u, i, 0]:.6f},{self.virt[u, i, 1]:.6f},"
                        f"{self.phys_heading[u, i]:.6f},{self.virt_heading[u, i]:.6f},"
                        f"{int(self.reset[u, i])}\n"
                    )

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        users = np.unique(data["user"].astype(int))
        n_users = len(users)
        n = data.shape[0] // n_users
        t = data["t"][::n_users].copy()
        rate = 1.0 / (t[1] - t[0]) if len(t) > 1 else 0.0
        phys = np.empty((n_users, n, 2))
        virt = np.empty((n_users, n, 2))
        ph = np.empty((n_users, n))
        vh = np.empty((n_users, n))
        rs = np.empty((n_users, n), dtype=int)
        for u in users:
            sel = data["user"].astype(int) == u
            phys[u, :, 0] = data["phys_x"][sel]
            phys[u, :, 1] = data["phys_y"][sel]
            virt[u, :, 0] = data["virt_x"][sel]
            virt[u, :, 1] = data["virt_y"][sel]
            ph[u] = data["phys_heading"][sel]
            vh[u] = data["virt_heading"][sel]
            rs[u] = data["reset"][sel].astype(int)
        rate = round(rate, 9)
        return cls(rate=rate, t=t, phys=phys, virt=virt, phys_heading=ph,
                   virt_heading=vh, reset=rs)


def _spawn_states(config, paths, rng_speeds):
    env = config.environment()
    n = config.num_users
    states = []
    cx = cy = env.side / 2.0
    for i in range(n):
        if n == 1:
            x, y = cx, cy
        else:
            ang = 2.0 * math.pi * i / n
            r = env.side / 4.0
            x, y = cx + r * math.cos(ang), cy + r * math.sin(ang)
        h0 = wrap_angle(paths[i].heading_deg(0.0))
        states.append(
            UserState(phys_x=x, phys_y=y, phys_heading=h0,
                      virt_x=x, virt_y=y, virt_heading=h0,
                      speed=config.speed_mean)
        )
    return states


def run_session(config, seed):
    """Run one seeded session and return its SessionTrace.

    Tick loop: forces -> reset checks -> steer or reset progression for all
    users, sampled at config.rate.  A user leaving the room bounds raises
    SimulationError with a diagnostic dump.
    """
    env = config.environment()
    n_users = config.num_users
    dt = 1.0 / config.rate
    n_ticks = int(round(config.duration * config.rate)) + 1

    paths = [
        gen_virtual_path(config.path_kind, config.duration,
                         stream_rng(seed, "path-seed", i).integers(2**63),
                         max_turn_rate=config.max_turn_rate,
                         knot_spacing=config.turn_knot_spacing)
        for i in range(n_users)
    ]
    speed_rngs = [stream_rng(seed, "speed", i) for i in range(n_users)]
    states = _spawn_states(config, paths, speed_rngs)

    t_arr = np.arange(n_ticks) * dt
    phys = np.empty((n_users, n_ticks, 2))
    virt = np.empty((n_users, n_ticks, 2))
    ph = np.empty((n_users, n_ticks))
    vh = np.empty((n_users, n_ticks))
    rs = np.zeros((n_users, n_ticks), dtype=int)
    events = []
    active = [None] * n_users  # in-flight ResetEvent per user

    # per-user (wall distance, distances to others) from the previous tick
    def distances(i):
        s = states[i]
        dw = env.wall_distance(s.phys_x, s.phys_y)
        du = [
            math.hypot(s.phys_x - o.phys_x, s.phys_y - o.phys_y)
            for j, o in enumerate(states) if j != i
        ]
        return (dw, du)

    prev_dists = [distances(i) for i in range(n_users)]

    for tick in range(n_ticks):
        now = t_arr[tick]
        for i, s in enumerate(states):
            phys[i, tick] = (s.phys_x, s.phys_y)
            virt[i, tick] = (s.virt_x, s.virt_y)
            ph[i, tick] = s.phys_heading
            vh[i, tick] = s.virt_heading
            rs[i, tick] = 1 if s.in_reset else 0

        if tick == n_ticks - 1:
            break

        # distances before this tick's moves; the closing test in
        # check_reset compares post-move distances against these
        dists_now = [distances(i) for i in range(n_users)]

        forces = [
            apf_force(states[i], env, [o for j, o in enumerate(states) if j != i],
                      user_weight=config.user_weight)
            for i in range(n_users)
        ]

        for i, s in enumerate(states):
            # speed jitter drawn every tick to keep streams aligned; clamped
            # at 4 sigma so a single step has a hard upper bound
            jitter = speed_rngs[i].normal(config.speed_mean, config.speed_sigma)
            s.speed = min(max(0.0, jitter),
                          config.speed_mean + 4.0 * config.speed_sigma)

            if s.in_reset:
                dphi = min(config.reset_turn_rate * dt, 180.0 - s.reset_progress)
                s.phys_heading = wrap_angle(s.phys_heading + s.reset_sign * dphi)
                s.virt_heading = wrap_angle(s.virt_heading + s.reset_sign * 2.0 * dphi)
                s.reset_progress += dphi
                ev = active[i]
                ev.physical_executed += dphi
                ev.virtual_executed += 2.0 * dphi
                if s.reset_progress >= 180.0 - 1e-12:
                    s.in_reset = False
                    s.reset_progress = 0.0
                    active[i] = None
                continue

            others = [o for j, o in enumerate(states) if j != i]
            plan = check_reset(s, env, others, forces[i],
                               trigger_distance=config.reset_trigger_distance,
                               prev_distances=prev_dists[i], time=now, user_id=i)
            if plan is not None:
                s.in_reset = True
                s.reset_progress = 0.0
                s.reset_sign = _reset_turn_sign(s, forces[i])
                active[i] = plan
                events.append(plan)
                rs[i, tick] = 1
                continue

            target = paths[i].heading_deg(s.path_time + dt)
            before = (s.phys_x, s.phys_y, s.phys_heading,
                      s.virt_x, s.virt_y, s.virt_heading)
            dw_old = env.wall_distance(s.phys_x, s.phys_y)
            du_old = [math.hypot(s.phys_x - o.phys_x, s.phys_y - o.phys_y)
                      for j, o in enumerate(states) if j != i]
            steer_step(s, forces[i], config.thresholds, dt,
                       virt_heading_target=target,
                       curvature_feedback=config.curvature_feedback)
            s.path_time += dt

            # hard safety floor: revert any step that closes below the
            # safety distance and force a reset instead, so back-to-back
            # resets cannot ratchet a user into a wall or another user
            dw_new = env.wall_distance(s.phys_x, s.phys_y)
            du_new = [math.hypot(s.phys_x - o.phys_x, s.phys_y - o.phys_y)
                      for j, o in enumerate(states) if j != i]
            viol = []
            if dw_new < config.wall_safety_distance and dw_new < dw_old:
                viol.append((dw_new, "boundary"))
            for dn, do in zip(du_new, du_old):
                if dn < config.user_safety_distance and dn < do:
                    viol.append((dn, "user"))
            if viol:
                (s.phys_x, s.phys_y, s.phys_heading,
                 s.virt_x, s.virt_y, s.virt_heading) = before
                s.path_time -= dt
                _, trig = min(viol, key=lambda c: c[0])
                plan = ResetEvent(user_id=i, time=now, physical_turn=180.0,
                                  trigger=trig)
                s.in_reset = True
                s.reset_progress = 0.0
                s.reset_sign = _reset_turn_sign(s, forces[i])
                active[i] = plan
                events.append(plan)
                rs[i, tick] = 1
                continue

            if not (0.0 <= s.phys_x <= env.side and 0.0 <= s.phys_y <= env.side):
                dump = {
                    "tick": tick, "time": now, "user": i,
                    "state": asdict(s), "force": asdict(forces[i]),
                    "config": config.to_dict(), "seed": seed,
                }
                raise SimulationError(
                    "user escaped bounds: " + json.dumps(dump, default=str)
                )

        prev_dists = dists_now

    # a reset still in flight when the session clock runs out finishes off
    # the record: the user stands still while turning, so the remaining
    # rotation has no effect on the sampled trajectories
    for i, ev in enumerate(active):
        if ev is not None:
            s = states[i]
            rem = 180.0 - s.reset_progress
            s.phys_heading = wrap_angle(s.phys_heading + s.reset_sign * rem)
            s.virt_heading = wrap_angle(s.virt_heading + s.reset_sign * 2.0 * rem)
            ev.physical_executed += rem
            ev.virtual_executed += 2.0 * rem
            s.in_reset = False
            s.reset_progress = 0.0

    return SessionTrace(rate=config.rate, t=t_arr, phys=phys, virt=virt,
                        phys_heading=ph, virt_heading=vh, reset=rs,
                        reset_events=events, config=config.to_dict(), seed=seed)
