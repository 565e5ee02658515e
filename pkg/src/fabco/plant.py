"""Simulated end-effector plant, tracking policy, and reference generation.

The plant is a velocity/acceleration-saturated first-order system: the
simplest dynamics exhibiting the two infeasibility sources that matter
here (speed-limit violation and workspace excursion) while staying
analytically checkable. With lag = 1, unbounded acceleration, and an
unconstrained workspace it reduces to

    pose' = pose + clip(a, +/-v_max) * dt

which serves as the closed-form oracle in the dynamics-model tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .types import Episode, Workspace, child_seed, rng_from


@dataclass(frozen=True)
class PlantParams:
    """Plant limits and timing; v_max/a_max are per-axis (6,) arrays."""

    v_max: np.ndarray
    a_max: np.ndarray
    lag: float
    workspace: Workspace
    dt: float

    def __post_init__(self):
        v = np.asarray(self.v_max, dtype=np.float64)
        a = np.asarray(self.a_max, dtype=np.float64)
        if v.shape != (6,) or a.shape != (6,):
            raise ValueError("v_max and a_max must be (6,)")
        if np.any(v <= 0) or np.any(a <= 0) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(a)):
            raise ValueError("v_max and a_max must be finite and positive")
        if not (0 < self.lag <= 1):
            raise ValueError("lag must be in (0, 1]")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be > 0")
        v = v.copy(); v.flags.writeable = False
        a = a.copy(); a.flags.writeable = False
        object.__setattr__(self, "v_max", v)
        object.__setattr__(self, "a_max", a)


@dataclass(frozen=True)
class PlantState:
    """Pose plus the plant's internal velocity; both (6,) arrays."""

    pose: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pose, dtype=np.float64).copy()
        v = np.asarray(self.velocity, dtype=np.float64).copy()
        if p.shape != (6,) or v.shape != (6,):
            raise ValueError("pose and velocity must be (6,)")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite plant state")
        p.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "pose", p)
        object.__setattr__(self, "velocity", v)


def at_rest(pose: np.ndarray) -> PlantState:
    return PlantState(np.asarray(pose, dtype=np.float64), np.zeros(6))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Waypoints plus the dt-spaced samples of the spline through them."""

    waypoints: np.ndarray   # (n, 6)
    samples: np.ndarray     # (T, 6)
    dt: float

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=np.float64).copy()
        s = np.asarray(self.samples, dtype=np.float64).copy()
        if w.ndim != 2 or w.shape[1] != 6 or s.ndim != 2 or s.shape[1] != 6:
            raise ValueError("waypoints and samples must be (*, 6)")
        w.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.shape[0]


def plant_step(state: PlantState, action: np.ndarray, p: PlantParams) -> PlantState:
    """One control period of the saturated first-order plant.

    Desired velocity is the speed-clipped action; the velocity moves toward
    it by the lag fraction, rate-limited by a_max*dt; the pose integrates
    the new velocity and is clamped to the workspace. Any axis clamped at a
    wall has its velocity zeroed (hard stop, no windup).
    """
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (6,) or not np.all(np.isfinite(a)):
        raise ValueError("action must be a finite (6,) vector")
    v_star = np.clip(a, -p.v_max, p.v_max)
    dv = np.clip(p.lag * (v_star - state.velocity), -p.a_max * p.dt, p.a_max * p.dt)
    vel = state.velocity + dv
    raw = state.pose + vel * p.dt
    pose = p.workspace.clamp(raw)
    vel = np.where(raw == pose, vel, 0.0)
    return PlantState(pose, vel)


def _resample_speed_capped(spline, u_end: float, dt: float, duration: float,
                           speed_cap: np.ndarray, workspace: Workspace) -> np.ndarray:
    """Sample the spline at dt, stretching time until the per-axis cap holds."""
    duration = float(duration)
    for _ in range(64):
        n = max(2, int(round(duration / dt)) + 1)
        ts = np.linspace(0.0, u_end, n)
        samples = spline(ts)
        step = np.abs(np.diff(samples, axis=0)) / dt
        ratio = np.max(step / speed_cap)
        if ratio <= 1.0:
            return workspace.clamp(samples)
        duration *= min(max(ratio * 1.02, 1.05), 4.0)
    raise RuntimeError("speed-cap rescaling did not converge")


def generate_reference(seed: int, workspace: Workspace, n_waypoints: int,
                       duration: float, dt: float, speed_cap: np.ndarray) -> ReferenceTrajectory:
    """Random waypoints joined by a centripetal interpolating spline.

    Waypoints are uniform in the workspace; the spline uses centripetal
    (sqrt-chord) knot spacing, which avoids the overshoot loops uniform
    parameterization produces between random waypoints. Samples are spaced
    dt apart, clamped to the workspace, and the sampling duration is
    stretched as needed so no per-axis step speed exceeds speed_cap.
    Zero-width workspace axes simply stay constant.
    """
    if n_waypoints < 2:
        raise ValueError("need at least 2 waypoints")
    if duration <= 0:
        raise ValueError("duration must be positive")
    speed_cap = np.asarray(speed_cap, dtype=np.float64)
    if speed_cap.shape != (6,) or np.any(speed_cap <= 0):
        raise ValueError("speed_cap must be positive (6,)")
    rng = rng_from(seed)
    pts = rng.uniform(workspace.lower, workspace.upper, size=(n_waypoints, 6))

    chords = np.sqrt(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    if np.sum(chords) <= 1e-12:
        samples = np.repeat(pts[:1], max(2, int(round(duration / dt)) + 1), axis=0)
        return ReferenceTrajectory(pts, workspace.clamp(samples), dt)
    knots = np.concatenate([[0.0], np.cumsum(np.maximum(chords, 1e-9))])
    spline = CubicSpline(knots, pts, axis=0, bc_type="natural")
    samples = _resample_speed_capped(spline, knots[-1], dt, duration, speed_cap, workspace)
    samples[0] = pts[0]
    return ReferenceTrajectory(pts, samples, dt)


def track(ref: ReferenceTrajectory, p: PlantParams, kp: float = 2.0, *,
          episode_id: str = "track", task: str = "", seed: int = 0) -> Episode:
    """Follow the reference with the proportional policy a_t = kp*(ref_t - pose_t).

    The plant starts at rest on the first sample. Returns a tracking episode
    recording both the realized poses and the commanded actions.
    """
    if len(ref) == 0:
        raise ValueError("empty reference")
    if kp <= 0:
        raise ValueError("kp must be positive")
    state = at_rest(p.workspace.clamp(ref.samples[0]))
    t_total = len(ref)
    poses = np.empty((t_total, 6))
    actions = np.empty((t_total, 6))
    for t in range(t_total):
        poses[t] = state.pose
        a = kp * (ref.samples[t] - state.pose)
        actions[t] = a
        state = plant_step(state, a, p)
    return Episode(
        id=episode_id, source="tracking", dt=p.dt,
        poses=poses, actions=actions, task=task, seed=seed,
    )


def collect_dynamics_dataset(seed: int, p: PlantParams, n_episodes: int, *,
                             n_waypoints: int = 8, duration: float = 12.0,
                             speed_cap: np.ndarray | None = None,
                             kp: float = 2.0, task: str = "") -> list:
    """Independent tracking episodes over random spline references.

    Episode i uses the derived stream (seed, i), so datasets are
    reproducible and episodes are order-independent.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if speed_cap is None:
        speed_cap = 1.15 * p.v_max
    episodes = []
    for i in range(n_episodes):
        ep_seed = child_seed(seed, 1, i)
        ref = generate_reference(ep_seed, p.workspace, n_waypoints, duration, p.dt, speed_cap)
        episodes.append(track(
            ref, p, kp,
            episode_id=f"dyn-{seed}-{i:04d}", task=task, seed=ep_seed,
        ))
    return episodes
