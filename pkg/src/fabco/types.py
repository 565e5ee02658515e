"""Shared domain types: poses, actions, episodes, workspaces, seeded RNG streams.

All values are immutable after construction. Angles are stored unwrapped
(no modular reduction) so that componentwise differencing stays linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POSE_DIMS = ("x", "y", "z", "roll", "pitch", "yaw")
ACTION_DIMS = ("vx", "vy", "vz", "vroll", "vpitch", "vyaw")

EPISODE_SOURCES = frozenset({"tracking", "synthetic_demo", "human_demo", "rollout"})
FEEDBACK_MODES = frozenset({"none", "visual", "haptic", "visuo_haptic"})

# Sources that carry recorded actions alongside poses.
SOURCES_WITH_ACTIONS = frozenset({"tracking", "rollout"})


def _as_locked_array(values, shape) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite component")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose6:
    """Six-dimensional end-effector pose: position (units) + orientation (rad)."""

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float

    def __post_init__(self):
        for name in POSE_DIMS:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"non-finite pose component {name}={v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @classmethod
    def from_array(cls, arr) -> "Pose6":
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != (6,):
            raise ValueError(f"pose needs 6 components, got shape {a.shape}")
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class Action6:
    """Six-dimensional target end-effector velocity (units/s, rad/s)."""

    vx: float
    vy: float
    vz: float
    vroll: float
    vpitch: float
    vyaw: float

    def __post_init__(self):
        for name in ACTION_DIMS:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"non-finite action component {name}={v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz, self.vroll, self.vpitch, self.vyaw])

    @classmethod
    def from_array(cls, arr) -> "Action6":
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != (6,):
            raise ValueError(f"action needs 6 components, got shape {a.shape}")
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class Workspace:
    """Closed per-axis intervals for all six pose components."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _as_locked_array(self.lower, (6,)))
        object.__setattr__(self, "upper", _as_locked_array(self.upper, (6,)))
        if np.any(self.lower > self.upper):
            raise ValueError("workspace lower bound exceeds upper bound")

    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clamp(self, arr: np.ndarray) -> np.ndarray:
        return np.clip(arr, self.lower, self.upper)

    def contains(self, arr: np.ndarray) -> bool:
        return bool(np.all(arr >= self.lower) and np.all(arr <= self.upper))


@dataclass(frozen=True)
class Episode:
    """A time-stamped pose (and optionally action) sequence with metadata.

    poses is a (T, 6) array with T >= 3; actions, when present, is (T, 6)
    and pairs actions[t] with the transition poses[t] -> poses[t+1].
    """

    id: str
    source: str
    dt: float
    poses: np.ndarray
    actions: np.ndarray | None = None
    task: str = ""
    seed: int = 0
    feedback_mode: str = "none"

    def __post_init__(self):
        if self.source not in EPISODE_SOURCES:
            raise ValueError(f"unknown episode source {self.source!r}")
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        poses = np.asarray(self.poses, dtype=np.float64)
        if poses.ndim != 2 or poses.shape[1] != 6:
            raise ValueError(f"poses must be (T, 6), got {poses.shape}")
        if poses.shape[0] < 3:
            raise ValueError("episode needs at least 3 poses")
        if not np.all(np.isfinite(poses)):
            raise ValueError("non-finite pose in episode")
        poses = poses.copy()
        poses.flags.writeable = False
        object.__setattr__(self, "poses", poses)
        has_actions = self.source in SOURCES_WITH_ACTIONS
        if has_actions != (self.actions is not None):
            raise ValueError(
                f"source {self.source!r} requires actions "
                f"{'present' if has_actions else 'absent'}"
            )
        if self.actions is not None:
            actions = _as_locked_array(self.actions, poses.shape)
            object.__setattr__(self, "actions", actions)

    def __len__(self) -> int:
        return self.poses.shape[0]


def pose_delta(a: Pose6, b: Pose6) -> np.ndarray:
    """Componentwise difference b - a as a six-vector."""
    return b.as_array() - a.as_array()


def in_workspace(p: Pose6, w: Workspace) -> bool:
    """True iff every pose component lies within its closed interval."""
    return w.contains(p.as_array())


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for the stream identified by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


def child_seed(seed: int, *key: int) -> int:
    """Derived 63-bit seed for a named child stream; stable across runs."""
    ss = np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# Convenience alias used in signatures where a bare int is the contract.
RngSeed = int
