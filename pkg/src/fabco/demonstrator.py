"""Synthetic demonstrators: intent-following hands with tunable bad habits.

A demonstrator follows the task's reference path with a fast first-order
hand model, so demonstrations naturally contain corrective motion toward
the intended path. Three corruption knobs reproduce the classic failure
modes of unconstrained human demonstrations: a speed scale beta (beta > 1
plays the path faster than the plant can follow), workspace excursions
(smooth bumps pushing beyond a wall), and smoothed positional jitter.
Feedback-responsive profiles shrink beta and the excursion parameters in
proportion to the feedback they perceive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import FdmModel, IdmModel
from .feasibility import FeasibilityParams, FeasibilityTrace, compute_trace
from .types import Episode, child_seed, rng_from

# Hand-model pull rate toward the moving reference (1/s). Fast enough that
# the doubled-frequency sway of a speed_scale-2 replay is not attenuated
# away, slow enough that the in-limit motion stays kinematically close to
# what the plant's own tracking produces.
HAND_KP = 6.0
# First-order velocity smoothing of the hand; 1.0 means the hand velocity
# follows the pull immediately.
HAND_LAG = 1.0
# Demonstrators periodically pause and re-seat the interface a little off
# the path, then resume: every reseat opens with an honest recovery toward
# the path, spreading corrective coverage along the whole demonstration.
# The reseat jump itself is an infeasible single step and gets weighted
# out by the per-step evaluation.
RESEAT_EVERY_STEPS = 110
# Hand tremor per unit jitter_sd: one length unit on each position axis and
# a proportionally larger orientation wobble (hands hold position better
# than orientation). Wobble around the path is what teaches the policy a
# corrective field, so these also set the rollout state coverage.
JITTER_AXIS_SCALE = np.array([1.0, 1.0, 1.0, 0.04, 0.04, 0.04])
# Hand slips: brief involuntary displacements followed by an honest
# correction back toward the target. Tracking a wandering target alone
# yields actions correlated with the target's innovations rather than with
# the pose offset, so slips carry most of the corrective training signal.
SLIP_RATE_HZ = 0.3
SLIP_SPREAD_STEPS = 8
SLIP_MAG_PER_JITTER = 2.5
SLIP_AXIS_SCALE = np.array([1.0, 1.0, 1.0, 0.02, 0.02, 0.02])
# The hand corrects toward its target at HAND_KP but never faster than this
# fraction of the demonstrator's personal speed envelope (speed_scale times
# the plant limit). Corrections in a speed_scale-1 demonstration therefore
# stay feasible, while a speed_scale-2 demonstrator overshoots limits in
# corrections exactly as in nominal motion.
HAND_V_CAP_FRACTION = 0.75
# Demonstrations start displaced from the path start by up to this many
# units (position axes; other axes scaled by workspace span), so every
# episode opens with an honest recovery onto the path.
START_OFFSET_MAX = 24.0
# Slow drift of the aim point (amplitude per unit jitter_sd, knot spacing
# in control periods). Demonstrations sweep a wide tube around the nominal
# path at negligible speed cost, which is what gives the policy state
# coverage away from the exact reference. The drift lives mostly in the
# position axes; orientation stays locked to the path shape.
SLOW_WANDER_PER_JITTER = 8.0
SLOW_WANDER_KNOT_STEPS = 80
SLOW_WANDER_AXIS_SCALE = np.array([1.0, 1.0, 0.6, 0.012, 0.012, 0.012])
# Fast tremor amplitude relative to jitter_sd. Tremor mostly injects label
# noise (its corrections correlate with the target's innovations, not the
# pose), so it stays small.
TREMOR_FRACTION = 0.25
# Correlation window of the smoothed jitter, in control periods.
JITTER_SMOOTH_STEPS = 5
# Maximum number of excursion windows attempted per episode.
EXCURSION_SLOTS = 4
# Length of one excursion window, seconds. Long relative to the hand's
# time constant so the commanded overshoot is realized, not filtered out.
EXCURSION_SECONDS = 2.0


@dataclass(frozen=True)
class DemonstratorProfile:
    """Corruption and adaptation parameters of one synthetic demonstrator."""

    speed_scale: float = 1.0        # beta >= 1; > 1 exceeds the plant's limits
    excursion_prob: float = 0.0     # chance of each excursion window firing
    excursion_depth: float = 0.0    # overshoot beyond the workspace wall, units
    jitter_sd: float = 0.0          # positional noise sd on the x axis, units
    adaptation_rate: float = 0.0    # eta in [0, 1]
    responds_to: frozenset = frozenset({"visual", "haptic"})

    def __post_init__(self):
        if self.speed_scale < 1.0:
            raise ValueError("speed_scale must be >= 1")
        if not (0 <= self.excursion_prob <= 1) or self.excursion_depth < 0:
            raise ValueError("bad excursion parameters")
        if self.jitter_sd < 0:
            raise ValueError("jitter_sd must be >= 0")
        if not (0 <= self.adaptation_rate <= 1):
            raise ValueError("adaptation_rate must be in [0, 1]")
        unknown = set(self.responds_to) - {"visual", "haptic"}
        if unknown:
            raise ValueError(f"unknown feedback channels {unknown}")
        object.__setattr__(self, "responds_to", frozenset(self.responds_to))


@dataclass(frozen=True)
class FeedbackDigest:
    """What a demonstrator perceives of one episode's feedback."""

    mean_pwm: float          # haptic channel: mean vibration intensity
    low_feas_fraction: float  # visual channel: fraction of steps below kappa

    def __post_init__(self):
        if not (0 <= self.mean_pwm <= 1 and 0 <= self.low_feas_fraction <= 1):
            raise ValueError("digest values must lie in [0, 1]")

    @classmethod
    def from_trace(cls, trace: FeasibilityTrace, kappa: float) -> "FeedbackDigest":
        return cls(
            mean_pwm=float(np.mean(trace.s_pwm)),
            low_feas_fraction=float(np.mean(trace.f_t < kappa)),
        )


def _engaged_channels(mode: str, profile: DemonstratorProfile):
    by_mode = {
        "none": (),
        "visual": ("visual",),
        "haptic": ("haptic",),
        "visuo_haptic": ("haptic", "visual"),
    }
    if mode not in by_mode:
        raise ValueError(f"unknown feedback mode {mode!r}")
    return tuple(ch for ch in by_mode[mode] if ch in profile.responds_to)


def adapt(profile: DemonstratorProfile, digest: FeedbackDigest,
          mode: str) -> DemonstratorProfile:
    """Shrink the corruption parameters in response to perceived feedback.

    Each engaged channel applies beta <- max(1, beta - eta*beta*signal) and
    scales the excursion parameters by (1 - eta*signal). The haptic signal
    is the episode's mean PWM intensity; the visual signal is the fraction
    of low-feasibility steps. Never increases any parameter.
    """
    beta = profile.speed_scale
    prob = profile.excursion_prob
    depth = profile.excursion_depth
    eta = profile.adaptation_rate
    for channel in _engaged_channels(mode, profile):
        signal = digest.mean_pwm if channel == "haptic" else digest.low_feas_fraction
        beta = max(1.0, beta - eta * beta * signal)
        prob = prob * (1.0 - eta * signal)
        depth = depth * (1.0 - eta * signal)
    return replace(profile, speed_scale=beta, excursion_prob=prob, excursion_depth=depth)


def _smoothed_noise(rng, n: int, dims: int, window: int = JITTER_SMOOTH_STEPS) -> np.ndarray:
    """Unit-variance noise with the given correlation window."""
    raw = rng.normal(size=(n + window, dims))
    kernel = np.ones(window) / window
    sm = np.empty((n, dims))
    for d in range(dims):
        sm[:, d] = np.convolve(raw[:, d], kernel, mode="valid")[:n]
    return sm * np.sqrt(window)


def _slow_drift(rng, n: int, dims: int, knot_every: int = SLOW_WANDER_KNOT_STEPS) -> np.ndarray:
    """Smooth unit-scale drift: a spline through sparse random knots.

    Unlike boxcar-filtered noise, the velocity of this process shrinks with
    the knot spacing, so a wide drift amplitude costs almost no speed.
    """
    from scipy.interpolate import CubicSpline
    n_knots = max(4, n // knot_every + 2)
    knots_t = np.linspace(0, n - 1, n_knots)
    knots_v = rng.normal(size=(n_knots, dims))
    return CubicSpline(knots_t, knots_v, axis=0)(np.arange(n))


def demonstrate(profile: DemonstratorProfile, task, seed: int) -> Episode:
    """One pose-only demonstration of the task under the given profile.

    The reference path is replayed at speed_scale x real time, followed by
    the hand model from a perturbed start; excursion bumps then displace
    the hand beyond a workspace wall and smoothed jitter is added. The
    episode carries no actions: that gap is what the inverse dynamics
    model has to fill.
    """
    rng = rng_from(seed)
    dt = task.dt
    ref = task.reference_path(variation=child_seed(seed, 7))
    beta = profile.speed_scale

    # Replay the same geometric path at beta x speed.
    n_out = max(3, int(np.ceil((len(ref) - 1) / beta)) + 1)
    src = np.minimum(np.arange(n_out) * beta, len(ref) - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, len(ref) - 1)
    frac = (src - lo)[:, None]
    target = (1 - frac) * ref[lo] + frac * ref[hi]

    # Excursion bumps: overshoots carrying several axes beyond their nearest
    # workspace wall at once, one window per episode segment. Depths scale
    # with each axis's span so orientation overshoots stay proportionate.
    span = task.workspace.span()
    segment = n_out // (EXCURSION_SLOTS + 1)
    for slot in range(EXCURSION_SLOTS):
        if rng.uniform() >= profile.excursion_prob or profile.excursion_depth <= 0:
            continue
        width = max(8, min(int(EXCURSION_SECONDS / dt), segment))
        seg_start = 1 + slot * segment
        if seg_start + width + 1 >= n_out:
            continue
        t0 = seg_start + int(rng.integers(0, max(1, segment - width)))
        bump = np.sin(np.pi * np.arange(width) / (width - 1)) ** 2
        n_axes = int(rng.integers(3, 5))
        axes = np.concatenate([rng.permutation(3)[:2], 3 + rng.permutation(3)])[:n_axes]
        for axis in axes:
            center = target[t0 + width // 2, axis]
            to_upper = task.workspace.upper[axis] - center
            to_lower = center - task.workspace.lower[axis]
            sign = 1.0 if to_upper <= to_lower else -1.0
            wall_gap = to_upper if sign > 0 else to_lower
            depth_axis = profile.excursion_depth * rng.uniform(0.6, 1.0) * span[axis] / span[0]
            target[t0:t0 + width, axis] += sign * (wall_gap + depth_axis) * bump

    # Jitter perturbs the target the hand is aiming for, not the recorded
    # poses: the hand then visibly wanders off the path and corrects back,
    # so demonstrations teach a field that pulls toward the intended path.
    if profile.jitter_sd > 0:
        tremor = _smoothed_noise(rng, n_out, 6) * TREMOR_FRACTION * JITTER_AXIS_SCALE
        drift = _slow_drift(rng, n_out, 6) * SLOW_WANDER_PER_JITTER * SLOW_WANDER_AXIS_SCALE
        target = target + (tremor + drift) * profile.jitter_sd

    # Slip schedule: Bernoulli per step, each slip smeared over a few steps.
    slip = np.zeros((n_out, 6))
    if profile.jitter_sd > 0:
        p_slip = SLIP_RATE_HZ * dt
        for t in range(1, n_out - SLIP_SPREAD_STEPS):
            if rng.uniform() < p_slip:
                direction = rng.normal(size=6) * SLIP_AXIS_SCALE
                direction /= max(np.linalg.norm(direction[:3]), 1e-9)
                mag = SLIP_MAG_PER_JITTER * profile.jitter_sd * rng.uniform(0.6, 1.4)
                slip[t:t + SLIP_SPREAD_STEPS] += direction * (mag / SLIP_SPREAD_STEPS)

    # Hand model: proportional pull toward the moving target with smoothed
    # velocity, rate-limited to the demonstrator's personal speed envelope.
    # Slips knock the pose off; the same law then pulls it back.
    def fresh_offset():
        direction = rng.normal(size=6) * span / span[0]
        direction /= max(np.linalg.norm(direction[:3]), 1e-9)
        return direction * (START_OFFSET_MAX * rng.uniform(0.2, 1.0))

    poses = np.empty_like(target)
    pose = target[0] + fresh_offset()
    vel = np.zeros(6)
    v_cap = beta * HAND_V_CAP_FRACTION * np.asarray(task.v_max)
    next_reseat = int(RESEAT_EVERY_STEPS * rng.uniform(0.7, 1.3))
    for t in range(n_out):
        if t == next_reseat and t + 20 < n_out:
            pose = target[t] + fresh_offset()
            vel = np.zeros(6)
            next_reseat = t + int(RESEAT_EVERY_STEPS * rng.uniform(0.7, 1.3))
        pose = pose + slip[t]
        poses[t] = pose
        desired = np.clip(HAND_KP * (target[t] - pose), -v_cap, v_cap)
        vel = vel + HAND_LAG * (desired - vel)
        pose = pose + vel * dt

    return Episode(
        id=f"demo-{task.name}-{seed}",
        source="synthetic_demo",
        dt=dt,
        poses=poses,
        task=task.name,
        seed=seed,
    )


def run_campaign(profile: DemonstratorProfile, task, n_episodes: int, mode: str,
                 idm: IdmModel, fdm: FdmModel, params: FeasibilityParams,
                 seed: int):
    """Alternate demonstrate -> score -> adapt for n_episodes.

    Returns (episodes, traces, profile_history) where profile_history[m]
    is the profile in force for episode m. Adaptation happens after each
    episode except the last, and only for channels the mode engages.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    episodes, traces, history = [], [], []
    current = profile
    for m in range(n_episodes):
        history.append(current)
        ep = demonstrate(current, task, child_seed(seed, 3, m))
        ep = replace(ep, feedback_mode=mode, id=f"{task.name}-{mode}-{seed}-{m:03d}")
        trace = compute_trace(ep.poses, idm, fdm, params, episode_id=ep.id)
        episodes.append(ep)
        traces.append(trace)
        if m + 1 < n_episodes:
            digest = FeedbackDigest.from_trace(trace, params.kappa)
            current = adapt(current, digest, mode)
    return episodes, traces, history
