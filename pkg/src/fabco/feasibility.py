"""Feasibility scoring of demonstrated motions and the derived weights.

Per-axis feasibility is exp(-|predicted - demonstrated| / sigma_f), the
overall score is the mean over the six pose axes, and two thresholded
evaluations (per step, per episode) combine into binary training weights.
The haptic channel emits a PWM intensity that stays zero until the
infeasibility 1 - f_t crosses its threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import FdmModel, IdmModel


@dataclass(frozen=True)
class FeasibilityParams:
    """Scales and thresholds: sigma_f per axis, tau (haptic), kappa (step), gamma (run length)."""

    sigma_f: np.ndarray
    tau: float = 0.7
    kappa: float = 0.7
    gamma: int = 10

    def __post_init__(self):
        s = np.asarray(self.sigma_f, dtype=np.float64)
        if s.shape != (6,) or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigma_f must be positive (6,)")
        s = s.copy(); s.flags.writeable = False
        object.__setattr__(self, "sigma_f", s)
        if not (0 <= self.tau <= 1) or not (0 <= self.kappa <= 1):
            raise ValueError("tau and kappa must lie in [0, 1]")
        if int(self.gamma) < 1:
            raise ValueError("gamma must be >= 1")
        object.__setattr__(self, "gamma", int(self.gamma))


@dataclass(frozen=True)
class FeasibilityTrace:
    """Per-step scores for one episode of length T.

    f_td, f_t, s_pwm cover the scorable interior steps t = 2..T-1
    (1-indexed); e_step and w have length T with the unscorable endpoints
    fixed at 0. w_t = e_episode * e_step_t.
    """

    episode_id: str
    f_td: np.ndarray     # (T-2, 6)
    f_t: np.ndarray      # (T-2,)
    s_pwm: np.ndarray    # (T-2,)
    e_step: np.ndarray   # (T,) of {0,1}
    e_episode: int
    w: np.ndarray        # (T,) of {0,1}

    @property
    def length(self) -> int:
        return self.e_step.shape[0]

    def mean_feasibility(self) -> float:
        return float(np.mean(self.f_t))


def pose_level_feasibility(pred, demo, sigma_f) -> np.ndarray:
    """Per-axis score exp(-|pred_d - demo_d| / sigma_f_d), in [0, 1]."""
    pred = np.asarray(pred, dtype=np.float64)
    demo = np.asarray(demo, dtype=np.float64)
    sigma = np.asarray(sigma_f, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma_f must be positive")
    return np.exp(-np.abs(pred - demo) / sigma)


def overall_feasibility(f_d) -> float:
    """Arithmetic mean of the six per-axis scores."""
    f_d = np.asarray(f_d, dtype=np.float64)
    if f_d.shape != (6,):
        raise ValueError("expected 6 per-axis scores")
    return float(np.mean(f_d))


def pwm_signal(f_t: float, tau: float) -> float:
    """Haptic intensity: 0 while 1 - f_t < tau, otherwise 1 - f_t."""
    infeas = 1.0 - f_t
    return 0.0 if infeas < tau else float(infeas)


def step_eval(f_t: float, kappa: float) -> int:
    """1 iff f_t >= kappa (closed comparison)."""
    return 1 if f_t >= kappa else 0


def max_run_of_zeros(e) -> int:
    """Longest run of consecutive zeros in a binary sequence."""
    e = np.asarray(e)
    if e.size == 0:
        raise ValueError("empty sequence")
    longest = run = 0
    for v in e:
        if v == 0:
            run += 1
            longest = max(longest, run)
        else:
            run = 0
    return longest


def episode_eval(e_steps, gamma: int) -> int:
    """0 if the zero run length reaches gamma (closed comparison), else 1."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    return 0 if max_run_of_zeros(e_steps) >= gamma else 1


def step_values(p_prev, p_cur, p_next, idm: IdmModel, fdm: FdmModel,
                params: FeasibilityParams):
    """Scores for one interior step: (f_td, f_t, s_pwm).

    This single-row path is shared by the batch trace computation and the
    streaming service so that online and offline values match bit-exactly.
    """
    action = idm.predict(np.concatenate([p_prev, p_cur, p_next]))
    pred_next = fdm.predict(np.concatenate([p_cur, action]))
    f_td = pose_level_feasibility(pred_next, p_next, params.sigma_f)
    f_t = overall_feasibility(f_td)
    return f_td, f_t, pwm_signal(f_t, params.tau)


def compute_trace(poses: np.ndarray, idm: IdmModel, fdm: FdmModel,
                  params: FeasibilityParams, episode_id: str = "") -> FeasibilityTrace:
    """Full feasibility trace for a pose sequence of length T >= 3.

    Interior steps are scored one at a time through step_values; endpoint
    steps are unscorable and enter the weights as e_step = 0. The episode
    evaluation runs over the full T-length e_step sequence.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 2 or poses.shape[1] != 6 or poses.shape[0] < 3:
        raise ValueError("poses must be (T, 6) with T >= 3")
    t_total = poses.shape[0]
    n_inner = t_total - 2
    f_td = np.empty((n_inner, 6))
    f_t = np.empty(n_inner)
    s_pwm = np.empty(n_inner)
    for i in range(n_inner):
        f_td[i], f_t[i], s_pwm[i] = step_values(
            poses[i], poses[i + 1], poses[i + 2], idm, fdm, params)
    e_step = np.zeros(t_total, dtype=np.int64)
    for i in range(n_inner):
        e_step[i + 1] = step_eval(f_t[i], params.kappa)
    e_episode = episode_eval(e_step, params.gamma)
    w = e_episode * e_step
    return FeasibilityTrace(episode_id, f_td, f_t, s_pwm, e_step, e_episode, w)


def calibrate_sigma_f(composed_abs_errors: np.ndarray, kappa: float) -> np.ndarray:
    """Per-axis sigma_f from held-out composed-model errors.

    The 90th percentile of |error_d| is mapped to a per-axis score of
    kappa, i.e. sigma_f_d = P90_d / (-ln kappa), tying "feasible" to the
    accuracy the dynamics models actually achieve on feasible data.
    """
    err = np.asarray(composed_abs_errors, dtype=np.float64)
    if err.ndim != 2 or err.shape[1] != 6 or err.shape[0] == 0:
        raise ValueError("errors must be a non-empty (N, 6) array")
    if not (0 < kappa < 1):
        raise ValueError("kappa must be in (0, 1) for calibration")
    p90 = np.percentile(err, 90, axis=0)
    p90 = np.maximum(p90, 1e-12)
    return p90 / (-np.log(kappa))


class StreamingFeasibility:
    """Online per-session evaluator with one-step latency.

    After pose t arrives (1-indexed, t >= 3) the step t-1 becomes
    scorable; feed() then returns (t-1, f_td, f_t, s_pwm), otherwise None.
    The accumulated values equal compute_trace on the same poses exactly.
    """

    def __init__(self, idm: IdmModel, fdm: FdmModel, params: FeasibilityParams):
        self.idm = idm
        self.fdm = fdm
        self.params = params
        self.poses: list = []
        self.f_td: list = []
        self.f_t: list = []
        self.s_pwm: list = []

    def feed(self, pose):
        pose = np.asarray(pose, dtype=np.float64)
        if pose.shape != (6,) or not np.all(np.isfinite(pose)):
            raise ValueError("pose must be a finite (6,) vector")
        self.poses.append(pose)
        if len(self.poses) < 3:
            return None
        f_td, f_t, s_pwm = step_values(
            self.poses[-3], self.poses[-2], self.poses[-1],
            self.idm, self.fdm, self.params)
        self.f_td.append(f_td)
        self.f_t.append(f_t)
        self.s_pwm.append(s_pwm)
        return len(self.poses) - 1, f_td, f_t, s_pwm

    def finish(self, episode_id: str = "") -> FeasibilityTrace:
        """Trace over everything streamed so far (needs >= 3 poses)."""
        t_total = len(self.poses)
        if t_total < 3:
            raise ValueError("need at least 3 poses to close an episode")
        f_t = np.asarray(self.f_t)
        e_step = np.zeros(t_total, dtype=np.int64)
        for i, v in enumerate(f_t):
            e_step[i + 1] = step_eval(v, self.params.kappa)
        e_episode = episode_eval(e_step, self.params.gamma)
        return FeasibilityTrace(
            episode_id, np.asarray(self.f_td), f_t, np.asarray(self.s_pwm),
            e_step, e_episode, e_episode * e_step,
        )
