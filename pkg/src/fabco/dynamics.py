"""Inverse and forward dynamics models learned from tracking data.

The IDM maps three consecutive poses [p_{t-1}, p_t, p_{t+1}] to the action
a_t that produced the middle transition; the FDM is six independent heads,
each predicting one component of p_{t+1} from [p_t, a_t]. Both train with
the L1 objective on transitions extracted from tracking episodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .types import child_seed, rng_from

IDM_INPUT = 18
FDM_INPUT = 12


@dataclass(frozen=True)
class TransitionDataset:
    """Rows (p_prev, p_t, p_next, a_t) from consecutive in-episode indices."""

    prev: np.ndarray      # (N, 6)
    cur: np.ndarray       # (N, 6)
    nxt: np.ndarray       # (N, 6)
    action: np.ndarray    # (N, 6)
    episode_index: np.ndarray  # (N,) which source episode each row came from

    def __len__(self) -> int:
        return self.prev.shape[0]

    def idm_inputs(self) -> np.ndarray:
        return np.concatenate([self.prev, self.cur, self.nxt], axis=1)

    def fdm_inputs(self) -> np.ndarray:
        return np.concatenate([self.cur, self.action], axis=1)

    def subset(self, mask: np.ndarray) -> "TransitionDataset":
        return TransitionDataset(
            self.prev[mask], self.cur[mask], self.nxt[mask],
            self.action[mask], self.episode_index[mask],
        )


def idm_features(triples: np.ndarray) -> np.ndarray:
    """Fixed linear map [p_prev, p_cur, p_next] -> [p_cur, dp_in, dp_out].

    Consecutive poses differ by at most v_max*dt, orders of magnitude below
    the absolute coordinates, so the network sees the two step deltas as
    explicit features instead of having to recover them by cancellation.
    """
    t = np.asarray(triples, dtype=np.float64)
    single = t.ndim == 1
    if single:
        t = t[None, :]
    if t.shape[1] != IDM_INPUT:
        raise ValueError(f"expected {IDM_INPUT} inputs, got {t.shape[1]}")
    prev, cur, nxt = t[:, 0:6], t[:, 6:12], t[:, 12:18]
    feats = np.concatenate([cur, cur - prev, nxt - cur], axis=1)
    return feats[0] if single else feats


@dataclass
class IdmModel:
    """Action predictor over stacked pose triples [p_{t-1}, p_t, p_{t+1}]."""

    net: nn.MlpModel

    def __post_init__(self):
        if self.net.spec.n_in != IDM_INPUT or self.net.spec.n_out != 6:
            raise ValueError("IDM net must map 18 -> 6")

    def predict(self, triples: np.ndarray) -> np.ndarray:
        return nn.forward(self.net, idm_features(triples))


@dataclass
class FdmModel:
    """Six per-component heads, each mapping [pose, action] to one pose axis.

    Head d's network predicts the pose delta of axis d; the current pose
    component is added back, so the learned function only has to carry the
    step-sized part of the transition.
    """

    heads: list

    def __post_init__(self):
        if len(self.heads) != 6:
            raise ValueError("FDM needs exactly 6 heads")
        for h in self.heads:
            if h.spec.n_in != FDM_INPUT or h.spec.n_out != 1:
                raise ValueError("FDM head must map 12 -> 1")

    def predict(self, pose_action: np.ndarray) -> np.ndarray:
        pa = np.asarray(pose_action, dtype=np.float64)
        single = pa.ndim == 1
        if single:
            pa = pa[None, :]
        if pa.shape[1] != FDM_INPUT:
            raise ValueError(f"expected {FDM_INPUT} inputs, got {pa.shape[1]}")
        deltas = np.column_stack([nn.forward(h, pa)[:, 0] for h in self.heads])
        out = pa[:, 0:6] + deltas
        return out[0] if single else out


def build_transitions(episodes) -> TransitionDataset:
    """Extract (p_{t-1}, p_t, p_{t+1}, a_t) rows; never stitches across episodes."""
    prev, cur, nxt, act, idx = [], [], [], [], []
    for i, ep in enumerate(episodes):
        if ep.actions is None:
            raise ValueError(f"episode {ep.id!r} has no actions")
        poses = ep.poses
        prev.append(poses[:-2])
        cur.append(poses[1:-1])
        nxt.append(poses[2:])
        act.append(ep.actions[1:-1])
        idx.append(np.full(len(ep) - 2, i))
    return TransitionDataset(
        np.concatenate(prev), np.concatenate(cur), np.concatenate(nxt),
        np.concatenate(act), np.concatenate(idx),
    )


def split_by_episode(data: TransitionDataset, holdout_fraction: float = 0.1,
                     seed: int = 0):
    """(train, holdout) split on whole episodes to avoid temporal leakage.

    At least one episode lands in the holdout when more than one exists.
    """
    ep_ids = np.unique(data.episode_index)
    if len(ep_ids) < 2 or holdout_fraction <= 0:
        return data, data
    rng = rng_from(seed, 2)
    shuffled = rng.permutation(ep_ids)
    n_hold = max(1, int(round(holdout_fraction * len(ep_ids))))
    hold = set(shuffled[:n_hold].tolist())
    mask = np.isin(data.episode_index, list(hold))
    return data.subset(~mask), data.subset(mask)


def _error_stats(err: np.ndarray) -> dict:
    """Per-axis mean/median/p90/max of absolute errors, JSON-friendly."""
    return {
        "mean": np.mean(err, axis=0).tolist(),
        "median": np.median(err, axis=0).tolist(),
        "p90": np.percentile(err, 90, axis=0).tolist(),
        "max": np.max(err, axis=0).tolist(),
    }


def train_idm(data: TransitionDataset, cfg: nn.TrainConfig, *, hidden: int = 64,
              activation: str = "relu", seed: int = 0,
              holdout_fraction: float = 0.1):
    """Train the IDM; returns (model, report with held-out per-axis errors)."""
    if len(data) < 1:
        raise ValueError("empty transition dataset")
    train_set, hold_set = split_by_episode(data, holdout_fraction, seed)
    spec = nn.standard_spec(IDM_INPUT, 6, hidden=hidden, activation=activation,
                            seed=child_seed(seed, 10))
    model, history = nn.train(nn.init_model(spec), idm_features(train_set.idm_inputs()),
                              train_set.action, cfg)
    idm = IdmModel(model)
    err = np.abs(idm.predict(hold_set.idm_inputs()) - hold_set.action)
    report = {
        "holdout_rows": len(hold_set),
        "train_rows": len(train_set),
        "abs_error": _error_stats(err),
        "loss_history": history,
    }
    return idm, report


def train_fdm(data: TransitionDataset, cfg: nn.TrainConfig, *, hidden: int = 64,
              activation: str = "relu", seed: int = 0,
              holdout_fraction: float = 0.1):
    """Train the six FDM heads; returns (model, report with per-axis errors)."""
    if len(data) < 1:
        raise ValueError("empty transition dataset")
    train_set, hold_set = split_by_episode(data, holdout_fraction, seed)
    xs = train_set.fdm_inputs()
    target_deltas = train_set.nxt - train_set.cur
    heads, histories = [], []
    for d in range(6):
        spec = nn.standard_spec(FDM_INPUT, 1, hidden=hidden, activation=activation,
                                seed=child_seed(seed, 20, d))
        model, history = nn.train(nn.init_model(spec), xs,
                                  target_deltas[:, d:d + 1], cfg)
        heads.append(model)
        histories.append(history)
    fdm = FdmModel(heads)
    err = np.abs(fdm.predict(hold_set.fdm_inputs()) - hold_set.nxt)
    report = {
        "holdout_rows": len(hold_set),
        "train_rows": len(train_set),
        "abs_error": _error_stats(err),
        "loss_history": histories,
    }
    return fdm, report


def predict_actions(idm: IdmModel, poses: np.ndarray) -> np.ndarray:
    """IDM actions for interior steps; row i is the action at step i+1.

    poses is (T, 6) with T >= 3; the result is (T-2, 6). Endpoint actions
    are undefined and omitted.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 2 or poses.shape[0] < 3:
        raise ValueError("need at least 3 poses")
    triples = np.concatenate([poses[:-2], poses[1:-1], poses[2:]], axis=1)
    return idm.predict(triples)


def predict_next_poses(fdm: FdmModel, poses: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """FDM next-pose predictions p~_{t+1} for aligned (pose_t, action_t) rows."""
    poses = np.asarray(poses, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if poses.shape != actions.shape or poses.ndim != 2 or poses.shape[1] != 6:
        raise ValueError("poses and actions must be matching (N, 6) arrays")
    return fdm.predict(np.concatenate([poses, actions], axis=1))


def composed_errors(idm: IdmModel, fdm: FdmModel, data: TransitionDataset) -> np.ndarray:
    """Per-axis |FDM(p_t, IDM(p_{t-1}, p_t, p_{t+1})) - p_{t+1}| over rows."""
    actions = idm.predict(data.idm_inputs())
    pred = predict_next_poses(fdm, data.cur, actions)
    return np.abs(pred - data.nxt)


def in_limit_rows(data: TransitionDataset, v_max: np.ndarray) -> np.ndarray:
    """Mask of rows whose commanded action stays within the speed limits.

    Saturated rows have an ambiguous inverse (any over-limit command maps
    to the same clipped transition), so feasibility calibration excludes
    them.
    """
    v = np.asarray(v_max, dtype=np.float64)
    return np.all(np.abs(data.action) <= v, axis=1)
