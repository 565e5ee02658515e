"""Chunked policy: weighted training, temporal ensembling, closed-loop rollout.

The policy maps the current pose to a chunk of the next k actions. At
execution time the action for step t is the fixed-weight average of every
still-valid chunk entry predicting t, with the newest prediction carrying
the largest weight. Training minimizes the weighted L1 objective

    (1/N_eff) * sum_rows sum_{i<k} w_{t+i} * |a~_{t+i} - pi(s_t)_i|_1

where N_eff counts rows with any positive weight, so zero-weighted rows
(discarded episodes, low-feasibility steps) contribute nothing to either
the numerator or the normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .dynamics import IdmModel, predict_actions
from .plant import PlantParams, PlantState, plant_step
from .types import Episode, child_seed

DEFAULT_CHUNK_WEIGHTS = (8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0)


class NoEffectiveDataError(ValueError):
    """Every row of the policy dataset is zero-weighted."""


@dataclass(frozen=True)
class ChunkPolicy:
    """Policy network emitting k stacked actions, plus the ensemble weights."""

    net: nn.MlpModel
    k: int
    w_ch: np.ndarray

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("chunk length must be >= 1")
        w = np.asarray(self.w_ch, dtype=np.float64)
        if w.shape != (self.k,) or np.any(w <= 0):
            raise ValueError("w_ch must be k strictly positive weights")
        w = w.copy(); w.flags.writeable = False
        object.__setattr__(self, "w_ch", w)
        if self.net.spec.n_out != 6 * self.k:
            raise ValueError("net output must be k*6")

    def predict_chunk(self, state: np.ndarray) -> np.ndarray:
        """(k, 6) chunk of actions for one state."""
        out = nn.forward(self.net, np.asarray(state, dtype=np.float64))
        return out.reshape(self.k, 6)


@dataclass(frozen=True)
class WeightedDemoDataset:
    """Chunk-aligned training rows built from demonstrations.

    states: (N, 6); chunks: (N, k, 6) of IDM-predicted actions;
    weights: (N, k) binary step weights; episode_ids records provenance.
    """

    states: np.ndarray
    chunks: np.ndarray
    weights: np.ndarray
    k: int
    episode_ids: tuple

    def __len__(self) -> int:
        return self.states.shape[0]

    def n_effective(self) -> int:
        return int(np.sum(np.any(self.weights > 0, axis=1)))


def build_policy_dataset(episodes, traces, idm: IdmModel, k: int) -> WeightedDemoDataset:
    """Rows (s_t, a~_{t..t+k-1}, w_{t..t+k-1}) for every full-coverage step.

    With 1-indexed steps, IDM actions exist for t in [2, T-1], so rows run
    t = 2 .. T-k; an episode shorter than k+2 yields none. Weights are
    copied bit-exactly from the traces; episodes with e_episode = 0 keep
    their rows with all-zero weights, which is gradient-equivalent to
    dropping them.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(episodes) != len(traces):
        raise ValueError("episodes and traces must align")
    states, chunks, weights, ids = [], [], [], []
    for ep, trace in zip(episodes, traces):
        t_total = len(ep)
        if trace.length != t_total:
            raise ValueError(f"trace length mismatch for episode {ep.id!r}")
        if t_total < k + 2:
            continue
        actions = predict_actions(idm, ep.poses)       # actions[i] is step i+2, 1-indexed
        n_rows = t_total - k - 1                        # t = 2 .. T-k
        for r in range(n_rows):
            # 1-indexed t = r + 2; chunk covers steps t .. t+k-1
            states.append(ep.poses[r + 1])
            chunks.append(actions[r:r + k])
            weights.append(trace.w[r + 1:r + 1 + k])
        ids.append(ep.id)
    if not states:
        return WeightedDemoDataset(
            np.zeros((0, 6)), np.zeros((0, k, 6)), np.zeros((0, k)), k, tuple(ids))
    return WeightedDemoDataset(
        np.asarray(states), np.asarray(chunks, dtype=np.float64),
        np.asarray(weights, dtype=np.float64), k, tuple(ids),
    )


def unweighted(data: WeightedDemoDataset) -> WeightedDemoDataset:
    """Same rows with every weight forced to 1 (the no-FPL ablation)."""
    return WeightedDemoDataset(
        data.states, data.chunks, np.ones_like(data.weights), data.k, data.episode_ids)


def policy_loss_grad(policy: ChunkPolicy, data: WeightedDemoDataset):
    """Dataset loss and gradient normalized by the effective row count."""
    n_eff = data.n_effective()
    if n_eff == 0:
        raise NoEffectiveDataError("no effective data: every row is zero-weighted")
    ys = data.chunks.reshape(len(data), -1)
    ws = np.repeat(data.weights, 6, axis=1)
    return nn.weighted_l1_loss(policy.net, data.states, ys, ws, denom=float(n_eff))


def train_policy(data: WeightedDemoDataset, cfg: nn.TrainConfig, *, hidden: int = 64,
                 activation: str = "relu", seed: int = 0,
                 w_ch=DEFAULT_CHUNK_WEIGHTS) -> tuple:
    """Train the chunk policy on weighted rows; returns (policy, loss history).

    Every batch's loss is normalized by its count of positive-weight rows,
    so zero-weighted rows never influence the gradient and physically
    dropping them is equivalent.
    """
    if len(data) == 0:
        raise NoEffectiveDataError("no effective data: dataset has no rows")
    if data.n_effective() == 0:
        raise NoEffectiveDataError("no effective data: every row is zero-weighted")
    w_ch = np.asarray(w_ch, dtype=np.float64)
    if w_ch.shape != (data.k,):
        raise ValueError(f"w_ch must have length k={data.k}")
    spec = nn.standard_spec(6, 6 * data.k, hidden=hidden, activation=activation,
                            seed=child_seed(seed, 30))
    ys = data.chunks.reshape(len(data), -1)
    ws = np.repeat(data.weights, 6, axis=1)

    def effective_rows(batch_w):
        n = int(np.sum(np.any(batch_w > 0, axis=1)))
        return float(max(n, 1))

    model, history = nn.train(nn.init_model(spec), data.states, ys, cfg,
                              ws=ws, row_normalizer=effective_rows)
    return ChunkPolicy(model, data.k, w_ch), history


class EnsembleBuffer:
    """Ring of the last k chunk predictions keyed by origin time."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.entries: list = []   # (origin_time, (k, 6) chunk), newest last

    def push(self, origin: int, chunk: np.ndarray):
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.shape != (self.k, 6):
            raise ValueError(f"chunk must be ({self.k}, 6)")
        if self.entries and origin <= self.entries[-1][0]:
            raise ValueError("origins must be strictly increasing")
        self.entries.append((origin, chunk))
        if len(self.entries) > self.k:
            self.entries.pop(0)


def temporal_ensemble(buf: EnsembleBuffer, t: int, w_ch) -> np.ndarray:
    """Weighted mean of the buffered predictions covering step t.

    A prediction of age j (0 = newest possible origin, i.e. origin == t)
    contributes its j-th chunk entry with weight w_ch[j]; the denominator
    sums only the weights actually available, so a single prediction is
    returned unchanged.
    """
    w_ch = np.asarray(w_ch, dtype=np.float64)
    num = np.zeros(6)
    den = 0.0
    for origin, chunk in buf.entries:
        age = t - origin
        if 0 <= age < buf.k:
            num += w_ch[age] * chunk[age]
            den += w_ch[age]
    if den == 0.0:
        raise ValueError(f"no buffered prediction covers step {t}")
    return num / den


def rollout(policy: ChunkPolicy, plant: PlantParams, start: PlantState,
            horizon: int, *, episode_id: str = "rollout", task: str = "",
            seed: int = 0) -> Episode:
    """Closed-loop execution: predict, ensemble, step the plant.

    Each control step pushes a fresh chunk prediction, executes the
    temporal-ensemble action through the plant, and records the pose and
    the executed action.
    """
    if horizon < 3:
        raise ValueError("horizon must be >= 3")
    buf = EnsembleBuffer(policy.k)
    state = start
    poses = np.empty((horizon, 6))
    actions = np.empty((horizon, 6))
    for t in range(horizon):
        poses[t] = state.pose
        buf.push(t, policy.predict_chunk(state.pose))
        a = temporal_ensemble(buf, t, policy.w_ch)
        actions[t] = a
        state = plant_step(state, a, plant)
    return Episode(
        id=episode_id, source="rollout", dt=plant.dt,
        poses=poses, actions=actions, task=task, seed=seed,
    )
