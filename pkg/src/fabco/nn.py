"""Minimal feedforward network with analytic backprop and weighted L1 loss.

One substrate serves every learned model in the pipeline: the inverse
dynamics model, the six forward-dynamics heads, and the chunked policy.
The network is a stack of affine layers with relu/tanh on hidden layers
and identity output, wrapped in per-dimension input/output standardization
that is fitted on the training set and stored with the parameters.

The weighted L1 objective over a batch is

    loss = (1/denom) * sum_rows sum_outputs w * |yhat - y|

with denom = batch row count by default. The subgradient of |.| at 0 is
taken as 0, so gradients are bounded everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .types import rng_from

ACTIVATIONS = ("relu", "tanh")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class MlpSpec:
    """Network shape: five affine layers (four hidden activations) by default.

    layer_sizes lists every layer width from input to output, so the
    standard shape is [n_in, h, h, h, h, n_out].
    """

    layer_sizes: tuple
    activation: str = "relu"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.init_scale) and self.init_scale > 0):
            raise ValueError("init_scale must be positive")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_affine(self) -> int:
        return len(self.layer_sizes) - 1


def standard_spec(n_in: int, n_out: int, hidden: int = 64, activation: str = "relu",
                  init_scale: float = 1.0, seed: int = 0) -> MlpSpec:
    """Spec for the default five-affine-layer network."""
    return MlpSpec((n_in, hidden, hidden, hidden, hidden, n_out), activation, init_scale, seed)


@dataclass
class Normalization:
    """Per-dimension affine standardization baked into a model."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def identity(cls, n_in: int, n_out: int) -> "Normalization":
        return cls(np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out))

    @classmethod
    def fit(cls, xs: np.ndarray, ys: np.ndarray, floor: float = 1e-8) -> "Normalization":
        """Standardize each dimension; near-constant dimensions keep scale 1."""
        x_std = xs.std(axis=0)
        y_std = ys.std(axis=0)
        return cls(
            xs.mean(axis=0),
            np.where(x_std < floor, 1.0, x_std),
            ys.mean(axis=0),
            np.where(y_std < floor, 1.0, y_std),
        )


@dataclass
class MlpModel:
    """Parameters of one network: affine weights/biases plus normalization."""

    spec: MlpSpec
    weights: list = field(default_factory=list)   # W_l of shape (in_l, out_l)
    biases: list = field(default_factory=list)    # b_l of shape (out_l,)
    norm: Normalization | None = None

    def __post_init__(self):
        if self.norm is None:
            self.norm = Normalization.identity(self.spec.n_in, self.spec.n_out)
        sizes = self.spec.layer_sizes
        if len(self.weights) != self.spec.n_affine or len(self.biases) != self.spec.n_affine:
            raise ValueError("parameter count does not match spec")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"non-finite parameter in layer {l}")

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            Normalization(
                self.norm.x_mean.copy(), self.norm.x_std.copy(),
                self.norm.y_mean.copy(), self.norm.y_std.copy(),
            ),
        )

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_model(spec: MlpSpec) -> MlpModel:
    """He-style initialization scaled by spec.init_scale; biases start at 0."""
    rng = rng_from(spec.seed)
    weights, biases = [], []
    sizes = spec.layer_sizes
    for l in range(spec.n_affine):
        fan_in = sizes[l]
        scale = spec.init_scale * np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(sizes[l], sizes[l + 1])))
        biases.append(np.zeros(sizes[l + 1]))
    return MlpModel(spec, weights, biases)


def zero_model(spec: MlpSpec) -> MlpModel:
    sizes = spec.layer_sizes
    return MlpModel(
        spec,
        [np.zeros((sizes[l], sizes[l + 1])) for l in range(spec.n_affine)],
        [np.zeros(sizes[l + 1]) for l in range(spec.n_affine)],
    )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Evaluate the stack on a single input (n_in,) or a batch (B, n_in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if x.shape[-1] != model.spec.n_in:
        raise ValueError(f"input size {x.shape[-1]} != {model.spec.n_in}")
    h = (x - model.norm.x_mean) / model.norm.x_std
    last = model.spec.n_affine - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if l != last:
            h = _activate(h, model.spec.activation)
    out = model.norm.y_mean + model.norm.y_std * h
    assert single == (out.ndim == 1)
    return out


def _forward_trace(model: MlpModel, xs: np.ndarray):
    """Forward pass over a batch keeping per-layer activations for backprop."""
    h = (xs - model.norm.x_mean) / model.norm.x_std
    acts = [h]             # post-activation inputs to each affine layer
    pre = []               # pre-activation values of hidden layers
    last = model.spec.n_affine - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if l != last:
            pre.append(z)
            h = _activate(z, model.spec.activation)
            acts.append(h)
        else:
            h = z
    yhat = model.norm.y_mean + model.norm.y_std * h
    return yhat, acts, pre


def weighted_l1_loss(model: MlpModel, xs: np.ndarray, ys: np.ndarray,
                     w: np.ndarray | None = None, denom: float | None = None):
    """Weighted L1 loss and its exact parameter gradient over a batch.

    xs: (B, n_in); ys: (B, n_out); w: per-example-per-output nonnegative
    weights, broadcastable to (B, n_out); missing w means all ones.
    denom defaults to the batch row count B. Returns (loss, grads) where
    grads mirrors (weights, biases) of the model.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if xs.shape[0] != ys.shape[0] or ys.shape[1] != model.spec.n_out:
        raise ValueError("batch shape mismatch")
    b_rows = xs.shape[0]
    if w is None:
        w = np.ones_like(ys)
    else:
        w = np.broadcast_to(np.asarray(w, dtype=np.float64), ys.shape)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
    if denom is None:
        denom = float(b_rows)

    yhat, acts, pre = _forward_trace(model, xs)
    resid = yhat - ys
    loss = float(np.sum(w * np.abs(resid)) / denom)

    # d loss / d yhat, with sign(0) := 0.
    g = w * np.sign(resid) / denom
    # through output de-standardization
    g = g * model.norm.y_std

    grads_w = [None] * model.spec.n_affine
    grads_b = [None] * model.spec.n_affine
    last = model.spec.n_affine - 1
    for l in range(last, -1, -1):
        grads_w[l] = acts[l].T @ g
        grads_b[l] = g.sum(axis=0)
        if l > 0:
            g = g @ model.weights[l].T
            if model.spec.activation == "relu":
                g = g * (pre[l - 1] > 0)
            else:
                g = g * (1.0 - np.tanh(pre[l - 1]) ** 2)
    return loss, (grads_w, grads_b)


def _kink_signature(model: MlpModel, xs: np.ndarray, ys: np.ndarray):
    """Sign pattern of every relu pre-activation and every L1 residual.

    Central differences are only trusted when the signature is identical
    on both sides of the probe step (no kink crossed).
    """
    yhat, _, pre = _forward_trace(model, xs)
    parts = [np.sign(yhat - ys).ravel()]
    if model.spec.activation == "relu":
        parts.extend(np.sign(z).ravel() for z in pre)
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings shared by every trained model."""

    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    optimizer: str = "adam"     # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    l2: float = 0.0
    normalize: bool = True
    # Per-epoch learning-rate multiplier. L1 gradients do not vanish near an
    # interpolating optimum, so without decay Adam oscillates at a floor
    # proportional to the step size.
    lr_decay: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if not (0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must be in (0, 1]")


class AdamState:
    """First/second moment buffers for one parameter list."""

    def __init__(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, cfg: TrainConfig, lr: float):
        self.t += 1
        lr_t = lr * np.sqrt(1 - cfg.beta2 ** self.t) / (1 - cfg.beta1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if cfg.l2 > 0:
                g = g + cfg.l2 * p
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + cfg.eps)


def _sgd_step(params, grads, cfg: TrainConfig, lr: float):
    for p, g in zip(params, grads):
        if cfg.l2 > 0:
            g = g + cfg.l2 * p
        p -= lr * g


def train(model: MlpModel, xs: np.ndarray, ys: np.ndarray, cfg: TrainConfig,
          ws: np.ndarray | None = None, row_normalizer=None):
    """Minibatch-train a copy of the model; returns (model, loss_history).

    ws, when given, is a per-row (B,) or per-row-per-output (B, n_out)
    weight array. row_normalizer overrides the per-batch loss denominator:
    it is called with the batch's weight slice and must return a positive
    float (used by the policy trainer to normalize by effective rows).
    loss_history holds one mean epoch loss per epoch.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[0] != ys.shape[0]:
        raise ValueError("dataset must be matching 2-D arrays")
    if xs.shape[0] == 0:
        raise ValueError("dataset is empty")
    if ws is not None:
        ws = np.asarray(ws, dtype=np.float64)
        if ws.ndim == 1:
            ws = ws[:, None]
        ws = np.broadcast_to(ws, ys.shape).copy()

    model = model.copy()
    if cfg.normalize:
        model.norm = Normalization.fit(xs, ys)

    params = model.weights + model.biases
    adam = AdamState(params) if cfg.optimizer == "adam" else None
    rng = rng_from(cfg.shuffle_seed)
    n = xs.shape[0]
    history = []
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bw = None if ws is None else ws[idx]
            denom = None if row_normalizer is None else row_normalizer(bw)
            loss, (gw, gb) = weighted_l1_loss(model, xs[idx], ys[idx], bw, denom=denom)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {len(history)} (lr={lr})"
                )
            epoch_loss += loss * len(idx)
            grads = gw + gb
            if adam is not None:
                adam.step(params, grads, cfg, lr)
            else:
                _sgd_step(params, grads, cfg, lr)
        history.append(epoch_loss / n)
        lr *= cfg.lr_decay
    return model, history


def gradient_check(model: MlpModel, n_probes: int = 100, seed: int = 0,
                   batch: int = 8, step: float = 1e-5, data=None):
    """Worst relative error between analytic and central-difference gradients.

    Probes random parameter coordinates on a random batch (or on the given
    (xs, ys, ws) triple). Coordinates whose +/- step crosses a relu or L1
    kink are excluded from the comparison, as are coordinates where both
    gradients vanish.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    rng = rng_from(seed)
    if data is None:
        xs = rng.normal(size=(batch, model.spec.n_in))
        ys = rng.normal(size=(batch, model.spec.n_out))
        ws = rng.uniform(0.5, 1.5, size=(batch, model.spec.n_out))
    else:
        xs, ys, ws = data

    _, (gw, gb) = weighted_l1_loss(model, xs, ys, ws)
    analytic = gw + gb
    params = model.weights + model.biases
    base_sig = _kink_signature(model, xs, ys)

    worst = 0.0
    for _ in range(n_probes):
        k = int(rng.integers(len(params)))
        flat_index = int(rng.integers(params[k].size))
        p = params[k].ravel()
        old = p[flat_index]

        p[flat_index] = old + step
        lo_plus, _ = weighted_l1_loss(model, xs, ys, ws)
        sig_plus = _kink_signature(model, xs, ys)
        p[flat_index] = old - step
        lo_minus, _ = weighted_l1_loss(model, xs, ys, ws)
        sig_minus = _kink_signature(model, xs, ys)
        p[flat_index] = old

        if not (np.array_equal(sig_plus, base_sig) and np.array_equal(sig_minus, base_sig)):
            continue
        fd = (lo_plus - lo_minus) / (2 * step)
        an = analytic[k].ravel()[flat_index]
        scale = max(abs(fd), abs(an))
        if scale == 0.0:
            continue
        worst = max(worst, abs(fd - an) / max(scale, 1e-8))
    return worst


def perturbed(model: MlpModel, seed: int, scale: float = 0.1) -> MlpModel:
    """Model with parameters jittered by N(0, scale); used as a random probe point."""
    rng = rng_from(seed)
    out = model.copy()
    for arr in out.weights + out.biases:
        arr += rng.normal(0.0, scale, size=arr.shape)
    return out


def spec_replace(spec: MlpSpec, **kw) -> MlpSpec:
    return replace(spec, **kw)
