"""Training the update rule by reverse accumulation through full rollouts.

Training follows the self-replication recipe: a batch of rollouts per
training step, half of the batch's initial states substituted by the
network's own previous outputs, and cyclic alternation between targets
(e.g. egg -> adult growth on even steps, adult -> adult+egg on odd steps).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidState, TrainingDiverged
from .grid import N_CHANNELS, Boundary, Grid
from .rng import RngStream
from .rule import (PARAM_NAMES, Trajectory, UpdateMode, UpdateNetwork, gather_rows,
                   mlp_forward, rollout_states)

log = logging.getLogger(__name__)

LOSS_CHANNELS = {"rgb": 3, "rgba": 4}


@dataclass
class TargetSpec:
    """One training phase: where rollouts start and what they must reach.

    ``target_image`` is an ``(H, W, 4)`` premultiplied RGBA array in [0, 1].
    ``initial_source`` names the phase whose latest outputs replace
    ``initial`` as the canonical start (division starts from grown adults).
    ``substitution_source`` names the phase whose previous outputs are
    substituted into the batch (default: this phase), optionally passed
    through ``substitution_transform`` first. ``curriculum`` optionally maps
    the training step to the image used at that step.
    """
    initial: Grid
    target_image: np.ndarray
    phase_label: str = "target"
    initial_source: int | None = None
    substitution_source: int | None = None
    substitution_transform: Callable[[np.ndarray], np.ndarray] | None = None
    curriculum: Callable[[int], np.ndarray] | None = None

    def image_at(self, step: int) -> np.ndarray:
        return self.target_image if self.curriculum is None else self.curriculum(step)

    def __post_init__(self):
        if self.target_image.shape != (*self.initial.shape, 4):
            raise InvalidArgument(
                f"target image {self.target_image.shape[:2]} does not match grid {self.initial.shape}")


@dataclass
class TrainingConfig:
    targets: list[TargetSpec]
    batch_size: int = 8
    rollout_steps: int = 96
    substitution_fraction: float = 0.5
    update_mode: UpdateMode = field(default_factory=UpdateMode)
    learning_rate: float = 2e-3
    total_training_steps: int = 1000
    loss_channels: str = "rgba"
    seed: int = 0
    hidden_size: int = 128
    normalize_gradients: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay_at: float | Sequence[float] | None = None  # training fractions after each of which lr drops 10x
    dtype: str = "float32"
    log_every: int = 50

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if not 0.0 <= self.substitution_fraction <= 1.0:
            raise InvalidArgument("substitution_fraction must be in [0, 1]")
        if self.loss_channels not in LOSS_CHANNELS:
            raise InvalidArgument(f"loss_channels must be one of {sorted(LOSS_CHANNELS)}")
        if self.rollout_steps < 0 or self.total_training_steps < 0:
            raise InvalidArgument("step counts must be >= 0")

    @property
    def n_substituted(self) -> int:
        return math.floor(self.substitution_fraction * self.batch_size)


@dataclass
class LossRecord:
    training_step: int
    losses: np.ndarray  # per batch item
    target_index: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.losses))


# ---------------------------------------------------------------- loss

def _channel_count(channels: str) -> int:
    try:
        return LOSS_CHANNELS[channels]
    except KeyError:
        raise InvalidArgument(f"unknown loss channel set {channels!r}") from None


def batch_loss(states: np.ndarray, target_image: np.ndarray, channels: str = "rgba") -> np.ndarray:
    """Per-item MSE of a ``(B, H, W, 16)`` batch against one target, in float64."""
    c = _channel_count(channels)
    if states.shape[1:3] != target_image.shape[:2]:
        raise InvalidArgument(f"grid {states.shape[1:3]} and target {target_image.shape[:2]} differ")
    diff = states[..., :c].astype(np.float64) - target_image[..., :c]
    return np.mean(diff * diff, axis=(1, 2, 3))


def mse_loss(grid: Grid, target: TargetSpec | np.ndarray, channels: str = "rgba") -> float:
    """Mean squared error between a grid's color channels and a target image.

    The RGBA channels are compared directly against the premultiplied target.
    """
    image = target.target_image if isinstance(target, TargetSpec) else target
    return float(batch_loss(grid.cells[None], image, channels)[0])


# ---------------------------------------------------------------- backward

def backward(trajectory: Trajectory | None, target: TargetSpec | np.ndarray, net: UpdateNetwork,
             channels: str = "rgba") -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the batch-mean loss at the trajectory's final state.

    Update selections, aliveness gates and dead resets are treated as
    constants of the forward pass; the clamp passes gradient strictly inside
    (-1, 1). Returns ``(grads, per_item_losses)`` with float64 gradients.
    """
    if (trajectory is None or not trajectory.states or len(trajectory.states) != trajectory.n_steps + 1
            or len(trajectory.kept) != trajectory.n_steps):
        raise InvalidState("backward needs a recorded trajectory")
    image = target.target_image if isinstance(target, TargetSpec) else target
    c = _channel_count(channels)
    final = trajectory.final
    b, h, w, _ = final.shape
    losses = batch_loss(final, image, channels)

    dtype = final.dtype
    net_c = net.astype(dtype)
    grads = {name: np.zeros(getattr(net, name).shape, np.float64) for name in PARAM_NAMES}

    g = np.zeros(final.shape, dtype)
    g[..., :c] = (2.0 / (h * w * c * b)) * (final[..., :c].astype(np.float64) - image[..., :c])
    g = g.reshape(-1, N_CHANNELS)
    zero_pad = trajectory.boundary == Boundary.ZERO

    for t in range(trajectory.n_steps - 1, -1, -1):
        before = trajectory.states[t].reshape(-1, N_CHANNELS)
        rows = trajectory.rows[t]
        g[~trajectory.kept[t]] = 0.0
        if rows.size == 0:
            continue
        cached = trajectory.activations[t] if trajectory.activations else None
        if cached is None:
            inputs, lin = gather_rows(before, rows, (b, h, w), trajectory.boundary)
            _, hidden, delta = mlp_forward(net_c, inputs)
            y = before[rows] + delta
            inside = (y > -1.0) & (y < 1.0)
        else:
            inputs, lin, hidden, inside = cached
        d_delta = g[rows] * inside
        grads["w2"] += d_delta.T @ hidden
        grads["b2"] += d_delta.sum(axis=0)
        d_pre = d_delta @ net_c.w2
        d_pre *= hidden > 0
        grads["w1"] += d_pre.T @ inputs
        grads["b1"] += d_pre.sum(axis=0)
        d_inputs = (d_pre @ net_c.w1).reshape(len(rows), 9, N_CHANNELS)
        if zero_pad:
            g = np.concatenate([g, np.zeros((1, N_CHANNELS), g.dtype)])
        g[rows] = d_delta
        # each window offset maps cells to distinct sources, so fancy-index += is exact
        for k in range(9):
            g[lin[:, k]] += d_inputs[:, k]
        if zero_pad:
            g = g[:-1]
    return grads, losses


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros(p.shape, np.float64) for k, p in params.items()},
                   {k: np.zeros(p.shape, np.float64) for k, p in params.items()})


def global_normalize(grads: dict[str, np.ndarray], eps: float = 1e-8) -> dict[str, np.ndarray]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    return {k: g / (norm + eps) for k, g in grads.items()}


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
                   learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                   normalize: bool = True, step_index: int | None = None):
    """Adaptive-moment update with bias correction. Returns ``(params, state)``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise InvalidArgument(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
        if not np.isfinite(g).all():
            raise TrainingDiverged(state.t if step_index is None else step_index)
    if normalize:
        grads = global_normalize(grads)
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    out = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        update = learning_rate * (state.m[k] / bc1) / (np.sqrt(state.v[k] / bc2) + eps)
        out[k] = (p - update).astype(p.dtype)
    return out, state


# ---------------------------------------------------------------- batches and targets

def substitute_batch(batch: np.ndarray, previous_outputs: np.ndarray | None, fraction: float) -> np.ndarray:
    """Replace the first ``floor(fraction * B)`` slots with previous outputs.

    ``batch`` holds the canonical initial states; the remaining slots keep
    them. The substituted states are the *last* ``k`` previous outputs, which
    (for fractions up to one half) are the rollouts that started from
    canonical states, so no slot is chained through more than one extra
    rollout. Outputs are copied: no gradient path reaches the step that
    produced them.
    """
    out = batch.copy()
    if previous_outputs is None:
        return out
    k = math.floor(fraction * len(batch))
    if k > len(previous_outputs):
        raise InvalidArgument("not enough previous outputs to substitute")
    if k:
        out[:k] = previous_outputs[len(previous_outputs) - k:]
    return out


def select_target(training_step: int, targets: Sequence[TargetSpec]) -> TargetSpec:
    if not targets:
        raise InvalidArgument("at least one target is required")
    return targets[training_step % len(targets)]


# ---------------------------------------------------------------- training loop

@dataclass
class TrainResult:
    network: UpdateNetwork
    records: list[LossRecord]
    optimizer: AdamState

    def losses(self, target_index: int | None = None) -> np.ndarray:
        return np.array([r.mean for r in self.records
                         if target_index is None or r.target_index == target_index])

    def loss_ratio(self, head: int = 100, tail: int = 1000) -> float:
        """Mean loss of the last ``tail`` steps over the mean of the first ``head``."""
        series = self.losses()
        return float(np.mean(series[-tail:]) / np.mean(series[:head]))

    def converged(self, ratio: float = 0.1, head: int = 100, tail: int = 1000) -> bool:
        return len(self.records) > 0 and self.loss_ratio(head, tail) <= ratio


def learning_rate_at(config: TrainingConfig, step: int, end: int) -> float:
    """Base rate, divided by 10 once for every decay point (a fraction of ``end``) already passed."""
    points = config.lr_decay_at
    if points is None:
        return config.learning_rate
    if isinstance(points, (int, float)):
        points = (points,)
    return config.learning_rate * 0.1 ** sum(step >= p * end for p in points)


def _initial_batch(spec: TargetSpec, config: TrainingConfig, pools: dict[int, np.ndarray], index: int):
    dtype = np.dtype(config.dtype)
    if spec.initial_source is not None and spec.initial_source in pools:
        base = pools[spec.initial_source].copy()
    else:
        base = np.repeat(spec.initial.cells[None].astype(dtype), config.batch_size, axis=0)
    source = index if spec.substitution_source is None else spec.substitution_source
    previous = pools.get(source)
    if previous is not None and spec.substitution_transform is not None:
        previous = spec.substitution_transform(previous)
    return substitute_batch(base, previous, config.substitution_fraction)


def train(config: TrainingConfig, network: UpdateNetwork | None = None,
          on_step: Callable[[int, UpdateNetwork, LossRecord], None] | None = None,
          optimizer: AdamState | None = None, start_step: int = 0) -> TrainResult:
    """Run the training loop and return the network and its loss series.

    A non-finite loss raises :class:`TrainingDiverged` carrying the last
    good network as ``last_good``. Failure to converge is not an error.
    """
    if not config.targets:
        raise InvalidArgument("at least one target is required")
    dtype = np.dtype(config.dtype)
    rng = RngStream(config.seed)
    net = network or UpdateNetwork.initialize(config.hidden_size, rng.fork(1), dtype=dtype)
    net = net.astype(dtype)
    if not net.is_finite():
        raise InvalidArgument("initial network has non-finite parameters")
    if net.hidden_size != config.hidden_size:
        raise InvalidArgument(f"network hidden size {net.hidden_size} != configured {config.hidden_size}")
    opt = optimizer or AdamState.zeros_like(net.params())
    mask_rng = rng.fork(2)
    boundary = config.targets[0].initial.boundary
    pools: dict[int, np.ndarray] = {}
    records: list[LossRecord] = []

    for step in range(start_step, start_step + config.total_training_steps):
        index = step % len(config.targets)
        spec = config.targets[index]
        batch = _initial_batch(spec, config, pools, index)
        _, traj = rollout_states(batch, net, config.rollout_steps, config.update_mode, mask_rng,
                                 boundary, record=True, keep_activations=True)
        grads, losses = backward(traj, spec.image_at(step), net, config.loss_channels)
        if not np.isfinite(losses).all():
            err = TrainingDiverged(step, "loss")
            err.last_good = net
            raise err
        lr = learning_rate_at(config, step, start_step + config.total_training_steps)
        try:
            params, opt = optimizer_step(net.params(), grads, opt, lr, config.beta1, config.beta2,
                                         config.eps, config.normalize_gradients, step)
        except TrainingDiverged as err:
            err.last_good = net
            raise
        updated = UpdateNetwork.from_params(params)
        if not updated.is_finite():
            err = TrainingDiverged(step, "parameters")
            err.last_good = net
            raise err
        net = updated
        pools[index] = traj.final.copy()
        record = LossRecord(step, losses, index)
        records.append(record)
        if config.log_every and step % config.log_every == 0:
            log.info("step %d target %d (%s) loss %.6f", step, index, spec.phase_label, record.mean)
        if on_step is not None:
            on_step(step, net, record)
    return TrainResult(net, records, opt)
