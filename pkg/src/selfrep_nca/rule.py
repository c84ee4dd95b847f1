"""The learned per-cell update rule and rollouts.

The rule maps the 144 raw values of a cell's 3x3 neighborhood to a residual
change of its 16 channels through one hidden relu layer. A step applies the
rule to every updatable (and, in asynchronous mode, randomly selected) cell
in parallel from the pre-step state, clamps to [-1, 1] and resets dead cells.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidArgument
from .grid import (N_CHANNELS, NBHD_SIZE, AliveRule, Boundary, Grid, neighbor_index, survivors,
                   updatable)
from .rng import RngStream

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class UpdateNetwork:
    """Two-layer rule: ``delta = w2 @ relu(w1 @ nbhd + b1) + b2``."""
    w1: np.ndarray  # (hidden, 144)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (16, hidden)
    b2: np.ndarray  # (16,)

    def __post_init__(self):
        h = self.w1.shape[0]
        if h < 1:
            raise InvalidArgument("hidden_size must be >= 1")
        expected = {"w1": (h, NBHD_SIZE), "b1": (h,), "w2": (N_CHANNELS, h), "b2": (N_CHANNELS,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidArgument(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def dtype(self):
        return self.w1.dtype

    @classmethod
    def initialize(cls, hidden_size: int = 128, rng: RngStream | None = None,
                   dtype=np.float32) -> "UpdateNetwork":
        """Small uniform first layer, zero second layer (identity rule)."""
        if hidden_size < 1:
            raise InvalidArgument("hidden_size must be >= 1")
        rng = rng or RngStream(0)
        bound = 1.0 / np.sqrt(NBHD_SIZE)
        return cls(
            w1=rng.uniform(-bound, bound, (hidden_size, NBHD_SIZE)).astype(dtype),
            b1=np.zeros(hidden_size, dtype),
            w2=np.zeros((N_CHANNELS, hidden_size), dtype),
            b2=np.zeros(N_CHANNELS, dtype),
        )

    @classmethod
    def zeros(cls, hidden_size: int = 128, dtype=np.float32) -> "UpdateNetwork":
        return cls(np.zeros((hidden_size, NBHD_SIZE), dtype), np.zeros(hidden_size, dtype),
                   np.zeros((N_CHANNELS, hidden_size), dtype), np.zeros(N_CHANNELS, dtype))

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "UpdateNetwork":
        return cls(**{name: params[name] for name in PARAM_NAMES})

    def astype(self, dtype) -> "UpdateNetwork":
        if self.dtype == dtype:
            return self
        return UpdateNetwork(*(getattr(self, n).astype(dtype) for n in PARAM_NAMES))

    def copy(self) -> "UpdateNetwork":
        return UpdateNetwork(*(getattr(self, n).copy() for n in PARAM_NAMES))

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def with_flat(self, vector: np.ndarray) -> "UpdateNetwork":
        parts, start = [], 0
        for name in PARAM_NAMES:
            ref = getattr(self, name)
            parts.append(vector[start:start + ref.size].reshape(ref.shape).astype(ref.dtype))
            start += ref.size
        return UpdateNetwork(*parts)

    def is_finite(self) -> bool:
        return all(np.isfinite(getattr(self, n)).all() for n in PARAM_NAMES)


class UpdateKind(str, Enum):
    SYNC = "sync"
    ASYNC = "async"


class AsyncSampling(str, Enum):
    BERNOULLI = "bernoulli"
    EXACT = "exact"


@dataclass(frozen=True)
class UpdateMode:
    kind: UpdateKind = UpdateKind.ASYNC
    async_rate: float = 0.5
    sampling: AsyncSampling = AsyncSampling.BERNOULLI
    alive_rule: AliveRule = AliveRule.NEIGHBORHOOD

    def __post_init__(self):
        object.__setattr__(self, "kind", UpdateKind(self.kind))
        object.__setattr__(self, "sampling", AsyncSampling(self.sampling))
        object.__setattr__(self, "alive_rule", AliveRule(self.alive_rule))
        if not 0.0 < self.async_rate <= 1.0:
            raise InvalidArgument(f"async_rate must be in (0, 1], got {self.async_rate}")

    @classmethod
    def sync(cls, alive_rule: AliveRule = AliveRule.NEIGHBORHOOD) -> "UpdateMode":
        return cls(UpdateKind.SYNC, alive_rule=alive_rule)


def forward_cell(net: UpdateNetwork, nbhd: np.ndarray) -> np.ndarray:
    """State change proposed for the central cell of one neighborhood."""
    nbhd = np.asarray(nbhd).reshape(-1)
    if nbhd.size != NBHD_SIZE:
        raise InvalidArgument(f"neighborhood must hold {NBHD_SIZE} values, got {nbhd.size}")
    if not np.isfinite(nbhd).all():
        raise InvalidArgument("neighborhood contains non-finite values")
    hidden = np.maximum(net.w1 @ nbhd + net.b1, 0.0)
    return net.w2 @ hidden + net.b2


# ---------------------------------------------------------------- batched core

def gather_rows(flat: np.ndarray, rows: np.ndarray, shape: tuple[int, int, int],
                boundary: Boundary) -> tuple[np.ndarray, np.ndarray]:
    """Neighborhood inputs for the flat cell indices ``rows``.

    ``flat`` is the ``(B*H*W, 16)`` state. Returns ``(inputs, lin)`` where
    ``inputs`` is ``(n, 144)`` and ``lin`` the ``(n, 9)`` source indices, with
    ``B*H*W`` standing for a zero padding cell.
    """
    b, h, w = shape
    hw = h * w
    table = neighbor_index(h, w, boundary).table
    batch, cell = np.divmod(rows, hw)
    local = table[cell]
    lin = batch[:, None] * hw + local
    if boundary == Boundary.ZERO:
        lin = np.where(local == hw, b * hw, lin)
        src = np.concatenate([flat, np.zeros((1, N_CHANNELS), flat.dtype)])
    else:
        src = flat
    return src[lin].reshape(len(rows), NBHD_SIZE), lin


def mlp_forward(net: UpdateNetwork, inputs: np.ndarray):
    pre = inputs @ net.w1.T
    pre += net.b1
    hidden = np.maximum(pre, 0.0)
    delta = hidden @ net.w2.T
    delta += net.b2
    return pre, hidden, delta


def draw_update_mask(shape: tuple[int, int, int], mode: UpdateMode, rng: RngStream | None) -> np.ndarray | None:
    """Stochastic per-cell selection for one step, or None in sync mode."""
    if mode.kind == UpdateKind.SYNC:
        return None
    if rng is None:
        raise InvalidArgument("asynchronous updates need an RngStream")
    b, h, w = shape
    if mode.sampling == AsyncSampling.BERNOULLI:
        return rng.random(shape) < mode.async_rate
    k = int(round(mode.async_rate * h * w))
    perms = rng.permutations(b, h * w)
    chosen = np.zeros((b, h * w), bool)
    np.put_along_axis(chosen, perms[:, :k], True, axis=1)
    return chosen.reshape(shape)


def step_states(states: np.ndarray, net: UpdateNetwork, mode: UpdateMode, rng: RngStream | None,
                boundary: Boundary, keep: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One update of a ``(B, H, W, 16)`` batch. Returns ``(next, rows)``.

    ``rows`` holds the flat indices of cells that received the rule's output;
    together with the pre-step states it determines the step completely.
    If ``keep`` is a list, the step's activations ``(inputs, lin, hidden,
    inside)`` (or None when no cell was updated) and then the flat survivor
    mask are appended to it for reuse by the backward pass.
    """
    b, h, w, _ = states.shape
    net = net.astype(states.dtype)
    live_before = updatable(states, boundary)
    eligible = live_before.copy()
    draw = draw_update_mask((b, h, w), mode, rng)
    if draw is not None:
        eligible &= draw
    rows = np.flatnonzero(eligible)
    flat = states.reshape(-1, N_CHANNELS)
    out = flat.copy()
    if rows.size:
        inputs, lin = gather_rows(flat, rows, (b, h, w), boundary)
        _, hidden, delta = mlp_forward(net, inputs)
        y = flat[rows] + delta
        out[rows] = np.clip(y, -1.0, 1.0)
        if keep is not None:
            keep.append((inputs, lin.astype(np.int32), hidden, (y > -1.0) & (y < 1.0)))
    elif keep is not None:
        keep.append(None)
    out = out.reshape(states.shape)
    kept = survivors(live_before, out, boundary, mode.alive_rule)
    out[~kept] = 0.0
    if keep is not None:
        keep.append(kept.reshape(-1))
    return out, rows


@dataclass
class Trajectory:
    """Every intermediate batch state plus the updated rows of each step."""
    states: list[np.ndarray]
    rows: list[np.ndarray] = field(default_factory=list)
    boundary: Boundary = Boundary.TORUS
    activations: list | None = field(default=None, repr=False)
    kept: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def grids(self, item: int = 0) -> list[Grid]:
        return [Grid(s[item], self.boundary) for s in self.states]


def rollout_states(states: np.ndarray, net: UpdateNetwork, n_steps: int, mode: UpdateMode,
                   rng: RngStream | None, boundary: Boundary, record: bool = False,
                   keep_activations: bool = False):
    """Run ``n_steps`` batched steps; returns the final states and the trajectory (or None)."""
    if n_steps < 0:
        raise InvalidArgument("n_steps must be >= 0")
    traj = Trajectory([states], [], boundary, [] if keep_activations else None) if record else None
    x = states
    for _ in range(n_steps):
        extra = [] if record else None
        x, rows = step_states(x, net, mode, rng, boundary, extra)
        if record:
            traj.states.append(x)
            traj.rows.append(rows)
            traj.kept.append(extra[-1])
            if keep_activations:
                traj.activations.append(extra[0])
    return x, traj


# ---------------------------------------------------------------- grid-level API

def step(grid: Grid, net: UpdateNetwork, mode: UpdateMode | None = None,
         rng: RngStream | None = None) -> Grid:
    mode = mode or UpdateMode()
    nxt, _ = step_states(grid.cells[None], net, mode, rng, grid.boundary)
    return grid.replace(nxt[0])


def rollout(grid: Grid, net: UpdateNetwork, n_steps: int = 96, mode: UpdateMode | None = None,
            rng: RngStream | None = None, record: bool = False):
    """Apply ``n_steps`` steps. With ``record`` returns ``(final, trajectory)``."""
    mode = mode or UpdateMode()
    final, traj = rollout_states(grid.cells[None], net, n_steps, mode, rng, grid.boundary, record)
    out = grid.replace(final[0])
    return (out, traj) if record else out
