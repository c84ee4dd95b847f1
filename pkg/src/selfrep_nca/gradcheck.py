"""Finite-difference verification of the reverse-mode gradients.

The oracle re-implements the forward pass densely (every cell through the
network, masks applied afterwards) so it shares no code path with the
sparse step used by :func:`selfrep_nca.training.backward`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import N_CHANNELS, AliveRule, Boundary
from .rng import RngStream
from .rule import UpdateKind, UpdateMode, UpdateNetwork, rollout_states
from .training import LOSS_CHANNELS, backward


def reference_step(states: np.ndarray, params: dict[str, np.ndarray], mode: UpdateMode,
                   rng: RngStream, boundary: Boundary) -> np.ndarray:
    """One dense step for ``P`` networks at once.

    ``states`` is ``(P, B, H, W, 16)``; each entry of ``params`` carries a
    leading axis of length ``P``. All networks share the step's random draw.
    """
    p, b, h, w, _ = states.shape
    mode_pad = "wrap" if boundary == Boundary.TORUS else "constant"
    padded = np.pad(states, [(0, 0), (0, 0), (1, 1), (1, 1), (0, 0)], mode=mode_pad)
    windows = [padded[:, :, i:i + h, j:j + w, :] for i in range(3) for j in range(3)]
    inputs = np.concatenate(windows, axis=-1).reshape(p, -1, 9 * N_CHANNELS)
    hidden = np.maximum(inputs @ params["w1"].transpose(0, 2, 1) + params["b1"][:, None, :], 0.0)
    delta = hidden @ params["w2"].transpose(0, 2, 1) + params["b2"][:, None, :]
    delta = delta.reshape(states.shape)
    live_before = np.max(np.stack([win[..., 3] for win in windows]), axis=0) > 0.1
    selected = live_before
    if mode.kind == UpdateKind.ASYNC:
        selected = selected & (rng.random((b, h, w)) < mode.async_rate)
    new = np.where(selected[..., None], np.clip(states + delta, -1.0, 1.0), states)
    if mode.alive_rule == AliveRule.CELL:
        keep = new[..., 3] > 0.1
    else:
        post = np.pad(new[..., 3], [(0, 0), (0, 0), (1, 1), (1, 1)],
                      mode=mode_pad, constant_values=0.0) if mode_pad == "constant" else \
            np.pad(new[..., 3], [(0, 0), (0, 0), (1, 1), (1, 1)], mode="wrap")
        live_after = np.max(np.stack([post[:, :, i:i + h, j:j + w] for i in range(3) for j in range(3)]),
                            axis=0) > 0.1
        keep = live_before & live_after
    return np.where(keep[..., None], new, 0.0)


def reference_losses(states: np.ndarray, params: dict[str, np.ndarray], target_image: np.ndarray,
                     n_steps: int, mode: UpdateMode, seed: int, boundary: Boundary,
                     channels: str = "rgba") -> np.ndarray:
    """Batch-mean loss after ``n_steps`` for each of ``P`` stacked networks."""
    rng = RngStream(seed)
    n_nets = params["w1"].shape[0]
    x = np.broadcast_to(states, (n_nets, *states.shape))
    for _ in range(n_steps):
        x = reference_step(x, params, mode, rng, boundary)
    c = LOSS_CHANNELS[channels]
    diff = x[..., :c] - target_image[..., :c]
    return np.mean(diff * diff, axis=(2, 3, 4)).mean(axis=1)


def reference_loss(states: np.ndarray, net: UpdateNetwork, target_image: np.ndarray, n_steps: int,
                   mode: UpdateMode, seed: int, boundary: Boundary, channels: str = "rgba") -> float:
    params = {k: v[None] for k, v in net.params().items()}
    return float(reference_losses(states, params, target_image, n_steps, mode, seed, boundary, channels)[0])


@dataclass
class GradcheckInstance:
    states: np.ndarray
    net: UpdateNetwork
    target_image: np.ndarray
    n_steps: int
    mode: UpdateMode
    seed: int
    boundary: Boundary = Boundary.TORUS
    channels: str = "rgba"


def random_instance(seed: int, size: int = 8, n_steps: int = 4, hidden: int = 8, batch: int = 1,
                    mode: UpdateMode | None = None) -> GradcheckInstance:
    """A tiny float64 problem with interior (unsaturated) states."""
    gen = np.random.default_rng(seed)
    states = gen.uniform(-0.6, 0.6, (batch, size, size, N_CHANNELS))
    states[..., 3] = gen.uniform(0.3, 0.7, (batch, size, size))
    dead = gen.random((batch, size, size)) < 0.4
    states[dead] = 0.0
    net = UpdateNetwork(
        w1=gen.normal(0, 0.3, (hidden, 9 * N_CHANNELS)),
        b1=gen.normal(0, 0.1, hidden),
        w2=gen.normal(0, 0.05, (N_CHANNELS, hidden)),
        b2=gen.normal(0, 0.01, N_CHANNELS),
    )
    target = gen.uniform(0, 1, (size, size, 4))
    target[..., :3] *= target[..., 3:]
    return GradcheckInstance(states, net, target, n_steps, mode or UpdateMode(), seed)


def analytic_gradient(inst: GradcheckInstance) -> np.ndarray:
    _, traj = rollout_states(inst.states, inst.net, inst.n_steps, inst.mode, RngStream(inst.seed),
                             inst.boundary, record=True)
    grads, _ = backward(traj, inst.target_image, inst.net, inst.channels)
    return UpdateNetwork.from_params(grads).flat()


def numeric_gradient(inst: GradcheckInstance, h: float = 1e-4, chunk: int = 48) -> np.ndarray:
    """Central differences of the dense reference loss, one parameter at a time."""
    base = inst.net.flat().astype(np.float64)
    n = base.size
    out = np.empty(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        flats = np.repeat(base[None], 2 * len(idx), axis=0)
        flats[np.arange(len(idx)), idx] += h
        flats[len(idx) + np.arange(len(idx)), idx] -= h
        nets = [inst.net.with_flat(f) for f in flats]
        params = {k: np.stack([getattr(net, k) for net in nets]) for k in ("w1", "b1", "w2", "b2")}
        losses = reference_losses(inst.states, params, inst.target_image, inst.n_steps, inst.mode,
                                  inst.seed, inst.boundary, inst.channels)
        out[idx] = (losses[:len(idx)] - losses[len(idx):]) / (2 * h)
    return out


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


@dataclass
class GradcheckReport:
    max_error: float
    pass_fraction: float
    n_params: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= 0.99


def gradcheck(inst: GradcheckInstance, h: float = 1e-4, tolerance: float = 1e-3) -> GradcheckReport:
    errs = relative_errors(analytic_gradient(inst), numeric_gradient(inst, h))
    return GradcheckReport(float(errs.max()), float(np.mean(errs < tolerance)), errs.size, tolerance)
