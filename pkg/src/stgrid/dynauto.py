"""Learned state predictor: encoder -> gated recurrent cell -> decoder.

Trained online to predict the next observation frame through the fixed
observation matrix (y_hat = O^T u_hat per cell), with a masked
cross-entropy loss so only robot-visited cells contribute. The decoder
ends in a channel softmax, so predicted state columns are simplexes by
construction.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from stgrid.environment import ObservationMap
from stgrid.errors import ConfigurationError, TrainingDivergedError
from stgrid.filtering import BeliefGrid, bayes_correct


def one_hot_observation(obs: ObservationMap, n_obs: int) -> np.ndarray:
    """(n_obs, H, W) float32 stack; unobserved cells get an all-zero column."""
    cells = obs.cells
    out = np.zeros((n_obs,) + cells.shape, dtype=np.float32)
    rows, cols = np.nonzero(obs.mask)
    out[cells[rows, cols], rows, cols] = 1.0
    return out


@dataclass
class TrajectoryRecord:
    """K+1 consecutive observation frames with masks and the actions taken."""

    frames: np.ndarray   # (K+1, n_obs, H, W) float32 one-hot
    masks: np.ndarray    # (K+1, H, W) float32 0/1
    actions: np.ndarray  # (K+1,) int64


class TrajectoryBuffer:
    """Fixed-capacity FIFO ring with uniform sampling over filled slots."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._slots = [None] * self.capacity
        self._next = 0
        self._filled = 0

    def __len__(self):
        return self._filled

    def append(self, record: TrajectoryRecord):
        self._slots[self._next] = record
        self._next = (self._next + 1) % self.capacity
        self._filled = min(self._filled + 1, self.capacity)

    def sample(self, count: int, rng: np.random.Generator):
        if self._filled == 0:
            raise ConfigurationError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._filled, size=count)
        return [self._slots[i] for i in idx]

    def state(self):
        return {"slots": self._slots[:], "next": self._next, "filled": self._filled}

    def restore(self, state):
        self._slots = state["slots"][:]
        self._next = state["next"]
        self._filled = state["filled"]


class DynAutoencoder(nn.Module):
    """Observation-frame predictor with a recurrent latent state."""

    def __init__(self, height, width, n_states, n_obs, obs_matrix,
                 latent_dim=64, conv_channels=(16, 32)):
        super().__init__()
        if height % 4 or width % 4:
            raise ConfigurationError("grid dims must be divisible by 4")
        self.height, self.width = height, width
        self.n_states, self.n_obs = n_states, n_obs
        self.latent_dim = latent_dim
        c1, c2 = conv_channels
        h4, w4 = height // 4, width // 4
        self._bottleneck = (c2, h4, w4)
        self.enc_conv1 = nn.Conv2d(n_obs, c1, 3, stride=2, padding=1)
        self.enc_conv2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc_fc = nn.Linear(c2 * h4 * w4, latent_dim)
        self.gru = nn.GRUCell(latent_dim, latent_dim)
        self.dec_fc = nn.Linear(latent_dim, c2 * h4 * w4)
        self.dec_conv1 = nn.ConvTranspose2d(c2, c1, 4, stride=2, padding=1)
        self.dec_conv2 = nn.ConvTranspose2d(c1, n_states, 4, stride=2, padding=1)
        obs_matrix = torch.as_tensor(np.asarray(obs_matrix), dtype=torch.get_default_dtype())
        if obs_matrix.shape != (n_states, n_obs):
            raise ConfigurationError("obs_matrix shape mismatch")
        self.register_buffer("obs_matrix", obs_matrix)

    def encode(self, y: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.enc_conv1(y))
        x = torch.relu(self.enc_conv2(x))
        return self.enc_fc(x.flatten(1))

    def decode(self, h: torch.Tensor) -> torch.Tensor:
        c2, h4, w4 = self._bottleneck
        x = torch.relu(self.dec_fc(h)).view(-1, c2, h4, w4)
        x = torch.relu(self.dec_conv1(x))
        logits = self.dec_conv2(x)
        return torch.softmax(logits, dim=1)

    def forward_step(self, h: torch.Tensor, y: torch.Tensor):
        """One recursion step.

        h: (B, latent), y: (B, n_obs, H, W) one-hot with zero columns for
        unobserved cells. Returns (h', u_hat, y_hat) where u_hat is the
        per-cell state simplex and y_hat = O^T u_hat per cell.
        """
        if y.shape[1:] != (self.n_obs, self.height, self.width):
            raise ConfigurationError(f"bad observation shape {tuple(y.shape)}")
        h_next = self.gru(self.encode(y), h)
        u_hat = self.decode(h_next)
        y_hat = torch.einsum("ml,bmij->blij", self.obs_matrix, u_hat)
        return h_next, u_hat, y_hat

    def initial_state(self, batch: int, rng: np.random.Generator) -> torch.Tensor:
        """Fresh latent state drawn from a standard normal."""
        h0 = rng.standard_normal((batch, self.latent_dim))
        return torch.as_tensor(h0, dtype=self.obs_matrix.dtype)


_EPS = 1e-7


def masked_loss(model: DynAutoencoder, frames: torch.Tensor, masks: torch.Tensor,
                h0: torch.Tensor) -> torch.Tensor:
    """Masked binary cross-entropy of next-frame predictions.

    frames: (L, K+1, n_obs, H, W); masks: (L, K+1, H, W); h0: (L, latent).
    The recursion consumes frame k and is scored against frame k+1 under
    mask k+1; the result is averaged over the L trajectories and K steps.
    """
    n_traj, n_frames = frames.shape[0], frames.shape[1]
    steps = n_frames - 1
    if steps < 1:
        raise ConfigurationError("trajectories need at least 2 frames")
    h = h0
    total = frames.new_zeros(())
    for k in range(steps):
        h, _, y_hat = model.forward_step(h, frames[:, k])
        target = frames[:, k + 1]
        mask = masks[:, k + 1].unsqueeze(1)
        y_hat = y_hat.clamp(_EPS, 1.0 - _EPS)
        bce = -(target * torch.log(y_hat) + (1.0 - target) * torch.log1p(-y_hat))
        total = total + (bce * mask).sum()
    return total / float(n_traj * steps)


def batch_tensors(records, dtype=torch.float32):
    frames = torch.as_tensor(np.stack([r.frames for r in records]), dtype=dtype)
    masks = torch.as_tensor(np.stack([r.masks for r in records]), dtype=dtype)
    return frames, masks


def sys_gradient(model: DynAutoencoder, frames, masks, h0) -> list:
    """Gradient of the masked loss for every parameter, as a list of tensors."""
    model.zero_grad(set_to_none=True)
    loss = masked_loss(model, frames, masks, h0)
    loss.backward()
    return [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            for p in model.parameters()]


class SysTrainer:
    """Adam-tracked updates with an externally scheduled step size."""

    def __init__(self, model: DynAutoencoder):
        self.model = model
        self.optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)

    def step(self, records, lr: float, rng: np.random.Generator) -> float:
        frames, masks = batch_tensors(records, dtype=self.model.obs_matrix.dtype)
        h0 = self.model.initial_state(frames.shape[0], rng)
        self.model.zero_grad(set_to_none=True)
        loss = masked_loss(self.model, frames, masks, h0)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergedError("system-identification loss is not finite")
        if lr > 0.0:
            loss.backward()
            for group in self.optimizer.param_groups:
                group["lr"] = lr
            self.optimizer.step()
        return value


def estimate_with_learned_model(model: DynAutoencoder, h: torch.Tensor,
                                obs: ObservationMap):
    """Advance the latent state and Bayes-correct the decoded predictor.

    Returns (h', posterior BeliefGrid). Mask gating matches the known-model
    filter: unobserved cells keep the predictor column.
    """
    y = torch.as_tensor(one_hot_observation(obs, model.n_obs),
                        dtype=model.obs_matrix.dtype).unsqueeze(0)
    with torch.no_grad():
        h_next, u_hat, _ = model.forward_step(h, y)
    probs = u_hat[0].double().numpy()
    probs /= probs.sum(axis=0, keepdims=True)
    predictor = BeliefGrid(probs)
    posterior = bayes_correct(predictor, obs, model.obs_matrix.double().numpy())
    return h_next, posterior
