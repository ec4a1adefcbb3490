"""High-level DQN decision maker over the recurrent latent state.

Maps the latent vector to one of four planner actions. Standard DQN
machinery: epsilon-greedy exploration, uniform transition replay, and a
periodically synchronized target network. Latents are stored detached,
so Q-learning gradients never reach the dynamic autoencoder.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from stgrid.errors import ConfigurationError, TrainingDivergedError


@dataclass
class TransitionRecord:
    h: np.ndarray        # latent at k-1
    action: int
    reward: float        # scaled reward
    h_next: np.ndarray   # latent at k


class TransitionBuffer:
    """Fixed-capacity FIFO ring with uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._slots = [None] * self.capacity
        self._next = 0
        self._filled = 0

    def __len__(self):
        return self._filled

    def append(self, record: TransitionRecord):
        if not (0 <= record.action <= 3) or not math.isfinite(record.reward):
            raise ConfigurationError("invalid transition record")
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


class QNet(nn.Module):
    def __init__(self, latent_dim: int, n_actions: int = 4, hidden: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(latent_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, n_actions),
        )

    def forward(self, h):
        return self.net(h)


@dataclass
class EpsilonSchedule:
    """Linear decay over the first `frac` of total iterations, then flat."""

    start: float = 1.0
    final: float = 0.05
    frac: float = 0.2
    total: int = 5000

    def value(self, n: int) -> float:
        ramp = max(1, int(self.frac * self.total))
        if n >= ramp:
            return self.final
        return self.start + (self.final - self.start) * (n / ramp)


class DqnAgent:
    """Online/target Q networks plus the update rule."""

    def __init__(self, latent_dim, n_actions=4, hidden=128, gamma=0.95, sync_every=100,
                 dtype=torch.float32):
        if not (0.0 < gamma < 1.0):
            raise ConfigurationError("gamma must lie in (0, 1)")
        self.online = QNet(latent_dim, n_actions, hidden).to(dtype)
        self.target = QNet(latent_dim, n_actions, hidden).to(dtype)
        self.sync_target()
        self.gamma = gamma
        self.sync_every = int(sync_every)
        self.n_actions = n_actions
        self.update_count = 0
        self.optimizer = torch.optim.Adam(self.online.parameters(), lr=1e-3)
        self._dtype = dtype

    def act(self, h: torch.Tensor, epsilon: float, rng: np.random.Generator) -> int:
        """Epsilon-greedy action; greedy ties break toward the lowest id."""
        if epsilon > 0.0 and rng.random() < epsilon:
            return int(rng.integers(0, self.n_actions))
        with torch.no_grad():
            q = self.online(h.reshape(1, -1))[0].numpy()
        return int(np.argmax(q))  # first maximum: lowest action id wins ties

    def _batch(self, records):
        hs = torch.as_tensor(np.stack([r.h for r in records]), dtype=self._dtype)
        h2 = torch.as_tensor(np.stack([r.h_next for r in records]), dtype=self._dtype)
        acts = torch.as_tensor([r.action for r in records], dtype=torch.int64)
        rews = torch.as_tensor([r.reward for r in records], dtype=self._dtype)
        return hs, acts, rews, h2

    def loss(self, records) -> torch.Tensor:
        """Mean squared TD error with the target network bootstrap."""
        hs, acts, rews, h2 = self._batch(records)
        q = self.online(hs).gather(1, acts.unsqueeze(1)).squeeze(1)
        with torch.no_grad():
            boot = self.target(h2).max(dim=1).values
        td_target = rews + self.gamma * boot
        return ((td_target - q) ** 2).mean()

    def gradient(self, records) -> list:
        """Gradient of the loss for every online parameter (target frozen)."""
        self.online.zero_grad(set_to_none=True)
        self.loss(records).backward()
        return [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                for p in self.online.parameters()]

    def train_step(self, records, lr: float) -> float:
        loss = self.loss(records)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergedError("DQN loss is not finite")
        if lr > 0.0:
            self.online.zero_grad(set_to_none=True)
            loss.backward()
            for group in self.optimizer.param_groups:
                group["lr"] = lr
            self.optimizer.step()
            self.update_count += 1
            if self.sync_every > 0 and self.update_count % self.sync_every == 0:
                self.sync_target()
        return value

    def sync_target(self):
        self.target.load_state_dict(self.online.state_dict())
