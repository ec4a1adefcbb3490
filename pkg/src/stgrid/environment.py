"""Ground-truth spatiotemporal HMM simulator.

State maps are int arrays (H, W) with values in {0..n_states-1}. The
transition law applies the channel-coupled cross-correlation to the
one-hot state stack and normalizes per cell; each cell then samples its
next state independently from its column. Observations are sampled only
at cells the robot visited.
"""

from dataclasses import dataclass

import numpy as np

from stgrid import config as cfgmod
from stgrid.core import Kernel4, cross_correlate, normalize_channels
from stgrid.errors import ConfigurationError, DomainError

UNOBSERVED = -1


@dataclass(frozen=True)
class ModelParams:
    """Transition kernel plus row-stochastic observation matrix (n_states, n_obs)."""

    kernel: Kernel4
    obs_matrix: np.ndarray

    def __post_init__(self):
        o = np.ascontiguousarray(np.asarray(self.obs_matrix, dtype=np.float64))
        if o.ndim != 2 or o.shape[0] != self.kernel.n_channels:
            raise ConfigurationError(f"obs_matrix must be (n_states, n_obs), got {o.shape}")
        if (o <= 0).any():
            raise ConfigurationError("obs_matrix entries must be strictly positive")
        if np.abs(o.sum(axis=1) - 1.0).max() > 1e-12:
            raise ConfigurationError("obs_matrix rows must sum to 1")
        object.__setattr__(self, "obs_matrix", o)

    @property
    def n_states(self) -> int:
        return self.kernel.n_channels

    @property
    def n_obs(self) -> int:
        return self.obs_matrix.shape[1]


@dataclass
class ObservationMap:
    """Observed symbols where mask == 1; UNOBSERVED sentinel elsewhere."""

    cells: np.ndarray  # (H, W) int
    mask: np.ndarray   # (H, W) 0/1 int

    def __post_init__(self):
        if self.cells.shape != self.mask.shape:
            raise ConfigurationError("observation cells and mask shapes differ")
        if ((self.mask == 0) & (self.cells != UNOBSERVED)).any():
            raise ConfigurationError("unmasked cells must carry the UNOBSERVED sentinel")

    @classmethod
    def empty(cls, height, width):
        return cls(np.full((height, width), UNOBSERVED, dtype=np.int64),
                   np.zeros((height, width), dtype=np.int64))


def one_hot(state: np.ndarray, n_channels: int) -> np.ndarray:
    """Encode an int map as a (C, H, W) one-hot float64 stack."""
    if (state < 0).any() or (state >= n_channels).any():
        raise DomainError("state values out of range")
    out = np.zeros((n_channels,) + state.shape, dtype=np.float64)
    h_idx, w_idx = np.indices(state.shape)
    out[state, h_idx, w_idx] = 1.0
    return out


def transition_operator(probs: np.ndarray, params: ModelParams) -> np.ndarray:
    """One step of the transition law on a (C, H, W) belief stack."""
    return normalize_channels(cross_correlate(probs, params.kernel))


def _sample_columns(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one categorical value per cell from a (C, H, W) stack of columns."""
    cdf = np.cumsum(probs, axis=0)
    u = rng.random(probs.shape[1:])
    return (u[None, :, :] > cdf).sum(axis=0).astype(np.int64)


def step_state(state: np.ndarray, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Sample the next state map cell-wise from the transition operator output."""
    probs = transition_operator(one_hot(state, params.n_states), params)
    return _sample_columns(probs, rng)


def observe(state: np.ndarray, visited, params: ModelParams,
            rng: np.random.Generator) -> ObservationMap:
    """Sample observations at the visited cells only.

    visited: iterable of (row, col); duplicates observe once per cell.
    """
    obs = ObservationMap.empty(*state.shape)
    seen = sorted(set((int(r), int(c)) for r, c in visited))
    for r, c in seen:
        if not (0 <= r < state.shape[0] and 0 <= c < state.shape[1]):
            raise DomainError(f"visited position {(r, c)} out of bounds")
        row = params.obs_matrix[state[r, c]]
        obs.cells[r, c] = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
        obs.mask[r, c] = 1
    return obs


def reward(state: np.ndarray, positions, target_state: int) -> int:
    """Number of path timesteps spent on cells in the target state (revisits count)."""
    total = 0
    for r, c in positions:
        total += int(state[int(r), int(c)] == target_state)
    return total


def wildfire_preset(n_states: int = 3, n_obs: int = 3) -> ModelParams:
    """Assemble ModelParams from the constants table in stgrid.config."""
    if n_states != 3 or n_obs != 3:
        raise ConfigurationError("wildfire preset is defined for 3 states / 3 observations")
    t = cfgmod.WILDFIRE
    w = np.zeros((3, 3, 3, 3), dtype=np.float64)
    # self couplings at the center tap
    w[0, 0, 1, 1] = t["normal_persist"]
    w[1, 1, 1, 1] = t["latent_persist"]
    w[1, 2, 1, 1] = t["latent_to_fire"]
    w[2, 2, 1, 1] = t["fire_persist"]
    w[2, 0, 1, 1] = t["fire_extinguish"]
    # normal neighborhood reinforces normal (4-neighbors)
    for (u, v) in ((0, 1), (2, 1), (1, 0), (1, 2)):
        w[0, 0, u, v] = t["normal_neighbor"]
        w[1, 1, u, v] = t["latent_spread"]
    # fire contagion into the latent state; the row-above tap dominates so
    # the front advances downward
    w[2, 1, 0, 1] = t["ignite_above"]
    w[2, 1, 1, 0] = t["ignite_side"]
    w[2, 1, 1, 2] = t["ignite_side"]
    w[2, 1, 2, 1] = t["ignite_below"]
    kernel = Kernel4(w, np.array(t["bias"], dtype=np.float64))
    kernel.require_positive()
    obs = np.array([t["obs_normal"], t["obs_latent"], t["obs_fire"]], dtype=np.float64)
    return ModelParams(kernel, obs)


class Environment:
    """Single-owner mutable simulator used by the orchestrator.

    Advances one slow time step per executed path; the state is frozen
    while the robot traverses a path.
    """

    def __init__(self, height, width, params: ModelParams, target_state: int,
                 rng: np.random.Generator):
        self.height = int(height)
        self.width = int(width)
        self.params = params
        self.target_state = int(target_state)
        self.rng = rng
        self.state = np.zeros((self.height, self.width), dtype=np.int64)
        self.k = 0

    def observe_path(self, positions) -> tuple:
        """Observation map along the path and the mission reward, both
        against the current (frozen) state."""
        obs = observe(self.state, positions, self.params, self.rng)
        r = reward(self.state, positions, self.target_state)
        return obs, r

    def advance(self):
        self.state = step_state(self.state, self.params, self.rng)
        self.k += 1
        return self.state
