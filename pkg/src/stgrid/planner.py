"""Short-term path planning by random shooting over the belief grid.

A path minimizes the mean per-step running cost against the frozen
current belief. The cost is a per-cell landscape: for actions 0..2 it is
minus the belief mass of the matching state; for action 3 it is minus
the cell's Shannon entropy (visit uncertain cells).
"""

from dataclasses import dataclass

import numpy as np

from stgrid import kernels
from stgrid.errors import DomainError
from stgrid.filtering import BeliefGrid

# row/col deltas: down, up, right, left
VELOCITIES = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], dtype=np.int64)

EXPLORE_ACTION = 3


@dataclass(frozen=True)
class RobotPath:
    """Positions z_0..z_T and the velocity choices that produced them."""

    positions: np.ndarray   # (T+1, 2) int
    velocities: np.ndarray  # (T, 2) int


@dataclass(frozen=True)
class PlanSpec:
    action: int
    horizon: int
    n_samples: int

    def __post_init__(self):
        if self.action not in (0, 1, 2, 3):
            raise DomainError(f"invalid action id {self.action}")
        if self.horizon < 1 or self.n_samples < 1:
            raise DomainError("horizon and n_samples must be >= 1")


def _entropy_map(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=0)


def cost_map(belief: BeliefGrid, action: int) -> np.ndarray:
    """Per-cell running cost c1 + omega(a) * c2 for one action."""
    if action in (0, 1, 2):
        if action >= belief.probs.shape[0]:
            raise DomainError(f"action {action} has no matching state channel")
        return -belief.probs[action]
    if action == EXPLORE_ACTION:
        return -_entropy_map(belief.probs)
    raise DomainError(f"invalid action id {action}")


def running_cost(position, belief: BeliefGrid, action: int) -> float:
    r, c = int(position[0]), int(position[1])
    return float(cost_map(belief, action)[r, c])


def rollout_cost(path: RobotPath, belief: BeliefGrid, action: int) -> float:
    """Mean running cost over the T+1 path positions against the fixed belief."""
    cm = cost_map(belief, action)
    return float(cm[path.positions[:, 0], path.positions[:, 1]].mean())


def integrate(start, velocities, height, width) -> np.ndarray:
    """Clamped single-integrator positions for one velocity sequence."""
    pos = np.empty((len(velocities) + 1, 2), dtype=np.int64)
    pos[0] = start
    for t, v in enumerate(velocities):
        pos[t + 1, 0] = min(max(pos[t, 0] + v[0], 0), height - 1)
        pos[t + 1, 1] = min(max(pos[t, 1] + v[1], 0), width - 1)
    return pos


def _enumerate_indices(horizon: int) -> np.ndarray:
    """All |V|^T velocity-index sequences, ordered lexicographically."""
    grids = np.indices((len(VELOCITIES),) * horizon)
    return grids.reshape(horizon, -1).T.copy()


def plan(start, belief: BeliefGrid, spec: PlanSpec, rng: np.random.Generator) -> RobotPath:
    """Best of n_samples random velocity sequences (argmin of rollout cost).

    When n_samples covers the whole sequence space (4**horizon), the
    candidates are enumerated exhaustively instead of sampled, so the
    returned path is the global optimum. Ties break toward the lowest
    candidate index.
    """
    height, width = belief.probs.shape[1:]
    r, c = int(start[0]), int(start[1])
    if not (0 <= r < height and 0 <= c < width):
        raise DomainError(f"start position {(r, c)} out of bounds")
    n_space = len(VELOCITIES) ** spec.horizon if spec.horizon < 16 else None
    if n_space is not None and spec.n_samples >= n_space:
        idx = _enumerate_indices(spec.horizon)
    else:
        idx = rng.integers(0, len(VELOCITIES), size=(spec.n_samples, spec.horizon))
    vels = np.ascontiguousarray(VELOCITIES[idx])          # (N, T, 2)
    cm = np.ascontiguousarray(cost_map(belief, spec.action))
    costs = kernels.rollout_costs(cm, vels, r, c)
    best = int(np.argmin(costs))
    velocities = vels[best]
    return RobotPath(integrate((r, c), velocities, height, width), velocities)


def random_walk(start, horizon, height, width, rng: np.random.Generator) -> RobotPath:
    """Uniform random velocity path (baseline policy)."""
    idx = rng.integers(0, len(VELOCITIES), size=horizon)
    velocities = VELOCITIES[idx]
    return RobotPath(integrate(start, velocities, height, width), velocities)
