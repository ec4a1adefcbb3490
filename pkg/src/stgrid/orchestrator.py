"""End-to-end loop: perceive, estimate, decide, plan, act, record, and
update both learners on two-time-scale schedules.

One environment slow step per iteration. The system-identification step
size vanishes faster than the DQN step size, so the high-level policy
tracks the slowly changing state estimator.
"""

import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch

from stgrid.agent import DqnAgent, EpsilonSchedule, TransitionBuffer, TransitionRecord
from stgrid.config import RunConfig
from stgrid.dynauto import (DynAutoencoder, SysTrainer, TrajectoryBuffer,
                            TrajectoryRecord, estimate_with_learned_model,
                            one_hot_observation)
from stgrid.environment import Environment, ObservationMap, wildfire_preset
from stgrid.errors import ConfigurationError
from stgrid.planner import PlanSpec, plan, random_walk

METRICS_HEADER = "n,reward,sys_loss,dqn_loss,action,eps_sys,eps_dqn,wall_ms"
METRICS_SCHEMA_COMMENT = "# stgrid metrics schema v1"

# documented RNG split: one master seed, one child stream per subsystem
RNG_STREAMS = {"env": 0, "planner": 1, "agent": 2, "sys": 3, "init": 4}


def spawn_rngs(master_seed: int) -> dict:
    return {name: np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(sid,)))
            for name, sid in RNG_STREAMS.items()}


class PolicyKind(Enum):
    LEARNED = "learned"
    RANDOM_WALK = "random"
    EXPLOITATION = "exploit"
    EXPLORATORY = "explore"


@dataclass(frozen=True)
class ScheduleParams:
    """Polynomial step-size schedules eps_n = eta / (1 + n)^delta.

    delta_sys > delta_dqn > 0.5 makes the ratio eps_sys/eps_dqn strictly
    decreasing toward zero.
    """

    eta_sys: float
    eta_dqn: float
    delta_sys: float
    delta_dqn: float

    def __post_init__(self):
        if not (self.delta_sys > self.delta_dqn > 0.5):
            raise ConfigurationError("need delta_sys > delta_dqn > 0.5")
        if self.eta_sys < 0 or self.eta_dqn < 0:
            raise ConfigurationError("base rates must be nonnegative")

    def rates(self, n: int):
        if n < 0:
            raise ConfigurationError("iteration index must be >= 0")
        return (self.eta_sys / (1.0 + n) ** self.delta_sys,
                self.eta_dqn / (1.0 + n) ** self.delta_dqn)


def ttur_rates(schedules: ScheduleParams, n: int):
    return schedules.rates(n)


@dataclass
class MetricsRow:
    n: int
    reward: int
    sys_loss: float
    dqn_loss: float
    action: int
    eps_sys: float
    eps_dqn: float
    wall_ms: float

    def to_csv(self) -> str:
        return ",".join([
            str(self.n), str(self.reward), repr(self.sys_loss), repr(self.dqn_loss),
            str(self.action), repr(self.eps_sys), repr(self.eps_dqn),
            f"{self.wall_ms:.3f}",
        ])


class Orchestrator:
    """Owns all mutable run state; single-threaded iteration loop."""

    def __init__(self, cfg: RunConfig, frame_writer=None):
        cfg.validate()
        self.cfg = cfg
        self.policy = PolicyKind(cfg.policy)
        self.rngs = spawn_rngs(cfg.seed)
        torch.manual_seed(int(self.rngs["init"].integers(0, 2**63 - 1)))
        params = wildfire_preset(cfg.n_states, cfg.n_obs)
        self.env = Environment(cfg.height, cfg.width, params, cfg.target_state,
                               self.rngs["env"])
        self.model = DynAutoencoder(cfg.height, cfg.width, cfg.n_states, cfg.n_obs,
                                    params.obs_matrix, latent_dim=cfg.latent_dim)
        self.trainer = SysTrainer(self.model)
        self.agent = DqnAgent(cfg.latent_dim, cfg.n_actions, cfg.q_hidden,
                              cfg.gamma, cfg.sync_every)
        self.schedules = ScheduleParams(cfg.eta_sys, cfg.eta_dqn,
                                        cfg.delta_sys, cfg.delta_dqn)
        self.epsilon = EpsilonSchedule(cfg.eps_start, cfg.eps_final, cfg.eps_frac,
                                       max(cfg.iterations, 1))
        self.traj_buffer = TrajectoryBuffer(cfg.traj_capacity)
        self.trans_buffer = TransitionBuffer(cfg.dqn_capacity)
        # deployment latent state persists across slow steps
        self.h = self.model.initial_state(1, self.rngs["sys"])
        self.position = cfg.start_position()
        self.last_obs = ObservationMap.empty(cfg.height, cfg.width)
        self.frame_window = deque(maxlen=cfg.traj_len + 1)
        self.prev_transition = None  # (h_{k-1}, a_{k-1}, r_{k-1}) awaiting h_k
        self.n = 0
        self.frame_writer = frame_writer
        self.trace = None  # optional callable receiving stage tags

    def _emit(self, tag: str):
        if self.trace is not None:
            self.trace(tag)

    # ------------------------------------------------------------------

    def _choose_action(self, h) -> int:
        if self.policy is PolicyKind.EXPLOITATION:
            return 2
        if self.policy is PolicyKind.EXPLORATORY:
            return 3
        return self.agent.act(h, self.epsilon.value(self.n), self.rngs["agent"])

    def run_iteration(self) -> MetricsRow:
        cfg = self.cfg
        t0 = time.perf_counter() if cfg.record_timing else 0.0
        eps_sys, eps_dqn = self.schedules.rates(self.n)
        belief = None
        sys_loss = float("nan")
        dqn_loss = float("nan")

        if self.policy is PolicyKind.RANDOM_WALK:
            action = -1
            self._emit("plan")
            path = random_walk(self.position, cfg.horizon, cfg.height, cfg.width,
                               self.rngs["planner"])
        else:
            self._emit("estimate")
            h_next, belief = estimate_with_learned_model(self.model, self.h,
                                                         self.last_obs)
            self._emit("decide")
            action = self._choose_action(h_next)
            self._emit("plan")
            path = plan(self.position, belief, PlanSpec(action, cfg.horizon,
                                                        cfg.n_samples),
                        self.rngs["planner"])

        self._emit("observe")
        obs, reward = self.env.observe_path(path.positions)
        scaled = reward / float(cfg.horizon + 1)

        self._emit("record")
        if self.policy is PolicyKind.LEARNED:
            h_np = h_next.detach()[0].numpy().copy()
            if self.prev_transition is not None:
                ph, pa, pr = self.prev_transition
                self.trans_buffer.append(TransitionRecord(ph, pa, pr, h_np))
            self.prev_transition = (h_np, action, scaled)

        if self.policy is not PolicyKind.RANDOM_WALK:
            frame = one_hot_observation(obs, cfg.n_obs)
            mask = obs.mask.astype(np.float32)
            self.frame_window.append((frame, mask, action))
            if len(self.frame_window) == cfg.traj_len + 1:
                self.traj_buffer.append(TrajectoryRecord(
                    np.stack([f for f, _, _ in self.frame_window]),
                    np.stack([m for _, m, _ in self.frame_window]),
                    np.array([a for _, _, a in self.frame_window], dtype=np.int64)))

        # learner updates, warmup-gated by buffer fill
        if self.policy is PolicyKind.LEARNED and len(self.trans_buffer) >= cfg.dqn_batch:
            self._emit("update_dqn")
            batch = self.trans_buffer.sample(cfg.dqn_batch, self.rngs["agent"])
            dqn_loss = self.agent.train_step(batch, eps_dqn)
        if (self.policy is not PolicyKind.RANDOM_WALK
                and len(self.traj_buffer) >= cfg.traj_batch):
            self._emit("update_sys")
            records = self.traj_buffer.sample(cfg.traj_batch, self.rngs["sys"])
            sys_loss = self.trainer.step(records, eps_sys, self.rngs["sys"])

        if self.frame_writer is not None:
            self.frame_writer(self.n, self.env.state, obs, belief)

        # advance the slow time scale
        self._emit("advance")
        self.env.advance()
        self.position = tuple(int(v) for v in path.positions[-1])
        self.last_obs = obs
        if self.policy is not PolicyKind.RANDOM_WALK:
            self.h = h_next.detach()

        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        row = MetricsRow(self.n, reward, sys_loss, dqn_loss, action,
                         eps_sys, eps_dqn, wall)
        self.n += 1
        return row

    def run(self, iterations=None):
        total = self.cfg.iterations if iterations is None else iterations
        return [self.run_iteration() for _ in range(total)]

    # ------------------------------------------------------------------
    # resume support

    def state_dict(self) -> dict:
        return {
            "n": self.n,
            "position": self.position,
            "last_obs": (self.last_obs.cells.copy(), self.last_obs.mask.copy()),
            "h": self.h.numpy().copy(),
            "prev_transition": self.prev_transition,
            "frame_window": list(self.frame_window),
            "env_state": self.env.state.copy(),
            "env_k": self.env.k,
            "model": self.model.state_dict(),
            "sys_optimizer": self.trainer.optimizer.state_dict(),
            "dqn_online": self.agent.online.state_dict(),
            "dqn_target": self.agent.target.state_dict(),
            "dqn_optimizer": self.agent.optimizer.state_dict(),
            "dqn_update_count": self.agent.update_count,
            "traj_buffer": self.traj_buffer.state(),
            "trans_buffer": self.trans_buffer.state(),
            "rng": {name: rng.bit_generator.state for name, rng in self.rngs.items()},
        }

    def load_state_dict(self, state: dict):
        self.n = state["n"]
        self.position = tuple(state["position"])
        cells, mask = state["last_obs"]
        self.last_obs = ObservationMap(cells.copy(), mask.copy())
        self.h = torch.as_tensor(state["h"])
        self.prev_transition = state["prev_transition"]
        self.frame_window = deque(state["frame_window"], maxlen=self.cfg.traj_len + 1)
        self.env.state = state["env_state"].copy()
        self.env.k = state["env_k"]
        self.model.load_state_dict(state["model"])
        self.trainer.optimizer.load_state_dict(state["sys_optimizer"])
        self.agent.online.load_state_dict(state["dqn_online"])
        self.agent.target.load_state_dict(state["dqn_target"])
        self.agent.optimizer.load_state_dict(state["dqn_optimizer"])
        self.agent.update_count = state["dqn_update_count"]
        self.traj_buffer.restore(state["traj_buffer"])
        self.trans_buffer.restore(state["trans_buffer"])
        for name, rng_state in state["rng"].items():
            self.rngs[name].bit_generator.state = rng_state


def write_metrics_csv(path, rows):
    from pathlib import Path
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(METRICS_SCHEMA_COMMENT + "\n")
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")
