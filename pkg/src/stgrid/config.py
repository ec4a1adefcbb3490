"""Run configuration (flat INI) and the wildfire preset constants.

The preset table below is the single source of truth for the simulator's
transition kernel and observation matrix; environment.wildfire_preset()
assembles ModelParams from it.
"""

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from stgrid.errors import ConfigurationError

# --------------------------------------------------------------------------
# Wildfire preset: 3 states (0 normal, 1 latent, 2 fire), 3 observations.
# A cell cycles normal -> latent -> fire -> normal. Fire ignites neighbors
# into the latent state; ignition from the cell ABOVE is strongest so the
# spread drifts downward. Bias terms allow rare spontaneous transitions.
# Constants are unitless kernel masses; per-cell columns are normalized.
# --------------------------------------------------------------------------
WILDFIRE = {
    # self couplings (center tap of the 3x3 kernel), indexed in-state -> out-state
    "normal_persist": 2.12,     # normal -> normal
    "normal_neighbor": 0.079,   # normal neighbors reinforce normal
    "latent_persist": 1.12,     # latent -> latent
    "latent_to_fire": 0.875,    # latent -> fire
    "fire_persist": 1.275,      # fire -> fire
    "fire_extinguish": 0.64,    # fire -> normal
    # contagion: fire neighbor pushes this cell toward latent
    "ignite_above": 1.19,       # neighbor at row above (downward spread)
    "ignite_side": 0.366,
    "ignite_below": 0.095,
    # latent neighbor weakly seeds latent
    "latent_spread": 0.091,
    # spontaneous transition mass per out-state (normal, latent, fire)
    "bias": (0.02, 0.00072, 0.0003),
    # observation rows, one per true state (strictly positive, row-stochastic)
    "obs_normal": (0.90, 0.07, 0.03),
    "obs_latent": (0.80, 0.15, 0.05),
    "obs_fire": (0.03, 0.07, 0.90),
}


@dataclass
class RunConfig:
    # grid
    height: int = 16
    width: int = 16
    n_states: int = 3
    n_obs: int = 3
    # environment
    preset: str = "wildfire"
    target_state: int = 2
    start_row: int = -1  # -1 = grid center
    start_col: int = -1
    # planner
    horizon: int = 16
    n_samples: int = 256
    # dynamic autoencoder
    latent_dim: int = 64
    traj_len: int = 8
    traj_batch: int = 4
    traj_capacity: int = 512
    # high-level agent
    n_actions: int = 4
    q_hidden: int = 128
    gamma: float = 0.95
    dqn_batch: int = 64
    dqn_capacity: int = 1000
    sync_every: int = 100
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_frac: float = 0.2
    # two-time-scale schedules
    eta_sys: float = 0.02
    eta_dqn: float = 0.02
    delta_sys: float = 0.80
    delta_dqn: float = 0.52
    # run
    iterations: int = 5000
    seed: int = 0
    policy: str = "learned"  # learned | random | exploit | explore
    out_dir: str = "runs/out"
    frames: str = "none"     # none | all | every-K (K an integer)
    checkpoint_every: int = 0
    record_timing: bool = True

    def validate(self):
        if self.height < 1 or self.width < 1:
            raise ConfigurationError("grid dims must be positive")
        if self.height % 4 or self.width % 4:
            raise ConfigurationError("grid dims must be divisible by 4 (two strided conv stages)")
        if self.n_states < 2 or self.n_obs < 2:
            raise ConfigurationError("need at least 2 states and 2 observations")
        if not (0 <= self.target_state < self.n_states):
            raise ConfigurationError("target_state out of range")
        if self.horizon < 1 or self.n_samples < 1:
            raise ConfigurationError("horizon and n_samples must be >= 1")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not (self.delta_sys > self.delta_dqn > 0.5):
            raise ConfigurationError("schedules require delta_sys > delta_dqn > 0.5")
        if self.policy not in ("learned", "random", "exploit", "explore"):
            raise ConfigurationError(f"unknown policy {self.policy!r}")
        if self.frames != "none" and self.frames != "all":
            try:
                k = int(self.frames)
            except ValueError:
                raise ConfigurationError(f"frames must be none, all, or an integer, got {self.frames!r}")
            if k < 1:
                raise ConfigurationError("frames interval must be >= 1")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        return self

    def frame_interval(self) -> int:
        """0 = no frames, otherwise export every this many iterations."""
        if self.frames == "none":
            return 0
        if self.frames == "all":
            return 1
        return int(self.frames)

    def start_position(self):
        r = self.height // 2 if self.start_row < 0 else self.start_row
        c = self.width // 2 if self.start_col < 0 else self.start_col
        return (r, c)


_SECTIONS = {
    "grid": ("height", "width", "n_states", "n_obs"),
    "env": ("preset", "target_state", "start_row", "start_col"),
    "planner": ("horizon", "n_samples"),
    "dynauto": ("latent_dim", "traj_len", "traj_batch", "traj_capacity"),
    "agent": ("n_actions", "q_hidden", "gamma", "dqn_batch", "dqn_capacity",
              "sync_every", "eps_start", "eps_final", "eps_frac"),
    "schedule": ("eta_sys", "eta_dqn", "delta_sys", "delta_dqn"),
    "run": ("iterations", "seed", "policy", "out_dir", "frames",
            "checkpoint_every", "record_timing"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def save_config(cfg: RunConfig, path):
    parser = configparser.ConfigParser()
    for section, names in _SECTIONS.items():
        parser[section] = {name: str(getattr(cfg, name)) for name in names}
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    kwargs = {}
    for section, names in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for name in names:
            if not parser.has_option(section, name):
                continue
            raw = parser.get(section, name)
            typ = _FIELD_TYPES[name]
            if typ in (int, "int"):
                kwargs[name] = int(raw)
            elif typ in (float, "float"):
                kwargs[name] = float(raw)
            elif typ in (bool, "bool"):
                kwargs[name] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                kwargs[name] = raw
    return RunConfig(**kwargs).validate()
