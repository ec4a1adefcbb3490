"""Command-line entry point.

Verbs:
  simulate     free-run the environment, export frames and occupancy stats
  filter-demo  known-model filtering on full observations, belief frames
               and per-step cross-entropy vs. the no-correction baseline
  train        run the full loop for one policy, write metrics/checkpoints
  compare      run all four policies over shared seeds, print the summary

STGRID_THREADS caps internal (torch) parallelism; default 1 keeps runs
bit-reproducible regardless of host core count.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch

from stgrid import config as cfgmod
from stgrid import environment as envmod
from stgrid import filtering, pgm
from stgrid.config import RunConfig, load_config, save_config
from stgrid.errors import StgridError
from stgrid.orchestrator import Orchestrator, spawn_rngs, write_metrics_csv

POLICY_ORDER = ("random", "learned", "exploit", "explore")
POLICY_LABEL = {"random": "Random Walk", "learned": "Learned Policy",
                "exploit": "Exploitation", "explore": "Exploratory"}


def _setup_threads():
    torch.set_num_threads(int(os.environ.get("STGRID_THREADS", "1")))


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if getattr(args, "policy", None) is not None:
        cfg.policy = args.policy
    if getattr(args, "iters", None) is not None:
        cfg.iterations = args.iters
    if getattr(args, "frames", None) is not None:
        cfg.frames = args.frames
    return cfg.validate()


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    print(f"simulate: {cfg.height}x{cfg.width}, {cfg.iterations} steps, seed {cfg.seed}")
    if cfg.iterations == 0:
        return 0
    rngs = spawn_rngs(cfg.seed)
    params = envmod.wildfire_preset(cfg.n_states, cfg.n_obs)
    state = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    every = cfg.frame_interval()
    all_cells = [(r, c) for r in range(cfg.height) for c in range(cfg.width)]
    occupancy = []
    for k in range(cfg.iterations):
        state = envmod.step_state(state, params, rngs["env"])
        obs = envmod.observe(state, all_cells, params, rngs["env"])
        occupancy.append([float((state == s).mean()) for s in range(cfg.n_states)])
        if every and k % every == 0:
            pgm.write_pgm(state, pgm.frame_path(out, "state", k))
            pgm.write_pgm(obs.cells, pgm.frame_path(out, "obs", k))
    with open(out / "occupancy.csv", "w") as fh:
        fh.write("k," + ",".join(f"state{s}" for s in range(cfg.n_states)) + "\n")
        for k, row in enumerate(occupancy):
            fh.write(f"{k}," + ",".join(repr(v) for v in row) + "\n")
    occ = np.array(occupancy)
    print("mean occupancy:", " ".join(f"state{s}={occ[:, s].mean():.4f}"
                                      for s in range(cfg.n_states)))
    return 0


def cmd_filter_demo(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    if cfg.iterations == 0:
        return 0
    rngs = spawn_rngs(cfg.seed)
    params = envmod.wildfire_preset(cfg.n_states, cfg.n_obs)
    state = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    all_cells = [(r, c) for r in range(cfg.height) for c in range(cfg.width)]
    belief = filtering.BeliefGrid.uniform(cfg.n_states, cfg.height, cfg.width)
    baseline = filtering.BeliefGrid.uniform(cfg.n_states, cfg.height, cfg.width)
    every = cfg.frame_interval()
    rows = []
    for k in range(cfg.iterations):
        state = envmod.step_state(state, params, rngs["env"])
        obs = envmod.observe(state, all_cells, params, rngs["env"])
        posterior = filtering.bayes_correct(belief, obs, params.obs_matrix)
        ce_filter = cross_entropy_vs_truth(posterior.probs, state)
        ce_base = cross_entropy_vs_truth(baseline.probs, state)
        rows.append((k, ce_filter, ce_base))
        if every and k % every == 0:
            for s in range(cfg.n_states):
                pgm.write_pgm(posterior.probs[s], pgm.frame_path(out, f"belief{s}", k))
        belief = filtering.predict(posterior, params)
        baseline = filtering.predict(baseline, params)
    with open(out / "cross_entropy.csv", "w") as fh:
        fh.write("k,ce_filter,ce_baseline\n")
        for k, a, b in rows:
            fh.write(f"{k},{a!r},{b!r}\n")
    mean_f = float(np.mean([r[1] for r in rows]))
    mean_b = float(np.mean([r[2] for r in rows]))
    print(f"mean cross-entropy: filter={mean_f:.4f} no-correction={mean_b:.4f}")
    return 0


def cross_entropy_vs_truth(probs: np.ndarray, state: np.ndarray) -> float:
    """Mean per-cell -log p(true state), clipped away from log 0."""
    h_idx, w_idx = np.indices(state.shape)
    p = np.clip(probs[state, h_idx, w_idx], 1e-12, 1.0)
    return float(-np.log(p).mean())


def _make_frame_writer(cfg: RunConfig, out: Path):
    every = cfg.frame_interval()
    if not every:
        return None

    def writer(n, state, obs, belief):
        if n % every:
            return
        pgm.write_pgm(state, pgm.frame_path(out, "state", n))
        pgm.write_pgm(obs.cells, pgm.frame_path(out, "obs", n))
        if belief is not None:
            for s in range(belief.probs.shape[0]):
                pgm.write_pgm(belief.probs[s], pgm.frame_path(out, f"belief{s}", n))

    return writer


def cmd_train(cfg: RunConfig, resume: str | None = None) -> int:
    from stgrid import checkpoint as ckpt
    out = _prepare_out(cfg)
    orch = Orchestrator(cfg, frame_writer=_make_frame_writer(cfg, out))
    if resume:
        orch.load_state_dict(ckpt.load_run_state(resume))
    rows = []
    while orch.n < cfg.iterations:
        rows.append(orch.run_iteration())
        if cfg.checkpoint_every and orch.n % cfg.checkpoint_every == 0:
            ckpt.save_run_state(out / f"state_{orch.n}.pt", orch.state_dict())
            _save_param_checkpoint(ckpt, out / f"params_{orch.n}.bin", cfg, orch)
    write_metrics_csv(out / "metrics.csv", rows)
    _save_param_checkpoint(ckpt, out / "params_final.bin", cfg, orch)
    if rows:
        tail = rows[-max(1, len(rows) // 10):]
        print(f"{POLICY_LABEL[cfg.policy]}: mean reward (final 10%) = "
              f"{np.mean([r.reward for r in tail]):.3f}")
    return 0


def _save_param_checkpoint(ckpt, path, cfg, orch):
    from collections import OrderedDict
    sections = OrderedDict()
    sections["dynauto"] = ckpt.module_arrays(orch.model)
    sections["dqn_online"] = ckpt.module_arrays(orch.agent.online)
    sections["dqn_target"] = ckpt.module_arrays(orch.agent.target)
    ckpt.save_params(path, (cfg.height, cfg.width, cfg.n_states, cfg.n_obs,
                            cfg.latent_dim), sections)


def cmd_compare(cfg: RunConfig, seeds) -> int:
    out = _prepare_out(cfg)
    means = {}
    for policy in POLICY_ORDER:
        per_seed = []
        for seed in seeds:
            sub = cfgmod.RunConfig(**{**cfg.__dict__,
                                      "policy": policy, "seed": seed,
                                      "out_dir": str(Path(out) / f"{policy}_seed{seed}")})
            sub.validate()
            orch = Orchestrator(sub, frame_writer=None)
            rows = orch.run()
            write_metrics_csv(Path(sub.out_dir) / "metrics.csv", rows)
            tail = rows[-max(1, len(rows) // 10):]
            per_seed.append(float(np.mean([r.reward for r in tail])))
        means[policy] = float(np.mean(per_seed))
        print(f"{POLICY_LABEL[policy]:>14}: seeds={per_seed} mean={means[policy]:.3f}")
    baseline = means["random"]
    lines = ["plan_method,reward,percent_of_baseline"]
    print(f"{'Plan Method':<16}{'Reward':>8}  {'':>6}")
    for policy in POLICY_ORDER:
        pct = 100.0 * means[policy] / baseline if baseline > 0 else float("nan")
        tag = "(baseline)" if policy == "random" else f"{pct:.0f}%"
        print(f"{POLICY_LABEL[policy]:<16}{means[policy]:>8.1f}  {tag:>6}")
        lines.append(f"{POLICY_LABEL[policy]},{means[policy]!r},{pct!r}")
    with open(out / "summary.csv", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stgrid")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "filter-demo", "train", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--frames", type=str, default=None)
        if name == "train":
            p.add_argument("--policy", type=str, default=None,
                           choices=("learned", "random", "exploit", "explore"))
            p.add_argument("--resume", type=str, default=None)
        if name == "compare":
            p.add_argument("--seeds", type=str, default="0,1,2,3,4")
    return parser


def main(argv=None) -> int:
    _setup_threads()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_cfg(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "filter-demo":
            return cmd_filter_demo(cfg)
        if args.command == "train":
            return cmd_train(cfg, resume=args.resume)
        if args.command == "compare":
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            return cmd_compare(cfg, seeds)
        raise AssertionError(args.command)
    except StgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
