import copy
import math

import numpy as np
import pytest
import torch

from stgrid.config import RunConfig
from stgrid.errors import ConfigurationError
from stgrid.orchestrator import (METRICS_HEADER, METRICS_SCHEMA_COMMENT,
                                 MetricsRow, Orchestrator, PolicyKind,
                                 ScheduleParams, spawn_rngs, ttur_rates,
                                 write_metrics_csv)

torch.set_num_threads(1)


def small_cfg(**overrides):
    base = dict(height=8, width=8, horizon=4, n_samples=8, latent_dim=8,
                q_hidden=16, traj_len=3, traj_batch=2, traj_capacity=16,
                dqn_batch=4, dqn_capacity=64, sync_every=10,
                iterations=20, seed=0, policy="learned", record_timing=False)
    base.update(overrides)
    return RunConfig(**base)


def snapshot_params(orch):
    return ([p.detach().clone() for p in orch.model.parameters()],
            [p.detach().clone() for p in orch.agent.online.parameters()])


class TestScheduleParams:
    def test_initial_rates_are_base_rates(self):
        s = ScheduleParams(0.02, 0.01, 0.8, 0.52)
        assert s.rates(0) == (0.02, 0.01)

    def test_polynomial_law(self):
        s = ScheduleParams(1.0, 1.0, 0.75, 0.6)
        for n in (1, 10, 999, 10**6):
            es, ed = s.rates(n)
            assert es == pytest.approx((1.0 + n) ** -0.75, rel=1e-12)
            assert ed == pytest.approx((1.0 + n) ** -0.6, rel=1e-12)

    def test_ratio_vanishes(self):
        s = ScheduleParams(0.02, 0.02, 0.80, 0.52)
        es, ed = s.rates(10**6)
        assert es / ed == pytest.approx((1.0 + 10**6) ** -0.28, rel=1e-12)
        assert es / ed < 0.05

    def test_exponent_ordering_enforced(self):
        with pytest.raises(ConfigurationError):
            ScheduleParams(0.1, 0.1, 0.6, 0.7)   # sys slower than dqn
        with pytest.raises(ConfigurationError):
            ScheduleParams(0.1, 0.1, 0.8, 0.5)   # dqn exponent at the boundary
        with pytest.raises(ConfigurationError):
            ScheduleParams(-0.1, 0.1, 0.8, 0.6)

    def test_negative_index_rejected(self):
        with pytest.raises(ConfigurationError):
            ScheduleParams(0.1, 0.1, 0.8, 0.6).rates(-1)

    def test_helper_alias(self):
        s = ScheduleParams(0.5, 0.25, 0.9, 0.6)
        assert ttur_rates(s, 7) == s.rates(7)


class TestRngSplit:
    def test_streams_are_independent_and_reproducible(self):
        a = spawn_rngs(123)
        b = spawn_rngs(123)
        for name in a:
            assert a[name].random() == b[name].random()
        c = spawn_rngs(124)
        draws_a = [spawn_rngs(123)[n].random() for n in a]
        draws_c = [c[n].random() for n in c]
        assert draws_a != draws_c


class TestDeterminism:
    def test_same_seed_bit_identical_rows(self):
        rows1 = Orchestrator(small_cfg()).run(15)
        rows2 = Orchestrator(small_cfg()).run(15)
        assert [r.to_csv() for r in rows1] == [r.to_csv() for r in rows2]

    def test_different_seeds_differ(self):
        rows1 = Orchestrator(small_cfg(seed=1)).run(15)
        rows2 = Orchestrator(small_cfg(seed=2)).run(15)
        assert [r.to_csv() for r in rows1] != [r.to_csv() for r in rows2]

    def test_timing_disabled_writes_zero(self):
        for row in Orchestrator(small_cfg()).run(3):
            assert row.wall_ms == 0.0


class TestFrozenLearners:
    def test_zero_rates_leave_all_parameters(self):
        cfg = small_cfg(eta_sys=0.0, eta_dqn=0.0, iterations=30)
        orch = Orchestrator(cfg)
        model0, q0 = snapshot_params(orch)
        orch.run(30)
        model1, q1 = snapshot_params(orch)
        for a, b in zip(model0 + q0, model1 + q1):
            assert torch.equal(a, b)


class TestPolicies:
    def test_exploitation_always_action_two(self):
        rows = Orchestrator(small_cfg(policy="exploit")).run(10)
        assert all(r.action == 2 for r in rows)

    def test_exploratory_always_action_three(self):
        rows = Orchestrator(small_cfg(policy="explore")).run(10)
        assert all(r.action == 3 for r in rows)

    def test_random_walk_never_plans_or_learns(self):
        orch = Orchestrator(small_cfg(policy="random", iterations=12))
        model0, q0 = snapshot_params(orch)
        rows = orch.run(12)
        model1, q1 = snapshot_params(orch)
        assert all(r.action == -1 for r in rows)
        assert all(math.isnan(r.sys_loss) and math.isnan(r.dqn_loss) for r in rows)
        for a, b in zip(model0 + q0, model1 + q1):
            assert torch.equal(a, b)
        assert len(orch.traj_buffer) == 0 and len(orch.trans_buffer) == 0

    def test_fixed_policies_update_sys_but_not_dqn(self):
        orch = Orchestrator(small_cfg(policy="exploit", iterations=12))
        rows = orch.run(12)
        assert len(orch.trans_buffer) == 0
        assert all(math.isnan(r.dqn_loss) for r in rows)
        assert any(not math.isnan(r.sys_loss) for r in rows)

    def test_epsilon_columns_follow_schedule(self):
        cfg = small_cfg()
        sched = ScheduleParams(cfg.eta_sys, cfg.eta_dqn, cfg.delta_sys, cfg.delta_dqn)
        for row in Orchestrator(cfg).run(8):
            es, ed = sched.rates(row.n)
            assert row.eps_sys == es and row.eps_dqn == ed


class TestBufferCounting:
    def test_transition_and_trajectory_counts(self):
        # n iterations yield n-1 latent transitions and n-K full windows
        cfg = small_cfg(traj_len=3, dqn_capacity=64, traj_capacity=64)
        orch = Orchestrator(cfg)
        for n in range(1, 11):
            orch.run_iteration()
            assert len(orch.trans_buffer) == n - 1
            assert len(orch.traj_buffer) == max(0, n - cfg.traj_len)


class TestStageTrace:
    def collect(self, policy, iters):
        orch = Orchestrator(small_cfg(policy=policy, iterations=iters))
        traces = []
        for _ in range(iters):
            tags = []
            orch.trace = tags.append
            orch.run_iteration()
            traces.append(tags)
        return traces

    def test_learned_policy_stage_order(self):
        traces = self.collect("learned", 12)
        assert traces[0] == ["estimate", "decide", "plan", "observe", "record",
                             "advance"]
        # once both buffers pass warmup every stage appears, in order
        assert traces[-1] == ["estimate", "decide", "plan", "observe", "record",
                              "update_dqn", "update_sys", "advance"]

    def test_random_walk_stage_order(self):
        traces = self.collect("random", 3)
        for tags in traces:
            assert tags == ["plan", "observe", "record", "advance"]

    def test_updates_begin_exactly_at_warmup(self):
        cfg = small_cfg(dqn_batch=4, traj_len=3, traj_batch=2)
        orch = Orchestrator(cfg)
        first_dqn, first_sys = None, None
        for n in range(12):
            tags = []
            orch.trace = tags.append
            orch.run_iteration()
            if "update_dqn" in tags and first_dqn is None:
                first_dqn = n
            if "update_sys" in tags and first_sys is None:
                first_sys = n
        # transitions: n-1 recorded after iteration n, batch of 4 -> iteration 4
        assert first_dqn == 4
        # trajectories: n-3 recorded, batch of 2 -> iteration 4
        assert first_sys == 4


class TestResume:
    def test_state_dict_round_trip_bit_identical(self):
        cfg = small_cfg(iterations=20)
        orch_a = Orchestrator(cfg)
        orch_a.run(10)
        saved = copy.deepcopy(orch_a.state_dict())

        orch_b = Orchestrator(cfg)
        orch_b.run(3)  # desynchronize on purpose
        orch_b.load_state_dict(saved)

        rows_a = [r.to_csv() for r in orch_a.run(10)]
        rows_b = [r.to_csv() for r in orch_b.run(10)]
        assert rows_a == rows_b

    def test_resume_matches_uninterrupted_run(self):
        cfg = small_cfg(iterations=20)
        straight = [r.to_csv() for r in Orchestrator(cfg).run(20)]

        orch = Orchestrator(cfg)
        head = [r.to_csv() for r in orch.run(10)]
        saved = copy.deepcopy(orch.state_dict())
        fresh = Orchestrator(cfg)
        fresh.load_state_dict(saved)
        tail = [r.to_csv() for r in fresh.run(10)]
        assert head + tail == straight


class TestMetricsOutput:
    def test_row_format(self):
        row = MetricsRow(3, 7, 0.25, float("nan"), 2, 0.02, 0.01, 0.0)
        cells = row.to_csv().split(",")
        assert cells[0] == "3" and cells[1] == "7" and cells[4] == "2"
        assert cells[2] == "0.25" and cells[3] == "nan"
        assert cells[7] == "0.000"

    def test_csv_file_layout(self, tmp_path):
        rows = Orchestrator(small_cfg()).run(5)
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == METRICS_SCHEMA_COMMENT
        assert lines[1] == METRICS_HEADER
        assert len(lines) == 2 + 5
        assert lines[2].startswith("0,")

    def test_policy_kind_round_trip(self):
        for kind in PolicyKind:
            assert PolicyKind(kind.value) is kind
