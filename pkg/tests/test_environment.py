import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from susopt import environment as envmod
from susopt.environment import (
    EnvConfig,
    SUSEnvironment,
    compute_reward,
    run_episode,
    state_s1,
    state_s2,
)
from susopt.problem import QuadraticProblem, evaluate, make_problem
from susopt.updates import ActionSet, gd, guru, make_action_set, nag


class TestStateBins:
    cfg = EnvConfig(K=100, m1=20, m2=40, l=0.0, u=10.0, use_log_state=False)

    def test_s1_clamps(self):
        assert state_s1(0.0, self.cfg) == 1
        assert state_s1(-5.0, self.cfg) == 1
        assert state_s1(10.0, self.cfg) == 20
        assert state_s1(1e9, self.cfg) == 20

    def test_s1_midpoint(self):
        assert state_s1(5.0, self.cfg) == 10

    def test_s1_log(self):
        cfg = EnvConfig(m1=9, l=-8.0, u=0.0)
        assert state_s1(1e-4, cfg) == 5
        assert state_s1(0.0, cfg) == 1

    def test_s2(self):
        assert state_s2(0, self.cfg) == 1
        assert state_s2(50, self.cfg) == 21
        assert state_s2(100, self.cfg) == 40

    @settings(max_examples=200, deadline=None)
    @given(y=st.one_of(st.floats(allow_nan=True, allow_infinity=True)), log=st.booleans(),
           m1=st.integers(1, 50), k=st.integers(0, 100), m2=st.integers(1, 60))
    def test_bins_in_range(self, y, log, m1, k, m2):
        cfg = EnvConfig(K=100, m1=m1, m2=m2, l=-3.0, u=2.0, use_log_state=log)
        assert 1 <= state_s1(y, cfg) <= m1
        assert 1 <= state_s2(k, cfg) <= m2


class TestReward:
    def test_difference(self):
        assert compute_reward(2.0, 1.0, EnvConfig()) == 1.0

    def test_no_progress(self):
        for kind in ("difference", "log_ratio"):
            assert compute_reward(3.0, 3.0, EnvConfig(reward_kind=kind)) == 0.0

    def test_log_ratio(self):
        assert compute_reward(math.e * 2.0, 2.0, EnvConfig(reward_kind="log_ratio")) == pytest.approx(1.0, abs=1e-15)

    def test_log_ratio_clamps(self, caplog):
        r = compute_reward(1.0, 0.0, EnvConfig(reward_kind="log_ratio"))
        assert r == pytest.approx(math.log(1e300))
        assert "clamping" in caplog.text


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(K=0), dict(m1=0), dict(l=1.0, u=1.0), dict(l=1.0),
                                        dict(reward_kind="x"), dict(target=-1.0), dict(max_evals=0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EnvConfig(**kwargs)

    def test_default_bounds(self):
        assert EnvConfig().bounds_for(1e3) == (-5.0, 3.0)


def gd_only():
    return ActionSet([gd(0.1)])


class TestSteps:
    def test_reset(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=5))
        obs = env.reset(scalar_problem)
        assert obs.r == 0.0
        assert obs.s[1] == 1
        assert not obs.terminated
        assert env.trace.y[0] == evaluate(scalar_problem, scalar_problem.x1)

    def test_gd_step(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=5))
        env.reset(scalar_problem)
        obs = env.step(1)
        assert env.state.x[0] == pytest.approx(0.2, abs=1e-15)
        assert env.state.y == pytest.approx(0.64, abs=1e-14)
        assert obs.r == pytest.approx(0.36, abs=1e-14)

    def test_budget(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=3))
        env.reset(scalar_problem)
        assert not env.step(1).terminated
        assert env.step(1).terminated
        assert env.state.reason == "budget"
        assert env.state.k == 3
        with pytest.raises(RuntimeError):
            env.step(1)

    def test_budget_one(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=1))
        assert env.reset(scalar_problem).terminated

    def test_bad_action(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=3))
        env.reset(scalar_problem)
        for a in (0, 2):
            with pytest.raises(ValueError):
                env.step(a)

    def test_step_before_reset(self):
        with pytest.raises(RuntimeError):
            SUSEnvironment(gd_only(), EnvConfig()).step(1)

    def test_target_met_at_reset(self, scalar_problem):
        env = SUSEnvironment(gd_only(), EnvConfig(K=10, target=1.0))
        obs = env.reset(scalar_problem)
        assert obs.terminated and env.state.reason == "target"

    def test_target_stops_early(self, scalar_problem):
        # gd with eta=0.1 on (x-1)^2 shrinks the error by 0.8 per step: f = 0.64^j
        trace = run_episode(scalar_problem, lambda o: 1, gd_only(), EnvConfig(K=5, target=0.3, max_evals=50))
        assert trace.reason == "target"
        assert trace.evaluations == 4
        assert trace.best_y[-1] == pytest.approx(0.64**3)

    def test_velocity_reset_after_guru(self, scalar_problem):
        actions = ActionSet([guru(-1, 1), nag(0.1, 0.9)])
        env = SUSEnvironment(actions, EnvConfig(K=10, greedy_revert=False), np.random.default_rng(0))
        env.reset(scalar_problem)
        env.step(2)
        env.step(2)
        assert np.any(env.state.memories[0].v != 0)
        env.step(1)
        x_jump, g_jump = env.state.x.copy(), env.state.g.copy()
        env.step(2)
        mem = env.state.memories[0]
        np.testing.assert_allclose(mem.v, -0.1 * g_jump, rtol=1e-15)
        np.testing.assert_allclose(mem.x_pos, x_jump - 0.1 * g_jump, rtol=1e-15)

    def test_greedy_revert(self, scalar_problem):
        actions = ActionSet([guru(50.0, 60.0), gd(0.1)])
        env = SUSEnvironment(actions, EnvConfig(K=10), np.random.default_rng(0))
        env.reset(scalar_problem)
        env.step(2)
        x_before, y_before = env.state.x.copy(), env.state.y
        obs = env.step(1)
        y_jump = env.trace.y[-1]
        assert y_jump > y_before
        assert obs.r == pytest.approx(y_before - y_jump)
        np.testing.assert_array_equal(env.state.x, x_before)
        assert env.state.best_y == y_before
        obs = env.step(2)
        # next reward is measured from the observed jump value
        assert obs.r == pytest.approx(y_jump - env.trace.y[-1])
        assert env.state.x[0] == pytest.approx(x_before[0] + 0.2 * (1 - x_before[0]))

    def test_no_revert_keeps_jump(self, scalar_problem):
        actions = ActionSet([guru(50.0, 60.0), gd(0.1)])
        env = SUSEnvironment(actions, EnvConfig(K=10, greedy_revert=False), np.random.default_rng(0))
        env.reset(scalar_problem)
        env.step(1)
        assert env.state.x[0] >= 50.0

    def test_improving_jump_kept(self):
        p = QuadraticProblem.from_arrays([[2.0]], [2.0], x1=[-30.0])
        env = SUSEnvironment(ActionSet([guru(0.5, 1.5)]), EnvConfig(K=3), np.random.default_rng(1))
        env.reset(p)
        env.step(1)
        assert 0.5 <= env.state.x[0] <= 1.5

    def test_trace_csv(self, scalar_problem, tmp_path):
        trace = run_episode(scalar_problem, lambda o: 1, gd_only(), EnvConfig(K=4))
        path = trace.to_csv(tmp_path / "trace.csv")
        rows = list(csv.DictReader(open(path)))
        assert list(rows[0]) == ["k", "action", "y", "best_y", "r", "s1", "s2"]
        assert len(rows) == 4
        assert float(rows[1]["y"]) == trace.y[1]


def random_policy(rng, J):
    return lambda obs: int(rng.integers(J)) + 1


ACTION_SETS = {
    "H1": make_action_set("H1", (2e-3, 0.9, 0.005)),
    "H2": make_action_set("H2", (2e-3, 0.9, 0.005)),
    "H3": make_action_set("H3"),
}


@pytest.mark.parametrize("name", sorted(ACTION_SETS))
@pytest.mark.parametrize("seed", range(5))
def test_episode_properties(name, seed, monkeypatch):
    rng = np.random.default_rng(seed)
    p = make_problem(6, (10.0, 500.0), rng)
    calls = []
    real = envmod.value_and_grad
    monkeypatch.setattr(envmod, "value_and_grad", lambda *a: calls.append(1) or real(*a))
    K = 30
    actions = ACTION_SETS[name]
    trace = run_episode(p, random_policy(rng, actions.J), actions, EnvConfig(K=K), np.random.default_rng(seed))
    assert len(calls) == K == len(trace)
    assert trace.k == list(range(1, K + 1))
    assert all(a >= b for a, b in zip(trace.best_y, trace.best_y[1:]))
    assert trace.best_y[-1] == min(trace.y)
    total = sum(trace.r)
    assert total == pytest.approx(trace.y[0] - trace.y[-1], rel=1e-10, abs=1e-12 * trace.y[0])
    rng2 = np.random.default_rng(seed)
    make_problem(6, (10.0, 500.0), rng2)
    again = run_episode(p, random_policy(rng2, actions.J), actions, EnvConfig(K=K), np.random.default_rng(seed))
    assert again.y == trace.y and again.action == trace.action


def test_per_entry_memory_option(scalar_problem):
    actions = ActionSet([nag(0.1, 0.5), nag(0.05, 0.5)])
    env = SUSEnvironment(actions, EnvConfig(K=6, shared_nag_memory=False))
    env.reset(scalar_problem)
    env.step(1)
    env.step(2)
    assert len(env.state.memories) == 2
    assert env.state.memories[1].initialized
    x_before, g_before = env.state.x.copy(), env.state.g.copy()
    v_old = env.state.memories[0].v.copy()
    env.step(1)
    # the first memory is re-anchored at the current iterate; its velocity survives
    mem = env.state.memories[0]
    np.testing.assert_allclose(mem.v, 0.5 * v_old - 0.1 * g_before, rtol=1e-15)
    np.testing.assert_allclose(mem.x_pos, x_before + mem.v, rtol=1e-15)
