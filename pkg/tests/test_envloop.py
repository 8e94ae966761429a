"""Episode runner: termination, truncation, call order, eval aggregation."""

import numpy as np
import pytest

from policyserve.agents import Agent, EchoAgent, ScriptedAgent
from policyserve.envloop import (
    BatchEnv,
    CountdownEnv,
    LocalPolicy,
    NullEnv,
    Wrapper,
    run_episode,
    run_eval,
)
from policyserve.errors import ConfigError, EpisodeError
from policyserve.protocol.messages import Act, Obs


def test_countdown_with_echo_terminates_at_n():
    stats = run_episode(CountdownEnv(n=5, image_size=32), EchoAgent(7), max_steps=100)
    assert stats.steps == 5
    assert stats.terminated is True
    assert stats.truncated is False
    assert stats.total_reward == 1.0
    assert stats.mean_rtt > 0
    assert stats.wall_time > 0


def test_scripted_done_short_circuits():
    agent = ScriptedAgent([[0.1] * 7, [0.2] * 7, [0.3] * 7])
    stats = run_episode(CountdownEnv(n=50, image_size=32), agent, max_steps=100)
    assert stats.steps == 3
    assert stats.terminated is False


def test_max_steps_truncates():
    stats = run_episode(CountdownEnv(n=5, image_size=32), EchoAgent(), max_steps=2)
    assert stats.steps == 2
    assert stats.truncated is True
    assert stats.terminated is False


def test_max_steps_below_one_rejected():
    with pytest.raises(ConfigError):
        run_episode(NullEnv(), EchoAgent(), max_steps=0)


def test_countdown_observation_structure():
    env = CountdownEnv(n=4, image_size=48)
    obs, info = env.reset(seed=3)
    assert set(obs.cameras) == {"noise", "gradient"}
    assert obs.cameras["noise"].shape == (48, 48, 3)
    assert obs.gripper == 0.0
    obs2, *_ = env.step(np.zeros(7))
    assert obs2.gripper == 0.25
    assert not np.array_equal(obs.cameras["noise"], obs2.cameras["noise"])


def test_countdown_seeded_determinism():
    a = CountdownEnv(n=3, image_size=32)
    b = CountdownEnv(n=3, image_size=32)
    obs_a, _ = a.reset(seed=11)
    obs_b, _ = b.reset(seed=11)
    assert np.array_equal(obs_a.cameras["noise"], obs_b.cameras["noise"])
    step_a = a.step(np.zeros(7))[0]
    step_b = b.step(np.zeros(7))[0]
    assert np.array_equal(step_a.cameras["noise"], step_b.cameras["noise"])
    c = CountdownEnv(n=3, image_size=32)
    obs_c, _ = c.reset(seed=12)
    assert not np.array_equal(obs_a.cameras["noise"], obs_c.cameras["noise"])


def test_step_after_termination_raises():
    env = CountdownEnv(n=1, image_size=32)
    env.reset()
    env.step(np.zeros(7))
    with pytest.raises(RuntimeError):
        env.step(np.zeros(7))


def test_call_order_invariant_with_instrumented_fakes():
    calls = []

    class Probe(Agent):
        def initialize(self):
            calls.append("initialize")

        def reset(self, obs, instruction=None, **kwargs):
            calls.append("reset")
            return {}

        def act(self, obs):
            calls.append("act")
            return Act(action=np.zeros(3, np.float32))

    run_episode(CountdownEnv(n=2, image_size=32), Probe(), max_steps=10)
    assert calls[0] == "initialize"
    assert calls[1] == "reset"
    assert all(c == "act" for c in calls[2:])
    assert calls.count("initialize") == 1


def test_local_policy_enforces_order():
    policy = LocalPolicy(EchoAgent())
    with pytest.raises(ConfigError):
        policy.act(Obs())
    policy.initialize()
    with pytest.raises(ConfigError):
        policy.act(Obs())
    policy.reset(Obs())
    assert policy.act(Obs()).action.shape == (7,)
    with pytest.raises(ConfigError):
        policy.initialize()


def test_policy_exception_carries_partial_stats():
    class Bomb(Agent):
        def act(self, obs):
            raise ValueError("kaput")

    with pytest.raises(EpisodeError) as exc:
        run_episode(CountdownEnv(n=5, image_size=32), Bomb(), max_steps=10)
    assert exc.value.stats is not None
    assert exc.value.stats.steps == 0
    assert "kaput" in exc.value.stats.error


def test_env_exception_carries_partial_stats():
    class FailingEnv(NullEnv):
        def __init__(self):
            super().__init__()
            self.count = 0

        def step(self, action):
            self.count += 1
            if self.count == 3:
                raise RuntimeError("env died")
            return super().step(action)

    with pytest.raises(EpisodeError) as exc:
        run_episode(FailingEnv(), EchoAgent(), max_steps=10)
    assert exc.value.stats.steps == 2


def test_run_eval_countdown_success_rate():
    episodes, agg = run_eval(lambda: CountdownEnv(n=5, image_size=32), EchoAgent(),
                             n_episodes=10, seeds=list(range(10)), max_steps=100)
    assert len(episodes) == 10
    assert agg["success_rate"] == 1.0
    assert agg["mean_steps"] == 5.0
    assert agg["errors"] == 0


def test_run_eval_seeded_runs_are_identical():
    def run():
        eps, _ = run_eval(lambda: CountdownEnv(n=4, image_size=32),
                          ScriptedAgent([[0.5] * 7] * 10),
                          n_episodes=3, seeds=[7, 8, 9], max_steps=50)
        return [(e.steps, e.total_reward, e.terminated) for e in eps]

    assert run() == run()


def test_run_eval_records_errors_and_continues():
    count = {"n": 0}

    class SometimesFailingEnv(CountdownEnv):
        def __init__(self):
            super().__init__(n=3, image_size=32)
            count["n"] += 1
            self.fail = count["n"] == 2

        def step(self, action):
            if self.fail and self._step == 1:
                raise RuntimeError("scheduled failure")
            return super().step(action)

    episodes, agg = run_eval(SometimesFailingEnv, EchoAgent(),
                             n_episodes=3, max_steps=10)
    assert agg["errors"] == 1
    assert agg["episodes"] == 3
    assert agg["mean_steps"] == 3.0  # over the two clean episodes
    assert sum(1 for e in episodes if e.error) == 1


def test_seeds_length_mismatch_rejected():
    with pytest.raises(ConfigError):
        run_eval(NullEnv, EchoAgent(), n_episodes=2, seeds=[1], max_steps=5)


def test_wrapper_translates_both_directions():
    class DictEnv:
        """Env speaking raw dicts instead of Obs."""

        def reset(self, seed=None):
            return {"pixels": np.zeros((8, 8, 3), np.uint8)}, {}

        def step(self, action):
            assert isinstance(action, list)  # wrapper converted
            return {"pixels": np.zeros((8, 8, 3), np.uint8)}, 0.0, True, False, {}

    class DictWrapper(Wrapper):
        def to_obs(self, native):
            return Obs(cameras={"cam": native["pixels"]})

        def from_act(self, act):
            return act.action.tolist()

    stats = run_episode(DictEnv(), EchoAgent(), DictWrapper(), max_steps=5)
    assert stats.steps == 1 and stats.terminated


def test_batch_env_stacks_observations():
    env = BatchEnv(lambda: CountdownEnv(n=3, image_size=16), k=4)
    obs, _ = env.reset(seed=5)
    assert obs.batched and obs.batch_size == 4
    assert obs.cameras["noise"].shape == (4, 16, 16, 3)
    assert obs.gripper.shape == (4,)
    obs2, reward, terminated, truncated, _ = env.step(np.zeros((4, 7)))
    assert not terminated
    env.step(np.zeros((4, 7)))
    _, reward, terminated, _, _ = env.step(np.zeros((4, 7)))
    assert terminated and reward == 1.0


def test_batch_env_runs_episode_through_loop():
    env = BatchEnv(lambda: CountdownEnv(n=3, image_size=16), k=2)
    stats = run_episode(env, EchoAgent(5), max_steps=10)
    assert stats.steps == 3 and stats.terminated


def test_transcripts_recorded():
    agent = ScriptedAgent([[0.1] * 7, [0.2] * 7])
    stats = run_episode(CountdownEnv(n=5, image_size=16), agent, max_steps=10,
                        record_transcript=True)
    assert len(stats.transcript) == stats.steps == 2
    digest, action_hex = stats.transcript[0]
    assert len(digest) == 64 and len(action_hex) == 7 * 4 * 2
