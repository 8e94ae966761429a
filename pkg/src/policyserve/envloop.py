"""Environment loop: run policies against Gymnasium-style environments.

The loop is reset -> policy.reset(first obs, instruction) -> repeat
{policy.act -> env.step} until the action says done, the environment
terminates or truncates, or the step budget runs out. A wrapper translates
between environment-native records and protocol Obs/Act; the built-in
environments already speak Obs natively.
"""

from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .agents import Agent
from .errors import ConfigError, EpisodeError
from .protocol.messages import Act, Obs, encode_obs
from .protocol.value import encode_value


class Wrapper:
    """Pure translation between env-native records and protocol Obs/Act."""

    def to_obs(self, native) -> Obs:
        return native

    def from_act(self, act: Act):
        return act.action


IDENTITY_WRAPPER = Wrapper()


@dataclass
class EpisodeStats:
    """Outcome of one episode."""

    steps: int = 0
    total_reward: float = 0.0
    terminated: bool = False
    truncated: bool = False
    wall_time: float = 0.0
    mean_rtt: float = 0.0
    error: str | None = None
    transcript: list | None = None

    def to_dict(self) -> dict:
        d = {
            "steps": self.steps,
            "total_reward": self.total_reward,
            "terminated": self.terminated,
            "truncated": self.truncated,
            "wall_time": self.wall_time,
            "mean_rtt": self.mean_rtt,
        }
        if self.error is not None:
            d["error"] = self.error
        return d


class LocalPolicy:
    """In-process agent behind the same lifecycle as a remote client."""

    def __init__(self, agent: Agent):
        self.agent = agent
        self.initialized = False
        self._ready = False

    def initialize(self):
        if self.initialized:
            raise ConfigError("initialize may only be called once")
        self.agent.initialize()
        self.initialized = True

    def reset(self, obs: Obs, instruction=None, **kwargs) -> dict:
        if not self.initialized:
            raise ConfigError("reset before initialize")
        result = self.agent.reset(obs, instruction, **kwargs)
        self._ready = True
        return result if isinstance(result, dict) else {}

    def act(self, obs: Obs) -> Act:
        if not self._ready:
            raise ConfigError("act before reset")
        return self.agent.act(obs)

    def close(self):
        pass


def _as_policy(policy):
    return LocalPolicy(policy) if isinstance(policy, Agent) else policy


def _obs_digest(obs: Obs) -> str:
    return hashlib.sha256(encode_value(encode_obs(obs, None))).hexdigest()


def run_episode(env, policy, wrapper: Wrapper | None = None, *, max_steps: int,
                instruction=None, seed: int | None = None,
                record_transcript: bool = False) -> EpisodeStats:
    """Run one episode and return its statistics.

    An environment or policy exception aborts the episode; it is re-raised
    as :class:`EpisodeError` with the partial statistics attached.
    """
    if max_steps < 1:
        raise ConfigError("max_steps must be >= 1")
    wrapper = wrapper or IDENTITY_WRAPPER
    policy = _as_policy(policy)
    stats = EpisodeStats(transcript=[] if record_transcript else None)
    rtts: list[float] = []
    started = time.perf_counter()
    try:
        if getattr(policy, "initialized", True) is False:
            policy.initialize()
        native_obs, _ = env.reset(seed=seed)
        obs = wrapper.to_obs(native_obs)
        policy.reset(obs, instruction)
        while True:
            t0 = time.perf_counter()
            act = policy.act(obs)
            rtts.append(time.perf_counter() - t0)
            if record_transcript:
                stats.transcript.append((_obs_digest(obs), act.action.tobytes().hex()))
            native_obs, reward, terminated, truncated, _ = env.step(wrapper.from_act(act))
            obs = wrapper.to_obs(native_obs)
            stats.steps += 1
            stats.total_reward += float(reward)
            stats.terminated = bool(terminated)
            stats.truncated = bool(truncated)
            if act.done or terminated or truncated:
                break
            if stats.steps >= max_steps:
                stats.truncated = True
                break
    except Exception as e:
        stats.wall_time = time.perf_counter() - started
        stats.mean_rtt = statistics.mean(rtts) if rtts else 0.0
        stats.error = f"{type(e).__name__}: {e}"
        raise EpisodeError(stats.error, stats=stats) from e
    stats.wall_time = time.perf_counter() - started
    stats.mean_rtt = statistics.mean(rtts) if rtts else 0.0
    return stats


def run_eval(env_factory, policy, wrapper: Wrapper | None = None, *,
             n_episodes: int, seeds: list[int] | None = None, max_steps: int = 1000,
             instruction=None) -> tuple[list[EpisodeStats], dict]:
    """Run ``n_episodes`` serially on fresh environments; errors are recorded
    per episode and the run continues."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")
    if seeds is not None and len(seeds) != n_episodes:
        raise ConfigError("seeds length must equal n_episodes")
    policy = _as_policy(policy)
    episodes: list[EpisodeStats] = []
    for i in range(n_episodes):
        env = env_factory()
        seed = seeds[i] if seeds is not None else None
        try:
            episodes.append(run_episode(env, policy, wrapper, max_steps=max_steps,
                                        instruction=instruction, seed=seed))
        except EpisodeError as e:
            episodes.append(e.stats)
        finally:
            close = getattr(env, "close", None)
            if close is not None:
                close()
    ok = [s for s in episodes if s.error is None]
    aggregate = {
        "episodes": len(episodes),
        "errors": len(episodes) - len(ok),
        "mean_steps": statistics.mean([s.steps for s in ok]) if ok else 0.0,
        "mean_reward": statistics.mean([s.total_reward for s in ok]) if ok else 0.0,
        "success_rate": statistics.mean([1.0 if s.terminated else 0.0 for s in ok]) if ok else 0.0,
    }
    return episodes, aggregate


# ---------------------------------------------------------------------------
# built-in environments
# ---------------------------------------------------------------------------


class CountdownEnv:
    """Terminates after exactly N steps with reward 1; emits two synthetic
    224x224x3 cameras (seeded noise and a frame-counter gradient) plus
    gripper = steps/N."""

    def __init__(self, n: int = 5, image_size: int = 224):
        if n < 1:
            raise ConfigError("n must be >= 1")
        self.n = int(n)
        self.image_size = int(image_size)
        self._seed = 0
        self._step = 0
        self._done = True

    def _observe(self) -> Obs:
        size = self.image_size
        rng = np.random.default_rng((self._seed, self._step))
        noise = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        ramp = (np.arange(size, dtype=np.int64)[None, :]
                + np.arange(size, dtype=np.int64)[:, None]
                + 8 * self._step) % 256
        gradient = np.repeat(ramp.astype(np.uint8)[:, :, None], 3, axis=2)
        return Obs(cameras={"noise": noise, "gradient": gradient},
                   gripper=self._step / self.n,
                   info={"step": self._step})

    def reset(self, seed: int | None = None):
        self._seed = 0 if seed is None else int(seed)
        self._step = 0
        self._done = False
        return self._observe(), {}

    def step(self, action):
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        self._step += 1
        terminated = self._step >= self.n
        self._done = terminated
        reward = 1.0 if terminated else 0.0
        return self._observe(), reward, terminated, False, {}


class NullEnv:
    """No cameras, no gripper, never terminates; for protocol-only tests."""

    def __init__(self):
        self._done = True

    def reset(self, seed: int | None = None):
        self._done = False
        return Obs(), {}

    def step(self, action):
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        return Obs(), 0.0, False, False, {}


class BatchEnv:
    """Stacks K identical environments into one batched-observation env.

    Terminates when every sub-environment has terminated; the reward is the
    per-step mean. Sub-environments receive seed, seed+1, ... on reset.
    """

    def __init__(self, env_factory, k: int):
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.envs = [env_factory() for _ in range(k)]
        self.k = k

    def _stack(self, observations: list[Obs]) -> Obs:
        names = list(observations[0].cameras)
        cameras = {name: np.stack([o.cameras[name] for o in observations])
                   for name in names}
        gripper = np.asarray([o.gripper if o.gripper is not None else 0.0
                              for o in observations], dtype=np.float64)
        return Obs(cameras=cameras, gripper=gripper, info={}, batched=True)

    def reset(self, seed: int | None = None):
        observations = []
        for i, env in enumerate(self.envs):
            obs, _ = env.reset(seed=None if seed is None else seed + i)
            observations.append(obs)
        return self._stack(observations), {}

    def step(self, action):
        action = np.asarray(action)
        if action.ndim != 2 or action.shape[0] != self.k:
            raise ConfigError(f"batched action must be {self.k}xD, got shape {action.shape}")
        observations, rewards, terms, truncs = [], [], [], []
        for env, a in zip(self.envs, action):
            obs, reward, terminated, truncated, _ = env.step(a)
            observations.append(obs)
            rewards.append(float(reward))
            terms.append(terminated)
            truncs.append(truncated)
        return (self._stack(observations), statistics.mean(rewards),
                all(terms), any(truncs), {})


BUILTIN_ENVS = {
    "countdown": CountdownEnv,
    "null": NullEnv,
}


def make_env(name: str, **kwargs):
    try:
        factory = BUILTIN_ENVS[name]
    except KeyError:
        raise ConfigError(f"unknown env {name!r}; choose from {sorted(BUILTIN_ENVS)}") from None
    return factory(**kwargs)
