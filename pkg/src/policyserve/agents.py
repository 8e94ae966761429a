"""Agent interface and the built-in reference agents.

An agent is anything with ``initialize`` / ``reset`` / ``act``: heavy setup
happens once in initialize, reset clears per-episode state and may return
metadata, act maps an observation to an action. The built-ins exist for
tests and benchmarks, not for control.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import ConfigError
from .protocol.messages import Act, Obs


class Agent:
    """Base class for served policies."""

    def initialize(self) -> None:
        """One-time heavy setup (e.g. model loading)."""

    def reset(self, obs: Obs, instruction=None, **kwargs) -> dict:
        """Start a new episode; returns optional metadata for the caller."""
        return {}

    def act(self, obs: Obs) -> Act:
        """Map one observation to one action."""
        raise NotImplementedError


def _batch_size(obs: Obs) -> int | None:
    return obs.batch_size if obs.batched else None


def _tile(vec: np.ndarray, batch: int | None) -> np.ndarray:
    if batch is None:
        return vec
    return np.tile(vec, (batch, 1))


class EchoAgent(Agent):
    """Zero action of the configured dimension; copies the gripper into info."""

    def __init__(self, action_dim: int = 7):
        self.action_dim = int(action_dim)

    def act(self, obs: Obs) -> Act:
        action = _tile(np.zeros(self.action_dim, dtype=np.float32), _batch_size(obs))
        info = {}
        if obs.gripper is not None:
            info["echo_gripper"] = obs.gripper
        return Act(action=action, info=info)


class RandomAgent(Agent):
    """Uniform actions in [-1, 1]^D from a seeded generator."""

    def __init__(self, action_dim: int = 7, seed: int = 0):
        self.action_dim = int(action_dim)
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    def reset(self, obs: Obs, instruction=None, **kwargs) -> dict:
        self._rng = np.random.default_rng(self.seed)
        return {}

    def act(self, obs: Obs) -> Act:
        batch = _batch_size(obs)
        shape = (self.action_dim,) if batch is None else (batch, self.action_dim)
        action = self._rng.uniform(-1.0, 1.0, size=shape).astype(np.float32)
        return Act(action=action)


class ScriptedAgent(Agent):
    """Replays a fixed action list; sets done on the final entry.

    Calls past the end of the script repeat the last action with done=True.
    """

    def __init__(self, script):
        actions = [np.asarray(a, dtype=np.float32) for a in script]
        if not actions:
            raise ConfigError("scripted agent needs at least one action")
        for a in actions:
            if a.ndim != 1 or a.shape[0] < 1:
                raise ConfigError("script entries must be 1-D action vectors")
        self.script = actions
        self._cursor = 0

    def reset(self, obs: Obs, instruction=None, **kwargs) -> dict:
        self._cursor = 0
        return {"accepted": True}

    def act(self, obs: Obs) -> Act:
        i = min(self._cursor, len(self.script) - 1)
        self._cursor += 1
        action = _tile(self.script[i], _batch_size(obs))
        return Act(action=action, done=self._cursor >= len(self.script))


class SleepAgent(Agent):
    """Echo-like agent with a precise artificial inference delay.

    The delay combines coarse sleep with a short spin so the configured
    duration holds to well under a millisecond, which the benchmark's
    self-calibration check depends on.
    """

    def __init__(self, delay_ms: float = 0.0, action_dim: int = 7):
        if delay_ms < 0:
            raise ConfigError("delay_ms must be >= 0")
        self.delay_s = float(delay_ms) / 1e3
        self.action_dim = int(action_dim)

    def act(self, obs: Obs) -> Act:
        if self.delay_s > 0:
            target = time.perf_counter() + self.delay_s
            coarse = self.delay_s - 1e-3
            if coarse > 0:
                time.sleep(coarse)
            while time.perf_counter() < target:
                pass
        action = _tile(np.zeros(self.action_dim, dtype=np.float32), _batch_size(obs))
        return Act(action=action)


def _scripted_from_kwargs(**kwargs) -> ScriptedAgent:
    if "script" in kwargs:
        return ScriptedAgent(kwargs["script"])
    n = int(kwargs.get("n", 3))
    dim = int(kwargs.get("dim", 7))
    seed = int(kwargs.get("seed", 0))
    rng = np.random.default_rng(seed)
    return ScriptedAgent(rng.uniform(-1.0, 1.0, size=(n, dim)).astype(np.float32))


BUILTIN_AGENTS = {
    "echo": lambda **kw: EchoAgent(**kw),
    "random": lambda **kw: RandomAgent(**kw),
    "scripted": _scripted_from_kwargs,
    "sleep": lambda **kw: SleepAgent(**kw),
}


def make_agent(name: str, **kwargs) -> Agent:
    """Instantiate a built-in agent by name."""
    try:
        factory = BUILTIN_AGENTS[name]
    except KeyError:
        raise ConfigError(f"unknown agent {name!r}; choose from {sorted(BUILTIN_AGENTS)}") from None
    return factory(**kwargs)
