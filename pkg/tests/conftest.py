"""Shared test helpers: seeded random protocol values and server fixtures."""

from __future__ import annotations

import random
import string as string_mod
import sys

import numpy as np
import pytest

from policyserve.protocol.value import CompressedImage

UNICODE_POOL = string_mod.ascii_letters + string_mod.digits + "äöüßéèñ中文🤖🚀 \t_-"

ARRAY_DTYPES = [np.uint8, np.int64, np.float32, np.float64]


def random_string(rng: random.Random, max_len: int = 12) -> str:
    return "".join(rng.choice(UNICODE_POOL) for _ in range(rng.randrange(max_len)))


def random_array(rng: random.Random, np_rng: np.random.Generator) -> np.ndarray:
    dtype = rng.choice(ARRAY_DTYPES)
    ndim = rng.randint(1, 4)
    shape = tuple(rng.randint(0, 4) for _ in range(ndim))
    if dtype == np.uint8:
        return np_rng.integers(0, 256, size=shape, dtype=np.uint8)
    if dtype == np.int64:
        return np_rng.integers(-(2**62), 2**62, size=shape, dtype=np.int64)
    return (np_rng.standard_normal(shape) * 1e3).astype(dtype)


def random_value(rng: random.Random, np_rng: np.random.Generator, depth: int = 0):
    """A random protocol value; container probability shrinks with depth."""
    leaf_kinds = ["null", "bool", "int", "real", "string", "bytes", "array", "image"]
    kinds = leaf_kinds if depth >= 3 else leaf_kinds + ["list", "map", "list", "map"]
    kind = rng.choice(kinds)
    if kind == "null":
        return None
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "int":
        return rng.choice([
            0, 1, -1, 5, 255, -(2**63), 2**63 - 1,
            rng.randint(-(2**63), 2**63 - 1),
        ])
    if kind == "real":
        return rng.choice([
            0.0, -0.0, 1.5, -2.25, float("inf"), float("-inf"), float("nan"),
            5e-324, 1.7976931348623157e308, rng.gauss(0, 1e6),
        ])
    if kind == "string":
        return random_string(rng)
    if kind == "bytes":
        return bytes(np_rng.integers(0, 256, size=rng.randrange(20), dtype=np.uint8))
    if kind == "array":
        return random_array(rng, np_rng)
    if kind == "image":
        codec = rng.choice(["jpeg", "png"])
        data = bytes(np_rng.integers(0, 256, size=rng.randrange(1, 40), dtype=np.uint8))
        return CompressedImage(codec, data)
    if kind == "list":
        return [random_value(rng, np_rng, depth + 1) for _ in range(rng.randrange(5))]
    keys = {random_string(rng) for _ in range(rng.randrange(5))}
    return {k: random_value(rng, np_rng, depth + 1) for k in keys}


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240601)


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def echo_server():
    """An in-process server hosting a fresh echo agent per session."""
    from policyserve.agents import EchoAgent
    from policyserve.server import ServerConfig, serve

    server = serve(ServerConfig(agent_factory=lambda: EchoAgent(7)))
    yield server
    server.shutdown()
