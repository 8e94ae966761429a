"""Model-agnostic policy serving over shared memory and framed TCP."""

from . import errors
from .agents import Agent, EchoAgent, RandomAgent, ScriptedAgent, SleepAgent, make_agent
from .bench import BenchConfig, BenchReport, emit_report, run_rtt_bench
from .client import PolicyClient, connect
from .envloop import (
    BatchEnv,
    CountdownEnv,
    EpisodeStats,
    LocalPolicy,
    NullEnv,
    Wrapper,
    make_env,
    run_episode,
    run_eval,
)
from .protocol import (
    Act,
    CompressedImage,
    CompressionPolicy,
    Frame,
    MsgType,
    Obs,
    compress_image,
    decode_act,
    decode_frame,
    decode_obs,
    decode_value,
    decompress_image,
    encode_act,
    encode_frame,
    encode_obs,
    encode_value,
)
from .server import Server, ServerConfig, serve

__version__ = "0.1.0"

__all__ = [
    "errors",
    "Agent",
    "EchoAgent",
    "RandomAgent",
    "ScriptedAgent",
    "SleepAgent",
    "make_agent",
    "BenchConfig",
    "BenchReport",
    "emit_report",
    "run_rtt_bench",
    "PolicyClient",
    "connect",
    "BatchEnv",
    "CountdownEnv",
    "EpisodeStats",
    "LocalPolicy",
    "NullEnv",
    "Wrapper",
    "make_env",
    "run_episode",
    "run_eval",
    "Act",
    "CompressedImage",
    "CompressionPolicy",
    "Frame",
    "MsgType",
    "Obs",
    "compress_image",
    "decode_act",
    "decode_frame",
    "decode_obs",
    "decode_value",
    "decompress_image",
    "encode_act",
    "encode_frame",
    "encode_obs",
    "encode_value",
    "serve",
    "Server",
    "ServerConfig",
    "__version__",
]
