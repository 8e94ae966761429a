"""Acceptance gates. Run with ``pytest tests/test_acceptance.py -s`` to see
one pass/fail line per criterion; each test also enforces its stated
tolerance and runtime budget."""

import io
import os
import random
import statistics
import time

import numpy as np
import pytest
from PIL import Image

from policyserve.agents import EchoAgent, make_agent
from policyserve.bench import BenchConfig, run_rtt_bench
from policyserve.cli import spawn_local_server, stop_local_server
from policyserve.client import PolicyClient
from policyserve.envloop import CountdownEnv, LocalPolicy, run_episode
from policyserve.errors import IntegrityError
from policyserve.fixtures import make_gradient
from policyserve.protocol.frame import (
    HEADER_SIZE,
    Frame,
    MsgType,
    decode_frame,
    encode_frame,
)
from policyserve.protocol.image import compress_image
from policyserve.protocol.messages import (
    NO_COMPRESSION,
    Act,
    CompressionPolicy,
    Obs,
    act_equal,
    decode_act,
    decode_obs,
    encode_act,
    encode_obs,
    obs_equal,
)
from policyserve.protocol.value import decode_value, encode_value, values_equal
from policyserve.server import ServerConfig, serve

from conftest import random_value


def _gate(name: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(f"\n{line}")
    assert ok, line


# ---------------------------------------------------------------------------
# 1. shared-memory RTT
# ---------------------------------------------------------------------------


def test_shm_rtt_under_one_millisecond():
    budget_start = time.monotonic()
    proc, addr = spawn_local_server()
    try:
        report = run_rtt_bench(BenchConfig(mode="shm", iterations=1000, warmup=100), addr)
    finally:
        stop_local_server(proc)
    runtime = time.monotonic() - budget_start
    detail = (f"mean {report.mean * 1e3:.3f} ms (p50 {report.p50 * 1e3:.3f}, "
              f"p99 {report.p99 * 1e3:.3f}) over 1000 iterations, "
              f"2x224x224 cameras, runtime {runtime:.1f} s")
    _gate("shm-rtt < 1 ms", report.mean < 1e-3 and runtime < 30.0, detail)


# ---------------------------------------------------------------------------
# 2. transport ordering
# ---------------------------------------------------------------------------


def test_transport_ordering():
    budget_start = time.monotonic()
    proc, addr = spawn_local_server()
    pools = {"shm": [], "jpeg": [], "raw": []}
    try:
        # alternate the modes so ambient load drifts hit all three equally
        for _ in range(2):
            for name, cfg in [
                ("shm", BenchConfig(mode="shm", iterations=500, warmup=100)),
                ("jpeg", BenchConfig(mode="stream-local", iterations=500, warmup=100)),
                ("raw", BenchConfig(mode="stream-local", iterations=500, warmup=100,
                                    compress=False)),
            ]:
                pools[name].extend(run_rtt_bench(cfg, addr).samples)
    finally:
        stop_local_server(proc)
    runtime = time.monotonic() - budget_start
    shm = statistics.mean(pools["shm"])
    jpeg = statistics.mean(pools["jpeg"])
    raw = statistics.mean(pools["raw"])
    gap1 = (jpeg - shm) / shm
    gap2 = (raw - jpeg) / jpeg
    detail = (f"shm {shm * 1e3:.3f} < jpeg {jpeg * 1e3:.3f} < raw {raw * 1e3:.3f} ms; "
              f"gaps {gap1 * 100:.0f}% / {gap2 * 100:.0f}% (need >= 20% each), "
              f"runtime {runtime:.1f} s")
    _gate("transport ordering", gap1 >= 0.20 and gap2 >= 0.20 and runtime < 120.0, detail)


# ---------------------------------------------------------------------------
# 3. compression effectiveness on the checked-in gradient fixture
# ---------------------------------------------------------------------------


def test_compression_effectiveness():
    fixture_path = os.path.join(os.path.dirname(__file__), "..", "fixtures",
                                "gradient_224.png")
    img = np.asarray(Image.open(fixture_path).convert("RGB"))
    data = compress_image(img, quality=90)
    ratio = len(data) / img.nbytes
    ref = np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))
    mse = np.mean((img.astype(np.float64) - ref.astype(np.float64)) ** 2)
    psnr = float("inf") if mse == 0 else 10.0 * np.log10(255.0 ** 2 / mse)
    detail = (f"wire {len(data)} / raw {img.nbytes} octets = {ratio * 100:.1f}% "
              f"(need <= 20%), PSNR {psnr:.1f} dB (need >= 30, independent decoder)")
    _gate("compression effectiveness", ratio <= 0.20 and psnr >= 30.0, detail)


# ---------------------------------------------------------------------------
# 4. protocol round-trip property suite
# ---------------------------------------------------------------------------


def test_protocol_roundtrip_properties():
    budget_start = time.monotonic()
    rng = random.Random(424242)
    np_rng = np.random.default_rng(424242)
    checked = 0

    for _ in range(1000):
        v = random_value(rng, np_rng)
        blob = encode_value(v)
        out, consumed = decode_value(blob)
        assert consumed == len(blob) and values_equal(v, out)
        assert encode_value(out) == blob  # canonical re-encoding
        checked += 1

    for _ in range(200):
        batched = rng.random() < 0.4
        b = rng.randint(1, 4)
        cams = {}
        for i in range(rng.randrange(3)):
            shape = (b, 24, 24, 3) if batched else (24, 24, 3)
            cams[f"cam{i}"] = np_rng.integers(0, 256, size=shape, dtype=np.uint8)
        gripper = (np_rng.uniform(size=b) if batched and rng.random() < 0.7
                   else (rng.random() if not batched and rng.random() < 0.7 else None))
        obs = Obs(cameras=cams, gripper=gripper, info={"k": rng.random()},
                  batched=batched)
        blob = encode_value(encode_obs(obs, NO_COMPRESSION))
        out = decode_obs(decode_value(blob)[0], batched=batched)
        assert obs_equal(obs, out)
        assert encode_value(encode_obs(out, NO_COMPRESSION)) == blob
        checked += 1

    for _ in range(200):
        batched = rng.random() < 0.5
        d = rng.randint(1, 9)
        shape = (rng.randint(1, 5), d) if batched else (d,)
        act = Act(action=np_rng.standard_normal(shape).astype(
            rng.choice([np.float32, np.float64])),
            done=rng.random() < 0.5, info={"v": rng.random()})
        blob = encode_value(encode_act(act, batched))
        out = decode_act(decode_value(blob)[0], batched)
        assert act_equal(act, out)
        assert encode_value(encode_act(out, batched)) == blob
        checked += 1

    for _ in range(300):
        f = Frame(rng.choice(list(MsgType)), rng.randrange(2 ** 64),
                  bytes(np_rng.integers(0, 256, size=rng.randrange(200),
                                        dtype=np.uint8)),
                  rng.choice([0, 1, 2, 3]))
        assert decode_frame(encode_frame(f)) == f
        checked += 1

    corrupted = 0
    for _ in range(200):
        payload = bytes(np_rng.integers(0, 256, size=rng.randint(1, 256),
                                        dtype=np.uint8))
        raw = bytearray(encode_frame(Frame(MsgType.ACT, 1, payload)))
        bit = rng.randrange(len(payload) * 8)
        raw[HEADER_SIZE + bit // 8] ^= 1 << (bit % 8)
        with pytest.raises(IntegrityError):
            decode_frame(bytes(raw))
        corrupted += 1

    runtime = time.monotonic() - budget_start
    detail = (f"{checked} round trips (values/obs/acts/frames) + {corrupted} "
              f"single-bit corruptions detected, runtime {runtime:.1f} s")
    _gate("protocol round-trip properties", checked >= 1000 and corrupted >= 200
          and runtime < 60.0, detail)


# ---------------------------------------------------------------------------
# 5. lifecycle fuzzing (asserted in depth in test_lifecycle_fuzz.py)
# ---------------------------------------------------------------------------


def test_lifecycle_fuzzing_gate():
    import test_lifecycle_fuzz as fuzz

    server = serve(ServerConfig(agent_factory=fuzz.RecordingAgent))
    fuzz.RecordingAgent.registry.clear()
    try:
        fuzz.test_fuzzed_sequences_never_violate_call_order(server)
        n = len(fuzz.RecordingAgent.registry)
    finally:
        server.shutdown()
    _gate("lifecycle fuzzing", n >= fuzz.N_SEQUENCES,
          f"{fuzz.N_SEQUENCES} randomized sequences, {n} sessions, "
          f"no call-order violation, server alive")


# ---------------------------------------------------------------------------
# 6. transcript equivalence
# ---------------------------------------------------------------------------


def _scripted_factory():
    return make_agent("scripted", n=4, dim=7, seed=77)


def _run_countdown(policy) -> list:
    stats = run_episode(CountdownEnv(n=5, image_size=224), policy,
                        max_steps=20, seed=123, instruction="pick up the cube",
                        record_transcript=True)
    return stats.transcript


def test_transcript_equivalence():
    transcripts = {}
    transcripts["in-process"] = _run_countdown(LocalPolicy(_scripted_factory()))
    with serve(ServerConfig(agent_factory=_scripted_factory)) as srv:
        with PolicyClient.connect(srv.address) as c:
            assert c.mode.kind == "shm"
            transcripts["shm"] = _run_countdown(c)
        with PolicyClient.connect(srv.address, force_stream=True,
                                  compression=NO_COMPRESSION) as c:
            transcripts["stream"] = _run_countdown(c)
        with PolicyClient.connect(srv.address, force_stream=True,
                                  compression=CompressionPolicy(quality=90)) as c:
            transcripts["stream+jpeg"] = _run_countdown(c)

    base = transcripts["in-process"]
    full_equal = (transcripts["shm"] == base and transcripts["stream"] == base)
    actions = [a for _, a in base]
    jpeg_actions_equal = [a for _, a in transcripts["stream+jpeg"]] == actions
    detail = (f"{len(base)} steps; in-process == shm == stream (obs-hash+action): "
              f"{full_equal}; compression-on action sequence equal: {jpeg_actions_equal}")
    _gate("transcript equivalence", full_equal and jpeg_actions_equal, detail)


# ---------------------------------------------------------------------------
# 7. fallback totality
# ---------------------------------------------------------------------------


def test_fallback_totality(monkeypatch):
    from policyserve.transport import shm as shm_mod

    real_attach = shm_mod.attach_segment

    def attach_after_removal(name, expected_nonce=None):
        os.unlink(f"/dev/shm/{name}")  # segment forcibly removed before attach
        return real_attach(name, expected_nonce)

    monkeypatch.setattr(shm_mod, "attach_segment", attach_after_removal)
    with serve(ServerConfig(agent_factory=lambda: EchoAgent(7))) as srv:
        with PolicyClient.connect(srv.address) as c:
            mode = c.mode.kind
            stats = run_episode(CountdownEnv(n=3, image_size=64), c, max_steps=10,
                                seed=1)
    detail = (f"segment unlinked before attach -> mode {mode!r}, episode ran "
              f"{stats.steps} steps, terminated={stats.terminated}")
    _gate("fallback totality", mode == "stream" and stats.terminated, detail)


# ---------------------------------------------------------------------------
# 8. batched path
# ---------------------------------------------------------------------------


def test_batched_path():
    results = []
    with serve(ServerConfig(agent_factory=lambda: EchoAgent(7))) as srv:
        for force_stream in (False, True):
            with PolicyClient.connect(srv.address, force_stream=force_stream) as c:
                c.initialize()
                for b in (1, 4, 16):
                    obs = Obs(cameras={
                        "cam0": np.zeros((b, 224, 224, 3), np.uint8),
                        "cam1": np.zeros((b, 224, 224, 3), np.uint8)},
                        gripper=np.zeros(b), batched=True)
                    c.reset(obs)
                    act = c.act(obs)
                    results.append((c.mode.kind, b, act.action.shape))
    ok = all(shape == (b, 7) for _, b, shape in results)
    modes = sorted({m for m, _, _ in results})
    detail = f"B in (1,4,16), D=7 over {modes}: shapes {[s for _, _, s in results]}"
    _gate("batched path", ok and modes == ["shm", "stream"], detail)


# ---------------------------------------------------------------------------
# 9. sleep-agent calibration
# ---------------------------------------------------------------------------


def test_sleep_agent_calibration():
    means = {}
    for delay in (0.0, 5.0):
        proc, addr = spawn_local_server(agent="sleep",
                                        agent_args={"delay_ms": delay})
        try:
            report = run_rtt_bench(
                BenchConfig(mode="shm", iterations=400, warmup=60), addr)
            means[delay] = report.mean
        finally:
            stop_local_server(proc)
    delta_ms = (means[5.0] - means[0.0]) * 1e3
    detail = (f"RTT(sleep 5 ms) - RTT(sleep 0) = {delta_ms:.3f} ms "
              f"(need 5.0 +/- 0.5)")
    _gate("sleep-agent calibration", abs(delta_ms - 5.0) <= 0.5, detail)
