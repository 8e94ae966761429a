"""Command-line entry points: serve, client ping, evalloop, bench rtt."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import statistics
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from . import agents as agents_mod
from . import envloop as envloop_mod
from .bench import BenchConfig, emit_report, run_rtt_bench
from .client import PolicyClient, parse_address
from .errors import PolicyServeError
from .protocol.messages import NO_COMPRESSION, CompressionPolicy
from .server import ServerConfig, serve
from .transport import DEFAULT_CAPACITY

logger = logging.getLogger("policyserve.cli")


def _coerce(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _parse_kv(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"--agent-arg expects k=v, got {pair!r}")
        out[key] = _coerce(value)
    return out


def _compression_from_args(args) -> CompressionPolicy:
    if getattr(args, "no_compress", False):
        return NO_COMPRESSION
    return CompressionPolicy(quality=getattr(args, "jpeg_quality", 90))


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def cmd_serve(args) -> int:
    agent_kwargs = _parse_kv(args.agent_arg)
    if args.backend:
        config = ServerConfig(
            bind_address=parse_address(args.bind),
            backend_address=parse_address(args.backend),
            compression=_compression_from_args(args),
            shm_capacity=args.shm_capacity,
        )
    else:
        name = args.agent
        config = ServerConfig(
            bind_address=parse_address(args.bind),
            agent_factory=lambda: agents_mod.make_agent(name, **agent_kwargs),
            compression=_compression_from_args(args),
            shm_capacity=args.shm_capacity,
        )
    server = serve(config)
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    if args.port_file:
        Path(args.port_file).write_text(f"{host}:{port}\n")

    stop = []
    def _on_signal(signum, frame):
        stop.append(signum)
    signal.signal(signal.SIGTERM, _on_signal)
    signal.signal(signal.SIGINT, _on_signal)
    try:
        while not stop:
            time.sleep(0.1)
    finally:
        server.shutdown()
    return 0


# ---------------------------------------------------------------------------
# client ping
# ---------------------------------------------------------------------------


def cmd_client_ping(args) -> int:
    client = PolicyClient.connect(args.addr, force_stream=args.force_stream)
    try:
        rtts = [client.ping(b"ping") for _ in range(args.count)]
    finally:
        client.close()
    mean = statistics.mean(rtts)
    p50 = statistics.median(rtts)
    print(f"mode={client.mode.kind} n={args.count} "
          f"mean={mean * 1e3:.4f}ms p50={p50 * 1e3:.4f}ms "
          f"min={min(rtts) * 1e3:.4f}ms max={max(rtts) * 1e3:.4f}ms")
    return 0


# ---------------------------------------------------------------------------
# evalloop
# ---------------------------------------------------------------------------


def cmd_evalloop(args) -> int:
    policy = PolicyClient.connect(args.policy_addr, force_stream=args.force_stream,
                                  compression=_compression_from_args(args))
    env_kwargs = _parse_kv(args.env_arg)
    try:
        episodes, aggregate = envloop_mod.run_eval(
            lambda: envloop_mod.make_env(args.env, **env_kwargs),
            policy,
            n_episodes=args.n,
            seeds=None if args.seed is None else [args.seed + i for i in range(args.n)],
            max_steps=args.max_steps,
            instruction=args.instruction,
        )
    finally:
        policy.close()
    doc = {"episodes": [s.to_dict() for s in episodes], "aggregate": aggregate}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"episodes={aggregate['episodes']} errors={aggregate['errors']} "
          f"mean_steps={aggregate['mean_steps']:.2f} "
          f"success_rate={aggregate['success_rate']:.2f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# bench rtt
# ---------------------------------------------------------------------------


def spawn_local_server(agent: str = "echo", agent_args: dict | None = None,
                       shm_capacity: int = DEFAULT_CAPACITY,
                       timeout: float = 15.0) -> tuple[subprocess.Popen, str]:
    """Launch ``policyserve serve`` as a subprocess; returns (process, address)."""
    port_file = tempfile.NamedTemporaryFile(prefix="policyserve-port-", suffix=".txt",
                                            delete=False)
    port_file.close()
    Path(port_file.name).unlink()
    cmd = [sys.executable, "-m", "policyserve", "serve",
           "--bind", "127.0.0.1:0", "--agent", agent,
           "--shm-capacity", str(shm_capacity),
           "--port-file", port_file.name]
    for key, value in (agent_args or {}).items():
        cmd += ["--agent-arg", f"{key}={value}"]
    proc = subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    deadline = time.monotonic() + timeout
    path = Path(port_file.name)
    while time.monotonic() < deadline:
        if path.exists():
            addr = path.read_text().strip()
            if addr:
                path.unlink()
                return proc, addr
        if proc.poll() is not None:
            raise PolicyServeError(f"server subprocess exited early with {proc.returncode}")
        time.sleep(0.02)
    proc.terminate()
    raise PolicyServeError("server subprocess did not report its port in time")


def stop_local_server(proc: subprocess.Popen):
    proc.terminate()
    try:
        proc.wait(timeout=5.0)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


def cmd_bench_rtt(args) -> int:
    mode = args.mode if args.mode != "stream" else (
        "stream-remote" if args.remote else "stream-local")
    cfg = BenchConfig(
        mode=mode,
        n_cameras=args.cameras,
        image_size=args.size,
        iterations=args.iters,
        warmup=args.warmup,
        jpeg_quality=args.jpeg_quality,
        compress=not args.no_compress,
        action_dim=args.action_dim,
        batch=args.batch,
        fixture=args.fixture,
    )
    cfg.validate()
    proc = None
    if args.remote:
        addr = args.remote
    else:
        # fit batched camera payloads into the per-session segment
        need = args.batch * args.cameras * args.size * args.size * 3 * 2 + (1 << 20)
        proc, addr = spawn_local_server(
            agent="echo", agent_args={"action_dim": args.action_dim},
            shm_capacity=max(DEFAULT_CAPACITY, need))
    try:
        report = run_rtt_bench(cfg, addr)
    finally:
        if proc is not None:
            stop_local_server(proc)
    fmt = args.format
    if fmt is None:
        fmt = "csv" if args.out else "table"
    emit_report(report, fmt, args.out)
    if args.out:
        print(f"mode={report.mode} mean={report.mean * 1e3:.4f}ms "
              f"p99={report.p99 * 1e3:.4f}ms rate={report.rate_hz:.1f}Hz "
              f"wire={report.wire_payload_bytes}B", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policyserve")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="host an agent behind the protocol")
    p.add_argument("--bind", default="127.0.0.1:0", help="host:port (port 0 = auto)")
    p.add_argument("--agent", default="echo",
                   choices=sorted(agents_mod.BUILTIN_AGENTS))
    p.add_argument("--agent-arg", action="append", default=[], metavar="K=V")
    p.add_argument("--backend", default=None, metavar="ADDR",
                   help="delegate to an agent backend instead of hosting one")
    p.add_argument("--jpeg-quality", type=int, default=90)
    p.add_argument("--no-compress", action="store_true")
    p.add_argument("--shm-capacity", type=int, default=DEFAULT_CAPACITY, metavar="BYTES")
    p.add_argument("--port-file", default=None, help="write the bound host:port here")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="client utilities")
    client_sub = p.add_subparsers(dest="client_command", required=True)
    q = client_sub.add_parser("ping", help="measure raw request round trips")
    q.add_argument("--addr", required=True)
    q.add_argument("-n", "--count", type=int, default=100)
    q.add_argument("--force-stream", action="store_true")
    q.set_defaults(func=cmd_client_ping)

    p = sub.add_parser("evalloop", help="run evaluation episodes against a server")
    p.add_argument("--env", default="countdown", choices=sorted(envloop_mod.BUILTIN_ENVS))
    p.add_argument("--env-arg", action="append", default=[], metavar="K=V")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--policy-addr", required=True)
    p.add_argument("--instruction", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="stats JSON path (default stdout)")
    p.add_argument("--force-stream", action="store_true")
    p.add_argument("--jpeg-quality", type=int, default=90)
    p.add_argument("--no-compress", action="store_true")
    p.set_defaults(func=cmd_evalloop)

    p = sub.add_parser("bench", help="benchmarks")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    q = bench_sub.add_parser("rtt", help="round-trip-time benchmark")
    q.add_argument("--mode", choices=["shm", "stream"], default="shm")
    q.add_argument("--remote", default=None, metavar="ADDR",
                   help="use this server instead of spawning one")
    q.add_argument("--cameras", type=int, default=2)
    q.add_argument("--size", type=int, default=224)
    q.add_argument("--iters", type=int, default=1000)
    q.add_argument("--warmup", type=int, default=100)
    q.add_argument("--jpeg-quality", type=int, default=90)
    q.add_argument("--no-compress", action="store_true")
    q.add_argument("--action-dim", type=int, default=7)
    q.add_argument("--batch", type=int, default=1)
    q.add_argument("--fixture", choices=["gradient", "natural", "noise"],
                   default="gradient")
    q.add_argument("--out", default=None, help="report path (default stdout)")
    q.add_argument("--format", choices=["csv", "json", "table"], default=None,
                   help="default: csv when --out is set, table otherwise")
    q.set_defaults(func=cmd_bench_rtt)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except PolicyServeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
