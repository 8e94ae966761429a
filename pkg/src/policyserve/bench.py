"""Round-trip-time benchmark across transport modes.

Measures the full encode/transport/dispatch/decode path against an echo
agent (inference is a no-op), with pre-synthesized observations so the
figure isolates serialization and transport. Reports mean and percentiles
per mode and emits CSV, JSON or a table.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .client import PolicyClient
from .errors import ConfigError, PolicyServeError
from .fixtures import FIXTURE_KINDS, make_bench_obs
from .protocol.messages import NO_COMPRESSION, CompressionPolicy
from .transport import MODE_SHM

BENCH_MODES = ("shm", "stream-local", "stream-remote")


class BenchError(PolicyServeError):
    """A transport failure aborted the run; partial samples are attached."""

    def __init__(self, message: str, samples: list[float]):
        super().__init__(message)
        self.samples = samples


@dataclass
class BenchConfig:
    """Workload shape for :func:`run_rtt_bench`."""

    mode: str = "shm"
    n_cameras: int = 2
    image_size: int = 224
    iterations: int = 1000
    warmup: int = 100
    jpeg_quality: int = 90
    compress: bool = True
    action_dim: int = 7
    batch: int = 1
    fixture: str = "gradient"  # camera content stand-in; see also natural|noise

    def validate(self):
        if self.mode not in BENCH_MODES:
            raise ConfigError(f"mode must be one of {BENCH_MODES}, got {self.mode!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")
        if self.fixture not in FIXTURE_KINDS:
            raise ConfigError(f"fixture must be one of {FIXTURE_KINDS}")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")


@dataclass
class BenchReport:
    """Per-iteration RTT samples plus derived statistics."""

    mode: str
    samples: list[float]
    mean: float
    p50: float
    p95: float
    p99: float
    min: float
    max: float
    rate_hz: float
    raw_payload_bytes: int
    wire_payload_bytes: int
    config: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, mode: str, samples: list[float], total_time: float,
                     raw_payload_bytes: int, wire_payload_bytes: int,
                     config: dict | None = None) -> "BenchReport":
        if not samples:
            raise ConfigError("cannot build a report from an empty sample set")
        arr = np.asarray(samples, dtype=np.float64)
        return cls(
            mode=mode,
            samples=list(map(float, samples)),
            mean=float(arr.mean()),
            p50=float(np.percentile(arr, 50)),
            p95=float(np.percentile(arr, 95)),
            p99=float(np.percentile(arr, 99)),
            min=float(arr.min()),
            max=float(arr.max()),
            rate_hz=len(samples) / total_time if total_time > 0 else float("inf"),
            raw_payload_bytes=raw_payload_bytes,
            wire_payload_bytes=wire_payload_bytes,
            config=config or {},
        )

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": len(self.samples),
            "mean": self.mean,
            "p50": self.p50,
            "p95": self.p95,
            "p99": self.p99,
            "p99_over_p50": self.p99 / self.p50 if self.p50 > 0 else float("inf"),
            "min": self.min,
            "max": self.max,
            "rate_hz": self.rate_hz,
            "raw_payload_bytes": self.raw_payload_bytes,
            "wire_payload_bytes": self.wire_payload_bytes,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["config"] = self.config
        d["samples"] = self.samples
        return d


def run_rtt_bench(cfg: BenchConfig, server_addr) -> BenchReport:
    """Measure act() round trips against a reachable echo-agent server."""
    cfg.validate()
    compression = (CompressionPolicy(quality=cfg.jpeg_quality)
                   if cfg.compress else NO_COMPRESSION)
    force_stream = cfg.mode != "shm"
    client = PolicyClient.connect(server_addr, force_stream=force_stream,
                                  compression=compression)
    samples: list[float] = []
    try:
        if cfg.mode == "shm" and client.mode.kind != MODE_SHM:
            raise ConfigError("shm mode requested but negotiation chose the stream; "
                              "is the server on this host?")
        obs = make_bench_obs(cfg.n_cameras, cfg.image_size, cfg.fixture, cfg.batch)
        raw_bytes = sum(cam.nbytes for cam in obs.cameras.values())
        client.initialize()
        client.reset(obs)
        for _ in range(cfg.warmup):
            client.act(obs)
        t_loop = time.perf_counter()
        for _ in range(cfg.iterations):
            t0 = time.perf_counter()
            client.act(obs)
            samples.append(time.perf_counter() - t0)
        total = time.perf_counter() - t_loop
    except ConfigError:
        raise
    except Exception as e:
        raise BenchError(f"benchmark aborted after {len(samples)} samples: "
                         f"{type(e).__name__}: {e}", samples) from e
    finally:
        client.close()
    return BenchReport.from_samples(
        cfg.mode, samples, total,
        raw_payload_bytes=raw_bytes,
        wire_payload_bytes=client.stats.request_payload,
        config={
            "n_cameras": cfg.n_cameras, "image_size": cfg.image_size,
            "iterations": cfg.iterations, "warmup": cfg.warmup,
            "jpeg_quality": cfg.jpeg_quality, "compress": cfg.compress,
            "action_dim": cfg.action_dim, "batch": cfg.batch,
            "fixture": cfg.fixture, "transport": client.mode.kind,
        })


def emit_report(report: BenchReport, fmt: str = "table", path: str | None = None) -> str:
    """Render ``report`` as csv, json or a table; write to ``path`` or stdout.

    Returns the rendered text.
    """
    if fmt == "csv":
        text = _render_csv(report)
    elif fmt == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    elif fmt == "table":
        text = _render_table(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _render_csv(report: BenchReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["iteration", "rtt_seconds"])
    for i, rtt in enumerate(report.samples):
        writer.writerow([i, f"{rtt:.9f}"])
    for key, value in report.summary().items():
        writer.writerow([key, value])
    return out.getvalue()


def _render_table(report: BenchReport) -> str:
    s = report.summary()
    lines = [
        f"mode            {s['mode']}",
        f"iterations      {s['iterations']}",
        f"mean            {s['mean'] * 1e3:10.4f} ms",
        f"p50             {s['p50'] * 1e3:10.4f} ms",
        f"p95             {s['p95'] * 1e3:10.4f} ms",
        f"p99             {s['p99'] * 1e3:10.4f} ms",
        f"min             {s['min'] * 1e3:10.4f} ms",
        f"max             {s['max'] * 1e3:10.4f} ms",
        f"rate            {s['rate_hz']:10.1f} Hz",
        f"raw payload     {s['raw_payload_bytes']} octets",
        f"wire payload    {s['wire_payload_bytes']} octets",
    ]
    return "\n".join(lines) + "\n"


def parse_csv_report(text: str) -> tuple[list[float], dict]:
    """Parse :func:`_render_csv` output back into (samples, summary)."""
    samples: list[float] = []
    summary: dict = {}
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0] == "iteration":
            continue
        key, value = row[0], row[1]
        if key.isdigit():
            samples.append(float(value))
        else:
            try:
                summary[key] = float(value)
            except ValueError:
                summary[key] = value
    return samples, summary
