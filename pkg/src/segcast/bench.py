"""Inference-cost benchmark: sequential vs segment-parallel decoding.

Both modes share one encoder trunk and differ only in the decoder, which is
the variable under study: the sequential decoder applies a width-d recurrence
once per future step (cost grows with the horizon), the parallel decoder
applies one width-d map per future segment, all evaluable in a single fused
pass (cost grows with the much smaller segment count). Wall times cover a
full forecast call (encode + decode); the analytic cost model and the
instrumented multiply-add counter cover the decoders only, since the trunk
is identical in both modes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError
from .encoder import Encoder
from .patches import PatchEmbedder
from .rng import Xorshift
from .tensor import Parameters, no_grad

DEFAULT_HORIZONS = (96, 192, 336, 720)


@dataclass
class CostModel:
    """Decoder cost accounting: d-width maps, horizon split into segments."""
    width: int
    horizon: int
    seg_len: int

    @property
    def segments(self) -> int:
        return self.horizon // self.seg_len

    def validate(self) -> "CostModel":
        if self.width <= 0 or self.horizon <= 0 or self.seg_len <= 0:
            raise ConfigError("width, horizon and seg_len must be positive")
        if self.horizon % self.seg_len:
            raise ConfigError(f"horizon {self.horizon} not divisible by seg_len {self.seg_len}")
        return self


def flops(model: CostModel, mode: str) -> int:
    """Analytic decoder flops per instance: one 2*d^2 map per step or segment."""
    model.validate()
    d2 = 2 * model.width * model.width
    if mode == "ar":
        return model.horizon * d2
    if mode == "nar":
        return model.segments * d2
    raise ValueError(f"unknown mode: {mode}")


class MacCounter:
    """Tallies multiplies and adds alongside the numpy calls that do them."""

    def __init__(self):
        self.flops = 0

    def matmul(self, m: int, k: int, n: int):
        self.flops += m * n * (2 * k - 1)

    def elementwise(self, n: int, ops: int = 1):
        self.flops += n * ops


@dataclass
class BenchConfig:
    width: int = 256            # decoder hidden width d
    seg_len: int = 48
    enc_dim: int = 48
    layers: int = 1
    heads: int = 8
    granularities: tuple = (8, 16, 32, 64)
    context_len: int = 512
    batch: int = 4
    channels: int = 1
    seed: int = 0

    @property
    def instances(self) -> int:
        return self.batch * self.channels


class BenchModel:
    """Shared encoder trunk with interchangeable decoders."""

    def __init__(self, cfg: BenchConfig, max_segments: int):
        self.cfg = cfg
        region = max(cfg.granularities)
        if cfg.context_len % region:
            raise ConfigError(f"context {cfg.context_len} not divisible by region {region}")
        tokens = cfg.context_len // region
        params = Parameters()
        rng = Xorshift(cfg.seed)
        self.patches = PatchEmbedder(cfg.granularities, cfg.enc_dim, tokens, params, rng)
        self.encoder = Encoder(cfg.enc_dim, cfg.layers, cfg.heads, params, rng)

        d = cfg.width
        flat = cfg.enc_dim * tokens
        bound = np.sqrt(6.0 / (flat + d))
        self.trunk_w = rng.uniform(-bound, bound, (flat, d))
        # recurrence weights shrunk below unit spectral radius so hundreds of
        # steps stay bounded
        bound = np.sqrt(6.0 / (2 * d))
        self.ar_w = rng.uniform(-bound, bound, (d, d)) * 0.5
        self.ar_u = rng.uniform(-bound, bound, (d,))
        self.ar_out = rng.uniform(-bound, bound, (d,))
        self.head_w = rng.uniform(-bound, bound, (max_segments, d, d))
        self.head_b = rng.uniform(-bound, bound, (max_segments, d))
        self.max_segments = max_segments

    # -- shared trunk ---------------------------------------------------------

    def encode(self, x: np.ndarray) -> np.ndarray:
        """(B, C, T) raw context -> (N, d) decoder state."""
        mean = x.mean(axis=2, keepdims=True)
        std = x.std(axis=2, keepdims=True) + 1e-8
        with no_grad():
            tokens, _ = self.patches.embed((x - mean) / std)
            hidden = self.encoder.encode(tokens)
        n = x.shape[0] * x.shape[1]
        return hidden.data.reshape(n, -1) @ self.trunk_w

    # -- decoders -----------------------------------------------------------------

    def ar_decode(self, z: np.ndarray, horizon: int, counter: MacCounter | None = None,
                  teacher: np.ndarray | None = None) -> np.ndarray:
        """Sequential decoding: one recurrence application per future step.

        Conditions on its own previous output, or on `teacher` values when
        given (training-style forcing).
        """
        n, d = z.shape
        h = z
        y_prev = np.zeros(n)
        out = np.empty((n, horizon))
        for t in range(horizon):
            h = np.tanh(h @ self.ar_w.T + y_prev[:, None] * self.ar_u)
            y = h @ self.ar_out
            if counter is not None:
                counter.matmul(n, d, d)          # recurrence map
                counter.elementwise(n * d, 2)    # input coupling: mul + add
                counter.matmul(n, d, 1)          # readout
            out[:, t] = y
            y_prev = teacher[:, t] if teacher is not None else y
        return out

    def nar_decode(self, z: np.ndarray, horizon: int, parallel: bool = False,
                   counter: MacCounter | None = None) -> np.ndarray:
        """Segment-parallel decoding: one width-d map per segment.

        `parallel` fuses all segment heads into a single pass (one stacked
        matmul); otherwise heads run one by one.
        """
        if horizon % self.cfg.seg_len:
            raise ConfigError(f"horizon {horizon} not divisible by seg_len {self.cfg.seg_len}")
        segments = horizon // self.cfg.seg_len
        if segments > self.max_segments:
            raise ConfigError(f"{segments} segments exceeds allocated {self.max_segments}")
        n, d = z.shape
        s_len = self.cfg.seg_len
        if parallel:
            w = self.head_w[:segments].reshape(segments * d, d)
            b = self.head_b[:segments].reshape(segments * d)
            full = z @ w.T + b
            if counter is not None:
                counter.matmul(n, d, segments * d)
                counter.elementwise(n * segments * d)
            return full.reshape(n, segments, d)[:, :, :s_len].reshape(n, horizon)
        out = np.empty((n, horizon))
        for k in range(segments):
            seg = z @ self.head_w[k].T + self.head_b[k]
            if counter is not None:
                counter.matmul(n, d, d)
                counter.elementwise(n * d)
            out[:, k * s_len:(k + 1) * s_len] = seg[:, :s_len]
        return out

    def forecast(self, x: np.ndarray, mode: str, horizon: int, parallel: bool = False,
                 counter: MacCounter | None = None) -> np.ndarray:
        z = self.encode(x)
        if mode == "ar":
            return self.ar_decode(z, horizon, counter=counter)
        if mode == "nar":
            return self.nar_decode(z, horizon, parallel=parallel, counter=counter)
        raise ValueError(f"unknown mode: {mode}")


@dataclass
class BenchRecord:
    mode: str
    horizon: int
    flops: int           # analytic decoder flops per instance
    wall_ns: int         # median over repetitions, full forecast call
    reps: int
    measured_flops: int = 0   # instrumented decoder flops per instance
    warnings: list = field(default_factory=list)


def run_bench(cfg: BenchConfig, horizons=DEFAULT_HORIZONS, reps: int = 30,
              warmup: int = 5, parallel_heads: bool = False,
              modes=("ar", "nar")) -> list[BenchRecord]:
    """Median-of-reps wall times plus instrumented decoder flop counts."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    horizons = tuple(int(h) for h in horizons)
    for h in horizons:
        CostModel(cfg.width, h, cfg.seg_len).validate()
    model = BenchModel(cfg, max_segments=max(horizons) // cfg.seg_len)
    x = Xorshift(cfg.seed ^ 0xB53C).normal((cfg.batch, cfg.channels, cfg.context_len))
    resolution_ns = time.get_clock_info("perf_counter").resolution * 1e9

    records = []
    for mode in modes:
        for horizon in horizons:
            counter = MacCounter()
            model.forecast(x, mode, horizon, parallel=parallel_heads, counter=counter)
            measured = counter.flops // cfg.instances

            for _ in range(warmup):
                model.forecast(x, mode, horizon, parallel=parallel_heads)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter_ns()
                model.forecast(x, mode, horizon, parallel=parallel_heads)
                times.append(time.perf_counter_ns() - t0)
            wall = int(np.median(times))

            record = BenchRecord(mode=mode, horizon=horizon,
                                 flops=flops(CostModel(cfg.width, horizon, cfg.seg_len), mode),
                                 wall_ns=wall, reps=reps, measured_flops=measured)
            if wall < 100 * resolution_ns:
                record.warnings.append(
                    f"median {wall} ns is below 100x timer resolution ({resolution_ns:.0f} ns)")
            records.append(record)
    return records


def write_bench_csv(records: list, path) -> None:
    with open(path, "w") as fh:
        fh.write("mode,horizon,flops,wall_ns,reps\n")
        for r in records:
            fh.write(f"{r.mode},{r.horizon},{r.flops},{r.wall_ns},{r.reps}\n")
