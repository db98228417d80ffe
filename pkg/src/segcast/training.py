"""Training loop: Adam updates, per-step loss logging, checkpointing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_params
from .config import ModelConfig
from .model import Forecaster
from .rng import Xorshift, splitmix64
from .tensor import GradCheckReport, Tensor, check_gradients, first_nonfinite

METRIC_COLUMNS = ("step", "L_pred", "L_aux", "L_budget", "L_reg", "total")


class NumericError(RuntimeError):
    """Training produced a non-finite value."""


class Adam:
    def __init__(self, tensors, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = list(tensors)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.tensors]
        self.v = [np.zeros_like(p.data) for p in self.tensors]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.tensors):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    model: Forecaster
    metrics: list = field(default_factory=list)
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None


def train(cfg: ModelConfig, contexts: np.ndarray, futures: np.ndarray,
          out_dir=None, model: Forecaster | None = None) -> TrainResult:
    """Minibatch training over (N, C, T) contexts and (N, C, H) futures.

    Aborts with NumericError on a non-finite loss, naming the first bad
    tensor in the graph. With out_dir set, writes metrics.csv and
    checkpoint.txt (both byte-reproducible for a fixed config and seed).
    """
    if model is None:
        model = Forecaster(cfg)
    n = contexts.shape[0]
    batch = min(cfg.batch_size, n)
    shuffler = Xorshift(splitmix64(cfg.seed ^ 0x5E6D0A7A))
    optimizer = Adam(model.params.tensors(), lr=cfg.lr)

    metrics = []
    step = 0
    for _ in range(cfg.epochs):
        order = shuffler.permutation(n)
        for lo in range(0, n - batch + 1, batch):
            idx = order[lo:lo + batch]
            total, breakdown = model.loss(model.forward(contexts[idx]), futures[idx])
            if not np.isfinite(breakdown.total):
                bad = first_nonfinite(total)
                culprit = bad.op if bad is not None else "total"
                raise NumericError(
                    f"non-finite loss at step {step}; first non-finite tensor: {culprit}")
            model.params.zero_grad()
            total.backward()
            optimizer.step()
            step += 1
            metrics.append({"step": step, **breakdown.as_row()})

    result = TrainResult(model=model, metrics=metrics)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.metrics_path = out_dir / "metrics.csv"
        write_metrics(metrics, result.metrics_path)
        result.checkpoint_path = out_dir / "checkpoint.txt"
        save_params(model.params, result.checkpoint_path)
    return result


def write_metrics(metrics: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in metrics:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def evaluate(model: Forecaster, contexts: np.ndarray, futures: np.ndarray) -> dict:
    """MSE and MAE of denormalized forecasts, plus per-segment MSE."""
    preds = predict_batched(model, contexts)
    err = preds - futures
    seg = model.cfg.segment_len
    per_segment = [float((err[:, :, k * seg:(k + 1) * seg] ** 2).mean())
                   for k in range(model.cfg.segments)]
    return {"mse": float((err ** 2).mean()),
            "mae": float(np.abs(err).mean()),
            "per_segment_mse": per_segment}


def predict_batched(model: Forecaster, contexts: np.ndarray, batch: int = 256) -> np.ndarray:
    outs = [model.predict(contexts[lo:lo + batch])
            for lo in range(0, contexts.shape[0], batch)]
    return np.concatenate(outs, axis=0)


def end_to_end_gradcheck(cfg: ModelConfig, batch: int = 2, eps: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of every parameter through the full objective."""
    model = Forecaster(cfg)
    data_rng = Xorshift(splitmix64(cfg.seed ^ 0x9C0FFEE))
    contexts = data_rng.normal((batch, cfg.channels, cfg.context_len))
    futures = data_rng.normal((batch, cfg.channels, cfg.horizon))

    def f() -> Tensor:
        total, _ = model.loss(model.forward(contexts), futures)
        return total

    return check_gradients(f, model.params, eps=eps)
