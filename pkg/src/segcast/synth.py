"""Synthetic multi-peak window generator and mode-collapse metrics.

Windows share a common history generator (histories look near-identical)
while futures are drawn from a weighted mixture of distinct mode curves:
the conditional distribution of the future given the context has several
separated peaks. A pointwise-trained single head regresses toward the
mixture mean and flattens out; the metrics here make that visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import StreamBank


@dataclass
class ModeSpec:
    kind: str = "ramp"          # ramp | sine
    amplitude: float = 1.0
    sign: float = 1.0           # ramp direction
    phase: float = 0.0          # sine phase offset

    def curve(self, horizon: int) -> np.ndarray:
        steps = np.arange(1, horizon + 1, dtype=np.float64)
        if self.kind == "ramp":
            return self.sign * self.amplitude * steps / horizon
        if self.kind == "sine":
            return self.amplitude * np.sin(2.0 * np.pi * steps / horizon + self.phase)
        raise ValueError(f"unknown mode kind: {self.kind}")


@dataclass
class MixtureSpec:
    modes: list
    weights: tuple
    noise_std: float = 0.05
    history_amp: float = 0.5
    history_period: int = 32
    history_noise: float = 0.05
    channels: int = 1
    weights_by_history: bool = False   # optional: flip weights on positive context end

    def validate(self) -> "MixtureSpec":
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.modes) != w.size:
            raise ValueError("one weight per mode required")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must be positive and sum to 1: {self.weights}")
        return self


def two_mode_ramp(amplitude: float = 1.0, noise_std: float = 0.05, **kw) -> MixtureSpec:
    """Symmetric two-peak spec: equally likely up- and down-ramps."""
    modes = [ModeSpec(kind="ramp", amplitude=amplitude, sign=+1.0),
             ModeSpec(kind="ramp", amplitude=amplitude, sign=-1.0)]
    return MixtureSpec(modes=modes, weights=(0.5, 0.5), noise_std=noise_std, **kw).validate()


def make_spec(n_modes: int, amplitude: float = 1.0, noise_std: float = 0.05,
              **kw) -> MixtureSpec:
    """Equal-weight preset: 1 mode = single ramp, 2 = opposed ramps, more
    alternate opposed ramps with phase-spread sines."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if n_modes == 2:
        return two_mode_ramp(amplitude=amplitude, noise_std=noise_std, **kw)
    modes = []
    for i in range(n_modes):
        if i % 2 == 0:
            modes.append(ModeSpec(kind="ramp", amplitude=amplitude,
                                  sign=1.0 if i % 4 == 0 else -1.0))
        else:
            modes.append(ModeSpec(kind="sine", amplitude=amplitude,
                                  phase=np.pi * (i // 2) / max(1, n_modes // 2)))
    weights = tuple([1.0 / n_modes] * n_modes)
    return MixtureSpec(modes=modes, weights=weights, noise_std=noise_std, **kw).validate()


def mixture_mean(spec: MixtureSpec, horizon: int) -> np.ndarray:
    """Analytic conditional mean of the future under constant weights."""
    w = np.asarray(spec.weights)
    return np.sum([wi * m.curve(horizon) for wi, m in zip(w, spec.modes)], axis=0)


@dataclass
class WindowDataset:
    contexts: np.ndarray   # (N, C, T)
    futures: np.ndarray    # (N, C, H)
    labels: np.ndarray     # (N,) mode indices

    @property
    def n(self) -> int:
        return self.contexts.shape[0]

    def save(self, data_path, labels_path) -> None:
        t, h = self.contexts.shape[2], self.futures.shape[2]
        rows = np.concatenate([self.contexts, self.futures], axis=2)   # (N, C, T+H)
        flat = rows.transpose(0, 2, 1).reshape(self.n * (t + h), -1)
        names = [f"ch{c}" for c in range(self.contexts.shape[1])]
        save_series_csv(data_path, flat, names)
        with open(labels_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "mode"])
            for i, m in enumerate(self.labels):
                writer.writerow([i, int(m)])


def load_window_dataset(data_path, labels_path, context_len: int, horizon: int) -> WindowDataset:
    _, values = load_series_csv(data_path)
    span = context_len + horizon
    if values.shape[0] % span:
        raise ValueError(f"{data_path}: row count {values.shape[0]} not a multiple of {span}")
    n = values.shape[0] // span
    windows = values.reshape(n, span, -1).transpose(0, 2, 1)
    labels = np.zeros(n, dtype=int)
    with open(labels_path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            labels[int(row["window"])] = int(row["mode"])
    return WindowDataset(contexts=windows[:, :, :context_len],
                         futures=windows[:, :, context_len:], labels=labels)


def generate(spec: MixtureSpec, n_windows: int, context_len: int, horizon: int,
             seed: int) -> WindowDataset:
    """Draw windows: shared history + per-window mode + observation noise.

    Each window consumes its own PRNG stream derived from (seed, index), so
    the dataset is reproducible regardless of chunking.
    """
    spec.validate()
    c = spec.channels
    bank = StreamBank(seed, n_windows)

    steps = np.arange(context_len, dtype=np.float64)
    base = spec.history_amp * np.sin(2.0 * np.pi * steps / spec.history_period)
    hist_noise = bank.normal(c * context_len).reshape(n_windows, c, context_len)
    contexts = base[None, None, :] + spec.history_noise * hist_noise

    u = bank.uniform()
    weights = np.asarray(spec.weights)
    labels = (u[:, None] >= np.cumsum(weights)[None, :]).sum(axis=1)
    labels = np.clip(labels, 0, len(spec.modes) - 1)
    if spec.weights_by_history:
        # histories ending above zero see the mode preferences reversed
        flip = contexts[:, 0, -1] > 0
        labels = np.where(flip, len(spec.modes) - 1 - labels, labels)

    curves = np.stack([m.curve(horizon) for m in spec.modes])
    fut_noise = bank.normal(c * horizon).reshape(n_windows, c, horizon)
    futures = curves[labels][:, None, :] + spec.noise_std * fut_noise

    return WindowDataset(contexts=contexts, futures=futures, labels=labels.astype(int))


# -- metrics ---------------------------------------------------------------------


@dataclass
class ModeMetricsReport:
    mean_head_error: float
    best_of_expert_error: float
    diversity: float
    cond_mean_gap: float | None
    per_mode_best: dict = field(default_factory=dict)
    n_windows: int = 0
    n_experts: int = 0

    def rows(self) -> list:
        out = [("mean_head_error", self.mean_head_error),
               ("best_of_expert_error", self.best_of_expert_error),
               ("diversity", self.diversity)]
        if self.cond_mean_gap is not None:
            out.append(("cond_mean_gap", self.cond_mean_gap))
        for mode, err in sorted(self.per_mode_best.items()):
            out.append((f"best_error_mode{mode}", err))
        return out


def _pointwise(err: np.ndarray, criterion: str) -> np.ndarray:
    if criterion == "mse":
        return (err ** 2).mean(axis=-1)
    if criterion == "mae":
        return np.abs(err).mean(axis=-1)
    raise ValueError(f"unknown criterion: {criterion}")


def mode_metrics(expert_preds: np.ndarray, targets: np.ndarray,
                 labels: np.ndarray | None = None,
                 combined: np.ndarray | None = None,
                 mix_mean: np.ndarray | None = None,
                 criterion: str = "mse") -> ModeMetricsReport:
    """Collapse diagnostics over per-expert forecasts.

    expert_preds: (E, N, H) candidate futures; targets: (N, H).
    combined (N, H) defaults to the plain expert average. Diversity is the
    mean pairwise Chebyshev (max-abs) distance between expert forecasts,
    reported in data units so it compares directly with mode amplitude.
    """
    e, n, h = expert_preds.shape
    if targets.shape != (n, h):
        raise ValueError(f"targets shape {targets.shape} != {(n, h)}")
    if combined is None:
        combined = expert_preds.mean(axis=0)

    mean_head = float(_pointwise(combined - targets, criterion).mean())
    per_expert = _pointwise(expert_preds - targets[None], criterion)   # (E, N)
    best_per_window = per_expert.min(axis=0)
    best = float(best_per_window.mean())

    if e > 1:
        dists = [np.abs(expert_preds[i] - expert_preds[j]).max(axis=-1)
                 for i in range(e) for j in range(i + 1, e)]
        diversity = float(np.mean(dists))
    else:
        diversity = 0.0

    gap = None
    if mix_mean is not None:
        gap = float(np.sqrt(((combined - mix_mean[None, :]) ** 2).mean(axis=-1)).mean())

    per_mode = {}
    if labels is not None:
        for mode in np.unique(labels):
            per_mode[int(mode)] = float(best_per_window[labels == mode].mean())

    return ModeMetricsReport(mean_head_error=mean_head, best_of_expert_error=best,
                             diversity=diversity, cond_mean_gap=gap,
                             per_mode_best=per_mode, n_windows=n, n_experts=e)


# -- delimited series io -----------------------------------------------------------


def save_series_csv(path, values: np.ndarray, names: list) -> None:
    """Header of channel names, one timestep per row, 17 significant digits."""
    values = np.atleast_2d(values)
    if values.shape[1] != len(names):
        raise ValueError(f"{len(names)} names for {values.shape[1]} columns")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_series_csv(path):
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        values = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    if values.shape[1] != len(names):
        raise ValueError(f"{path}: column count mismatch")
    return names, values


def cut_windows(values: np.ndarray, context_len: int, horizon: int, stride: int):
    """Slice a (steps, C) series into overlapping (context, future) windows."""
    steps = values.shape[0]
    span = context_len + horizon
    if steps < span:
        raise ValueError(f"series of {steps} steps shorter than one window ({span})")
    starts = range(0, steps - span + 1, stride)
    ctx = np.stack([values[s:s + context_len].T for s in starts])
    fut = np.stack([values[s + context_len:s + span].T for s in starts])
    return ctx, fut
