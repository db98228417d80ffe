"""Adaptive multi-granularity patch embedding.

The context splits into fixed regions (one region = one output token). For
each region, every candidate granularity produces a pooled embedding, a
per-region scorer turns the raw region values into mixing probabilities,
and the token is the probability-weighted blend. A budget penalty keeps the
empirical granularity usage close to uniform so no single patch length
dominates early training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .rng import Xorshift
from .tensor import Parameters, Tensor, softmax, stack


@dataclass
class PatchSelection:
    """Soft granularity choices: per-region probabilities and their mean."""
    probs: Tensor        # (batch*channels*regions, M)
    mean_probs: Tensor   # (M,), sums to 1

    @property
    def n_granularities(self) -> int:
        return self.probs.shape[1]


class PatchEmbedder:
    def __init__(self, granularities, hidden_dim: int, tokens: int,
                 params: Parameters, rng: Xorshift, prefix: str = "patch"):
        self.granularities = tuple(granularities)
        self.region = max(self.granularities)
        self.hidden_dim = hidden_dim
        self.tokens = tokens
        if any(self.region % m for m in self.granularities):
            raise ConfigError(f"granularities {granularities} must divide region {self.region}")

        self.proj_w, self.proj_b = [], []
        for m in self.granularities:
            bound = np.sqrt(6.0 / (m + hidden_dim))
            self.proj_w.append(params.add(f"{prefix}.proj{m}.w",
                                          rng.uniform(-bound, bound, (m, hidden_dim))))
            self.proj_b.append(params.add(f"{prefix}.proj{m}.b", np.zeros(hidden_dim)))
        n_g = len(self.granularities)
        bound = np.sqrt(6.0 / (self.region + n_g))
        self.score_w = params.add(f"{prefix}.score.w",
                                  rng.uniform(-bound, bound, (self.region, n_g)))
        self.score_b = params.add(f"{prefix}.score.b", np.zeros(n_g))
        self.pos = params.add(f"{prefix}.pos", np.zeros((tokens, hidden_dim)))

    def embed(self, x: np.ndarray, hard: bool = False):
        """Map (B, C, T) context values to (B, C, P, D) tokens.

        `hard` switches from probability-weighted blending to argmax
        selection (inference only; the soft path is what trains).
        """
        b, c, t = x.shape
        if t % self.region:
            raise ConfigError(f"context length {t} not divisible by region {self.region}")
        p = t // self.region
        if p != self.tokens:
            raise ConfigError(f"expected {self.tokens} regions, got {p}")

        rows = Tensor(x).reshape(b * c * p, self.region)
        candidates = []
        for m, w, bias in zip(self.granularities, self.proj_w, self.proj_b):
            sub = rows.reshape(b * c * p, self.region // m, m)
            emb = sub @ w + bias          # (rows, region/m, D)
            candidates.append(emb.mean(axis=1))
        cand = stack(candidates, axis=1)  # (rows, M, D)

        logits = rows @ self.score_w + self.score_b
        probs = softmax(logits, axis=1)
        if hard:
            choice = np.argmax(probs.data, axis=1)
            one_hot = np.zeros_like(probs.data)
            one_hot[np.arange(choice.size), choice] = 1.0
            mix = Tensor(one_hot)
        else:
            mix = probs
        token = (cand * mix.reshape(b * c * p, len(self.granularities), 1)).sum(axis=1)
        tokens = token.reshape(b, c, p, self.hidden_dim) + self.pos
        return tokens, PatchSelection(probs=probs, mean_probs=probs.mean(axis=0))


def budget_loss(selection: PatchSelection, weight: float) -> Tensor:
    """weight * sum_m (p_m - 1/M)^2, zero exactly when usage is uniform."""
    m = selection.n_granularities
    dev = selection.mean_probs - 1.0 / m
    return (dev * dev).sum() * weight
