"""Learnable conditioning tokens appended per segment.

Each forecast segment owns a small bank of trainable D-dimensional vectors
standing in for unobserved external drivers. They are appended to the
encoder state along the token axis (identically for every instance) and
train end-to-end through the forecasting loss; nothing is sampled.
"""

from __future__ import annotations

from .config import ConfigError
from .rng import Xorshift
from .tensor import Parameters, Tensor, concat


class ExoBank:
    def __init__(self, segments: int, count: int, dim: int,
                 params: Parameters, rng: Xorshift, prefix: str = "exo"):
        self.count = count
        self.dim = dim
        self.vectors = [params.add(f"{prefix}.seg{k}", rng.uniform(-0.02, 0.02, (count, dim)))
                        for k in range(segments)] if count > 0 else []
        self.segments = segments

    def augment(self, hidden: Tensor, segment: int) -> Tensor:
        """Append this segment's bank to (N, D, P) -> (N, D, P + count)."""
        if self.count == 0:
            return hidden
        if not 0 <= segment < self.segments:
            raise ConfigError(f"no conditioning bank for segment {segment}")
        n = hidden.shape[0]
        bank = self.vectors[segment].transpose((1, 0))          # (D, count)
        tokens = bank.reshape(1, self.dim, self.count).broadcast_to((n, self.dim, self.count))
        return concat([hidden, tokens], axis=2)
