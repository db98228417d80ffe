"""Causal cross-segment refinement.

Two interchangeable variants behind one interface:

* residual noise: segment s (s >= 2) receives its raw predecessor scaled
  elementwise by a learnable per-segment embedding and a global scalar;
  the first segment always passes through untouched. Predecessors are the
  raw (pre-refinement) predictions, so every segment refines in parallel.
* cross-attention: segment s attends over its raw predecessor with a small
  multi-head module and adds the attended result as a residual.

Both are causal: perturbing raw segment s can only change refined segments
at indices >= s.
"""

from __future__ import annotations

import numpy as np

from .rng import Xorshift
from .tensor import Parameters, Tensor, softmax


class ScrnRefiner:
    """Residual noise from the predecessor segment."""

    def __init__(self, segments: int, seg_len: int, alpha_init: float,
                 params: Parameters, rng: Xorshift, prefix: str = "scrn"):
        self.seg_len = seg_len
        # Kaiming-uniform bound for fan_in = seg_len, shrunk to keep the
        # injected residual a perturbation at the start of training
        bound = np.sqrt(6.0 / seg_len)
        self.embeddings = [params.add(f"{prefix}.e{s}",
                                      rng.uniform(-bound, bound, (seg_len,)) * 0.01)
                           for s in range(2, segments + 1)]
        self.alpha = params.add(f"{prefix}.alpha", np.array(alpha_init))

    def refine(self, segments: list[Tensor]) -> list[Tensor]:
        if not segments:
            raise ValueError("need at least one segment")
        for seg in segments[1:]:
            if seg.shape != segments[0].shape:
                raise ValueError("segments must share one shape")
        out = [segments[0]]
        for s in range(1, len(segments)):
            emb = self.embeddings[s - 1].reshape(1, 1, self.seg_len)
            noise = segments[s - 1] * emb
            out.append(segments[s] + self.alpha * noise)
        return out

    def regularizer(self, weight: float) -> Tensor:
        """Mean squared entry over all embeddings, times weight."""
        if not self.embeddings or weight == 0.0:
            return Tensor(0.0)
        total = None
        entries = 0
        for e in self.embeddings:
            sq = (e * e).sum()
            total = sq if total is None else total + sq
            entries += e.size
        return total * (weight / entries)


class ScadRefiner:
    """Multi-head cross-attention onto the predecessor segment."""

    def __init__(self, segments: int, seg_len: int, width: int, heads: int,
                 params: Parameters, rng: Xorshift, prefix: str = "scad"):
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.seg_len = seg_len
        self.width = width
        self.heads = heads
        self.blocks = []
        bound = np.sqrt(6.0 / (1 + width))
        for s in range(2, segments + 1):
            p = f"{prefix}.s{s}"
            self.blocks.append({
                "wq": params.add(f"{p}.wq", rng.uniform(-bound, bound, (1, width))),
                "wk": params.add(f"{p}.wk", rng.uniform(-bound, bound, (1, width))),
                "wv": params.add(f"{p}.wv", rng.uniform(-bound, bound, (1, width))),
                "wo": params.add(f"{p}.wo", rng.uniform(-bound, bound, (width, 1))),
            })

    def refine(self, segments: list[Tensor]) -> list[Tensor]:
        if not segments:
            raise ValueError("need at least one segment")
        out = [segments[0]]
        for s in range(1, len(segments)):
            out.append(segments[s] + self._attend(segments[s], segments[s - 1],
                                                  self.blocks[s - 1]))
        return out

    def _attend(self, query_seg: Tensor, key_seg: Tensor, block) -> Tensor:
        b, c, t = query_seg.shape
        nh, hd = self.heads, self.width // self.heads

        def split(x: Tensor, w: Tensor) -> Tensor:
            proj = x.reshape(b, c, t, 1) @ w                       # (B, C, T, W)
            return proj.reshape(b, c, t, nh, hd).transpose((0, 1, 3, 2, 4))

        q = split(query_seg, block["wq"])
        k = split(key_seg, block["wk"])
        v = split(key_seg, block["wv"])
        scores = (q @ k.transpose((0, 1, 2, 4, 3))) * (1.0 / np.sqrt(hd))
        ctx = softmax(scores, axis=-1) @ v                          # (B, C, h, T, hd)
        merged = ctx.transpose((0, 1, 3, 2, 4)).reshape(b, c, t, self.width)
        return (merged @ block["wo"]).reshape(b, c, t)
