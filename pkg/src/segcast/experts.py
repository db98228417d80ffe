"""Segment-wise mixture-of-experts forecast heads.

One head per forecast segment. A softmax gate scores the experts per
instance, a sparse top-k mask keeps the strongest (values unrenormalized),
and only the retained experts are evaluated, on just the rows routed to
them. A sigmoid-gated shared linear path is always added. A load-balancing
penalty ties mean routing probability to selection frequency so the gate
cannot collapse onto a few experts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Xorshift
from .tensor import Parameters, Tensor, gather_rows, scatter_rows, softmax, topk_mask


@dataclass
class GateDecision:
    scores: Tensor       # (N, E) softmax rows
    gate: Tensor         # (N, E), exactly top_k nonzeros per row
    indices: np.ndarray  # (N, top_k) retained columns, ascending
    top_k: int


class SegmentHead:
    """Expert mixture for one forecast segment."""

    def __init__(self, segment: int, in_dim: int, seg_len: int, n_experts: int,
                 top_k: int, params: Parameters, rng: Xorshift, prefix: str = "head"):
        if not 1 <= top_k <= n_experts:
            raise ValueError(f"top_k {top_k} out of range [1, {n_experts}]")
        self.in_dim = in_dim
        self.seg_len = seg_len
        self.n_experts = n_experts
        self.top_k = top_k
        p = f"{prefix}{segment}"
        bound = np.sqrt(6.0 / (in_dim + n_experts))
        self.gate_w = params.add(f"{p}.gate.w", rng.uniform(-bound, bound, (in_dim, n_experts)))
        bound = np.sqrt(6.0 / (in_dim + seg_len))
        self.expert_w = [params.add(f"{p}.expert{e}.w", rng.uniform(-bound, bound, (in_dim, seg_len)))
                         for e in range(n_experts)]
        self.expert_b = [params.add(f"{p}.expert{e}.b", np.zeros(seg_len))
                         for e in range(n_experts)]
        self.shared_w = params.add(f"{p}.shared.w", rng.uniform(-bound, bound, (in_dim, seg_len)))
        bound = np.sqrt(6.0 / (in_dim + 1))
        self.shared_gate = params.add(f"{p}.shared.g", rng.uniform(-bound, bound, (in_dim, 1)))

    def route(self, z: Tensor) -> GateDecision:
        scores = softmax(z @ self.gate_w, axis=1)
        gate, indices = topk_mask(scores, self.top_k)
        return GateDecision(scores=scores, gate=gate, indices=indices, top_k=self.top_k)

    def predict(self, z: Tensor, decision: GateDecision) -> Tensor:
        """Sparse gated mixture plus the shared path, (N, seg_len).

        Expert e touches only the rows whose gate kept it; experts no row
        selected are skipped entirely.
        """
        n = z.shape[0]
        out = None
        for e in range(self.n_experts):
            rows = np.nonzero(decision.indices == e)[0]
            if rows.size == 0:
                continue
            z_rows = gather_rows(z, rows)
            pred = z_rows @ self.expert_w[e] + self.expert_b[e]
            coef = gather_rows(decision.gate[:, e:e + 1], rows)
            contribution = scatter_rows(pred * coef, rows, n)
            out = contribution if out is None else out + contribution
        shared = (z @ self.shared_w) * (z @ self.shared_gate).sigmoid()
        return shared if out is None else out + shared

    def predict_dense(self, z: Tensor, decision: GateDecision) -> Tensor:
        """Dense mixture over all experts; reference path for equivalence tests."""
        out = None
        for e in range(self.n_experts):
            pred = z @ self.expert_w[e] + self.expert_b[e]
            term = pred * decision.gate[:, e:e + 1]
            out = term if out is None else out + term
        return out + (z @ self.shared_w) * (z @ self.shared_gate).sigmoid()

    def expert_outputs(self, z: Tensor) -> list[Tensor]:
        """Raw per-expert predictions (no gate, no shared path)."""
        return [z @ w + b for w, b in zip(self.expert_w, self.expert_b)]


def aux_loss(decision: GateDecision, weight: float) -> Tensor:
    """weight * E * sum_e r_e * f_e.

    r_e is the mean routing probability (differentiable); f_e is the
    selection frequency, held constant because the top-k indicator has no
    gradient.
    """
    n, n_experts = decision.scores.shape
    r = decision.scores.mean(axis=0)
    counts = np.bincount(decision.indices.reshape(-1), minlength=n_experts)
    freq = Tensor(counts / n)
    return (r * freq).sum() * (weight * n_experts)


def segment_loss(pred: Tensor, target: Tensor, criterion: str = "mse") -> Tensor:
    """Mean pointwise error between a predicted and true segment."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    if criterion == "mse":
        return (diff * diff).mean()
    if criterion == "mae":
        return diff.abs().mean()
    raise ValueError(f"unknown criterion: {criterion}")
