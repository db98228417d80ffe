"""End-to-end forecaster assembly.

Pipeline: per-window normalization -> adaptive patch embedding -> transformer
encoder -> per-segment (conditioning tokens -> routing -> expert mixture) ->
causal refinement -> denormalization. All segment heads read the same
encoder state, so every segment is produced in one parallel pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .encoder import Encoder
from .exo import ExoBank
from .experts import SegmentHead, aux_loss, segment_loss
from .patches import PatchEmbedder, PatchSelection, budget_loss
from .refine import ScadRefiner, ScrnRefiner
from .rng import Xorshift
from .tensor import Parameters, Tensor, concat, no_grad


@dataclass
class LossBreakdown:
    pred: float
    aux: float
    budget: float
    reg: float
    total: float

    def as_row(self) -> dict:
        return {"L_pred": self.pred, "L_aux": self.aux, "L_budget": self.budget,
                "L_reg": self.reg, "total": self.total}


@dataclass
class ForwardResult:
    segments_norm: list      # refined segments in normalized space, (B, C, S_len) each
    forecast: Tensor         # denormalized, (B, C, H)
    selection: PatchSelection
    decisions: list          # per-segment GateDecision (empty for linear heads)
    mean: np.ndarray         # (B, C, 1) context statistics
    std: np.ndarray


class LinearHead:
    """Plain per-segment linear map; the no-mixture baseline."""

    def __init__(self, segment: int, in_dim: int, seg_len: int,
                 params: Parameters, rng: Xorshift, prefix: str = "head"):
        bound = np.sqrt(6.0 / (in_dim + seg_len))
        self.w = params.add(f"{prefix}{segment}.w", rng.uniform(-bound, bound, (in_dim, seg_len)))
        self.b = params.add(f"{prefix}{segment}.b", np.zeros(seg_len))

    def predict(self, z: Tensor) -> Tensor:
        return z @ self.w + self.b


class Forecaster:
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        self.params = Parameters()
        rng = Xorshift(cfg.seed)

        self.patches = PatchEmbedder(cfg.granularities, cfg.hidden_dim, cfg.tokens,
                                     self.params, rng)
        self.encoder = Encoder(cfg.hidden_dim, cfg.layers, cfg.heads, self.params, rng)
        self.exo = ExoBank(cfg.segments, cfg.n_exo, cfg.hidden_dim, self.params, rng)
        d = cfg.head_in_dim
        if cfg.head_mode == "moe":
            self.heads = [SegmentHead(k, d, cfg.segment_len, cfg.experts, cfg.top_k,
                                      self.params, rng) for k in range(cfg.segments)]
        else:
            self.heads = [LinearHead(k, d, cfg.segment_len, self.params, rng)
                          for k in range(cfg.segments)]
        if cfg.refine_mode == "scrn":
            self.refiner = ScrnRefiner(cfg.segments, cfg.segment_len, cfg.alpha_init,
                                       self.params, rng)
        elif cfg.refine_mode == "scad":
            self.refiner = ScadRefiner(cfg.segments, cfg.segment_len, cfg.scad_width,
                                       cfg.scad_heads, self.params, rng)
        else:
            self.refiner = None

    # -- data plumbing -------------------------------------------------------

    @staticmethod
    def normalize(window: np.ndarray):
        """Per (batch, channel) standardization by context mean and std."""
        mean = window.mean(axis=2, keepdims=True)
        std = window.std(axis=2, keepdims=True) + 1e-8
        return (window - mean) / std, mean, std

    # -- forward -----------------------------------------------------------------

    def forward(self, context: np.ndarray, hard_patches: bool = False) -> ForwardResult:
        cfg = self.cfg
        b, c, t = context.shape
        if t != cfg.context_len:
            raise ValueError(f"context length {t} != configured {cfg.context_len}")
        xn, mean, std = self.normalize(context)

        tokens, selection = self.patches.embed(xn, hard=hard_patches)
        hidden = self.encoder.encode(tokens)                     # (B, C, D, P)
        flat = hidden.reshape(b * c, cfg.hidden_dim, cfg.tokens)

        segments, decisions = [], []
        for k, head in enumerate(self.heads):
            z = self.exo.augment(flat, k).reshape(b * c, cfg.head_in_dim)
            if isinstance(head, SegmentHead):
                decision = head.route(z)
                decisions.append(decision)
                seg = head.predict(z, decision)
            else:
                seg = head.predict(z)
            segments.append(seg.reshape(b, c, cfg.segment_len))

        if self.refiner is not None:
            segments = self.refiner.refine(segments)

        mean_t, std_t = Tensor(mean), Tensor(std)
        forecast = concat([s * std_t + mean_t for s in segments], axis=2)
        return ForwardResult(segments_norm=segments, forecast=forecast,
                             selection=selection, decisions=decisions,
                             mean=mean, std=std)

    # -- objective -------------------------------------------------------------------

    def loss(self, result: ForwardResult, targets: np.ndarray):
        """Composite objective; returns (total tensor, float breakdown)."""
        cfg = self.cfg
        b, c, h = targets.shape
        targets_norm = (targets - result.mean) / result.std

        pred_total = None
        for k, seg in enumerate(result.segments_norm):
            sl = slice(k * cfg.segment_len, (k + 1) * cfg.segment_len)
            tgt = Tensor(targets_norm[:, :, sl].reshape(b * c, cfg.segment_len))
            term = segment_loss(seg.reshape(b * c, cfg.segment_len), tgt, cfg.criterion)
            pred_total = term if pred_total is None else pred_total + term
        pred = pred_total * (1.0 / cfg.segments)

        if result.decisions:
            aux_total = None
            for decision in result.decisions:
                term = aux_loss(decision, cfg.lambda_aux)
                aux_total = term if aux_total is None else aux_total + term
            aux = aux_total * (1.0 / len(result.decisions))
        else:
            aux = Tensor(0.0)

        budget = budget_loss(result.selection, cfg.lambda_budget)

        if isinstance(self.refiner, ScrnRefiner) and cfg.reg_enabled:
            reg = self.refiner.regularizer(cfg.lambda_reg)
        else:
            reg = Tensor(0.0)

        total = pred + aux + budget + reg
        breakdown = LossBreakdown(pred=pred.item(), aux=aux.item(), budget=budget.item(),
                                  reg=reg.item(), total=total.item())
        return total, breakdown

    # -- inference ---------------------------------------------------------------------

    def predict(self, context: np.ndarray, hard_patches: bool = False) -> np.ndarray:
        with no_grad():
            return self.forward(context, hard_patches=hard_patches).forecast.data

    def predict_experts(self, context: np.ndarray) -> np.ndarray:
        """Raw per-expert forecasts (no gate, no shared path), denormalized.

        Expert e's horizon is its own segment predictions stitched across
        heads: one candidate future per expert index. Shape (E, B, C, H).
        """
        cfg = self.cfg
        if cfg.head_mode != "moe":
            pred = self.predict(context)
            return pred[None, ...]
        with no_grad():
            b, c, t = context.shape
            xn, mean, std = self.normalize(context)
            tokens, _ = self.patches.embed(xn)
            flat = self.encoder.encode(tokens).reshape(b * c, cfg.hidden_dim, cfg.tokens)
            per_expert = [[] for _ in range(cfg.experts)]
            for k, head in enumerate(self.heads):
                z = self.exo.augment(flat, k).reshape(b * c, cfg.head_in_dim)
                for e, seg in enumerate(head.expert_outputs(z)):
                    per_expert[e].append(seg.data.reshape(b, c, cfg.segment_len))
            out = np.stack([np.concatenate(segs, axis=2) for segs in per_expert])
            return out * std[None] + mean[None]
