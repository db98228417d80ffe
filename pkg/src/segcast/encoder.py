"""Channel-independent transformer encoder over patch tokens.

Each (batch, channel) token sequence is processed on its own: pre-norm
multi-head self-attention with a residual, then a pre-norm two-layer
feedforward (4x width, tanh-approximated GELU) with a residual. The output
is laid out (B, C, D, P) for the downstream segment heads.
"""

from __future__ import annotations

import numpy as np

from .config import ConfigError
from .rng import Xorshift
from .tensor import Parameters, Tensor, softmax

_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(x: Tensor) -> Tensor:
    inner = (x + (x * x * x) * 0.044715) * _GELU_C
    return x * (inner.tanh() + 1.0) * 0.5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * ((var + eps) ** -0.5) * gain + bias


def _glorot(rng: Xorshift, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


class Encoder:
    def __init__(self, dim: int, layers: int, heads: int,
                 params: Parameters, rng: Xorshift, prefix: str = "enc"):
        if dim % heads:
            raise ConfigError(f"hidden dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.layers = []
        for i in range(layers):
            p = f"{prefix}.l{i}"
            layer = {
                "ln1_g": params.add(f"{p}.ln1.g", np.ones(dim)),
                "ln1_b": params.add(f"{p}.ln1.b", np.zeros(dim)),
                "ln2_g": params.add(f"{p}.ln2.g", np.ones(dim)),
                "ln2_b": params.add(f"{p}.ln2.b", np.zeros(dim)),
            }
            for name in ("wq", "wk", "wv", "wo"):
                layer[name] = params.add(f"{p}.{name}", _glorot(rng, dim, dim, (dim, dim)))
                layer[name + "_b"] = params.add(f"{p}.{name}_b", np.zeros(dim))
            layer["w1"] = params.add(f"{p}.ff.w1", _glorot(rng, dim, 4 * dim, (dim, 4 * dim)))
            layer["b1"] = params.add(f"{p}.ff.b1", np.zeros(4 * dim))
            layer["w2"] = params.add(f"{p}.ff.w2", _glorot(rng, 4 * dim, dim, (4 * dim, dim)))
            layer["b2"] = params.add(f"{p}.ff.b2", np.zeros(dim))
            self.layers.append(layer)

    def encode(self, tokens: Tensor, attn_sink: list | None = None) -> Tensor:
        """(B, C, P, D) tokens -> (B, C, D, P) hidden state.

        `attn_sink`, when given, collects each layer's attention weights.
        """
        b, c, p, d = tokens.shape
        if d != self.dim:
            raise ConfigError(f"token width {d} != encoder dim {self.dim}")
        x = tokens.reshape(b * c, p, d)
        for layer in self.layers:
            x = x + self._attend(layer_norm(x, layer["ln1_g"], layer["ln1_b"]), layer, attn_sink)
            h = layer_norm(x, layer["ln2_g"], layer["ln2_b"])
            x = x + (gelu(h @ layer["w1"] + layer["b1"]) @ layer["w2"] + layer["b2"])
        return x.reshape(b, c, p, d).transpose((0, 1, 3, 2))

    def _attend(self, h: Tensor, layer, attn_sink: list | None = None) -> Tensor:
        n, p, d = h.shape
        nh, hd = self.heads, self.head_dim

        def split(t: Tensor) -> Tensor:
            return t.reshape(n, p, nh, hd).transpose((0, 2, 1, 3))

        q = split(h @ layer["wq"] + layer["wq_b"])
        k = split(h @ layer["wk"] + layer["wk_b"])
        v = split(h @ layer["wv"] + layer["wv_b"])
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(hd))
        attn = softmax(scores, axis=-1)            # rows sum to 1 over keys
        if attn_sink is not None:
            attn_sink.append(attn)
        ctx = (attn @ v).transpose((0, 2, 1, 3)).reshape(n, p, d)
        return ctx @ layer["wo"] + layer["wo_b"]
