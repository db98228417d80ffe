"""Run configuration: a flat key=value text format with strict key checking."""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ModelConfig:
    # data geometry
    context_len: int = 512
    horizon: int = 96
    segment_len: int = 48
    channels: int = 1
    # patch embedding
    granularities: tuple = (8, 16, 32, 64)
    # encoder
    hidden_dim: int = 64
    layers: int = 1
    heads: int = 8
    # segment heads
    head_mode: str = "moe"          # moe | linear
    experts: int = 8
    top_k: int = 4
    # exogenous conditioning tokens
    n_exo: int = 2
    # cross-segment refinement
    refine_mode: str = "scrn"       # none | scrn | scad
    alpha_init: float = 0.01
    scad_width: int = 16
    scad_heads: int = 2
    # loss weights
    criterion: str = "mse"          # mse | mae
    lambda_aux: float = 0.01
    lambda_budget: float = 0.01
    lambda_reg: float = 1e-4
    reg_enabled: bool = True
    # optimization
    seed: int = 0
    epochs: int = 1
    batch_size: int = 32
    lr: float = 1e-3

    # derived ------------------------------------------------------------
    @property
    def region(self) -> int:
        return max(self.granularities)

    @property
    def tokens(self) -> int:
        return self.context_len // self.region

    @property
    def segments(self) -> int:
        return self.horizon // self.segment_len

    @property
    def head_in_dim(self) -> int:
        return self.hidden_dim * (self.tokens + self.n_exo)

    def validate(self) -> "ModelConfig":
        g = self.granularities
        if not g or list(g) != sorted(g) or len(set(g)) != len(g):
            raise ConfigError(f"granularities must be ascending and unique: {g}")
        if any(x <= 0 for x in g):
            raise ConfigError(f"granularities must be positive: {g}")
        region = max(g)
        if any(region % x for x in g):
            raise ConfigError(f"every granularity must divide the region {region}: {g}")
        if self.context_len % region:
            raise ConfigError(f"context_len {self.context_len} not divisible by region {region}")
        if self.horizon % self.segment_len:
            raise ConfigError(f"horizon {self.horizon} not divisible by segment_len {self.segment_len}")
        if self.hidden_dim % self.heads:
            raise ConfigError(f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        if self.head_mode not in ("moe", "linear"):
            raise ConfigError(f"head_mode must be moe or linear: {self.head_mode}")
        if self.head_mode == "moe" and not 1 <= self.top_k <= self.experts:
            raise ConfigError(f"top_k {self.top_k} out of range [1, {self.experts}]")
        if self.refine_mode not in ("none", "scrn", "scad"):
            raise ConfigError(f"refine_mode must be none, scrn or scad: {self.refine_mode}")
        if self.refine_mode == "scad" and self.scad_width % self.scad_heads:
            raise ConfigError(f"scad_width {self.scad_width} not divisible by scad_heads {self.scad_heads}")
        if self.criterion not in ("mse", "mae"):
            raise ConfigError(f"criterion must be mse or mae: {self.criterion}")
        if self.n_exo < 0:
            raise ConfigError(f"n_exo must be >= 0: {self.n_exo}")
        for key in ("context_len", "horizon", "segment_len", "channels", "hidden_dim",
                    "layers", "heads", "experts", "epochs", "batch_size"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        return self


_KEY_DOC = {
    "context_len": "history window length T",
    "horizon": "forecast length H",
    "segment_len": "segment length; horizon splits into horizon/segment_len heads",
    "channels": "number of series channels",
    "granularities": "comma-separated ascending patch lengths, e.g. 8,16,32,64",
    "hidden_dim": "encoder hidden width D",
    "layers": "encoder layers",
    "heads": "encoder attention heads",
    "head_mode": "moe (expert mixture) or linear (single map) segment heads",
    "experts": "experts per segment head",
    "top_k": "experts kept by the sparse gate",
    "n_exo": "learnable conditioning tokens appended per segment",
    "refine_mode": "cross-segment refinement: none, scrn or scad",
    "alpha_init": "initial residual-noise scale",
    "scad_width": "internal width of cross-attention refinement",
    "scad_heads": "heads of cross-attention refinement",
    "criterion": "pointwise loss: mse or mae",
    "lambda_aux": "load-balancing loss weight",
    "lambda_budget": "patch budget loss weight",
    "lambda_reg": "refinement embedding l2 weight",
    "reg_enabled": "include the l2 refinement penalty in the objective",
    "seed": "master PRNG seed",
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "lr": "learning rate",
}


def parse_config(path) -> ModelConfig:
    """Read key=value lines; unknown keys are an error."""
    valid = {f.name: f.type for f in fields(ModelConfig)}
    kwargs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in valid:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            kwargs[key] = _parse_value(key, value, lineno, path)
    return ModelConfig(**kwargs).validate()


def _parse_value(key: str, value: str, lineno: int, path):
    default = getattr(ModelConfig(), key)
    try:
        if key == "granularities":
            return tuple(int(v) for v in value.split(","))
        if isinstance(default, bool):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc


def write_config(cfg: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        for f in fields(ModelConfig):
            value = getattr(cfg, f.name)
            if f.name == "granularities":
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{f.name} = {value}  # {_KEY_DOC[f.name]}\n")


def config_dict(cfg: ModelConfig) -> dict:
    out = {}
    for f in fields(ModelConfig):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
