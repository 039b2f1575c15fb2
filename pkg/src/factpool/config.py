"""Run configuration: dataclass plus flat key=value file round-trip."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

FUSION_MODES = ("early", "early_late")
TOKEN_POOLINGS = ("cls", "mean")
ENCODER_KINDS = ("hash-bag", "shared-toy-encoder", "external-file")

# Keys of the on-disk config format, in file order.
FILE_KEYS = (
    "L",
    "d",
    "heads",
    "K",
    "fusion_mode",
    "max_tokens",
    "max_nodes",
    "token_pooling",
    "encoder_kind",
    "lr_lm",
    "lr_graph",
    "epochs",
    "batch_size",
    "seed",
)

_INT_KEYS = {"L", "d", "heads", "K", "max_tokens", "max_nodes", "epochs", "batch_size", "seed"}
_FLOAT_KEYS = {"lr_lm", "lr_graph"}


@dataclass
class Config:
    L: int = 4
    d: int = 64
    heads: int = 4
    K: int = 0
    fusion_mode: str = "early"
    max_tokens: int = 100
    max_nodes: int = 32
    token_pooling: str = "mean"
    encoder_kind: str = "hash-bag"
    lr_lm: float = 3e-4
    lr_graph: float = 1e-3
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    # Not part of the key=value file schema; carried in checkpoints.
    vocab_size: int = 2048
    gnn_layers: int = 2
    gnn_aggregation: str = "sum"
    precision: str = "f64"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.d % self.heads != 0:
            raise ValueError(f"width d={self.d} must be divisible by heads={self.heads}")
        if not 0 <= self.K <= self.L:
            raise ValueError(f"fusion depth K={self.K} must satisfy 0 <= K <= L={self.L}")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}")
        if self.fusion_mode == "early" and self.K != 0:
            raise ValueError("fusion_mode=early requires K=0")
        if self.token_pooling not in TOKEN_POOLINGS:
            raise ValueError(f"token_pooling must be one of {TOKEN_POOLINGS}")
        if self.encoder_kind not in ENCODER_KINDS:
            raise ValueError(f"encoder_kind must be one of {ENCODER_KINDS}")
        if self.gnn_aggregation not in ("sum", "mean"):
            raise ValueError("gnn_aggregation must be 'sum' or 'mean'")
        if self.precision not in ("f64", "f32"):
            raise ValueError("precision must be 'f64' or 'f32'")
        for name in ("L", "d", "heads", "max_tokens", "max_nodes", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def dtype(self):
        import numpy as np

        return np.float64 if self.precision == "f64" else np.float32

    def num_pooling_heads(self) -> int:
        return self.K + 1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def parse_config_text(text: str) -> Config:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not key=value: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FILE_KEYS:
            raise ValueError(f"unknown config key {key!r} (line {lineno})")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return Config(**values)


def load_config(path: str | Path) -> Config:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def config_text(cfg: Config) -> str:
    lines = [f"{key}={getattr(cfg, key)}" for key in FILE_KEYS]
    return "\n".join(lines) + "\n"


def save_config(cfg: Config, path: str | Path) -> None:
    Path(path).write_text(config_text(cfg), encoding="utf-8")
