"""Run configuration: ``key=value`` files plus command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .align import AlignConfig
from .anchors import DATASET_ANCHOR_DIMS, AnchorConfig
from .data_io import SynthConfig
from .errors import ConfigError

DEFAULT_ANCHOR_DIM = 16


@dataclass
class RunConfig:
    # anchor stage
    alpha: float = 0.8
    p: int = 2
    anchor_dim: int = 0  # 0: take it from dataset_name, else DEFAULT_ANCHOR_DIM
    dataset_name: str = ""
    anchor_epochs: int = 1000
    anchor_lr: float = 1e-2
    hidden_activation: str = "tanh"
    output_activation: str = "linear"
    anchor_extra_layers: str = ""
    normalize_anchors: bool = False
    pca_anchors: bool = False
    # alignment stage
    align_epochs: int = 3
    align_lr: float = 3e-2
    batch_size: int = 64
    lambda1: float = 1.0
    lambda2: float = 5e-6
    no_reg: bool = False
    tied_weights: bool = True
    cosine_scores: bool = False
    raw_loss: bool = False
    # evaluation
    holdout: float = 0.2
    drop_empty: bool = False
    mode: str = "conventional"
    alphas: str = "0,0.2,0.4,0.6,0.8,0.9"
    repeats: int = 1
    # data
    seed: int = 0
    drop_empty_attrs: bool = False
    synth_classes: int = 20
    synth_attrs: int = 30
    synth_samples: int = 50
    synth_noise: float = 0.05
    synth_density: float = 0.5
    synth_feature_dim: int = 64
    synth_unseen: int = 0

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.p < 0:
            raise ConfigError("p must be >= 0")
        if self.anchor_epochs < 1 or self.align_epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if not 0.0 <= self.holdout < 1.0:
            raise ConfigError("holdout must lie in [0, 1)")
        if self.mode not in ("conventional", "generalized"):
            raise ConfigError(f"mode must be conventional or generalized, got {self.mode!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.dataset_name and self.dataset_name.lower() not in DATASET_ANCHOR_DIMS:
            raise ConfigError(f"unknown dataset_name {self.dataset_name!r}; "
                              f"known: {sorted(DATASET_ANCHOR_DIMS)}")
        self.alpha_list()
        self.extra_layers()
        return self

    def resolved_anchor_dim(self) -> int:
        if self.anchor_dim:
            return self.anchor_dim
        if self.dataset_name:
            return DATASET_ANCHOR_DIMS[self.dataset_name.lower()]
        return DEFAULT_ANCHOR_DIM

    def extra_layers(self) -> tuple[int, ...]:
        try:
            return tuple(int(t) for t in self.anchor_extra_layers.split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"anchor_extra_layers must be comma separated ints") from None

    def alpha_list(self) -> list[float]:
        try:
            vals = [float(t) for t in self.alphas.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"alphas must be comma separated numbers, got {self.alphas!r}") from None
        if not vals or any(not 0.0 <= a < 1.0 for a in vals):
            raise ConfigError("every sweep alpha must lie in [0, 1)")
        return vals

    def anchor_config(self) -> AnchorConfig:
        return AnchorConfig(dim=self.resolved_anchor_dim(), epochs=self.anchor_epochs,
                            lr=self.anchor_lr, alpha=self.alpha, p=self.p,
                            hidden_activation=self.hidden_activation,
                            output_activation=self.output_activation,
                            extra_layers=self.extra_layers(), normalize=self.normalize_anchors)

    def align_config(self) -> AlignConfig:
        return AlignConfig(epochs=self.align_epochs, lr=self.align_lr, batch_size=self.batch_size,
                           lambda1=self.lambda1, lambda2=self.lambda2, reg_enabled=not self.no_reg,
                           tied_weights=self.tied_weights, normalize_loss=not self.raw_loss,
                           cosine_scores=self.cosine_scores)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(num_classes=self.synth_classes, num_attrs=self.synth_attrs,
                           samples_per_class=self.synth_samples, noise=self.synth_noise,
                           density=self.synth_density, feature_dim=self.synth_feature_dim,
                           num_unseen=self.synth_unseen or None, seed=self.seed)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, FIELD_TYPES[key], val)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then ``overrides`` (raw strings or typed values) on top."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        values.update(parse_config_text(p.read_text(), str(p)))
    for key, val in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, FIELD_TYPES[key], val) if isinstance(val, str) else val
    return RunConfig(**values).validate()
