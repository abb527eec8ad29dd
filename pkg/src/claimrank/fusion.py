"""Early and late fusion of a text model and an audio model."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .evaluation import Prediction
from .features import FeatureMatrix
from .nn import Checkpoint, LabeledSet, MlpSpec, TrainConfig, train_classifier

EARLY, LATE = "early", "late"


@dataclass(frozen=True)
class FusionSpec:
    mode: str
    hidden_dims: tuple[int, ...] = (6, 6)
    dropout: float = 0.0
    config: TrainConfig = field(default_factory=TrainConfig)
    # (text projection, audio projection); early mode only.
    projection_dims: tuple[int | None, int | None] = (None, None)

    def __post_init__(self):
        if self.mode not in (EARLY, LATE):
            raise ConfigError(f"fusion mode must be 'early' or 'late', got {self.mode!r}")
        if self.mode == LATE and any(p is not None for p in self.projection_dims):
            raise ConfigError("late fusion takes no projection")

    def head_spec(self, text_dim: int, audio_dim: int) -> MlpSpec:
        if self.mode == LATE:
            return MlpSpec(2, self.hidden_dims, 2, self.dropout)
        blocks = ((text_dim, self.projection_dims[0]), (audio_dim, self.projection_dims[1]))
        if all(p is None for _, p in blocks):
            blocks = ()
        return MlpSpec(text_dim + audio_dim, self.hidden_dims, 2, self.dropout, blocks)


# Ensemble heads: hidden sizes, dropout, learning rate and optional audio projection.
FUSION_PRESETS = {
    "early-large": FusionSpec(EARLY, (256, 64), 0.1, TrainConfig(learning_rate=1e-3),
                              (None, 256)),
    "late-small": FusionSpec(LATE, (6, 6), 0.0, TrainConfig(learning_rate=1e-3)),
    "early-wide": FusionSpec(EARLY, (512, 256), 0.4, TrainConfig(learning_rate=1e-4)),
    "late-small-aligned": FusionSpec(LATE, (6, 6), 0.0, TrainConfig(learning_rate=1e-3)),
}


def preset(name: str, **overrides) -> FusionSpec:
    try:
        spec = FUSION_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown fusion preset {name!r}; choose from {sorted(FUSION_PRESETS)}") from None
    cfg_over = {k: overrides.pop(k) for k in list(overrides) if k in TrainConfig.__dataclass_fields__}
    if cfg_over:
        overrides["config"] = replace(spec.config, **cfg_over)
    return replace(spec, **overrides)


def early_fuse(text_rep, audio_rep, projections=(None, None)) -> np.ndarray:
    """Concatenate (optionally linearly projected) representations.

    Works on single vectors or on row-aligned matrices. Each projection is a
    ``(weight, bias)`` pair or ``None``.
    """
    parts = []
    for rep, proj in zip((text_rep, audio_rep), projections):
        rep = np.asarray(rep, dtype=np.float64)
        if proj is not None:
            W, b = proj
            if rep.shape[-1] != W.shape[0]:
                raise ShapeError(f"representation width {rep.shape[-1]} != projection input {W.shape[0]}")
            rep = rep @ W + b
        parts.append(rep)
    if parts[0].ndim != parts[1].ndim or (parts[0].ndim == 2 and len(parts[0]) != len(parts[1])):
        raise ShapeError("text and audio representations are not row-aligned")
    return np.concatenate(parts, axis=-1)


def late_fuse(conf_text, conf_audio) -> np.ndarray:
    """Stack class-1 confidences as ``(text, audio)``."""
    t = np.asarray(conf_text, dtype=np.float64)
    a = np.asarray(conf_audio, dtype=np.float64)
    for name, v in (("text", t), ("audio", a)):
        if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
            raise ValidationError(f"{name} confidence outside [0, 1]")
    return np.stack([t, a], axis=-1)


def fused_features(mode: str, text_ckpt: Checkpoint, audio_ckpt: Checkpoint,
                   text_x: np.ndarray, audio_x: np.ndarray) -> np.ndarray:
    """Inputs for a fusion head from frozen base models (eval mode)."""
    tm, am = text_ckpt.model(), audio_ckpt.model()
    if mode == EARLY:
        return early_fuse(tm.represent(text_x), am.represent(audio_x))
    if mode == LATE:
        return late_fuse(tm.predict_proba(text_x), am.predict_proba(audio_x))
    raise ConfigError(f"unknown fusion mode {mode!r}")


@dataclass
class FusionPipeline:
    mode: str
    text: Checkpoint
    audio: Checkpoint
    head: Checkpoint | None = None

    def features(self, text: FeatureMatrix, audio: FeatureMatrix, keys) -> np.ndarray:
        keys = list(keys)
        return fused_features(self.mode, self.text, self.audio, text.rows(keys), audio.rows(keys))

    def labeled(self, text: FeatureMatrix, audio: FeatureMatrix, keys, labels) -> LabeledSet:
        return LabeledSet(self.features(text, audio, keys), labels, list(keys))

    def fingerprints(self) -> tuple[str, str]:
        return self.text.fingerprint(), self.audio.fingerprint()


def train_fusion_head(train: LabeledSet, dev: LabeledSet, spec: FusionSpec,
                      text_dim: int | None = None, audio_dim: int | None = None) -> Checkpoint:
    """Fit the fusion head on precomputed fused vectors with dev-MAP selection."""
    width = train.x.shape[1]
    if spec.mode == LATE:
        if width != 2:
            raise ShapeError(f"late fusion expects 2 inputs, got {width}")
        head = spec.head_spec(1, 1)
    else:
        if text_dim is None or audio_dim is None:
            if any(p is not None for p in spec.projection_dims):
                raise ConfigError("early fusion with projection needs text_dim and audio_dim")
            text_dim, audio_dim = width, 0
        if text_dim + audio_dim != width:
            raise ShapeError(f"declared widths {text_dim}+{audio_dim} != fused width {width}")
        head = (spec.head_spec(text_dim, audio_dim) if audio_dim
                else MlpSpec(width, spec.hidden_dims, 2, spec.dropout))
    return train_classifier(train, dev, head, spec.config, "ce",
                            meta={"role": "fusion-head", "mode": spec.mode})


def predict_fused(pipeline: FusionPipeline, text: FeatureMatrix, audio: FeatureMatrix,
                  keys) -> list[Prediction]:
    if pipeline.head is None:
        raise ValidationError("fusion pipeline has no trained head")
    keys = list(keys)
    scores = pipeline.head.model().predict_proba(pipeline.features(text, audio, keys))
    return [Prediction(e, l, float(s)) for (e, l), s in zip(keys, scores)]
