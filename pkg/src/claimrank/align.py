"""Teacher-student alignment of audio representations to a text classifier.

The text teacher is trained normally and then frozen. The audio student is
trained on two objectives over one forward pass: the MSE between its
representation and the teacher's representation of the same utterance, and
cross-entropy through the teacher's own classification head, which is
copied in and never updated. ``lam`` weights the alignment term; the
classification term gets ``1 - lam``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ClaimrankError, ConfigError, ValidationError
from .features import FeatureMatrix
from .nn import (Checkpoint, Composite, LabeledSet, Mlp, MlpSpec, TrainConfig, mse_loss,
                 train_classifier)


class TeacherDriftError(ClaimrankError):
    """The frozen teacher's parameters changed."""


@dataclass
class TeacherBundle:
    checkpoint: Checkpoint
    fingerprint: str

    @classmethod
    def freeze(cls, checkpoint: Checkpoint) -> "TeacherBundle":
        fp = checkpoint.fingerprint()
        checkpoint.meta = dict(checkpoint.meta, role="teacher", teacher_fingerprint=fp)
        for p in checkpoint.params:
            p.setflags(write=False)
        return cls(checkpoint, fp)

    @property
    def spec(self) -> MlpSpec:
        return self.checkpoint.spec

    @property
    def rep_dim(self) -> int:
        return self.checkpoint.spec.rep_dim

    @property
    def head(self) -> list[np.ndarray]:
        return self.checkpoint.params[-2:]

    def model(self) -> Mlp:
        return self.checkpoint.model()

    def verify(self) -> None:
        now = self.checkpoint.fingerprint()
        if now != self.fingerprint:
            raise TeacherDriftError(f"teacher fingerprint drifted: {self.fingerprint} -> {now}")

    def save(self, path) -> None:
        self.checkpoint.save(path)

    @classmethod
    def load(cls, path) -> "TeacherBundle":
        ckpt = Checkpoint.load(path)
        stored = ckpt.meta.get("teacher_fingerprint")
        if stored is None:
            raise ValidationError(f"{path}: checkpoint is not a teacher bundle")
        bundle = cls.freeze(ckpt)
        if bundle.fingerprint != stored:
            raise TeacherDriftError(f"{path}: stored fingerprint does not match weights")
        return bundle


def fit_teacher(train: LabeledSet, dev: LabeledSet, spec: MlpSpec, config: TrainConfig) -> TeacherBundle:
    if not spec.hidden_dims:
        raise ConfigError("teacher needs at least one hidden layer to provide a representation")
    return TeacherBundle.freeze(train_classifier(train, dev, spec, config, "ce"))


def extract_teacher_reps(teacher: TeacherBundle, text: FeatureMatrix,
                         keys: Sequence[tuple[str, int]] | None = None) -> FeatureMatrix:
    """Eval-mode teacher representations, one row per key (default: all rows)."""
    keys = list(text.keys) if keys is None else list(keys)
    reps = teacher.model().represent(text.rows(keys)) if keys else np.zeros((0, teacher.rep_dim))
    return FeatureMatrix(keys, reps)


def student_init(spec: MlpSpec, teacher: TeacherBundle, seed: int) -> Mlp:
    # Separate stream from the trainer's so init does not mirror the shuffle order.
    model = Mlp.init(spec, np.random.default_rng([seed, 1]))
    model.params[-2] = teacher.head[0].astype(np.float64)
    model.params[-1] = teacher.head[1].astype(np.float64)
    return model


def train_aligned_student(train: LabeledSet, dev: LabeledSet, teacher: TeacherBundle,
                          teacher_reps: FeatureMatrix, spec: MlpSpec, config: TrainConfig,
                          on_epoch=None) -> Checkpoint:
    """Train an audio student against the frozen teacher with weight ``config.lam``.

    ``train``/``dev`` hold audio features; ``teacher_reps`` must cover every
    training key. Only the student's encoder is updated.
    """
    if spec.rep_dim != teacher.rep_dim:
        raise ConfigError(f"student rep_dim {spec.rep_dim} != teacher rep_dim {teacher.rep_dim}")
    if spec.n_classes != teacher.spec.n_classes:
        raise ConfigError("student and teacher disagree on the number of classes")
    teacher.verify()
    targets = teacher_reps.rows(train.keys)
    init = student_init(spec, teacher, config.seed)
    trainable = [True] * (len(init.params) - 2) + [False, False]
    ckpt = train_classifier(
        train, dev, spec, config, Composite(targets, config.lam), init=init, trainable=trainable,
        meta={"role": "aligned-student", "teacher_fingerprint": teacher.fingerprint,
              "lambda": config.lam},
        on_epoch=on_epoch,
    )
    teacher.verify()
    if ckpt.head_bytes() != teacher.checkpoint.head_bytes():
        raise TeacherDriftError("student head no longer matches the teacher head")
    return ckpt


def alignment_mse(student, teacher_reps: FeatureMatrix, audio: FeatureMatrix,
                  keys: Sequence[tuple[str, int]] | None = None) -> float:
    """Eval-mode MSE between student and teacher representations over ``keys``."""
    model = student.model() if isinstance(student, Checkpoint) else student
    keys = list(teacher_reps.keys) if keys is None else list(keys)
    return mse_loss(model.represent(audio.rows(keys)), teacher_reps.rows(keys))


def save_teacher_reps(reps: FeatureMatrix, path) -> None:
    from .features import write_feature_csv
    write_feature_csv(reps, Path(path))
