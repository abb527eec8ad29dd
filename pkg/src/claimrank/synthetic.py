"""Feature-level fixture where text and audio see different check-worthy cues.

Every utterance has a *content* latent (what was said) and a *prosody*
latent (how it was said). Most check-worthy utterances are marked in
content and the rest in prosody (``content_fraction``). Text features see
content cleanly. Audio features see prosody cleanly plus a faint copy of
content spread over many noisy dimensions, so a label-only audio model
reads content poorly while a student regressed onto the text teacher's
representation can recover it. Text misses the prosody-marked positives,
which is what fusion can add back.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .align import alignment_mse, extract_teacher_reps, fit_teacher, train_aligned_student
from .corpus import Corpus, Event, Utterance, _assign_splits
from .evaluation import map_from_arrays
from .features import FeatureMatrix
from .fusion import EARLY, LATE, FusionPipeline, FusionSpec, train_fusion_head
from .nn import Checkpoint, LabeledSet, MlpSpec, TrainConfig, train_classifier


@dataclass(frozen=True)
class ComplementarySpec:
    n_events: int = 200
    n_per_event: int = 50
    positive_rate: float = 0.1
    content_fraction: float = 0.9
    content_dim: int = 8
    prosody_dim: int = 4
    text_dim: int = 24
    audio_dim: int = 256
    content_shift: float = 4.0
    prosody_shift: float = 3.0
    text_noise: float = 0.3
    audio_content_gain: float = 0.25
    audio_noise: float = 1.0
    seed: int = 0


@dataclass
class ComplementaryFixture:
    corpus: Corpus
    text: FeatureMatrix
    audio: FeatureMatrix
    channel: dict  # key -> "content" | "prosody" | None (negatives)

    def split_keys(self, split: str):
        return [u.key for u in self.corpus.utterances(split)]

    def labeled(self, modality: str, split: str) -> LabeledSet:
        fm = self.text if modality == "text" else self.audio
        utts = self.corpus.utterances(split)
        keys = [u.key for u in utts]
        return LabeledSet(fm.rows(keys), [u.label for u in utts], keys)


def _unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def complementary_fixture(spec: ComplementarySpec = ComplementarySpec()) -> ComplementaryFixture:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_events * spec.n_per_event
    labels = (rng.random(n) < spec.positive_rate).astype(int)
    via_content = rng.random(n) < spec.content_fraction
    u_c, u_q = _unit(rng, spec.content_dim), _unit(rng, spec.prosody_dim)
    z = rng.normal(size=(n, spec.content_dim))
    q = rng.normal(size=(n, spec.prosody_dim))
    z += np.outer(labels * via_content, u_c) * spec.content_shift
    q += np.outer(labels * ~via_content, u_q) * spec.prosody_shift

    mix_t = rng.normal(size=(spec.content_dim, spec.text_dim)) / np.sqrt(spec.content_dim)
    mix_ac = rng.normal(size=(spec.content_dim, spec.audio_dim)) / np.sqrt(spec.content_dim)
    mix_aq = rng.normal(size=(spec.prosody_dim, spec.audio_dim)) / np.sqrt(spec.prosody_dim)
    text = z @ mix_t + spec.text_noise * rng.normal(size=(n, spec.text_dim))
    audio = (spec.audio_content_gain * z @ mix_ac + q @ mix_aq
             + spec.audio_noise * rng.normal(size=(n, spec.audio_dim)))

    splits = _assign_splits(spec.n_events)
    events, keys, channel = [], [], {}
    for e in range(spec.n_events):
        event_id = f"cm{e + 1:03d}"
        utts = []
        for j in range(spec.n_per_event):
            i = e * spec.n_per_event + j
            utts.append(Utterance(event_id, j + 1, "SPEAKER", f"utterance {i}", int(labels[i])))
            keys.append((event_id, j + 1))
            channel[(event_id, j + 1)] = (
                ("content" if via_content[i] else "prosody") if labels[i] else None)
        events.append(Event(event_id, splits[e], tuple(utts)))
    return ComplementaryFixture(Corpus(tuple(events)), FeatureMatrix(keys, text),
                                FeatureMatrix(keys, audio), channel)


# ---------------------------------------------------------------------------
# the alignment / fusion experiment on this fixture


@dataclass(frozen=True)
class ExperimentConfig:
    hidden_dims: tuple[int, ...] = (32, 16)
    learning_rate: float = 3e-3
    lam: float = 0.75
    # Desk-scale fusion heads: a single linear layer over the fused inputs.
    fusion_hidden: tuple[int, ...] = ()
    fusion_learning_rate: float = 1e-2


@dataclass
class ExperimentResult:
    seed: int
    test_map: dict[str, float]
    dev_mse: dict[str, float]
    fingerprints: dict[str, str] = field(default_factory=dict)
    checkpoints: dict[str, Checkpoint] = field(default_factory=dict)

    @property
    def mse_ratio(self) -> float:
        return self.dev_mse["aligned"] / self.dev_mse["unaligned"]


def _test_map(ckpt: Checkpoint, data: LabeledSet) -> float:
    scores = ckpt.model().predict_proba(data.x)
    return map_from_arrays(scores, data.y, data.events, data.lines)[0]


def run_complementary_experiment(seed: int, spec: ComplementarySpec | None = None,
                                 cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Train text, audio, unaligned and aligned students, and both fusions.

    The unaligned student is the same student trained at ``lam = 0`` (head
    copied from the teacher, no alignment term). Fusion combines the text
    teacher with the label-only audio model. Teacher fingerprints are
    recorded before any student or fusion training and again afterwards.
    """
    spec = replace(spec or ComplementarySpec(), seed=seed)
    fx = complementary_fixture(spec)
    text = {s: fx.labeled("text", s) for s in ("train", "dev", "test")}
    audio = {s: fx.labeled("audio", s) for s in ("train", "dev", "test")}
    base = TrainConfig(learning_rate=cfg.learning_rate, seed=seed, lam=cfg.lam)

    teacher = fit_teacher(text["train"], text["dev"],
                          MlpSpec(spec.text_dim, cfg.hidden_dims), base)
    fp_before = teacher.fingerprint
    reps = extract_teacher_reps(teacher, fx.text)
    student_spec = MlpSpec(spec.audio_dim, cfg.hidden_dims)
    audio_only = train_classifier(audio["train"], audio["dev"], student_spec, base)
    unaligned = train_aligned_student(audio["train"], audio["dev"], teacher, reps, student_spec,
                                      replace(base, lam=0.0))
    aligned = train_aligned_student(audio["train"], audio["dev"], teacher, reps, student_spec, base)

    result = ExperimentResult(seed, {}, {})
    for name, ckpt, data in (("text", teacher.checkpoint, text), ("audio", audio_only, audio),
                             ("unaligned", unaligned, audio), ("aligned", aligned, audio)):
        result.test_map[name] = _test_map(ckpt, data["test"])
        result.checkpoints[name] = ckpt
    dev_keys = audio["dev"].keys
    result.dev_mse["unaligned"] = alignment_mse(unaligned, reps, fx.audio, dev_keys)
    result.dev_mse["aligned"] = alignment_mse(aligned, reps, fx.audio, dev_keys)

    head_cfg = TrainConfig(learning_rate=cfg.fusion_learning_rate, seed=seed)
    for mode in (EARLY, LATE):
        pipe = FusionPipeline(mode, teacher.checkpoint, audio_only)
        fused = {s: pipe.labeled(fx.text, fx.audio, text[s].keys, text[s].y) for s in text}
        head = train_fusion_head(fused["train"], fused["dev"],
                                 FusionSpec(mode, cfg.fusion_hidden, 0.0, head_cfg))
        result.test_map[mode] = _test_map(head, fused["test"])
        result.checkpoints[mode] = head

    teacher.verify()
    result.fingerprints = {"teacher_before": fp_before,
                           "teacher_after": teacher.checkpoint.fingerprint(),
                           "teacher_head": teacher.checkpoint.head_bytes().hex(),
                           "aligned_head": aligned.head_bytes().hex()}
    return result
