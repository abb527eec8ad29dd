import numpy as np
import pytest

from claimrank.align import (TeacherBundle, TeacherDriftError, alignment_mse, extract_teacher_reps,
                             fit_teacher, save_teacher_reps, student_init, train_aligned_student)
from claimrank.errors import ConfigError, ValidationError
from claimrank.features import read_feature_csv
from claimrank.nn import Checkpoint, Mlp, MlpSpec, TrainConfig
from claimrank.synthetic import ComplementarySpec, complementary_fixture

SMALL = ComplementarySpec(n_events=20, n_per_event=20, audio_dim=32, positive_rate=0.2, seed=3)


@pytest.fixture(scope="module")
def setup():
    fx = complementary_fixture(SMALL)
    cfg = TrainConfig(learning_rate=3e-3, epochs=4, seed=3)
    teacher = fit_teacher(fx.labeled("text", "train"), fx.labeled("text", "dev"),
                          MlpSpec(SMALL.text_dim, (8, 4)), cfg)
    return fx, teacher, extract_teacher_reps(teacher, fx.text), cfg


def test_teacher_is_read_only(setup):
    _, teacher, _, _ = setup
    with pytest.raises(ValueError):
        teacher.checkpoint.params[0][0, 0] = 1.0
    teacher.verify()
    assert teacher.checkpoint.meta["teacher_fingerprint"] == teacher.fingerprint


def test_student_keeps_teacher_head_and_teacher_is_untouched(setup):
    fx, teacher, reps, cfg = setup
    before = teacher.checkpoint.fingerprint()
    student = train_aligned_student(fx.labeled("audio", "train"), fx.labeled("audio", "dev"),
                                    teacher, reps, MlpSpec(SMALL.audio_dim, (8, 4)), cfg)
    assert student.head_bytes() == teacher.checkpoint.head_bytes()
    assert teacher.checkpoint.fingerprint() == before
    assert student.meta["teacher_fingerprint"] == before and student.meta["lambda"] == 0.75


def test_alignment_lowers_representation_mse(setup):
    fx, teacher, reps, cfg = setup
    spec = MlpSpec(SMALL.audio_dim, (8, 4))
    train, dev = fx.labeled("audio", "train"), fx.labeled("audio", "dev")
    plain = train_aligned_student(train, dev, teacher, reps, spec, TrainConfig(
        learning_rate=3e-3, epochs=4, seed=3, lam=0.0))
    aligned = train_aligned_student(train, dev, teacher, reps, spec, TrainConfig(
        learning_rate=3e-3, epochs=4, seed=3, lam=1.0))
    assert alignment_mse(aligned, reps, fx.audio, dev.keys) < alignment_mse(plain, reps, fx.audio, dev.keys)


def test_rep_dim_mismatch_is_a_config_error(setup):
    fx, teacher, reps, cfg = setup
    with pytest.raises(ConfigError, match="rep_dim"):
        train_aligned_student(fx.labeled("audio", "train"), fx.labeled("audio", "dev"), teacher, reps,
                              MlpSpec(SMALL.audio_dim, (8, 5)), cfg)
    with pytest.raises(ConfigError):
        fit_teacher(fx.labeled("text", "train"), fx.labeled("text", "dev"), MlpSpec(SMALL.text_dim), cfg)


def test_student_init_copies_head(setup):
    _, teacher, _, _ = setup
    m = student_init(MlpSpec(SMALL.audio_dim, (8, 4)), teacher, seed=0)
    assert np.array_equal(m.params[-2], teacher.head[0].astype(np.float64))
    assert np.array_equal(m.params[-1], teacher.head[1].astype(np.float64))


def test_drift_is_detected(setup):
    _, teacher, _, _ = setup
    clone = Checkpoint(teacher.spec, teacher.checkpoint.config,
                       [p.copy() for p in teacher.checkpoint.params])
    bundle = TeacherBundle.freeze(clone)
    bundle.checkpoint.params[0] = bundle.checkpoint.params[0] + 1.0
    with pytest.raises(TeacherDriftError):
        bundle.verify()


def test_bundle_save_load(tmp_path, setup):
    fx, teacher, reps, _ = setup
    teacher.save(tmp_path / "t.ckpt")
    back = TeacherBundle.load(tmp_path / "t.ckpt")
    assert back.fingerprint == teacher.fingerprint
    spec = MlpSpec(3, (2,))
    Checkpoint(spec, TrainConfig(), Mlp.init(spec, np.random.default_rng(0)).params).save(tmp_path / "p.ckpt")
    with pytest.raises(ValidationError, match="not a teacher"):
        TeacherBundle.load(tmp_path / "p.ckpt")
    save_teacher_reps(reps, tmp_path / "reps.csv")
    assert read_feature_csv(tmp_path / "reps.csv").dim == teacher.rep_dim
