import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimrank.errors import ConfigError, ShapeError, ValidationError
from claimrank.evaluation import map_from_arrays
from claimrank.fusion import (EARLY, FUSION_PRESETS, LATE, FusionPipeline, FusionSpec, early_fuse,
                              late_fuse, predict_fused, preset, train_fusion_head)
from claimrank.nn import Checkpoint, LabeledSet, Mlp, MlpSpec, TrainConfig, train_classifier
from claimrank.synthetic import ComplementarySpec, complementary_fixture

SMALL = ComplementarySpec(n_events=20, n_per_event=20, audio_dim=32, positive_rate=0.2, seed=5)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 8), st.integers(1, 8))
def test_early_fuse_concatenates(n, dt, da):
    rng = np.random.default_rng(n * 100 + dt * 10 + da)
    t, a = rng.normal(size=(n, dt)), rng.normal(size=(n, da))
    out = early_fuse(t, a)
    assert out.shape == (n, dt + da)
    assert np.array_equal(out[:, :dt], t) and np.array_equal(out[:, dt:], a)


def test_early_fuse_projection_and_errors(rng):
    W, b = rng.normal(size=(3, 2)), np.array([1.0, -1.0])
    t, a = rng.normal(size=(4, 5)), rng.normal(size=(4, 3))
    out = early_fuse(t, a, (None, (W, b)))
    assert np.allclose(out[:, 5:], a @ W + b)
    assert early_fuse(t[0], a[0]).shape == (8,)
    with pytest.raises(ShapeError):
        early_fuse(t, a[:3])
    with pytest.raises(ShapeError):
        early_fuse(t, a, ((W, b), None))


def test_late_fuse_order_and_range():
    assert late_fuse([0.9, 0.1], [0.2, 0.3]).tolist() == [[0.9, 0.2], [0.1, 0.3]]
    with pytest.raises(ValidationError, match="audio"):
        late_fuse([0.5], [1.5])
    with pytest.raises(ValidationError):
        late_fuse([float("nan")], [0.5])


def test_identity_like_late_head_reproduces_text_ranking(rng):
    conf_t, conf_a = rng.random(40), rng.random(40)
    labels = (rng.random(40) < 0.3).astype(int)
    labels[0] = 1
    head = Mlp(MlpSpec(2), [np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2)])
    fused = head.predict_proba(late_fuse(conf_t, conf_a))
    events, lines = ["e"] * 40, list(range(1, 41))
    assert np.array_equal(np.argsort(-fused, kind="stable"), np.argsort(-conf_t, kind="stable"))
    assert map_from_arrays(fused, labels, events, lines)[0] == map_from_arrays(conf_t, labels, events, lines)[0]


def test_presets_carry_published_hyperparameters():
    big = FUSION_PRESETS["early-large"]
    assert (big.hidden_dims, big.dropout, big.config.learning_rate, big.projection_dims) == (
        (256, 64), 0.1, 1e-3, (None, 256))
    assert FUSION_PRESETS["late-small"].hidden_dims == (6, 6)
    wide = FUSION_PRESETS["early-wide"]
    assert (wide.hidden_dims, wide.config.learning_rate) == ((512, 256), 1e-4)
    assert preset("late-small", seed=4, epochs=3).config.seed == 4
    with pytest.raises(ConfigError):
        preset("nope")
    with pytest.raises(ConfigError):
        FusionSpec("middle")
    with pytest.raises(ConfigError):
        FusionSpec(LATE, projection_dims=(None, 4))


@pytest.fixture(scope="module")
def bases():
    fx = complementary_fixture(SMALL)
    cfg = TrainConfig(learning_rate=3e-3, epochs=3, seed=5)
    t = train_classifier(fx.labeled("text", "train"), fx.labeled("text", "dev"),
                         MlpSpec(SMALL.text_dim, (8, 4)), cfg)
    a = train_classifier(fx.labeled("audio", "train"), fx.labeled("audio", "dev"),
                         MlpSpec(SMALL.audio_dim, (8, 4)), cfg)
    return fx, t, a


@pytest.mark.parametrize("mode, width", [(EARLY, 8), (LATE, 2)])
def test_head_training_leaves_bases_frozen(bases, mode, width):
    fx, t, a = bases
    pipe = FusionPipeline(mode, t, a)
    before = pipe.fingerprints()
    sets = {s: pipe.labeled(fx.text, fx.audio, fx.split_keys(s),
                            [u.label for u in fx.corpus.utterances(s)]) for s in ("train", "dev")}
    assert sets["train"].x.shape[1] == width
    pipe.head = train_fusion_head(sets["train"], sets["dev"],
                                  FusionSpec(mode, (4,), 0.0, TrainConfig(epochs=2, seed=1)))
    assert pipe.fingerprints() == before
    preds = predict_fused(pipe, fx.text, fx.audio, fx.split_keys("test"))
    assert len(preds) == len(fx.split_keys("test"))
    assert all(0.0 <= p.score <= 1.0 for p in preds)


def test_early_projection_needs_widths(bases):
    fx, t, a = bases
    pipe = FusionPipeline(EARLY, t, a)
    keys = fx.split_keys("dev")
    data = pipe.labeled(fx.text, fx.audio, keys, [0] * len(keys))
    spec = FusionSpec(EARLY, (4,), 0.0, TrainConfig(epochs=1), (None, 2))
    with pytest.raises(ConfigError):
        train_fusion_head(data, data, spec)
    with pytest.raises(ShapeError):
        train_fusion_head(data, data, spec, 3, 4)
    with pytest.raises(ValidationError):
        predict_fused(pipe, fx.text, fx.audio, keys)
