import hashlib
import json

import numpy as np
import pytest

from claimrank.cli import EXIT_INVALID, EXIT_IO, EXIT_NUMERIC, EXIT_OK, build_parser, run
from claimrank.corpus import load_corpus
from claimrank.features import FeatureMatrix, read_feature_csv, write_feature_csv
from claimrank.nn import Checkpoint


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def ok(*argv):
    assert run([str(a) for a in argv]) == EXIT_OK


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    ok("fixture", "--out", root / "corpus", "--events", 5, "--sentences", 16, "--audio", "--seed", 2)
    return root


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--help"])
    text = capsys.readouterr().out
    for fragment in ("default: 15", "default: 0.02", "default: 32"):
        assert fragment in text


def test_variant_reproduces_published_counts(tmp_path, capsys):
    ok("fixture", "--kind", "full-scale", "--out", tmp_path / "c")
    capsys.readouterr()
    ok("variant", "--corpus", tmp_path / "c", "--kind", "x15")
    assert capsys.readouterr().out.strip() == "x15: 34970 rows, 6672 check-worthy (19.08%)"
    files = sorted((tmp_path / "c" / "variants").glob("*.x15.tsv"))
    assert len(files) == 38


def test_stats_and_filter_speaker(toy, tmp_path, capsys):
    ok("stats", "--corpus", toy / "corpus")
    assert "train" in capsys.readouterr().out
    corpus = load_corpus(toy / "corpus")
    speaker = corpus.events[0].utterances[0].speaker
    ok("filter-speaker", "--corpus", toy / "corpus", "--speaker", speaker, "--out", tmp_path / "f")
    kept = load_corpus(tmp_path / "f")
    assert {u.speaker for u in kept.utterances()} == {speaker}
    assert (tmp_path / "f" / "segments.tsv").exists()


def test_audio_commands(toy, tmp_path):
    ok("denoise", "--corpus", toy / "corpus")
    ok("segment", "--corpus", toy / "corpus", "--out", tmp_path / "segs")
    assert len(list((tmp_path / "segs").rglob("*.wav"))) == 5 * 16
    ok("features", "--corpus", toy / "corpus", "--kind", "mfcc", "--out", tmp_path / "m.csv")
    fm = read_feature_csv(tmp_path / "m.csv")
    assert fm.dim == 26 and len(fm) == 80
    train_rows = fm.rows([u.key for u in load_corpus(toy / "corpus").utterances("train")])
    assert np.allclose(train_rows.mean(axis=0), 0.0, atol=1e-6)


def test_train_predict_eval_deterministic(toy, tmp_path):
    ok("features", "--corpus", toy / "corpus", "--out", tmp_path / "f.csv")
    for name in ("a", "b"):
        ok("train", "--corpus", toy / "corpus", "--features", tmp_path / "f.csv", "--epochs", 3,
           "--seed", 7, "--out", tmp_path / f"{name}.ckpt")
    assert sha(tmp_path / "a.ckpt") == sha(tmp_path / "b.ckpt")
    ok("predict", "--corpus", toy / "corpus", "--ckpt", tmp_path / "a.ckpt", "--features",
       tmp_path / "f.csv", "--out", tmp_path / "p.tsv")
    ok("eval", "--corpus", toy / "corpus", "--predictions", tmp_path / "p.tsv", "--out",
       tmp_path / "r.json", "--run-id", "tfidf")
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["metadata"]["run_id"] == "tfidf"
    assert 0.0 <= report["map"] <= 1.0
    log = [json.loads(l) for l in (tmp_path / "run.log").read_text().splitlines()]
    assert [e["command"] for e in log][-2:] == ["predict", "eval"]
    assert all({"config_hash", "seed", "inputs", "outputs"} <= set(e) for e in log)


def test_eval_names_missing_prediction(toy, tmp_path, capsys):
    corpus = load_corpus(toy / "corpus")
    keys = [u.key for u in corpus.utterances("test")]
    (tmp_path / "p.tsv").write_text("".join(f"{e}\t{l}\t0.5\n" for e, l in keys[1:]))
    code = run(["eval", "--corpus", str(toy / "corpus"), "--predictions", str(tmp_path / "p.tsv")])
    assert code == EXIT_INVALID
    assert repr(keys[0]) in capsys.readouterr().err


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert run(["stats", "--corpus", str(tmp_path / "missing")]) == EXIT_IO
    assert run(["stats", "--bogus"]) == EXIT_INVALID
    assert run(["gradcheck", "--tol", "1e-30"]) == EXIT_NUMERIC
    monkeypatch.setenv("CLAIMRANK_THREADS", "0")
    assert run(["gradcheck", "--loss", "ce"]) == EXIT_INVALID


def test_nan_features_exit_numeric(toy, tmp_path):
    corpus = load_corpus(toy / "corpus")
    keys = [u.key for u in corpus.utterances()]
    values = np.ones((len(keys), 3))
    values[0, 0] = np.nan
    write_feature_csv(FeatureMatrix(keys, values), tmp_path / "nan.csv")
    code = run(["train", "--corpus", str(toy / "corpus"), "--features", str(tmp_path / "nan.csv"),
                "--epochs", "1", "--out", str(tmp_path / "m.ckpt")])
    assert code == EXIT_NUMERIC


def test_config_file_with_flag_override(toy, tmp_path):
    ok("features", "--corpus", toy / "corpus", "--out", tmp_path / "f.csv")
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[run]\nseed = 5\n[train]\ncorpus = {toy / 'corpus'}\nepochs = 2\nlr = 0.01\n")
    ok("train", "--config", cfg, "--features", tmp_path / "f.csv", "--epochs", 1, "--out", tmp_path / "m.ckpt")
    ckpt = Checkpoint.load(tmp_path / "m.ckpt")
    assert (ckpt.config.seed, ckpt.config.epochs, ckpt.config.learning_rate) == (5, 1, 0.01)
    cfg.write_text("[train]\nnot_a_flag = 1\n")
    assert run(["train", "--config", str(cfg), "--corpus", "x", "--features", "y", "--out", "z"]) == EXIT_INVALID


def test_teacher_align_fuse_commands(tmp_path):
    ok("fixture", "--kind", "complementary", "--events", 20, "--sentences", 20, "--positive-rate", 0.2,
       "--out", tmp_path / "c")
    c = tmp_path / "c"
    small = ["--hidden", "8,4", "--epochs", 2, "--lr", 3e-3]
    ok("train", "--corpus", c, "--features", c / "text_features.csv", "--teacher", *small,
       "--out", tmp_path / "teacher.ckpt")
    ok("train", "--corpus", c, "--features", c / "audio_features.csv", *small, "--out", tmp_path / "audio.ckpt")
    before = sha(tmp_path / "teacher.ckpt")
    ok("align", "--corpus", c, "--teacher", tmp_path / "teacher.ckpt", "--text-features",
       c / "text_features.csv", "--audio-features", c / "audio_features.csv", *small,
       "--out", tmp_path / "student.ckpt")
    teacher, student = Checkpoint.load(tmp_path / "teacher.ckpt"), Checkpoint.load(tmp_path / "student.ckpt")
    assert student.head_bytes() == teacher.head_bytes()
    ok("fuse", "--corpus", c, "--preset", "late-small", "--text-ckpt", tmp_path / "teacher.ckpt",
       "--audio-ckpt", tmp_path / "audio.ckpt", "--text-features", c / "text_features.csv",
       "--audio-features", c / "audio_features.csv", "--epochs", 2, "--out", tmp_path / "head.ckpt")
    assert sha(tmp_path / "teacher.ckpt") == before
    ok("predict", "--corpus", c, "--head", tmp_path / "head.ckpt", "--text-ckpt", tmp_path / "teacher.ckpt",
       "--audio-ckpt", tmp_path / "audio.ckpt", "--text-features", c / "text_features.csv",
       "--audio-features", c / "audio_features.csv", "--out", tmp_path / "p.tsv")
    ok("eval", "--corpus", c, "--predictions", tmp_path / "p.tsv", "--out", tmp_path / "late.json")
    ok("report", f"late={tmp_path / 'late.json'}", "--out", tmp_path / "table.txt")
    assert "late" in (tmp_path / "table.txt").read_text()
