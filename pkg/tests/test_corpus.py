import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimrank.corpus import (FULL_SCALE_SPLITS, Corpus, Event, FixtureSpec, SegmentRef, Utterance,
                              compute_stats, filter_speaker, format_transcript, generate_fixture,
                              load_corpus, load_manifest, load_segment_map, load_transcript,
                              load_variant_rows, full_scale_fixture, write_corpus,
                              write_segment_map)
from claimrank.errors import ParseError, ValidationError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_transcript_parses_and_trims(tmp_path):
    p = write(tmp_path, "d1.tsv", "1\tTRUMP \tWe built  a wall.\t1\n2\t CLINTON\tThank you.\t0\n\n")
    ev = load_transcript(p, split="dev")
    assert ev.event_id == "d1"
    assert ev.split == "dev"
    assert [u.speaker for u in ev.utterances] == ["TRUMP", "CLINTON"]
    assert ev.utterances[0].text == "We built  a wall."
    assert [u.label for u in ev.utterances] == [1, 0]


@pytest.mark.parametrize("body, fragment", [
    ("1\tA\ttext\n", "expected 4"),
    ("x\tA\ttext\t0\n", "not an integer"),
    ("1\tA\ttext\t2\n", "label"),
    ("1\t \ttext\t0\n", "empty speaker"),
])
def test_load_transcript_row_errors_name_the_line(tmp_path, body, fragment):
    p = write(tmp_path, "e.tsv", "1\tA\tfine\t0\n".replace("1\t", "0\t", 0) + body.replace("1\t", "2\t", 1))
    with pytest.raises(ParseError, match=fragment) as info:
        load_transcript(p)
    assert info.value.line == 2


def test_load_transcript_rejects_duplicates_and_empty(tmp_path):
    with pytest.raises(ValidationError, match="duplicate line_no"):
        load_transcript(write(tmp_path, "a.tsv", "1\tA\tx\t0\n1\tA\ty\t0\n"))
    with pytest.raises(ValidationError, match="must increase"):
        load_transcript(write(tmp_path, "b.tsv", "2\tA\tx\t0\n1\tA\ty\t0\n"))
    with pytest.raises(ValidationError, match="no utterances"):
        load_transcript(write(tmp_path, "c.tsv", "\n\n"))


def test_variant_rows_allow_repeats(tmp_path):
    p = write(tmp_path, "a.x15.tsv", "1\tA\tx\t1\n1\tA\tx\t1\n")
    rows = load_variant_rows(p)
    assert len(rows) == 2 and rows[0].event_id == "a"


def test_format_transcript_rejects_tabs():
    with pytest.raises(ValidationError):
        format_transcript([Utterance("e", 1, "A", "bad\ttext", 0)])


def test_event_validates_split_and_content():
    with pytest.raises(ValidationError):
        Event("e", "holdout", (Utterance("e", 1, "A", "x", 0),))
    with pytest.raises(ValidationError):
        Event("e", "train", ())


def test_corpus_roundtrip(tmp_path, small_corpus):
    write_corpus(small_corpus, tmp_path / "c")
    back = load_corpus(tmp_path / "c")
    assert back == small_corpus
    assert [e.event_id for e in back.split("train")] == ["e1", "e2"]


def test_manifest_errors(tmp_path):
    with pytest.raises(ParseError, match="unknown split"):
        load_manifest(write(tmp_path, "m.tsv", "e1\tvalidation\n"))
    with pytest.raises(ValidationError, match="twice"):
        load_manifest(write(tmp_path, "m2.tsv", "e1\ttrain\ne1\tdev\n"))


def test_segment_map_validation(tmp_path, small_corpus):
    ok = write(tmp_path, "s.tsv", "e1\t1\taudio/e1.wav\t0\t1500\ne1\t2\taudio/e1.wav\t1500\t2300\n")
    refs = load_segment_map(ok, small_corpus)
    assert refs[1].duration_ms == 800
    with pytest.raises(ValidationError, match="no utterance"):
        load_segment_map(write(tmp_path, "d.tsv", "e9\t1\ta.wav\t0\t10\n"), small_corpus)
    with pytest.raises(ValidationError, match="twice"):
        load_segment_map(write(tmp_path, "t.tsv", "e1\t1\ta.wav\t0\t10\ne1\t1\ta.wav\t10\t20\n"),
                         small_corpus)
    with pytest.raises(ValidationError):
        load_segment_map(write(tmp_path, "r.tsv", "e1\t1\ta.wav\t50\t50\n"), small_corpus)
    with pytest.raises(ValidationError):
        SegmentRef("e1", 1, "a.wav", -1, 10)
    write_segment_map(refs, tmp_path / "back.tsv")
    assert load_segment_map(tmp_path / "back.tsv", small_corpus) == refs


def test_filter_speaker_exact_match():
    ev = Event("e", "train", (Utterance("e", 1, "TRUMP", "a", 1), Utterance("e", 2, "Trump", "b", 0),
                              Utterance("e", 3, "CLINTON", "c", 0)))
    kept = filter_speaker(Corpus((ev,)), "  TRUMP ")
    assert [u.line_no for u in kept.utterances()] == [1]
    assert len(filter_speaker(Corpus((ev,)), "NOBODY")) == 0
    with pytest.raises(ValidationError):
        filter_speaker(Corpus((ev,)), "  ")


def test_compute_stats(small_corpus):
    stats = compute_stats(small_corpus)
    assert stats.per_split["train"].n_sentences == 10
    assert stats.per_split["train"].n_checkworthy == 3
    assert stats.overall.n_events == 4
    assert stats.per_split["dev"].fraction == pytest.approx(1 / 3)


def test_full_scale_fixture_matches_published_counts():
    corpus = full_scale_fixture(seed=0)
    stats = compute_stats(corpus)
    # events, sentences, check-worthy per split of the multimodal dataset
    assert [(r[1], r[2], r[3]) for r in stats.as_rows()] == [
        (38, 28715, 417), (7, 1896, 40), (8, 3878, 291), (53, 34489, 748)]
    trump = compute_stats(filter_speaker(corpus, "TRUMP"))
    # single-speaker subset
    assert [(r[2], r[3]) for r in trump.as_rows()] == [
        (8191, 213), (1650, 39), (3489, 278), (13330, 530)]
    assert FULL_SCALE_SPLITS["train"][:3] == (38, 28715, 417)


def test_generate_fixture_is_deterministic_and_consistent():
    spec = FixtureSpec(n_events=5, n_sentences_per_event=12, positive_rate=0.3, seed=4, with_audio=True)
    a, b = generate_fixture(spec), generate_fixture(spec)
    assert a.corpus == b.corpus
    assert a.segments == b.segments
    for path, w in a.recordings.items():
        assert np.array_equal(w.samples, b.recordings[path].samples)
    assert len(a.segments) == 5 * 12
    for ref in a.segments:
        rec = a.recordings[ref.audio_path]
        assert ref.end_ms * rec.sample_rate // 1000 <= len(rec)
    assert [e.split for e in a.corpus.events] == ["train", "train", "train", "dev", "test"]
    assert generate_fixture(FixtureSpec(seed=5)).corpus != a.corpus


line_text = st.text(alphabet=st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp"),
                                           blacklist_characters="\t\n\r"), min_size=1, max_size=30)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["A", "B", "MODERATOR"]), line_text, st.integers(0, 1)),
                min_size=1, max_size=20))
def test_transcript_roundtrip_property(tmp_path_factory, rows):
    rows = [(s, t.strip() or "x", l) for s, t, l in rows]
    utts = [Utterance("ev", i + 1, s, t, l) for i, (s, t, l) in enumerate(rows)]
    path = tmp_path_factory.mktemp("rt") / "ev.tsv"
    path.write_text(format_transcript(utts), encoding="utf-8")
    assert list(load_transcript(path).utterances) == utts
