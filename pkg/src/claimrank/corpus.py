"""Transcripts, audio segment maps, split manifests and synthetic fixtures.

On-disk layout of a corpus directory::

    splits.tsv          <event_id>\\t<train|dev|test>
    <event_id>.tsv      <line_no>\\t<speaker>\\t<sentence>\\t<label>
    segments.tsv        <event_id>\\t<line_no>\\t<audio_path>\\t<start_ms>\\t<end_ms>   (optional)
    audio/*.wav         recordings referenced by segments.tsv (optional)
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
MANIFEST_NAME = "splits.tsv"
SEGMENTS_NAME = "segments.tsv"


@dataclass(frozen=True)
class Utterance:
    event_id: str
    line_no: int
    speaker: str
    text: str
    label: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.event_id, self.line_no)


@dataclass(frozen=True)
class Event:
    event_id: str
    split: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"event {self.event_id}: unknown split {self.split!r}")
        if not self.utterances:
            raise ValidationError(f"event {self.event_id}: no utterances")
        for u in self.utterances:
            if u.event_id != self.event_id:
                raise ValidationError(
                    f"event {self.event_id}: utterance {u.line_no} carries event_id {u.event_id!r}"
                )


@dataclass(frozen=True)
class Corpus:
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        ids = [e.event_id for e in self.events]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise ValidationError(f"duplicate event ids: {dup}")

    def split(self, name: str) -> list[Event]:
        return [e for e in self.events if e.split == name]

    def utterances(self, split: str | None = None) -> list[Utterance]:
        return [u for e in self.events if split is None or e.split == split for u in e.utterances]

    def index(self) -> dict[tuple[str, int], Utterance]:
        return {u.key: u for u in self.utterances()}

    def event(self, event_id: str) -> Event:
        for e in self.events:
            if e.event_id == event_id:
                return e
        raise KeyError(event_id)

    def __len__(self):
        return sum(len(e.utterances) for e in self.events)


@dataclass(frozen=True)
class SegmentRef:
    event_id: str
    line_no: int
    audio_path: str
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0:
            raise ValidationError(f"segment {self.key}: negative start_ms {self.start_ms}")
        if self.end_ms <= self.start_ms:
            raise ValidationError(
                f"segment {self.key}: end_ms {self.end_ms} <= start_ms {self.start_ms}"
            )

    @property
    def key(self) -> tuple[str, int]:
        return (self.event_id, self.line_no)

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class SplitStats:
    n_events: int = 0
    n_sentences: int = 0
    n_checkworthy: int = 0

    @property
    def fraction(self) -> float:
        return self.n_checkworthy / self.n_sentences if self.n_sentences else 0.0


@dataclass(frozen=True)
class CorpusStats:
    per_split: dict[str, SplitStats]
    overall: SplitStats

    def as_rows(self) -> list[tuple[str, int, int, int, float]]:
        rows = [(s, st.n_events, st.n_sentences, st.n_checkworthy, st.fraction)
                for s, st in self.per_split.items()]
        o = self.overall
        rows.append(("all", o.n_events, o.n_sentences, o.n_checkworthy, o.fraction))
        return rows

    def format(self) -> str:
        lines = ["split\tevents\tsentences\tcheckworthy\tfraction"]
        for s, ne, ns, nc, fr in self.as_rows():
            lines.append(f"{s}\t{ne}\t{ns}\t{nc}\t{fr:.4f}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# transcripts


def _parse_rows(text: str, path, event_id: str) -> list[Utterance]:
    utterances = []
    for i, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        cols = raw.split("\t")
        if len(cols) != 4:
            raise ParseError(f"expected 4 tab-separated columns, got {len(cols)}", path, i)
        line_s, speaker, sentence, label_s = cols
        try:
            line_no = int(line_s)
        except ValueError:
            raise ParseError(f"line_no {line_s.strip()!r} is not an integer", path, i) from None
        if line_no < 1:
            raise ParseError(f"line_no {line_no} must be positive", path, i)
        label_s = label_s.strip()
        if label_s not in ("0", "1"):
            raise ParseError(f"label {label_s!r} not in {{0,1}}", path, i)
        speaker = speaker.strip()
        if not speaker:
            raise ParseError("empty speaker", path, i)
        utterances.append(Utterance(event_id, line_no, speaker, sentence.strip(), int(label_s)))
    return utterances


def load_transcript(path, event_id: str | None = None, split: str = "train") -> Event:
    """Read one event's transcript TSV.

    ``event_id`` defaults to the file stem. Line numbers must be strictly
    increasing; duplicates and reversals raise ``ValidationError``.
    """
    path = Path(path)
    event_id = event_id or path.name.split(".")[0]
    utterances = _parse_rows(path.read_text(encoding="utf-8"), path, event_id)
    if not utterances:
        raise ValidationError(f"{path}: no utterances")
    seen = set()
    prev = 0
    for u in utterances:
        if u.line_no in seen:
            raise ValidationError(f"{path}: duplicate line_no {u.line_no}")
        if u.line_no <= prev:
            raise ValidationError(f"{path}: line_no {u.line_no} follows {prev}; must increase")
        seen.add(u.line_no)
        prev = u.line_no
    return Event(event_id, split, tuple(utterances))


def format_transcript(utterances: Iterable[Utterance]) -> str:
    out = []
    for u in utterances:
        if "\t" in u.text or "\n" in u.text or "\t" in u.speaker:
            raise ValidationError(f"utterance {u.key}: tabs/newlines are not allowed in fields")
        out.append(f"{u.line_no}\t{u.speaker}\t{u.text}\t{u.label}\n")
    return "".join(out)


def write_transcript(event_or_utterances, path) -> None:
    utts = getattr(event_or_utterances, "utterances", event_or_utterances)
    Path(path).write_text(format_transcript(utts), encoding="utf-8")


def load_variant_rows(path, event_id: str | None = None) -> list[Utterance]:
    """Read a resampled training transcript; repeated line numbers are legal here."""
    path = Path(path)
    event_id = event_id or path.name.split(".")[0]
    return _parse_rows(path.read_text(encoding="utf-8"), path, event_id)


# ---------------------------------------------------------------------------
# manifests and corpus directories


def load_manifest(path) -> dict[str, str]:
    path = Path(path)
    manifest: dict[str, str] = {}
    for i, raw in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not raw.strip():
            continue
        cols = [c.strip() for c in raw.split("\t")]
        if len(cols) != 2:
            raise ParseError(f"expected 2 columns, got {len(cols)}", path, i)
        event_id, split = cols
        if split not in SPLITS:
            raise ParseError(f"unknown split {split!r}", path, i)
        if event_id in manifest:
            raise ValidationError(f"{path}: event {event_id} listed twice")
        manifest[event_id] = split
    return manifest


def write_manifest(corpus: Corpus, path) -> None:
    Path(path).write_text("".join(f"{e.event_id}\t{e.split}\n" for e in corpus.events),
                          encoding="utf-8")


def load_corpus(directory) -> Corpus:
    directory = Path(directory)
    manifest = load_manifest(directory / MANIFEST_NAME)
    events = []
    for event_id, split in manifest.items():
        events.append(load_transcript(directory / f"{event_id}.tsv", event_id, split))
    return Corpus(tuple(events))


def write_corpus(corpus: Corpus, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_manifest(corpus, directory / MANIFEST_NAME)
    for e in corpus.events:
        write_transcript(e, directory / f"{e.event_id}.tsv")
    return directory


# ---------------------------------------------------------------------------
# segment maps


def load_segment_map(path, corpus: Corpus) -> list[SegmentRef]:
    path = Path(path)
    index = corpus.index()
    refs = []
    seen = set()
    for i, raw in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not raw.strip():
            continue
        cols = [c.strip() for c in raw.split("\t")]
        if len(cols) != 5:
            raise ParseError(f"expected 5 columns, got {len(cols)}", path, i)
        event_id, line_s, audio_path, start_s, end_s = cols
        try:
            line_no, start_ms, end_ms = int(line_s), int(start_s), int(end_s)
        except ValueError:
            raise ParseError("line_no/start_ms/end_ms must be integers", path, i) from None
        if (event_id, line_no) not in index:
            raise ValidationError(f"{path}:{i}: no utterance ({event_id}, {line_no}) in corpus")
        if (event_id, line_no) in seen:
            raise ValidationError(f"{path}:{i}: segment ({event_id}, {line_no}) listed twice")
        seen.add((event_id, line_no))
        try:
            refs.append(SegmentRef(event_id, line_no, audio_path, start_ms, end_ms))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{i}: {exc}") from None
    return refs


def write_segment_map(refs: Iterable[SegmentRef], path) -> None:
    Path(path).write_text(
        "".join(f"{r.event_id}\t{r.line_no}\t{r.audio_path}\t{r.start_ms}\t{r.end_ms}\n"
                for r in refs),
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# filtering and statistics


def filter_speaker(corpus: Corpus, speaker: str) -> Corpus:
    """Keep only utterances by ``speaker`` (exact, case-sensitive, trimmed)."""
    speaker = speaker.strip()
    if not speaker:
        raise ValidationError("speaker must be non-empty")
    events = []
    for e in corpus.events:
        kept = tuple(u for u in e.utterances if u.speaker.strip() == speaker)
        if kept:
            events.append(Event(e.event_id, e.split, kept))
    return Corpus(tuple(events))


def _stats(events: Sequence[Event]) -> SplitStats:
    n = sum(len(e.utterances) for e in events)
    pos = sum(u.label for e in events for u in e.utterances)
    return SplitStats(len(events), n, pos)


def compute_stats(corpus: Corpus) -> CorpusStats:
    per = {s: _stats(corpus.split(s)) for s in SPLITS}
    return CorpusStats(per, _stats(corpus.events))


# ---------------------------------------------------------------------------
# synthetic fixtures

_SPEAKERS = ("TRUMP", "CLINTON", "SANDERS", "PENCE", "KAINE", "MODERATOR")

_CLAIM_TEMPLATES = (
    "We created {n} million jobs in {y}.",
    "Unemployment went up {p} percent under {who}.",
    "The deficit is {n} billion dollars this year.",
    "{who} voted for the war in {place} in {y}.",
    "Taxes on the middle class rose {p} percent since {y}.",
    "It provides drugs to about {n} million people.",
    "Crime in {place} is up {p} percent.",
    "They want to expand it into a single-payer program.",
)
_CHATTER_TEMPLATES = (
    "Thank you very much.",
    "I think that is a very good question.",
    "Let me finish, please.",
    "We have to come together as a country.",
    "That is just not the way I see it.",
    "Believe me, people are talking about it.",
    "I want to thank everyone for being here tonight.",
    "We will get to that in a moment.",
    "You know, I have said this many times.",
)
_PLACES = ("Iraq", "Ohio", "Chicago", "Mexico", "Syria", "Florida")
_WHO = ("Obama", "Clinton", "the Senate", "the Congress", "Bush")


def _sentence(rng: np.random.Generator, claim_like: bool) -> str:
    templates = _CLAIM_TEMPLATES if claim_like else _CHATTER_TEMPLATES
    t = templates[int(rng.integers(len(templates)))]
    return t.format(
        n=int(rng.integers(2, 40)),
        p=int(rng.integers(2, 30)),
        y=int(rng.integers(1990, 2017)),
        who=_WHO[int(rng.integers(len(_WHO)))],
        place=_PLACES[int(rng.integers(len(_PLACES)))],
    )


@dataclass(frozen=True)
class FixtureSpec:
    n_events: int = 5
    n_sentences_per_event: int = 40
    positive_rate: float = 0.2
    seed: int = 0
    with_audio: bool = False
    sample_rate: int = 16000
    text_noise: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ValidationError(f"positive_rate {self.positive_rate} not in [0, 1]")
        if self.n_events < 0 or self.n_sentences_per_event < 1:
            raise ValidationError("n_events must be >= 0 and n_sentences_per_event >= 1")


@dataclass
class Fixture:
    corpus: Corpus
    segments: list[SegmentRef] = field(default_factory=list)
    recordings: dict = field(default_factory=dict)  # audio_path -> Waveform


def _assign_splits(n_events: int) -> list[str]:
    if n_events < 3:
        return ["train"] * n_events
    n_dev = max(1, round(0.2 * n_events))
    n_test = max(1, round(0.2 * n_events))
    n_train = n_events - n_dev - n_test
    return ["train"] * n_train + ["dev"] * n_dev + ["test"] * n_test


def generate_fixture(spec: FixtureSpec) -> Fixture:
    """Deterministic synthetic corpus (and optional per-event recordings).

    Labels are Bernoulli(positive_rate) draws. Check-worthy sentences are
    mostly drawn from claim-like templates, the rest from chit-chat, with
    ``text_noise`` flipping the template family. Audio, when requested, is
    one recording per event: each segment is a sine tone whose pitch depends
    on the label, plus Gaussian noise.
    """
    from .audio import Waveform

    rng = np.random.default_rng(spec.seed)
    splits = _assign_splits(spec.n_events)
    events, segments, recordings = [], [], {}
    for ei in range(spec.n_events):
        event_id = f"ev{ei + 1:03d}"
        labels = (rng.random(spec.n_sentences_per_event) < spec.positive_rate).astype(int)
        utts = []
        for j, lab in enumerate(labels):
            claim_like = bool(lab) != bool(rng.random() < spec.text_noise)
            speaker = _SPEAKERS[int(rng.integers(len(_SPEAKERS)))]
            utts.append(Utterance(event_id, j + 1, speaker, _sentence(rng, claim_like), int(lab)))
        events.append(Event(event_id, splits[ei], tuple(utts)))
        if spec.with_audio:
            sr = spec.sample_rate
            pieces, t_ms = [], 0
            audio_path = f"audio/{event_id}.wav"
            for u in utts:
                dur_ms = int(rng.integers(600, 1600))
                n = dur_ms * sr // 1000
                freq = (330.0 if u.label else 220.0) + rng.normal(0.0, 40.0)
                t = np.arange(n) / sr
                tone = 0.3 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
                pieces.append(tone + rng.normal(0.0, 0.05, n))
                segments.append(SegmentRef(event_id, u.line_no, audio_path, t_ms, t_ms + dur_ms))
                t_ms += dur_ms
            samples = np.clip(np.concatenate(pieces), -1.0, 1.0)
            recordings[audio_path] = Waveform(samples, sr)
    return Fixture(Corpus(tuple(events)), segments, recordings)


def _spread(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


# Split sizes of the multimodal dataset and its single-speaker subset.
FULL_SCALE_SPLITS = {
    # split: (events, sentences, check-worthy, speaker sentences, speaker check-worthy)
    "train": (38, 28715, 417, 8191, 213),
    "dev": (7, 1896, 40, 1650, 39),
    "test": (8, 3878, 291, 3489, 278),
}
FULL_SCALE_SPEAKER = "TRUMP"


def full_scale_fixture(seed: int = 0, splits=FULL_SCALE_SPLITS, speaker: str = FULL_SCALE_SPEAKER) -> Corpus:
    """Text-only corpus whose split and single-speaker counts match the published dataset."""
    rng = np.random.default_rng(seed)
    others = [s for s in _SPEAKERS if s != speaker]
    events = []
    ev_no = 0
    for split in SPLITS:
        n_ev, n_sent, n_pos, n_spk, n_spk_pos = splits[split]
        sents, pos = _spread(n_sent, n_ev), _spread(n_pos, n_ev)
        spk, spk_pos = _spread(n_spk, n_ev), _spread(n_spk_pos, n_ev)
        for i in range(n_ev):
            ev_no += 1
            event_id = f"{split}{ev_no:03d}"
            roles = ([(speaker, 1)] * spk_pos[i]
                     + [(speaker, 0)] * (spk[i] - spk_pos[i])
                     + [(None, 1)] * (pos[i] - spk_pos[i])
                     + [(None, 0)] * (sents[i] - spk[i] - pos[i] + spk_pos[i]))
            if min(spk[i] - spk_pos[i], pos[i] - spk_pos[i],
                   sents[i] - spk[i] - pos[i] + spk_pos[i]) < 0:
                raise ValidationError(f"inconsistent split counts for {split}")
            order = rng.permutation(len(roles))
            utts = []
            for j, k in enumerate(order):
                who, lab = roles[k]
                who = who or others[int(rng.integers(len(others)))]
                utts.append(Utterance(event_id, j + 1, who, _sentence(rng, bool(lab)), lab))
            events.append(Event(event_id, split, tuple(utts)))
    return Corpus(tuple(events))
