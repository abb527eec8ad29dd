"""TF.IDF vectors and named-entity count vectors for the text baselines."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import Utterance
from .errors import ParseError, ValidationError

_TOKEN = re.compile(r"[^\W_]+")

# Conventional entity labels, alphabetical. Stand-in for the tagger's own inventory.
NE_TYPES = (
    "CARDINAL", "DATE", "EVENT", "FAC", "GPE", "LANGUAGE", "LAW", "LOC", "MONEY",
    "NORP", "ORDINAL", "ORG", "PERCENT", "PERSON", "PRODUCT", "QUANTITY", "TIME",
    "WORK_OF_ART",
)
NE_INDEX = {t: i for i, t in enumerate(NE_TYPES)}


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass
class TfidfModel:
    vocabulary: dict[str, int]
    idf: np.ndarray
    lowercase: bool = True
    min_df: int = 1

    @property
    def terms(self) -> list[str]:
        return sorted(self.vocabulary, key=self.vocabulary.__getitem__)

    def save(self, prefix) -> None:
        """Write ``<prefix>.vocab`` (one term per line) and ``<prefix>.idf.csv``."""
        prefix = Path(prefix)
        Path(f"{prefix}.vocab").write_text("".join(t + "\n" for t in self.terms), encoding="utf-8")
        Path(f"{prefix}.idf.csv").write_text(
            "".join(f"{v:.17g}\n" for v in self.idf), encoding="utf-8")

    @classmethod
    def load(cls, prefix) -> "TfidfModel":
        terms = Path(f"{prefix}.vocab").read_text(encoding="utf-8").split("\n")[:-1]
        idf = np.array([float(x) for x in Path(f"{prefix}.idf.csv").read_text().split()])
        if len(terms) != len(idf):
            raise ValidationError(f"{prefix}: {len(terms)} terms but {len(idf)} idf values")
        return cls({t: i for i, t in enumerate(terms)}, idf)


def fit_tfidf(docs: Sequence[Sequence[str]], min_df: int = 1, lowercase: bool = True) -> TfidfModel:
    """Smooth idf: ``ln((1 + N) / (1 + df)) + 1``; vocabulary sorted lexicographically."""
    docs = [[t.lower() for t in d] if lowercase else list(d) for d in docs]
    if not any(docs):
        raise ValidationError("cannot fit TF.IDF: every document is empty")
    n = len(docs)
    df = Counter(t for d in docs for t in set(d))
    terms = sorted(t for t, c in df.items() if c >= min_df)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in terms])
    return TfidfModel({t: i for i, t in enumerate(terms)}, idf, lowercase, min_df)


def transform_tfidf(model: TfidfModel, doc: Sequence[str]) -> dict[int, float]:
    """Sparse L2-normalised tf*idf vector as ``{column: value}``."""
    counts = Counter(t.lower() if model.lowercase else t for t in doc)
    vec = {model.vocabulary[t]: c * model.idf[model.vocabulary[t]]
           for t, c in counts.items() if t in model.vocabulary}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0.0:
        return {}
    return {i: v / norm for i, v in sorted(vec.items())}


def tfidf_dense(model: TfidfModel, docs: Iterable[Sequence[str]]) -> np.ndarray:
    docs = list(docs)
    out = np.zeros((len(docs), len(model.vocabulary)))
    for r, d in enumerate(docs):
        for c, v in transform_tfidf(model, d).items():
            out[r, c] = v
    return out


# ---------------------------------------------------------------------------
# named entities


class EntityTagger(Protocol):
    def entities(self, utterance: Utterance) -> list[tuple[str, str]]:
        """Return ``(type, span)`` pairs for one sentence."""


def ne_counts(utterance: Utterance, tagger: EntityTagger) -> np.ndarray:
    counts = np.zeros(len(NE_TYPES), dtype=np.int64)
    for etype, _ in tagger.entities(utterance):
        if etype in NE_INDEX:
            counts[NE_INDEX[etype]] += 1
    return counts


@dataclass
class SidecarTagger:
    """Precomputed annotations: ``<event_id>\\t<line_no>\\t<TYPE:count,...>``."""

    table: dict[tuple[str, int], dict[str, int]] = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "SidecarTagger":
        path = Path(path)
        table = {}
        for i, raw in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
            if not raw.strip():
                continue
            cols = raw.split("\t")
            if len(cols) not in (2, 3):
                raise ParseError(f"expected 3 columns, got {len(cols)}", path, i)
            try:
                key = (cols[0].strip(), int(cols[1]))
            except ValueError:
                raise ParseError(f"bad line_no {cols[1]!r}", path, i) from None
            counts = {}
            spec = cols[2].strip() if len(cols) == 3 else ""
            for item in filter(None, (s.strip() for s in spec.split(","))):
                etype, _, n = item.partition(":")
                if etype not in NE_INDEX:
                    raise ParseError(f"unknown entity type {etype!r}", path, i)
                try:
                    counts[etype] = counts.get(etype, 0) + int(n)
                except ValueError:
                    raise ParseError(f"bad count in {item!r}", path, i) from None
            table[key] = counts
        return cls(table)

    def entities(self, utterance):
        try:
            counts = self.table[utterance.key]
        except KeyError:
            raise ValidationError(f"no entity annotation for {utterance.key}") from None
        return [(t, "") for t, n in counts.items() for _ in range(n)]


_MONTHS = ("January|February|March|April|May|June|July|August|September|October|November|December")
_GPE = {
    "america", "united states", "usa", "china", "russia", "iraq", "iran", "syria", "mexico",
    "ohio", "florida", "chicago", "texas", "new york", "washington", "israel", "canada",
    "japan", "germany", "france", "afghanistan", "pennsylvania", "michigan", "california",
}
_NORP = {"american", "americans", "democrats", "republicans", "democratic", "republican",
         "chinese", "mexican", "russian", "muslim", "muslims", "christian", "hispanic"}
_ORG_SUFFIX = ("Foundation", "Party", "Department", "Senate", "Congress", "Inc", "Corporation",
               "University", "Administration", "Agency", "Committee", "Bank", "Court")
_ORDINAL_WORDS = r"first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth"

_PATTERNS = (
    ("MONEY", re.compile(r"\$\s?\d[\d,]*(?:\.\d+)?(?:\s(?:million|billion|trillion))?"
                         r"|\b\d[\d,]*(?:\.\d+)?\s(?:million\s|billion\s|trillion\s)?dollars\b", re.I)),
    ("PERCENT", re.compile(r"\b\d[\d,]*(?:\.\d+)?\s?(?:%|percent\b)", re.I)),
    ("DATE", re.compile(rf"\b(?:(?:{_MONTHS})(?:\s\d{{1,2}})?(?:,?\s(?:19|20)\d\d)?|(?:19|20)\d\d)\b")),
    ("TIME", re.compile(r"\b\d{1,2}:\d\d\s?(?:[ap]\.?m\.?)?|\b\d{1,2}\s?[ap]\.m\.", re.I)),
    ("ORDINAL", re.compile(rf"\b\d+(?:st|nd|rd|th)\b|\b(?:{_ORDINAL_WORDS})\b", re.I)),
    ("CARDINAL", re.compile(r"\b\d[\d,]*(?:\.\d+)?(?:\s(?:million|billion|trillion|thousand|hundred))?\b",
                            re.I)),
)
# Capitalised only because they open the sentence.
_SENTENCE_OPENERS = {"the", "a", "an", "and", "but", "so", "or", "if", "when", "our", "my", "your",
                     "this", "that", "these", "those", "we", "i", "they", "he", "she", "it", "now",
                     "well", "yes", "no", "look", "because", "in", "on", "at", "for"}
_CAP_RUN = re.compile(r"\b[A-Z][a-zA-Z'\-]+(?:\s+[A-Z][a-zA-Z'\-]+)*")


@dataclass
class RegexTagger:
    """Gazetteer and pattern fallback for when no annotations are available."""

    def entities(self, utterance):
        text = utterance.text if hasattr(utterance, "text") else str(utterance)
        found = []
        taken = np.zeros(len(text) + 1, dtype=bool)
        for etype, pat in _PATTERNS:
            for m in pat.finditer(text):
                if taken[m.start():m.end()].any():
                    continue
                taken[m.start():m.end()] = True
                found.append((etype, m.group(0)))
        for m in _CAP_RUN.finditer(text):
            if taken[m.start():m.end()].any():
                continue
            span = m.group(0)
            words = span.split()
            # A lone capitalised word at sentence start is just sentence case.
            if m.start() == 0 and len(words) == 1 and span.lower() not in _GPE | _NORP:
                continue
            low = span.lower()
            if m.start() == 0 and len(words) > 1 and words[0].lower() in _SENTENCE_OPENERS:
                low = " ".join(words[1:]).lower()
                span = " ".join(words[1:])
            if low in _GPE:
                found.append(("GPE", span))
            elif low in _NORP:
                found.append(("NORP", span))
            elif span.split()[-1] in _ORG_SUFFIX or span.isupper() and len(span) > 1:
                found.append(("ORG", span))
            elif low not in {"i", "the", "we", "they", "it"}:
                found.append(("PERSON", span))
        return found


def ne_matrix(utterances: Iterable[Utterance], tagger: EntityTagger) -> np.ndarray:
    rows = [ne_counts(u, tagger) for u in utterances]
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(NE_TYPES))
