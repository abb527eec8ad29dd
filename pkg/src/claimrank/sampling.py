"""Training-set rebalancing: the original, x15, x30 and 1:1 variants.

"Upsample k times" means k *extra* copies of every check-worthy row
(k + 1 occurrences in total). With 417 positives this gives 6,672 for
k = 15 and 12,927 for k = 30. Random choices use numpy's PCG64 generator
seeded from the variant spec.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Utterance
from .errors import ConfigError, ValidationError

ORIGINAL = "original"
UPSAMPLE = "upsample"
BALANCED = "balanced_1to1"


@dataclass(frozen=True)
class VariantSpec:
    kind: str = ORIGINAL
    k: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (ORIGINAL, UPSAMPLE, BALANCED):
            raise ConfigError(f"unknown variant kind {self.kind!r}")
        if self.kind == UPSAMPLE and self.k < 1:
            raise ConfigError(f"upsample factor must be >= 1, got {self.k}")

    @classmethod
    def parse(cls, name: str, seed: int = 0) -> "VariantSpec":
        """Accept ``original``, ``x15``/``x30``/``x<k>`` and ``1to1``/``1:1``."""
        name = name.strip().lower()
        if name == ORIGINAL:
            return cls(ORIGINAL, seed=seed)
        if name in ("1to1", "1:1", BALANCED):
            return cls(BALANCED, seed=seed)
        m = re.fullmatch(r"x(\d+)", name)
        if m:
            return cls(UPSAMPLE, int(m.group(1)), seed)
        raise ConfigError(f"unknown variant {name!r}; expected original, x<k> or 1to1")

    @property
    def suffix(self) -> str:
        if self.kind == UPSAMPLE:
            return f"x{self.k}"
        if self.kind == BALANCED:
            return "1to1"
        return ORIGINAL


def upsample_positives(train: Sequence[Utterance], k: int) -> list[Utterance]:
    if k < 1:
        raise ConfigError(f"upsample factor must be >= 1, got {k}")
    out = list(train)
    positives = [u for u in train if u.label == 1]
    for u in positives:
        out.extend([u] * k)
    return out


def undersample_balanced(train: Sequence[Utterance], seed: int) -> list[Utterance]:
    pos_idx = [i for i, u in enumerate(train) if u.label == 1]
    neg_idx = [i for i, u in enumerate(train) if u.label == 0]
    if not pos_idx:
        raise ValidationError("cannot balance: training set has no check-worthy rows")
    if len(neg_idx) <= len(pos_idx):
        keep = set(neg_idx)
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(neg_idx), size=len(pos_idx), replace=False)
        keep = {neg_idx[i] for i in chosen}
    return [u for i, u in enumerate(train) if u.label == 1 or i in keep]


def make_variant(train: Sequence[Utterance], spec: VariantSpec) -> list[Utterance]:
    if spec.kind == UPSAMPLE:
        return upsample_positives(train, spec.k)
    if spec.kind == BALANCED:
        return undersample_balanced(train, spec.seed)
    return list(train)
