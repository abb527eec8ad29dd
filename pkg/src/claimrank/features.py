"""Keyed feature matrices and their CSV representation.

CSV header is ``event_id,line_no,f0,...,f{d-1}``; values are written with
9 significant digits.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ShapeError

Key = tuple[str, int]


@dataclass
class FeatureMatrix:
    keys: list[Key]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"feature values must be 2-D, got shape {self.values.shape}")
        if len(self.keys) != self.values.shape[0]:
            raise ShapeError(f"{len(self.keys)} keys for {self.values.shape[0]} rows")
        self._pos = {k: i for i, k in enumerate(self.keys)}
        if len(self._pos) != len(self.keys):
            raise ShapeError("duplicate keys in feature matrix")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self._pos

    def rows(self, keys: Iterable[Key]) -> np.ndarray:
        """Gather rows for ``keys`` (repeats allowed); missing keys raise ``KeyError``."""
        keys = list(keys)
        missing = [k for k in keys if k not in self._pos]
        if missing:
            raise KeyError(f"no feature row for {missing[:5]}" + (" ..." if len(missing) > 5 else ""))
        return self.values[[self._pos[k] for k in keys]]

    @classmethod
    def from_rows(cls, items: Sequence[tuple[Key, np.ndarray]]) -> "FeatureMatrix":
        items = sorted(items, key=lambda kv: kv[0])
        if not items:
            return cls([], np.zeros((0, 0)))
        return cls([k for k, _ in items], np.vstack([np.asarray(v, float) for _, v in items]))


def write_feature_csv(fm: FeatureMatrix, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "line_no"] + [f"f{i}" for i in range(fm.dim)])
        for (event_id, line_no), row in zip(fm.keys, fm.values):
            w.writerow([event_id, line_no] + [f"{x:.9g}" for x in row])


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["event_id", "line_no"]:
            raise ParseError("header must start with event_id,line_no", path, 1)
        dim = len(header) - 2
        keys, rows = [], []
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != dim + 2:
                raise ParseError(f"expected {dim + 2} columns, got {len(rec)}", path, i)
            try:
                keys.append((rec[0], int(rec[1])))
                rows.append([float(x) for x in rec[2:]])
            except ValueError as exc:
                raise ParseError(str(exc), path, i) from None
    return FeatureMatrix(keys, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


def standardize(fm: FeatureMatrix, fit_keys: Iterable[Key]) -> FeatureMatrix:
    """Z-score every column with the mean and std of the ``fit_keys`` rows.

    Constant columns are centred but not scaled.
    """
    ref = fm.rows(fit_keys)
    if len(ref) == 0:
        raise ShapeError("standardize needs at least one reference row")
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    std[std == 0.0] = 1.0
    return FeatureMatrix(list(fm.keys), (fm.values - mean) / std)
