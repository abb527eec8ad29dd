"""Slow, independently written references used by several test modules."""
from fractions import Fraction

import numpy as np


def brute_ap(items):
    """AP of ``[(line, score, label), ...]`` by counting, one positive at a time.

    An item outranks another if its score is higher, or equal with a smaller
    line number. Exact rational arithmetic is used until the final division.
    """
    positives = [it for it in items if it[2]]
    total = Fraction(0)
    for line, score, _ in positives:
        rank = 1 + sum(1 for l2, s2, _ in items if s2 > score or (s2 == score and l2 < line))
        above = 1 + sum(1 for l2, s2, y2 in positives if s2 > score or (s2 == score and l2 < line))
        total += Fraction(above, rank)
    return float(total / len(positives))


def brute_map(rows):
    """MAP over ``[(event, line, score, label), ...]``; events without positives are skipped."""
    events = {}
    for ev, line, score, label in rows:
        events.setdefault(ev, []).append((line, score, label))
    aps = [brute_ap(items) for items in events.values() if any(y for *_, y in items)]
    return sum(aps) / len(aps) if aps else 0.0


def random_prediction_set(rng: np.random.Generator):
    rows = []
    for e in range(int(rng.integers(1, 9))):
        n = int(rng.integers(1, 51))
        labels = (rng.random(n) < rng.uniform(0.05, 0.5)).astype(int)
        # coarse scores force ties often
        scores = rng.integers(0, 6, n) / 5.0 if rng.random() < 0.5 else rng.random(n)
        lines = rng.permutation(np.arange(1, n + 1) * int(rng.integers(1, 4)))
        rows += [(f"ev{e}", int(l), float(s), int(y)) for l, s, y in zip(lines, scores, labels)]
    return rows


def naive_dft_mag(frame, n_fft):
    k = np.arange(n_fft // 2 + 1)[:, None]
    t = np.arange(len(frame))[None, :]
    return np.abs((frame[None, :] * np.exp(-2j * np.pi * k * t / n_fft)).sum(axis=1))


def naive_dct2_ortho(x):
    n = len(x)
    out = np.empty(n)
    for k in range(n):
        s = sum(x[i] * np.cos(np.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * (np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n))
    return out
