"""Irregular index streams and the LSU cache model used to calibrate them."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

DEFAULT_CAPACITY_BITS = 512 * 1024
DEFAULT_LINE_BYTES = 32
REACH_TOLERANCE = 0.05


@dataclass(frozen=True)
class IndexArray:
    values: np.ndarray
    degree: int
    seed: int

    def __len__(self):
        return int(self.values.size)


@dataclass(frozen=True)
class CacheModel:
    capacity_bits: int = DEFAULT_CAPACITY_BITS
    line_bytes: int = DEFAULT_LINE_BYTES
    associativity: int = 1  # ways per set; 1 is direct-mapped

    def __post_init__(self):
        if self.capacity_bits <= 0 or self.line_bytes <= 0 or self.associativity <= 0:
            raise ValueError("cache parameters must be positive")
        if self.capacity_bits % (8 * self.line_bytes):
            raise ValueError("capacity must be a whole number of lines")
        if self.num_lines % self.associativity:
            raise ValueError("line count must be divisible by the associativity")

    @property
    def num_lines(self):
        return self.capacity_bits // (8 * self.line_bytes)

    @property
    def num_sets(self):
        return self.num_lines // self.associativity


def generate_indices(n: int, degree: int, seed: int = 0) -> IndexArray:
    """Runs of ``degree`` consecutive indices, each starting at a random offset.

    Offsets are uniform over ``[0, n - degree]`` and runs may overlap. The
    final run is truncated so the array has exactly ``n`` entries.
    """
    if n < 1:
        raise ValueError("array length must be positive")
    if not 1 <= degree <= n:
        raise ValueError(f"irregularity degree must lie in [1, {n}], got {degree}")
    runs = -(-n // degree)
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, n - degree + 1, size=runs, dtype=np.int64)
    values = (starts[:, None] + np.arange(degree, dtype=np.int64)[None, :]).ravel()[:n]
    return IndexArray(values.astype(np.int32), degree, seed)


def simulate_cache(indices, model: CacheModel = CacheModel(), element_bytes: int = 4) -> float:
    """Hit rate of the load trace ``data[indices[i]]`` for i = 0, 1, ..."""
    values = indices.values if isinstance(indices, IndexArray) else np.asarray(indices)
    if values.size == 0:
        raise ValueError("empty index trace")
    lines = values.astype(np.int64) * element_bytes // model.line_bytes
    sets = lines % model.num_sets
    tags = lines // model.num_sets
    if model.associativity == 1:
        hits = _direct_mapped_hits(sets, tags)
    else:
        hits = _lru_hits(sets, tags, model.associativity)
    return hits / values.size


def _direct_mapped_hits(sets, tags):
    # group accesses by set (keeping trace order); a hit repeats the previous tag
    order = np.argsort(sets, kind="stable")
    s, t = sets[order], tags[order]
    same_set = s[1:] == s[:-1]
    return int(np.count_nonzero(same_set & (t[1:] == t[:-1])))


def _lru_hits(sets, tags, ways):
    resident = {}
    hits = 0
    for s, t in zip(sets.tolist(), tags.tolist()):
        lru = resident.setdefault(s, OrderedDict())
        if t in lru:
            hits += 1
            lru.move_to_end(t)
        else:
            if len(lru) >= ways:
                lru.popitem(last=False)
            lru[t] = True
    return hits


@dataclass(frozen=True)
class Calibration:
    target: float
    achieved: float
    degree: int
    reachable: bool

    def to_dict(self):
        return {"target": self.target, "achieved": self.achieved,
                "D": self.degree, "reachable": self.reachable}


def calibrate(target: float, model: CacheModel = CacheModel(), n: int = 1 << 20,
              seed: int = 0, element_bytes: int = 4) -> Calibration:
    """Irregularity degree whose simulated hit rate lies nearest ``target``.

    Binary search over D in [1, n], relying on the hit rate growing with D.
    The result is reachable when it lands within five percentage points.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError("target hit rate must lie in [0, 1]")
    seen = {}

    def rate(d):
        if d not in seen:
            seen[d] = simulate_cache(generate_indices(n, d, seed), model, element_bytes)
        return seen[d]

    lo, hi = 1, n
    while lo < hi:
        mid = (lo + hi) // 2
        if rate(mid) < target:
            lo = mid + 1
        else:
            hi = mid
    rate(lo)
    if lo > 1:
        rate(lo - 1)
    best = min(seen, key=lambda d: (abs(seen[d] - target), d))
    achieved = seen[best]
    return Calibration(target, achieved, best, abs(achieved - target) <= REACH_TOLERANCE)
