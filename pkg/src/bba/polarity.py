from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolarityMap:
    """Partition of the K classes into a positive and a negative group."""

    positive: tuple[int, ...]
    negative: tuple[int, ...]

    def __post_init__(self):
        pos = tuple(int(k) for k in self.positive)
        neg = tuple(int(k) for k in self.negative)
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)
        if not pos or not neg:
            raise ValueError("polarity.positive and polarity.negative must both be non-empty")
        overlap = set(pos) & set(neg)
        if overlap:
            raise ValueError(f"polarity groups overlap on classes {sorted(overlap)}")
        union = set(pos) | set(neg)
        if union != set(range(len(union))) or len(pos) + len(neg) != len(union):
            raise ValueError("polarity groups must cover classes 0..K-1 exactly once")

    @property
    def num_classes(self) -> int:
        return len(self.positive) + len(self.negative)

    def group_matrix(self) -> np.ndarray:
        """2 x K indicator matrix; row 0 = positive, row 1 = negative."""
        G = np.zeros((2, self.num_classes))
        G[0, list(self.positive)] = 1.0
        G[1, list(self.negative)] = 1.0
        return G

    def group_of(self, labels) -> np.ndarray:
        """Polarity index (0 positive, 1 negative) of each class label."""
        lookup = np.ones(self.num_classes, dtype=np.int64)
        lookup[list(self.positive)] = 0
        return lookup[np.asarray(labels, dtype=np.int64)]

    def to_dict(self) -> dict:
        return {"positive": list(self.positive), "negative": list(self.negative)}

    @classmethod
    def from_dict(cls, d: dict) -> "PolarityMap":
        return cls(tuple(d["positive"]), tuple(d["negative"]))

    @classmethod
    def halves(cls, num_classes: int = 8) -> "PolarityMap":
        half = num_classes // 2
        return cls(tuple(range(half)), tuple(range(half, num_classes)))
