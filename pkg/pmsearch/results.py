"""
Ranked retrieval output shared by search, rerank and evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .errors import PmSearchError


class RankingError(PmSearchError, ValueError):
    """Exception raised when a ranking violates its ordering invariants."""
    pass


Entry = Tuple[str, float]


def sort_entries(entries: Iterable[Entry]) -> List[Entry]:
    """Sort (doc_id, score) pairs by descending score, ties by ascending doc_id."""
    return sorted(((str(d), float(s)) for d, s in entries), key=lambda e: (-e[1], e[0]))


@dataclass(frozen=True)
class RankedList:
    """
    Per-topic ranking: ordered (doc_id, score) entries.

    Scores are finite and non-increasing; doc_ids are distinct. Use
    :meth:`from_unsorted` to build one from arbitrary pairs.
    """

    topic_number: int
    entries: Tuple[Entry, ...] = ()

    def __post_init__(self) -> None:
        entries = tuple((str(d), float(s)) for d, s in self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        previous = math.inf
        for rank, (doc_id, score) in enumerate(entries, start=1):
            if not math.isfinite(score):
                raise RankingError(f"topic {self.topic_number}: non-finite score at rank {rank}")
            if score > previous:
                raise RankingError(
                    f"topic {self.topic_number}: score increases at rank {rank} ({doc_id})"
                )
            if doc_id in seen:
                raise RankingError(f"topic {self.topic_number}: duplicate document {doc_id}")
            seen.add(doc_id)
            previous = score

    @classmethod
    def from_unsorted(cls, topic_number: int, entries: Iterable[Entry]) -> "RankedList":
        return cls(topic_number, tuple(sort_entries(entries)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    @property
    def doc_ids(self) -> List[str]:
        return [doc_id for doc_id, _ in self.entries]

    @property
    def scores(self) -> np.ndarray:
        return np.array([score for _, score in self.entries], dtype=float)

    def head(self, k: int) -> "RankedList":
        """First ``k`` entries."""
        return RankedList(self.topic_number, self.entries[: max(k, 0)])

    def rank_of(self, doc_id: str) -> Optional[int]:
        """1-based rank of ``doc_id``, or None when it is not in the list."""
        for rank, (d, _) in enumerate(self.entries, start=1):
            if d == doc_id:
                return rank
        return None

    def score_of(self, doc_id: str) -> Optional[float]:
        for d, score in self.entries:
            if d == doc_id:
                return score
        return None
