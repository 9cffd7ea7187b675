"""
TREC-style batch evaluation.

Reads graded relevance judgments (``topic 0 doc_id grade``), reads and
writes run files (``topic Q0 doc_id rank score run_tag``) and computes
P@10, R@1000 and R-precision per topic and as an unweighted mean over the
topics present in the run.

Conventions:
    - grade >= 1 is relevant, unjudged retrieved documents are non-relevant;
    - P@k always divides by k, even for lists shorter than k;
    - recall and R-precision are 0 for topics without relevant documents;
    - topics judged in the qrels but absent from the run are ignored, with a
      warning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .errors import PmSearchError
from .io_util import atomic_write_text
from .logging_util import get_logger
from .results import RankedList

logger = get_logger(__name__)

RELEVANCE_THRESHOLD = 1
DEFAULT_PRECISION_K = 10
DEFAULT_RECALL_K = 1000

METRIC_NAMES = ("p_at_10", "r_at_1000", "r_prec")
METRIC_LABELS = {"p_at_10": "P@10", "r_at_1000": "R@1000", "r_prec": "R-prec"}


class QrelsFormatError(PmSearchError, ValueError):
    """Exception raised for malformed relevance judgment files."""
    pass


class RunFormatError(PmSearchError, ValueError):
    """Exception raised for malformed or inconsistent run files."""
    pass


class EvaluationError(PmSearchError, ValueError):
    """Exception raised for invalid evaluation requests."""
    pass


# ============================================================================
# Qrels
# ============================================================================


class Qrels:
    """Graded judgments keyed by (topic_number, doc_id)."""

    def __init__(self, judgments: Optional[Mapping[Tuple[int, str], int]] = None):
        self._by_topic: Dict[int, Dict[str, int]] = {}
        for (topic, doc_id), grade in (judgments or {}).items():
            self.add(topic, doc_id, grade)

    def add(self, topic: int, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise QrelsFormatError(f"negative grade {grade} for ({topic}, {doc_id})")
        per_topic = self._by_topic.setdefault(int(topic), {})
        if doc_id in per_topic:
            raise QrelsFormatError(f"duplicate judgment for ({topic}, {doc_id})")
        per_topic[doc_id] = int(grade)

    @property
    def judgments(self) -> Dict[Tuple[int, str], int]:
        return {
            (topic, doc_id): grade
            for topic, docs in self._by_topic.items()
            for doc_id, grade in docs.items()
        }

    def topics(self) -> List[int]:
        return sorted(self._by_topic)

    def grade(self, topic: int, doc_id: str) -> Optional[int]:
        return self._by_topic.get(topic, {}).get(doc_id)

    def judged(self, topic: int) -> Dict[str, int]:
        """doc_id -> grade for one topic (empty when the topic is unjudged)."""
        return dict(self._by_topic.get(topic, {}))

    def relevant(self, topic: int) -> Set[str]:
        return {d for d, g in self._by_topic.get(topic, {}).items() if g >= RELEVANCE_THRESHOLD}

    def num_relevant(self, topic: int) -> int:
        return len(self.relevant(topic))

    def is_relevant(self, topic: int, doc_id: str) -> bool:
        grade = self.grade(topic, doc_id)
        return grade is not None and grade >= RELEVANCE_THRESHOLD

    def __len__(self) -> int:
        return sum(len(docs) for docs in self._by_topic.values())

    def __contains__(self, key: object) -> bool:
        if not isinstance(key, tuple) or len(key) != 2:
            return False
        topic, doc_id = key
        return doc_id in self._by_topic.get(topic, {})


def parse_qrels_lines(lines: Iterable[str], source: str = "<qrels>") -> Qrels:
    """
    Parse ``topic iteration doc_id grade`` lines.

    Raises:
        QrelsFormatError: Malformed line or duplicate (topic, doc) key, with
            the line number
    """
    qrels = Qrels()
    for line_no, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise QrelsFormatError(f"{source}:{line_no}: expected 4 columns, found {len(parts)}")
        try:
            topic = int(parts[0])
            grade = int(parts[3])
        except ValueError:
            raise QrelsFormatError(f"{source}:{line_no}: topic and grade must be integers") from None
        try:
            qrels.add(topic, parts[2], grade)
        except QrelsFormatError as exc:
            raise QrelsFormatError(f"{source}:{line_no}: {exc}") from None
    logger.debug("qrels %s: %d judgments over %d topics", source, len(qrels), len(qrels.topics()))
    return qrels


def parse_qrels(filepath: Union[str, Path]) -> Qrels:
    """Read a qrels file."""
    path = Path(filepath)
    with open(path, "r", encoding="utf-8") as f:
        return parse_qrels_lines(f, source=path.name)


# ============================================================================
# Run files
# ============================================================================


@dataclass(frozen=True)
class RunEntry:
    """One line of a run file."""

    topic_number: int
    doc_id: str
    rank: int
    score: float
    run_tag: str = "pmsearch"

    def to_line(self) -> str:
        return f"{self.topic_number} Q0 {self.doc_id} {self.rank} {float(self.score)!r} {self.run_tag}"


def ranked_to_run(ranked: RankedList, run_tag: str = "pmsearch") -> List[RunEntry]:
    """Number a ranking 1..n as run entries."""
    return [
        RunEntry(ranked.topic_number, doc_id, rank, float(score), run_tag)
        for rank, (doc_id, score) in enumerate(ranked.entries, start=1)
    ]


def group_by_topic(entries: Iterable[RunEntry]) -> Dict[int, List[RunEntry]]:
    """Entries per topic, each list sorted by rank."""
    groups: Dict[int, List[RunEntry]] = {}
    for entry in entries:
        groups.setdefault(entry.topic_number, []).append(entry)
    for topic in groups:
        groups[topic].sort(key=lambda e: e.rank)
    return groups


def _check_topic(topic: int, entries: Sequence[RunEntry], error: type) -> None:
    seen: Set[str] = set()
    previous = math.inf
    for expected, entry in enumerate(entries, start=1):
        if entry.rank != expected:
            raise error(f"topic {topic}: ranks are not contiguous (rank {entry.rank}, expected {expected})")
        if entry.doc_id in seen:
            raise error(f"topic {topic}: document {entry.doc_id} retrieved twice")
        if entry.score > previous:
            raise error(f"topic {topic}: score increases at rank {entry.rank}")
        seen.add(entry.doc_id)
        previous = entry.score


def write_run(entries: Sequence[RunEntry], filepath: Union[str, Path]) -> Path:
    """
    Write run entries, one per line, in the given order (atomic).

    Raises:
        RunFormatError: Entries violate the per-topic rank/score/doc rules, or
            a doc_id or run tag is empty or contains whitespace
    """
    for entry in entries:
        for label, value in (("doc_id", entry.doc_id), ("run tag", entry.run_tag)):
            if not value or any(c.isspace() for c in value):
                raise RunFormatError(
                    f"topic {entry.topic_number}: {label} {value!r} is empty or contains whitespace"
                )
    for topic, group in group_by_topic(entries).items():
        _check_topic(topic, group, RunFormatError)
    text = "".join(entry.to_line() + "\n" for entry in entries)
    return atomic_write_text(filepath, text)


def read_run(filepath: Union[str, Path]) -> List[RunEntry]:
    """
    Read a run file.

    Entries of a topic must appear rank-ascending starting at 1.

    Raises:
        RunFormatError: Malformed line, rank gap, duplicate document or
            increasing score, with the line number
    """
    path = Path(filepath)
    entries: List[RunEntry] = []
    next_rank: Dict[int, int] = {}
    last_score: Dict[int, float] = {}
    seen: Dict[int, Set[str]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            where = f"{path.name}:{line_no}"
            if len(parts) != 6:
                raise RunFormatError(f"{where}: expected 6 columns, found {len(parts)}")
            try:
                entry = RunEntry(int(parts[0]), parts[2], int(parts[3]), float(parts[4]), parts[5])
            except ValueError:
                raise RunFormatError(f"{where}: topic/rank must be integers and score a number") from None
            if not math.isfinite(entry.score):
                raise RunFormatError(f"{where}: non-finite score")
            topic = entry.topic_number
            expected = next_rank.get(topic, 1)
            if entry.rank != expected:
                raise RunFormatError(f"{where}: topic {topic} rank {entry.rank}, expected {expected}")
            if entry.doc_id in seen.setdefault(topic, set()):
                raise RunFormatError(f"{where}: topic {topic} document {entry.doc_id} repeated")
            if entry.score > last_score.get(topic, math.inf):
                raise RunFormatError(f"{where}: topic {topic} score increases at rank {entry.rank}")
            seen[topic].add(entry.doc_id)
            next_rank[topic] = expected + 1
            last_score[topic] = entry.score
            entries.append(entry)
    return entries


# ============================================================================
# Metrics
# ============================================================================


DocList = Union[RankedList, Sequence[str]]


def _doc_ids(ranked: DocList) -> List[str]:
    return ranked.doc_ids if isinstance(ranked, RankedList) else list(ranked)


def precision_at_k(ranked: DocList, qrels: Qrels, topic: int, k: int = DEFAULT_PRECISION_K) -> float:
    """Relevant documents among the first ``k``, divided by ``k``."""
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    hits = sum(1 for d in _doc_ids(ranked)[:k] if qrels.is_relevant(topic, d))
    return hits / k


def recall_at_k(ranked: DocList, qrels: Qrels, topic: int, k: int = DEFAULT_RECALL_K) -> float:
    """Relevant documents among the first ``k`` over all relevant documents of the topic."""
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    n_rel = qrels.num_relevant(topic)
    if n_rel == 0:
        return 0.0
    hits = sum(1 for d in _doc_ids(ranked)[:k] if qrels.is_relevant(topic, d))
    return hits / n_rel


def r_precision(ranked: DocList, qrels: Qrels, topic: int) -> float:
    """Precision at cutoff R, the number of relevant documents of the topic."""
    n_rel = qrels.num_relevant(topic)
    if n_rel == 0:
        return 0.0
    return precision_at_k(ranked, qrels, topic, n_rel)


@dataclass(frozen=True)
class TopicMetrics:
    """Metrics and counts for one topic."""

    p_at_10: float
    r_at_1000: float
    r_prec: float
    retrieved: int = 0
    judged: int = 0
    unjudged: int = 0
    relevant: int = 0

    def to_dict(self) -> Dict[str, Union[int, float]]:
        return {
            "p_at_10": self.p_at_10,
            "r_at_1000": self.r_at_1000,
            "r_prec": self.r_prec,
            "retrieved": self.retrieved,
            "judged": self.judged,
            "unjudged": self.unjudged,
            "relevant": self.relevant,
        }


@dataclass(frozen=True)
class MetricsReport:
    """
    Per-topic metrics and their unweighted means.

    ``missing_topics`` lists judged topics the run did not contain.
    """

    per_topic: Dict[int, TopicMetrics] = field(default_factory=dict)
    missing_topics: Tuple[int, ...] = ()
    name: str = ""

    @property
    def topics(self) -> List[int]:
        return sorted(self.per_topic)

    @property
    def means(self) -> Dict[str, float]:
        if not self.per_topic:
            return {name: 0.0 for name in METRIC_NAMES}
        n = len(self.per_topic)
        return {
            name: sum(getattr(m, name) for m in self.per_topic.values()) / n
            for name in METRIC_NAMES
        }

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "mean": self.means,
            "topics": {str(t): self.per_topic[t].to_dict() for t in self.topics},
            "missing_topics": list(self.missing_topics),
        }

    @classmethod
    def from_dict(cls, payload: Mapping[str, object]) -> "MetricsReport":
        try:
            per_topic = {
                int(t): TopicMetrics(**values)  # type: ignore[arg-type]
                for t, values in dict(payload["topics"]).items()  # type: ignore[arg-type]
            }
            missing = tuple(int(t) for t in payload.get("missing_topics", ()))  # type: ignore[union-attr]
        except (KeyError, TypeError, ValueError) as exc:
            raise EvaluationError(f"malformed metrics report: {exc}") from exc
        return cls(per_topic=per_topic, missing_topics=missing, name=str(payload.get("name", "")))

    def table_rows(self) -> List[List[object]]:
        """Rows ``[topic, P@10, R@1000, R-prec, retrieved, relevant]`` plus a mean row."""
        rows: List[List[object]] = []
        for topic in self.topics:
            m = self.per_topic[topic]
            rows.append([str(topic), m.p_at_10, m.r_at_1000, m.r_prec, m.retrieved, m.relevant])
        means = self.means
        rows.append(["all", means["p_at_10"], means["r_at_1000"], means["r_prec"],
                     sum(m.retrieved for m in self.per_topic.values()),
                     sum(m.relevant for m in self.per_topic.values())])
        return rows

    @staticmethod
    def table_header() -> List[str]:
        return ["topic", "P@10", "R@1000", "R-prec", "retrieved", "relevant"]

    def format_table(self) -> str:
        lines = ["{:>8} {:>8} {:>8} {:>8} {:>10} {:>9}".format(*self.table_header())]
        for row in self.table_rows():
            lines.append("{:>8} {:>8.4f} {:>8.4f} {:>8.4f} {:>10d} {:>9d}".format(*row))
        return "\n".join(lines)


def evaluate_ranking(ranked: DocList, qrels: Qrels, topic: int) -> TopicMetrics:
    """Metrics of a single topic ranking."""
    doc_ids = _doc_ids(ranked)
    judged = sum(1 for d in doc_ids if qrels.grade(topic, d) is not None)
    return TopicMetrics(
        p_at_10=precision_at_k(doc_ids, qrels, topic, DEFAULT_PRECISION_K),
        r_at_1000=recall_at_k(doc_ids, qrels, topic, DEFAULT_RECALL_K),
        r_prec=r_precision(doc_ids, qrels, topic),
        retrieved=len(doc_ids),
        judged=judged,
        unjudged=len(doc_ids) - judged,
        relevant=qrels.num_relevant(topic),
    )


def evaluate_run(run: Sequence[RunEntry], qrels: Qrels, name: str = "") -> MetricsReport:
    """
    Evaluate a run against qrels.

    Raises:
        EvaluationError: A topic's entries have non-contiguous ranks, a
            repeated document or increasing scores
    """
    groups = group_by_topic(run)
    per_topic: Dict[int, TopicMetrics] = {}
    for topic in sorted(groups):
        entries = groups[topic]
        _check_topic(topic, entries, EvaluationError)
        per_topic[topic] = evaluate_ranking([e.doc_id for e in entries], qrels, topic)

    missing = tuple(t for t in qrels.topics() if t not in groups)
    if missing:
        logger.warning("%d judged topic(s) absent from the run are ignored: %s",
                       len(missing), ", ".join(str(t) for t in missing))
    report = MetricsReport(per_topic=per_topic, missing_topics=missing, name=name)
    means = report.means
    logger.info("evaluated %d topics: P@10=%.4f R@1000=%.4f R-prec=%.4f",
                len(per_topic), means["p_at_10"], means["r_at_1000"], means["r_prec"])
    return report
