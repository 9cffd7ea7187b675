"""
Fielded inverted index with Okapi BM25 scoring.

Only the ``title`` and ``abstract`` fields are analyzed; publication types
and MeSH headings are kept as stored fields through the owning
:class:`~pmsearch.corpus.CorpusStore`.

Scoring follows the usual Okapi form, applied independently per field with
per-field collection statistics::

    idf(q)      = max(0, ln((N - n(q) + 0.5) / (n(q) + 0.5)))
    bm25(q, D)  = idf(q) * f * (k1 + 1) / (f + k1 * (1 - b + b * |D| / avgdl))

A query is an OR over all clause tokens. A document is a candidate only if
at least one clause token occurs in its abstract; its score is the weighted
sum of the clause contributions of both fields.

Internally documents are numbered in ascending doc_id order, so posting
arrays are sorted by doc_id and the tie-break on equal scores is a plain
ascending sort on document numbers.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

import numpy as np

from .corpus import CorpusStore, DocumentRecord
from .errors import PmSearchError
from .io_util import atomic_write_text, dumps_canonical
from .logging_util import get_logger
from .results import RankedList

if TYPE_CHECKING:  # pragma: no cover
    from .expand import ExpandedQuery

logger = get_logger(__name__)

TITLE = "title"
ABSTRACT = "abstract"
FIELDS: Tuple[str, str] = (TITLE, ABSTRACT)

DEFAULT_DEPTH = 1000
INDEX_FORMAT_VERSION = 1

POSTINGS_FILE = "postings.json"
STATS_FILE = "stats.json"
STORED_FILE = "stored.jsonl"

# Lucene's classic English stop set
DEFAULT_STOPWORDS: FrozenSet[str] = frozenset({
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if",
    "in", "into", "is", "it", "no", "not", "of", "on", "or", "such", "that",
    "the", "their", "then", "there", "these", "they", "this", "to", "was",
    "will", "with",
})

_TOKEN_RE = re.compile(r"[^\W_]+")


class IndexBuildError(PmSearchError, ValueError):
    """Exception raised for invalid index parameters or inputs."""
    pass


class QueryError(PmSearchError, ValueError):
    """Exception raised for invalid search requests."""
    pass


class IndexFormatError(PmSearchError):
    """Exception raised when a persisted index cannot be read."""
    pass


def tokenize(text: str, stopwords: Optional[Iterable[str]] = DEFAULT_STOPWORDS) -> List[str]:
    """
    Standard analyzer: lowercase, split on every non letter/digit character.

    Args:
        text: Free text; None and "" give an empty list
        stopwords: Tokens to drop after lowercasing; None disables removal

    Returns:
        Tokens in text order, duplicates preserved

    Example:
        >>> tokenize("HER-2/neu receptor")
        ['her', '2', 'neu', 'receptor']
    """
    if not text:
        return []
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        stop = stopwords if isinstance(stopwords, (set, frozenset)) else frozenset(stopwords)
        tokens = [t for t in tokens if t not in stop]
    return tokens


@dataclass(frozen=True)
class Bm25Params:
    """BM25 parameters (k1 > 0, 0 <= b <= 1) and the IDF clamp switch."""

    k1: float = 1.25
    b: float = 0.75
    clamp_idf: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k1) and self.k1 > 0):
            raise IndexBuildError(f"k1 must be positive, got {self.k1}")
        if not (0.0 <= self.b <= 1.0):
            raise IndexBuildError(f"b must be in [0, 1], got {self.b}")

    def to_dict(self) -> Dict[str, Union[float, bool]]:
        return {"k1": float(self.k1), "b": float(self.b), "clamp_idf": bool(self.clamp_idf)}


@dataclass(frozen=True)
class IndexStats:
    """
    Collection statistics, keyed by field name.

    ``field_lengths[field][i]`` is the token count of the i-th document in
    index (ascending doc_id) order. N counts every document since each one
    carries both fields, possibly empty.
    """

    doc_count: Dict[str, int]
    avg_field_length: Dict[str, float]
    field_lengths: Dict[str, np.ndarray]

    @classmethod
    def from_lengths(cls, field_lengths: Dict[str, np.ndarray]) -> "IndexStats":
        doc_count = {f: int(lengths.size) for f, lengths in field_lengths.items()}
        avg = {
            f: (float(lengths.sum()) / lengths.size if lengths.size else 0.0)
            for f, lengths in field_lengths.items()
        }
        return cls(doc_count=doc_count, avg_field_length=avg, field_lengths=field_lengths)


@dataclass(frozen=True)
class PostingList:
    """Documents (index numbers, ascending) containing ``term`` and their frequencies."""

    term: str
    docnos: np.ndarray
    frequencies: np.ndarray

    @property
    def document_frequency(self) -> int:
        return int(self.docnos.size)

    def frequency_of(self, docno: int) -> int:
        pos = int(np.searchsorted(self.docnos, docno))
        if pos < self.docnos.size and self.docnos[pos] == docno:
            return int(self.frequencies[pos])
        return 0


class FieldedIndex:
    """
    Immutable inverted index over the analyzed fields of a corpus store.

    Build with :func:`build_index`, persist with :meth:`save` and restore
    with :meth:`load`.
    """

    def __init__(
        self,
        store: CorpusStore,
        doc_ids: List[str],
        postings: Dict[str, Dict[str, PostingList]],
        stats: IndexStats,
        params: Bm25Params,
        use_stopwords: bool = True,
    ):
        self._store = store
        self._doc_ids = list(doc_ids)
        self._docno = {doc_id: i for i, doc_id in enumerate(self._doc_ids)}
        self._postings = postings
        self.stats = stats
        self.params = params
        self.use_stopwords = use_stopwords

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def store(self) -> CorpusStore:
        return self._store

    @property
    def doc_ids(self) -> List[str]:
        return list(self._doc_ids)

    @property
    def doc_count(self) -> int:
        return len(self._doc_ids)

    @property
    def stopwords(self) -> Optional[FrozenSet[str]]:
        return DEFAULT_STOPWORDS if self.use_stopwords else None

    def analyze(self, text: str) -> List[str]:
        """Tokenize ``text`` with this index's analyzer settings."""
        return tokenize(text, self.stopwords)

    def vocabulary(self, field: str) -> List[str]:
        return sorted(self._field_postings(field))

    def posting(self, field: str, term: str) -> Optional[PostingList]:
        return self._field_postings(field).get(term)

    def document(self, doc_id: str) -> Optional[DocumentRecord]:
        return self._store.get(doc_id)

    def docno(self, doc_id: str) -> int:
        try:
            return self._docno[doc_id]
        except KeyError:
            raise QueryError(f"unknown document {doc_id!r}") from None

    def document_frequency(self, field: str, term: str) -> int:
        """n(q): number of documents whose ``field`` contains ``term``."""
        posting = self.posting(field, term)
        return posting.document_frequency if posting is not None else 0

    def term_frequency(self, doc_id: str, field: str, term: str) -> int:
        """f(q, D): occurrences of ``term`` in the ``field`` of ``doc_id``."""
        docno = self.docno(doc_id)
        posting = self.posting(field, term)
        return posting.frequency_of(docno) if posting is not None else 0

    def field_length(self, doc_id: str, field: str) -> int:
        self._check_field(field)
        return int(self.stats.field_lengths[field][self.docno(doc_id)])

    def _check_field(self, field: str) -> None:
        if field not in FIELDS:
            raise QueryError(f"unknown field {field!r}; expected one of {FIELDS}")

    def _field_postings(self, field: str) -> Dict[str, PostingList]:
        self._check_field(field)
        return self._postings[field]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def serialize(self) -> Dict[str, str]:
        """Return the text of each index file keyed by file name."""
        postings = {
            field: {
                term: [[self._doc_ids[int(d)], int(f)] for d, f in zip(p.docnos, p.frequencies)]
                for term, p in self._postings[field].items()
            }
            for field in FIELDS
        }
        stats = {
            "format_version": INDEX_FORMAT_VERSION,
            "params": self.params.to_dict(),
            "analyzer": {"stopwords": self.use_stopwords},
            "doc_ids": self._doc_ids,
            "corpus": {"kept": self._store.kept, "discarded": self._store.discarded},
            "fields": {
                field: {
                    "doc_count": self.stats.doc_count[field],
                    "avg_field_length": self.stats.avg_field_length[field],
                    "field_lengths": [int(x) for x in self.stats.field_lengths[field]],
                }
                for field in FIELDS
            },
        }
        stored = "".join(dumps_canonical(record.to_json()) + "\n" for record in self._store)
        return {
            POSTINGS_FILE: dumps_canonical(postings) + "\n",
            STATS_FILE: dumps_canonical(stats) + "\n",
            STORED_FILE: stored,
        }

    def save(self, directory: Union[str, Path]) -> Path:
        """Write the index files into ``directory`` (created if needed)."""
        out_dir = Path(directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.serialize().items():
            atomic_write_text(out_dir / name, text)
        logger.info("index saved to %s (%d documents)", out_dir, self.doc_count)
        return out_dir

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "FieldedIndex":
        """
        Restore an index written by :meth:`save`.

        Raises:
            IndexFormatError: Missing files or inconsistent content
        """
        in_dir = Path(directory)
        try:
            postings_raw = json.loads((in_dir / POSTINGS_FILE).read_text(encoding="utf-8"))
            stats_raw = json.loads((in_dir / STATS_FILE).read_text(encoding="utf-8"))
            stored_lines = (in_dir / STORED_FILE).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError as exc:
            raise IndexFormatError(f"index directory {in_dir} is incomplete: {exc.filename}") from exc
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"index directory {in_dir}: invalid JSON ({exc.msg})") from exc

        try:
            if stats_raw.get("format_version") != INDEX_FORMAT_VERSION:
                raise IndexFormatError(
                    f"unsupported index format version {stats_raw.get('format_version')!r}"
                )
            records = [
                DocumentRecord.from_json(json.loads(line))
                for line in stored_lines if line.strip()
            ]
            store = CorpusStore.from_records(records, discarded=int(stats_raw["corpus"]["discarded"]))
            doc_ids = [str(d) for d in stats_raw["doc_ids"]]
            docno = {d: i for i, d in enumerate(doc_ids)}
            if sorted(docno) != doc_ids or set(doc_ids) != set(store.doc_ids()):
                raise IndexFormatError("document ids in stats and stored fields disagree")

            field_lengths = {
                field: np.asarray(stats_raw["fields"][field]["field_lengths"], dtype=np.int64)
                for field in FIELDS
            }
            postings: Dict[str, Dict[str, PostingList]] = {}
            for field in FIELDS:
                postings[field] = {}
                for term, entries in postings_raw[field].items():
                    docnos = np.asarray([docno[d] for d, _ in entries], dtype=np.int64)
                    freqs = np.asarray([f for _, f in entries], dtype=np.int64)
                    postings[field][term] = PostingList(term, docnos, freqs)
            params = Bm25Params(**stats_raw["params"])
            use_stopwords = bool(stats_raw["analyzer"]["stopwords"])
        except IndexFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise IndexFormatError(f"index directory {in_dir}: malformed content ({exc})") from exc

        return cls(
            store=store,
            doc_ids=doc_ids,
            postings=postings,
            stats=IndexStats.from_lengths(field_lengths),
            params=params,
            use_stopwords=use_stopwords,
        )


def build_index(
    store: CorpusStore,
    params: Optional[Bm25Params] = None,
    use_stopwords: bool = True,
) -> FieldedIndex:
    """
    Build the title/abstract inverted index of a finalized store.

    The result depends only on the store content: documents are numbered in
    ascending doc_id order and postings are sorted by document number.

    Raises:
        IndexBuildError: If the store is still open
    """
    if not store.finalized:
        raise IndexBuildError("store must be finalized before indexing")
    params = params or Bm25Params()
    stopwords = DEFAULT_STOPWORDS if use_stopwords else None

    doc_ids = sorted(store.doc_ids())
    lengths = {field: np.zeros(len(doc_ids), dtype=np.int64) for field in FIELDS}
    raw: Dict[str, Dict[str, Tuple[List[int], List[int]]]] = {field: {} for field in FIELDS}

    for docno, doc_id in enumerate(doc_ids):
        record = store.get(doc_id)
        for field, text in ((TITLE, record.title), (ABSTRACT, record.abstract)):
            tokens = tokenize(text, stopwords)
            lengths[field][docno] = len(tokens)
            for term, freq in Counter(tokens).items():
                docs, freqs = raw[field].setdefault(term, ([], []))
                docs.append(docno)
                freqs.append(freq)

    postings = {
        field: {
            term: PostingList(term, np.asarray(docs, dtype=np.int64), np.asarray(freqs, dtype=np.int64))
            for term, (docs, freqs) in raw[field].items()
        }
        for field in FIELDS
    }
    stats = IndexStats.from_lengths(lengths)
    logger.info(
        "index built: %d documents, %d title terms, %d abstract terms",
        len(doc_ids), len(postings[TITLE]), len(postings[ABSTRACT]),
    )
    return FieldedIndex(store, doc_ids, postings, stats, params, use_stopwords)


def _idf_value(n_docs: int, df: int, clamp: bool) -> float:
    value = math.log((n_docs - df + 0.5) / (df + 0.5))
    return max(0.0, value) if clamp else value


def idf(index: FieldedIndex, field: str, term: str) -> float:
    """Inverse document frequency of ``term`` in ``field`` (clamped at 0 by default)."""
    df = index.document_frequency(field, term)
    return _idf_value(index.stats.doc_count[field], df, index.params.clamp_idf)


def _saturation(index: FieldedIndex, field: str, freqs: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Term-frequency part of BM25; zero when the field collection is empty."""
    avgdl = index.stats.avg_field_length[field]
    if avgdl <= 0.0:
        return np.zeros(freqs.shape, dtype=float)
    k1, b = index.params.k1, index.params.b
    freqs = freqs.astype(float)
    return freqs * (k1 + 1.0) / (freqs + k1 * (1.0 - b + b * lengths / avgdl))


def bm25_clause_score(index: FieldedIndex, doc_id: str, field: str, term: str) -> float:
    """BM25 contribution of one token to one field of one document."""
    freq = index.term_frequency(doc_id, field, term)
    if freq == 0:
        return 0.0
    length = index.stats.field_lengths[field][index.docno(doc_id)]
    tf_part = _saturation(index, field, np.array([freq]), np.array([length], dtype=float))
    return float(idf(index, field, term) * tf_part[0])


def search(index: FieldedIndex, query: "ExpandedQuery", limit: int = DEFAULT_DEPTH) -> RankedList:
    """
    Score ``query`` against the index.

    Args:
        index: Built index
        query: Weighted clauses (see :class:`pmsearch.expand.ExpandedQuery`)
        limit: Maximum number of results; 0 gives an empty list

    Returns:
        RankedList sorted by descending score, ties by ascending doc_id

    Raises:
        QueryError: Empty query or negative limit
    """
    if not query.clauses:
        raise QueryError(f"topic {query.topic_number}: empty query")
    if limit < 0:
        raise QueryError(f"limit must be non-negative, got {limit}")
    if limit == 0 or index.doc_count == 0:
        return RankedList(query.topic_number, ())

    scores = np.zeros(index.doc_count, dtype=float)
    in_abstract = np.zeros(index.doc_count, dtype=bool)

    for clause in query.clauses:
        for token in index.analyze(clause.surface):
            for field in FIELDS:
                posting = index.posting(field, token)
                if posting is None:
                    continue
                if field == ABSTRACT:
                    in_abstract[posting.docnos] = True
                lengths = index.stats.field_lengths[field][posting.docnos].astype(float)
                contribution = idf(index, field, token) * _saturation(
                    index, field, posting.frequencies, lengths
                )
                # docnos are unique within a posting list
                scores[posting.docnos] += clause.weight * contribution

    candidates = np.flatnonzero(in_abstract)
    order = np.lexsort((candidates, -scores[candidates]))[:limit]
    doc_ids = index.doc_ids
    entries = tuple((doc_ids[int(candidates[i])], float(scores[candidates[i]])) for i in order)
    logger.debug("topic %s: %d candidates, returning %d", query.topic_number, candidates.size, len(entries))
    return RankedList(query.topic_number, entries)
