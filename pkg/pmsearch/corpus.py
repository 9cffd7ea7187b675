"""
Document and topic ingestion for pmsearch.

This module turns the two raw inputs of an experiment into canonical
in-memory records:

* the document collection (one JSON object per line, keys ``id``,
  ``title``, ``abstract``, ``pub_types``, ``mesh``) becomes a
  :class:`CorpusStore` of :class:`DocumentRecord` objects;
* the topic file (``<topics><topic number="N">...``) becomes a list of
  :class:`Topic` objects.

Duplicate policy: a document id is indexed at its first occurrence in the
stream; later versions are counted as discarded and dropped. The store is
immutable once finalized and can be shared between readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

from lxml import etree

from .errors import PmSearchError
from .logging_util import get_logger

logger = get_logger(__name__)


class CorpusError(PmSearchError, ValueError):
    """Exception raised for invalid document records or store misuse."""
    pass


class TopicParseError(PmSearchError, ValueError):
    """Exception raised for malformed topic files."""
    pass


def _as_text(value: Any, field_name: str) -> str:
    if value is None:
        return ""
    if not isinstance(value, str):
        raise CorpusError(f"field '{field_name}' must be a string, got {type(value).__name__}")
    return value


def _as_string_tuple(value: Any, field_name: str) -> Tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        raise CorpusError(f"field '{field_name}' must be a list of strings, got a bare string")
    try:
        return tuple(str(item) for item in value)
    except TypeError:
        raise CorpusError(f"field '{field_name}' must be a list of strings")


@dataclass(frozen=True)
class DocumentRecord:
    """
    One abstract-level article.

    Only ``title`` and ``abstract`` are analyzed by the index; the
    publication types and MeSH headings are stored for the reranker.

    Attributes:
        doc_id: Opaque, non-empty identifier without whitespace (PubMed id, conference id ...)
        title: Article title, possibly empty
        abstract: Article abstract ("content"), possibly empty
        publication_types: Publication type strings, e.g. "Clinical Trial"
        mesh_headings: MeSH heading strings, e.g. "Lung Neoplasms/genetics"
    """

    doc_id: str
    title: str = ""
    abstract: str = ""
    publication_types: Tuple[str, ...] = ()
    mesh_headings: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.doc_id, str) or not self.doc_id.strip():
            raise CorpusError(f"document id must be a non-empty string, got {self.doc_id!r}")
        # run files are whitespace-separated
        if any(c.isspace() for c in self.doc_id):
            raise CorpusError(f"document id must not contain whitespace, got {self.doc_id!r}")
        object.__setattr__(self, "title", _as_text(self.title, "title"))
        object.__setattr__(self, "abstract", _as_text(self.abstract, "abstract"))
        object.__setattr__(
            self, "publication_types", _as_string_tuple(self.publication_types, "pub_types")
        )
        object.__setattr__(self, "mesh_headings", _as_string_tuple(self.mesh_headings, "mesh"))

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "DocumentRecord":
        """
        Build a record from a decoded document-file object.

        Raises:
            CorpusError: If ``id`` is missing/empty or a field has a wrong type
        """
        if not isinstance(payload, Mapping):
            raise CorpusError("document line is not a JSON object")
        raw_id = payload.get("id")
        if raw_id is None or (isinstance(raw_id, str) and not raw_id.strip()):
            raise CorpusError("record has no 'id'")
        return cls(
            doc_id=str(raw_id),
            title=payload.get("title"),
            abstract=payload.get("abstract"),
            publication_types=payload.get("pub_types"),
            mesh_headings=payload.get("mesh"),
        )

    def to_json(self) -> Dict[str, Any]:
        """Inverse of :meth:`from_json`."""
        return {
            "id": self.doc_id,
            "title": self.title,
            "abstract": self.abstract,
            "pub_types": list(self.publication_types),
            "mesh": list(self.mesh_headings),
        }


@dataclass(frozen=True)
class IngestError:
    """A rejected input record (1-based stream position and reason)."""

    position: int
    message: str


class CorpusStore:
    """
    Ordered, duplicate-free collection of :class:`DocumentRecord`.

    Records are kept in ingest order. While the store is open, ``add``
    applies the first-hit policy; ``finalize`` freezes it.

    Example:
        >>> store = ingest_documents([
        ...     {"id": "X", "abstract": "first"},
        ...     {"id": "X", "abstract": "revised"},
        ... ])
        >>> store.counts()
        (1, 1)
        >>> store.get("X").abstract
        'first'
    """

    def __init__(self) -> None:
        self._records: Dict[str, DocumentRecord] = {}
        self._discarded = 0
        self._errors: List[IngestError] = []
        self._finalized = False

    @classmethod
    def from_records(cls, records: Iterable[DocumentRecord], discarded: int = 0) -> "CorpusStore":
        """Rebuild a finalized store from already-deduplicated records."""
        store = cls()
        for record in records:
            if not store.add(record):
                raise CorpusError(f"duplicate document id {record.doc_id} in stored records")
        store._discarded = discarded
        return store.finalize()

    # ------------------------------------------------------------------
    # Ingestion
    # ------------------------------------------------------------------

    def add(self, record: DocumentRecord) -> bool:
        """
        Add a record unless its id was already seen.

        Returns:
            True if the record was kept, False if it was a later duplicate
        """
        if self._finalized:
            raise CorpusError("cannot add documents to a finalized store")
        if record.doc_id in self._records:
            self._discarded += 1
            logger.debug("duplicate document id %s discarded", record.doc_id)
            return False
        self._records[record.doc_id] = record
        return True

    def reject(self, position: int, message: str) -> None:
        """Record a per-record ingestion error; ingestion continues."""
        if self._finalized:
            raise CorpusError("cannot reject records on a finalized store")
        self._errors.append(IngestError(position, message))
        logger.warning("record %d rejected: %s", position, message)

    def finalize(self) -> "CorpusStore":
        """Freeze the store. Returns self for chaining."""
        self._finalized = True
        return self

    # ------------------------------------------------------------------
    # Read access
    # ------------------------------------------------------------------

    @property
    def finalized(self) -> bool:
        return self._finalized

    @property
    def kept(self) -> int:
        return len(self._records)

    @property
    def discarded(self) -> int:
        return self._discarded

    @property
    def errors(self) -> Tuple[IngestError, ...]:
        return tuple(self._errors)

    def counts(self) -> Tuple[int, int]:
        """Return the (kept, discarded) pair."""
        return self.kept, self.discarded

    def get(self, doc_id: str) -> Optional[DocumentRecord]:
        return self._records.get(doc_id)

    def doc_ids(self) -> List[str]:
        """Document ids in ingest order."""
        return list(self._records)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[DocumentRecord]:
        return iter(self._records.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CorpusStore):
            return NotImplemented
        return list(self._records.values()) == list(other._records.values())

    def __repr__(self) -> str:
        return f"CorpusStore(kept={self.kept}, discarded={self.discarded}, errors={len(self._errors)})"


def _ingest_one(store: CorpusStore, position: int, item: Union[DocumentRecord, Mapping[str, Any]]) -> None:
    try:
        record = item if isinstance(item, DocumentRecord) else DocumentRecord.from_json(item)
    except CorpusError as exc:
        store.reject(position, str(exc))
        return
    store.add(record)


def ingest_documents(records: Iterable[Union[DocumentRecord, Mapping[str, Any]]]) -> CorpusStore:
    """
    Ingest an ordered stream of documents into a finalized store.

    Each item is either a :class:`DocumentRecord` or a decoded JSON object
    of the document file format. Invalid items are rejected individually.

    Args:
        records: Ordered stream; its order defines the "first hit"

    Returns:
        Finalized CorpusStore
    """
    store = CorpusStore()
    for position, item in enumerate(records, start=1):
        _ingest_one(store, position, item)
    logger.info("ingested %d documents (%d duplicates discarded, %d rejected)",
                store.kept, store.discarded, len(store.errors))
    return store.finalize()


def load_corpus(filepath: Union[str, Path]) -> CorpusStore:
    """
    Read a document file (UTF-8, one JSON object per line) into a store.

    Blank lines are skipped. Lines that are not valid JSON are rejected with
    their line number and ingestion continues.

    Raises:
        OSError: If the file cannot be read
    """
    path = Path(filepath)
    store = CorpusStore()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                store.reject(line_no, f"{path.name}:{line_no}: invalid JSON ({exc.msg})")
                continue
            _ingest_one(store, line_no, payload)
    logger.info("loaded %s: kept=%d discarded=%d rejected=%d",
                path.name, store.kept, store.discarded, len(store.errors))
    return store.finalize()


def get_document(store: CorpusStore, doc_id: str) -> Optional[DocumentRecord]:
    """Return the stored record for ``doc_id`` or None when absent."""
    return store.get(doc_id)


# ============================================================================
# Topics
# ============================================================================


@dataclass(frozen=True)
class Topic:
    """
    A precision-medicine query topic (one patient).

    Attributes:
        number: Positive topic number, unique within a topic set
        disease: Disease text, e.g. "lung cancer"
        gene: Gene text, may list several genes/variants, e.g. "BRAF (V600E)"
        demographic: Free text such as "58-year-old woman"; stored, never used
    """

    number: int
    disease: str
    gene: str
    demographic: str = ""

    def __post_init__(self) -> None:
        if self.number <= 0:
            raise TopicParseError(f"topic number must be positive, got {self.number}")
        if not self.disease.strip():
            raise TopicParseError(f"topic {self.number}: empty disease")
        if not self.gene.strip():
            raise TopicParseError(f"topic {self.number}: empty gene")


def _child_text(element: Any, tag: str) -> Optional[str]:
    child = element.find(tag)
    if child is None:
        return None
    return "".join(child.itertext()).strip()


def parse_topics(document: Union[str, bytes]) -> List[Topic]:
    """
    Parse a topic XML document.

    Args:
        document: XML text, ``<topics><topic number="N"><disease>...``

    Returns:
        One Topic per ``<topic>`` element, in document order

    Raises:
        TopicParseError: Malformed XML, missing number/disease/gene, or a
            duplicate topic number
    """
    data = document.encode("utf-8") if isinstance(document, str) else document
    try:
        root = etree.fromstring(data)
    except etree.XMLSyntaxError as exc:
        raise TopicParseError(f"malformed topic XML: {exc}") from exc

    if root.tag != "topics":
        raise TopicParseError(f"expected <topics> root element, found <{root.tag}>")

    topics: List[Topic] = []
    seen = set()
    for position, element in enumerate(root.findall("topic"), start=1):
        raw_number = element.get("number")
        if raw_number is None:
            raise TopicParseError(f"topic #{position} has no 'number' attribute")
        try:
            number = int(raw_number.strip())
        except ValueError:
            raise TopicParseError(f"topic #{position}: invalid number {raw_number!r}")
        if number in seen:
            raise TopicParseError(f"duplicate topic number {number}")
        seen.add(number)

        disease = _child_text(element, "disease")
        if not disease:
            raise TopicParseError(f"topic {number}: missing <disease>")
        gene = _child_text(element, "gene")
        if not gene:
            raise TopicParseError(f"topic {number}: missing <gene>")
        demographic = _child_text(element, "demographic") or ""

        topics.append(Topic(number=number, disease=disease, gene=gene, demographic=demographic))

    logger.debug("parsed %d topics", len(topics))
    return topics


def load_topics(filepath: Union[str, Path]) -> List[Topic]:
    """Read and parse a topic XML file."""
    return parse_topics(Path(filepath).read_bytes())
