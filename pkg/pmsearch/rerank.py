"""
Two-stage reranking of BM25 rankings.

Stage 1, title penalty
    documents whose title mentions none of the topic's disease surfaces get
    their score multiplied by a penalty factor (default 0.6) and the list is
    re-sorted.

Stage 2, classifier fusion
    scores are min-max scaled to [0, 1] over the whole list, then the top K
    documents (default 50) get the relevance probability of the logistic
    model added and are re-sorted among themselves. The tail is untouched.

Features (fixed order, see :data:`pmsearch.logistic.FEATURE_NAMES`):
    disease_in_title, pos_in_title, pos_in_abstract, neg_in_title,
    neg_in_abstract, is_clinical_trial, heading_hits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import CorpusStore, DocumentRecord, Topic
from .errors import PmSearchError
from .evaluation import Qrels
from .index import tokenize
from .logging_util import get_logger
from .logistic import FeatureError, FeatureVector, LogisticModel
from .results import RankedList, sort_entries

logger = get_logger(__name__)

__all__ = [
    "DEFAULT_HEADING_KEYWORDS",
    "DEFAULT_NEGATIVE_KEYWORDS",
    "DEFAULT_POSITIVE_KEYWORDS",
    "FeatureError",
    "KeywordLists",
    "RerankConfig",
    "RerankError",
    "apply_title_penalty",
    "build_training_set",
    "extract_features",
    "min_max_scale",
    "rank_by_probability",
    "rerank_pipeline",
    "rerank_top_k",
    "title_mentions_disease",
]

DEFAULT_POSITIVE_KEYWORDS: Tuple[str, ...] = (
    "treatment", "survival", "prognostic", "clinical", "prognosis", "therapy",
    "outcome", "resistance", "targets", "therapeutic", "immunotherapy",
)
DEFAULT_NEGATIVE_KEYWORDS: Tuple[str, ...] = (
    "pathogenesis", "tumor", "development", "model", "tissue", "mouse",
    "specific", "staining", "dna", "case", "combinations",
)
DEFAULT_HEADING_KEYWORDS: Tuple[str, ...] = (
    "humans", "mutation", "genetics", "drug therapy", "metabolism",
    "pharmacology", "antagonists & inhibitors", "drug effects",
    "therapeutic use", "immunology",
)

TITLE_MATCH_MODES = ("all", "original")
CLINICAL_TRIAL = "clinical trial"


class RerankError(PmSearchError, ValueError):
    """Exception raised for invalid rerank inputs or settings."""
    pass


def _normalize_terms(terms: Iterable[str]) -> Tuple[str, ...]:
    seen = set()
    result: List[str] = []
    for term in terms:
        text = " ".join(str(term).lower().split())
        if text and text not in seen:
            seen.add(text)
            result.append(text)
    return tuple(result)


@dataclass(frozen=True)
class KeywordLists:
    """Positive, negative and MeSH-heading keywords, lowercased and deduplicated."""

    positive: Tuple[str, ...] = DEFAULT_POSITIVE_KEYWORDS
    negative: Tuple[str, ...] = DEFAULT_NEGATIVE_KEYWORDS
    heading: Tuple[str, ...] = DEFAULT_HEADING_KEYWORDS

    def __post_init__(self) -> None:
        for name in ("positive", "negative", "heading"):
            object.__setattr__(self, name, _normalize_terms(getattr(self, name)))

    def to_dict(self) -> Dict[str, List[str]]:
        return {"positive": list(self.positive), "negative": list(self.negative),
                "heading": list(self.heading)}

    @classmethod
    def from_dict(cls, payload: Mapping[str, Sequence[str]]) -> "KeywordLists":
        """Missing lists fall back to the defaults."""
        defaults = cls()
        values = {}
        for name in ("positive", "negative", "heading"):
            terms = payload.get(name, getattr(defaults, name))
            if isinstance(terms, str) or not all(isinstance(t, str) for t in terms):
                raise RerankError(f"keyword list '{name}' must be an array of strings")
            values[name] = tuple(terms)
        return cls(**values)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "KeywordLists":
        """Read a JSON file with ``positive``/``negative``/``heading`` arrays."""
        path = Path(filepath)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RerankError(f"{path.name}: invalid JSON ({exc.msg})") from exc
        if not isinstance(payload, dict):
            raise RerankError(f"{path.name}: expected a JSON object")
        return cls.from_dict(payload)


@dataclass(frozen=True)
class RerankConfig:
    """Penalty factor in (0, 1], positive top_k, title match mode."""

    penalty_factor: float = 0.6
    top_k: int = 50
    title_match: str = "all"

    def __post_init__(self) -> None:
        if not 0.0 < self.penalty_factor <= 1.0:
            raise RerankError(f"penalty_factor must be in (0, 1], got {self.penalty_factor}")
        if int(self.top_k) != self.top_k or self.top_k < 1:
            raise RerankError(f"top_k must be a positive integer, got {self.top_k}")
        if self.title_match not in TITLE_MATCH_MODES:
            raise RerankError(f"title_match must be one of {TITLE_MATCH_MODES}, got {self.title_match!r}")


# ============================================================================
# Features
# ============================================================================


def _count_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> int:
    n = len(phrase)
    if n == 0 or n > len(tokens):
        return 0
    if n == 1:
        return sum(1 for t in tokens if t == phrase[0])
    return sum(1 for i in range(len(tokens) - n + 1) if list(tokens[i:i + n]) == list(phrase))


def _count_keywords(tokens: Sequence[str], keywords: Sequence[str]) -> int:
    return sum(_count_phrase(tokens, tokenize(k, None)) for k in keywords)


def title_mentions_disease(title: str, disease_surfaces: Sequence[str]) -> bool:
    """True if any surface occurs as a contiguous token run of the title."""
    title_tokens = tokenize(title, None)
    return any(_count_phrase(title_tokens, tokenize(s, None)) > 0 for s in disease_surfaces)


def extract_features(
    doc: DocumentRecord,
    disease_surfaces: Sequence[str],
    keywords: Optional[KeywordLists] = None,
) -> FeatureVector:
    """
    Compute the reranking features of ``doc``.

    Keyword counts are token counts with multiplicity. heading_hits counts
    heading phrases found (case-insensitive substring) in at least one MeSH
    heading, each phrase at most once.

    Example:
        >>> doc = DocumentRecord("1", title="Prognostic factors in lung cancer")
        >>> extract_features(doc, ["lung cancer"]).pos_in_title
        1
    """
    keywords = keywords or KeywordLists()
    title_tokens = tokenize(doc.title, None)
    abstract_tokens = tokenize(doc.abstract, None)
    headings = [h.lower() for h in doc.mesh_headings]
    return FeatureVector(
        disease_in_title=int(title_mentions_disease(doc.title, disease_surfaces)),
        pos_in_title=_count_keywords(title_tokens, keywords.positive),
        pos_in_abstract=_count_keywords(abstract_tokens, keywords.positive),
        neg_in_title=_count_keywords(title_tokens, keywords.negative),
        neg_in_abstract=_count_keywords(abstract_tokens, keywords.negative),
        is_clinical_trial=int(any(CLINICAL_TRIAL in p.lower() for p in doc.publication_types)),
        heading_hits=sum(1 for phrase in keywords.heading if any(phrase in h for h in headings)),
    )


def _require(store: CorpusStore, doc_id: str) -> DocumentRecord:
    record = store.get(doc_id)
    if record is None:
        raise RerankError(f"document {doc_id} is not in the corpus store")
    return record


# ============================================================================
# Stages
# ============================================================================


def apply_title_penalty(
    ranked: RankedList,
    store: CorpusStore,
    disease_surfaces: Sequence[str],
    factor: float = 0.6,
) -> RankedList:
    """
    Multiply the score of every document whose title lacks the disease by
    ``factor`` and re-sort (ties by doc_id).

    Raises:
        RerankError: factor outside (0, 1] or a document missing from the store
    """
    if not 0.0 < factor <= 1.0:
        raise RerankError(f"penalty factor must be in (0, 1], got {factor}")
    entries = []
    penalized = 0
    for doc_id, score in ranked.entries:
        if title_mentions_disease(_require(store, doc_id).title, disease_surfaces):
            entries.append((doc_id, score))
        else:
            entries.append((doc_id, score * factor))
            penalized += 1
    logger.debug("topic %s: title penalty applied to %d of %d documents",
                 ranked.topic_number, penalized, len(ranked))
    return RankedList.from_unsorted(ranked.topic_number, entries)


def min_max_scale(scores: Sequence[float]) -> np.ndarray:
    """
    Affine map of ``scores`` onto [0, 1]; a constant input maps to zeros.

    Raises:
        RerankError: On empty input
    """
    values = np.asarray(scores, dtype=float)
    if values.size == 0:
        raise RerankError("cannot scale an empty score list")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def _probabilities(
    doc_ids: Sequence[str],
    model: LogisticModel,
    store: CorpusStore,
    disease_surfaces: Sequence[str],
    keywords: KeywordLists,
) -> np.ndarray:
    features = [extract_features(_require(store, d), disease_surfaces, keywords) for d in doc_ids]
    return model.predict_proba(features)


def rerank_top_k(
    ranked: RankedList,
    model: LogisticModel,
    store: CorpusStore,
    disease_surfaces: Sequence[str],
    keywords: Optional[KeywordLists] = None,
    config: Optional[RerankConfig] = None,
) -> RankedList:
    """
    Add the relevance probability to the first K scores and re-sort them.

    Positions K+1.. keep their entries and scores.
    """
    config = config or RerankConfig()
    keywords = keywords or KeywordLists()
    k = min(config.top_k, len(ranked))
    if k == 0:
        return ranked
    head = ranked.entries[:k]
    probs = _probabilities([d for d, _ in head], model, store, disease_surfaces, keywords)
    fused = sort_entries((d, s + float(p)) for (d, s), p in zip(head, probs))
    return RankedList(ranked.topic_number, tuple(fused) + ranked.entries[k:])


def rerank_pipeline(
    raw: RankedList,
    model: LogisticModel,
    store: CorpusStore,
    disease_surfaces: Sequence[str],
    keywords: Optional[KeywordLists] = None,
    config: Optional[RerankConfig] = None,
) -> RankedList:
    """Title penalty, then min-max scaling of the whole list, then top-K fusion."""
    config = config or RerankConfig()
    if len(raw) == 0:
        return raw
    penalized = apply_title_penalty(raw, store, disease_surfaces, config.penalty_factor)
    scaled = RankedList(
        penalized.topic_number,
        tuple(zip(penalized.doc_ids, min_max_scale(penalized.scores).tolist())),
    )
    return rerank_top_k(scaled, model, store, disease_surfaces, keywords, config)


def rank_by_probability(
    ranked: RankedList,
    model: LogisticModel,
    store: CorpusStore,
    disease_surfaces: Sequence[str],
    keywords: Optional[KeywordLists] = None,
) -> RankedList:
    """Rank the documents of ``ranked`` by classifier probability alone."""
    if len(ranked) == 0:
        return ranked
    probs = _probabilities(ranked.doc_ids, model, store, disease_surfaces, keywords or KeywordLists())
    return RankedList.from_unsorted(ranked.topic_number, zip(ranked.doc_ids, probs.tolist()))


# ============================================================================
# Training data
# ============================================================================


def build_training_set(
    topics: Sequence[Topic],
    qrels: Qrels,
    store: CorpusStore,
    results: Optional[Mapping[int, RankedList]] = None,
    keywords: Optional[KeywordLists] = None,
    surfaces: Optional[Mapping[int, Sequence[str]]] = None,
    retrieved_only: bool = False,
) -> List[Tuple[FeatureVector, int]]:
    """
    One labeled example per judged (topic, document) pair found in the store.

    Args:
        topics: Training topics, processed in the given order
        qrels: Judgments; grade >= 1 gives label 1
        store: Corpus store holding the judged documents
        results: Retrieval output per topic number
        keywords: Keyword lists for the features
        surfaces: Disease surfaces per topic; defaults to the topic disease
        retrieved_only: Keep only judged documents present in ``results``

    Judged documents missing from the store are skipped and counted in a
    warning.
    """
    keywords = keywords or KeywordLists()
    examples: List[Tuple[FeatureVector, int]] = []
    skipped = 0
    for topic in topics:
        judged = qrels.judged(topic.number)
        disease_surfaces = (surfaces or {}).get(topic.number, (topic.disease,))
        retrieved = None
        if retrieved_only:
            ranked = (results or {}).get(topic.number)
            retrieved = set(ranked.doc_ids) if ranked is not None else set()
        for doc_id in sorted(judged):
            if retrieved is not None and doc_id not in retrieved:
                continue
            record = store.get(doc_id)
            if record is None:
                skipped += 1
                continue
            label = 1 if qrels.is_relevant(topic.number, doc_id) else 0
            examples.append((extract_features(record, disease_surfaces, keywords), label))
    if skipped:
        logger.warning("%d judged document(s) missing from the store were skipped", skipped)
    logger.info("training set: %d examples from %d topics", len(examples), len(topics))
    return examples
