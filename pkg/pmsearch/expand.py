"""
Knowledge-base query expansion.

A :class:`~pmsearch.corpus.Topic` is turned into an :class:`ExpandedQuery`:
a list of weighted surface forms that the index ORs together.

Disease side
    the topic disease text, the preferred term and synonyms from the disease
    knowledge base, acronyms listed in the knowledge base and the most
    frequent acronym mined from the corpus ("disease name (ACRONYM)").

Gene side
    every gene named in the topic, any parenthesized variant such as
    ``(V600E)``, and the aliases of each gene from the gene table.

Default weights: originals 1.0, preferred 0.1, synonyms 0.1, acronyms 0.5,
gene aliases 0.3.

Knowledge-base file formats
---------------------------
Disease KB, one JSON object per line::

    {"canonical": "cholangiocarcinoma", "preferred": "cholangiocarcinoma of
     biliary tract", "synonyms": ["bile duct carcinoma"], "acronyms": []}

Gene table, tab-separated ``symbol<TAB>alias|alias|...`` where ``-`` means
no alias. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .corpus import CorpusStore, Topic
from .errors import PmSearchError
from .logging_util import get_logger

logger = get_logger(__name__)

DISEASE_ORIGINAL = "disease_original"
DISEASE_PREFERRED = "disease_preferred"
DISEASE_SYNONYM = "disease_synonym"
DISEASE_ACRONYM = "disease_acronym"
GENE_ORIGINAL = "gene_original"
GENE_ALIAS = "gene_alias"

ORIGINS: Tuple[str, ...] = (
    DISEASE_ORIGINAL,
    DISEASE_PREFERRED,
    DISEASE_SYNONYM,
    DISEASE_ACRONYM,
    GENE_ORIGINAL,
    GENE_ALIAS,
)
DISEASE_ORIGINS = frozenset(ORIGINS[:4])
EXPANSION_ORIGINS: Tuple[str, ...] = (DISEASE_PREFERRED, DISEASE_SYNONYM, DISEASE_ACRONYM, GENE_ALIAS)

NO_ALIAS = "-"


class KnowledgeBaseError(PmSearchError, ValueError):
    """Exception raised for malformed disease KB or gene table files."""
    pass


class ExpansionError(PmSearchError, ValueError):
    """Exception raised when a topic cannot be expanded."""
    pass


def _clean_unique(values: Iterable[str], case_sensitive: bool) -> Tuple[str, ...]:
    seen = set()
    result: List[str] = []
    for value in values:
        text = value.strip()
        if not text:
            continue
        key = text if case_sensitive else text.lower()
        if key in seen:
            continue
        seen.add(key)
        result.append(text)
    return tuple(result)


# ============================================================================
# Knowledge-base entries
# ============================================================================


@dataclass(frozen=True)
class DiseaseEntry:
    """
    Disease knowledge-base entry.

    Surfaces are whitespace-trimmed; duplicates inside each list are dropped
    case-insensitively (first spelling wins).
    """

    canonical: str
    preferred: str = ""
    synonyms: Tuple[str, ...] = ()
    acronyms: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.canonical, str) or not self.canonical.strip():
            raise KnowledgeBaseError("disease entry has an empty canonical name")
        object.__setattr__(self, "canonical", self.canonical.strip())
        object.__setattr__(self, "preferred", (self.preferred or "").strip())
        object.__setattr__(self, "synonyms", _clean_unique(self.synonyms, case_sensitive=False))
        object.__setattr__(self, "acronyms", _clean_unique(self.acronyms, case_sensitive=False))


@dataclass(frozen=True)
class GeneEntry:
    """Gene table row: official symbol and its aliases (case-sensitive dedup)."""

    symbol: str
    aliases: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.symbol or not self.symbol.strip():
            raise KnowledgeBaseError("gene entry has an empty symbol")
        object.__setattr__(self, "symbol", self.symbol.strip())
        aliases = [a for a in self.aliases if a.strip() != NO_ALIAS]
        object.__setattr__(self, "aliases", _clean_unique(aliases, case_sensitive=True))


def _string_list(payload: Mapping, key: str, where: str) -> List[str]:
    value = payload.get(key, [])
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise KnowledgeBaseError(f"{where}: '{key}' must be a list of strings")
    return value


def parse_disease_kb(lines: Iterable[str], source: str = "<disease kb>") -> Dict[str, DiseaseEntry]:
    """
    Parse disease KB lines into a map keyed by lowercase canonical name.

    Raises:
        KnowledgeBaseError: Malformed line (with line number) or duplicate
            canonical name
    """
    entries: Dict[str, DiseaseEntry] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{source}:{line_no}"
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise KnowledgeBaseError(f"{where}: invalid JSON ({exc.msg})") from exc
        if not isinstance(payload, dict):
            raise KnowledgeBaseError(f"{where}: expected a JSON object")
        canonical = payload.get("canonical")
        if not isinstance(canonical, str) or not canonical.strip():
            raise KnowledgeBaseError(f"{where}: missing 'canonical'")
        preferred = payload.get("preferred") or ""
        if not isinstance(preferred, str):
            raise KnowledgeBaseError(f"{where}: 'preferred' must be a string")

        entry = DiseaseEntry(
            canonical=canonical,
            preferred=preferred,
            synonyms=tuple(_string_list(payload, "synonyms", where)),
            acronyms=tuple(_string_list(payload, "acronyms", where)),
        )
        key = entry.canonical.lower()
        if key in entries:
            raise KnowledgeBaseError(f"{where}: duplicate canonical disease '{entry.canonical}'")
        entries[key] = entry
    logger.debug("disease KB %s: %d entries", source, len(entries))
    return entries


def load_disease_kb(filepath: Union[str, Path]) -> Dict[str, DiseaseEntry]:
    """Read a disease KB file (see module docstring for the format)."""
    path = Path(filepath)
    with open(path, "r", encoding="utf-8") as f:
        return parse_disease_kb(f, source=path.name)


def parse_gene_aliases(lines: Iterable[str], source: str = "<gene table>") -> Dict[str, GeneEntry]:
    """
    Parse gene table rows into a map keyed by lowercase symbol.

    A symbol listed on several rows gets the union of the aliases, in
    file order.

    Raises:
        KnowledgeBaseError: Row without exactly two tab-separated columns or
            with an empty symbol
    """
    merged: Dict[str, Tuple[str, List[str]]] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 2:
            raise KnowledgeBaseError(
                f"{source}:{line_no}: expected 'symbol<TAB>aliases', found {len(columns)} column(s)"
            )
        symbol = columns[0].strip()
        if not symbol:
            raise KnowledgeBaseError(f"{source}:{line_no}: empty gene symbol")
        aliases = columns[1].split("|")
        key = symbol.lower()
        if key in merged:
            logger.debug("gene symbol %s repeated at %s:%d, aliases merged", symbol, source, line_no)
            merged[key][1].extend(aliases)
        else:
            merged[key] = (symbol, list(aliases))
    genes = {key: GeneEntry(symbol, tuple(aliases)) for key, (symbol, aliases) in merged.items()}
    logger.debug("gene table %s: %d symbols", source, len(genes))
    return genes


def load_gene_aliases(filepath: Union[str, Path]) -> Dict[str, GeneEntry]:
    """Read a gene alias table (tab-separated, pipe-delimited aliases)."""
    path = Path(filepath)
    with open(path, "r", encoding="utf-8") as f:
        return parse_gene_aliases(f, source=path.name)


def lookup_disease(diseases: Mapping[str, DiseaseEntry], text: str) -> Optional[DiseaseEntry]:
    """Case-insensitive disease lookup; None on a miss."""
    return diseases.get(text.strip().lower())


def lookup_gene(genes: Mapping[str, GeneEntry], text: str) -> Optional[GeneEntry]:
    """Case-insensitive gene symbol lookup; None on a miss."""
    return genes.get(text.strip().lower())


# ============================================================================
# Acronym mining
# ============================================================================


def acronym_pattern(disease: str) -> "re.Pattern[str]":
    """Regex for ``<disease> (ACRONYM)``; the disease part ignores case."""
    return re.compile(rf"(?i:{re.escape(disease)})\s*\(([A-Z]{{2,10}})\)")


def mine_acronyms(store: CorpusStore, disease: str) -> List[Tuple[str, int]]:
    """
    Count acronyms defined right after the disease name in the corpus.

    Title and abstract of every document are scanned separately.

    Returns:
        (acronym, count) pairs, most frequent first, ties alphabetical

    Raises:
        ExpansionError: If ``disease`` is empty

    Example:
        >>> mine_acronyms(store, "non-small cell lung carcinomas")
        [('NSCLC', 1)]
    """
    disease = (disease or "").strip()
    if not disease:
        raise ExpansionError("cannot mine acronyms for an empty disease name")
    pattern = acronym_pattern(disease)
    counts: Counter = Counter()
    for record in store:
        for text in (record.title, record.abstract):
            if text:
                counts.update(pattern.findall(text))
    mined = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    logger.debug("acronyms mined for '%s': %s", disease, mined)
    return mined


# ============================================================================
# Expansion
# ============================================================================


@dataclass(frozen=True)
class ExpansionWeights:
    """Clause weight per origin, each in [0, 1]."""

    disease_original: float = 1.0
    disease_preferred: float = 0.1
    disease_synonym: float = 0.1
    disease_acronym: float = 0.5
    gene_original: float = 1.0
    gene_alias: float = 0.3

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not 0.0 <= float(value) <= 1.0:
                raise ExpansionError(f"weight '{name}' must be in [0, 1], got {value}")

    def weight_for(self, origin: str) -> float:
        if origin not in ORIGINS:
            raise ExpansionError(f"unknown clause origin '{origin}'")
        return float(getattr(self, origin))

    def to_dict(self) -> Dict[str, float]:
        return {name: float(value) for name, value in asdict(self).items()}


@dataclass(frozen=True)
class WeightedClause:
    """One OR clause: a surface form, its weight and where it came from."""

    surface: str
    weight: float
    origin: str

    def __post_init__(self) -> None:
        if not self.surface.strip():
            raise ExpansionError("clause surface is empty")
        if self.origin not in ORIGINS:
            raise ExpansionError(f"unknown clause origin '{self.origin}'")


@dataclass(frozen=True)
class ExpandedQuery:
    """
    Weighted query for one topic.

    ``disease_surfaces`` lists every disease-side surface form considered
    during expansion; the reranker tests document titles against it.
    """

    topic_number: int
    clauses: Tuple[WeightedClause, ...]
    disease_surfaces: Tuple[str, ...] = field(default=())

    def by_origin(self, origin: str) -> List[WeightedClause]:
        return [c for c in self.clauses if c.origin == origin]

    def title_surfaces(self, mode: str = "all") -> Tuple[str, ...]:
        """Disease surfaces used for title matching: ``all`` or ``original`` only."""
        if mode == "all":
            return self.disease_surfaces
        if mode == "original":
            return tuple(c.surface for c in self.by_origin(DISEASE_ORIGINAL))
        raise ExpansionError(f"unknown title match mode '{mode}'")


@dataclass(frozen=True)
class GeneMention:
    """A gene named in the topic gene field, with any parenthesized variants."""

    text: str
    variants: Tuple[str, ...] = ()

    @property
    def lookup_keys(self) -> List[str]:
        """Whole text first, then its first token."""
        keys = [self.text] if self.text else []
        tokens = self.text.split()
        if len(tokens) > 1:
            keys.append(tokens[0])
        return keys


_GENE_SEPARATOR = re.compile(r",|\band\b", re.IGNORECASE)
_VARIANT = re.compile(r"\(([^()]*)\)")


def parse_gene_field(gene_text: str) -> List[GeneMention]:
    """
    Split a topic gene field into gene mentions.

    The field is split on commas and on the word "and"; text in parentheses
    becomes a variant of the mention it belongs to.

    Example:
        >>> parse_gene_field("BRAF (V600E), NRAS")
        [GeneMention(text='BRAF', variants=('V600E',)), GeneMention(text='NRAS', variants=())]

    Raises:
        ExpansionError: If nothing usable is left after splitting
    """
    mentions: List[GeneMention] = []
    for part in _GENE_SEPARATOR.split(gene_text or ""):
        variants = tuple(v.strip() for v in _VARIANT.findall(part) if v.strip())
        text = " ".join(_VARIANT.sub(" ", part).split())
        if text or variants:
            mentions.append(GeneMention(text=text, variants=variants))
    if not mentions:
        raise ExpansionError(f"unparseable gene field {gene_text!r}")
    return mentions


class _ClauseCollector:
    """Ordered clause set deduplicated by lowercase surface; heavier origin wins."""

    def __init__(self, weights: ExpansionWeights):
        self._weights = weights
        self._clauses: List[WeightedClause] = []
        self._position: Dict[str, int] = {}

    def add(self, surface: str, origin: str) -> None:
        surface = surface.strip()
        if not surface:
            return
        clause = WeightedClause(surface, self._weights.weight_for(origin), origin)
        key = surface.lower()
        pos = self._position.get(key)
        if pos is None:
            self._position[key] = len(self._clauses)
            self._clauses.append(clause)
        elif clause.weight > self._clauses[pos].weight:
            logger.debug("clause '%s': %s replaces %s", surface, origin, self._clauses[pos].origin)
            self._clauses[pos] = clause

    @property
    def clauses(self) -> Tuple[WeightedClause, ...]:
        return tuple(self._clauses)


def expand_topic(
    topic: Topic,
    diseases: Mapping[str, DiseaseEntry],
    genes: Mapping[str, GeneEntry],
    mined: Optional[Sequence[Tuple[str, int]]] = None,
    weights: Optional[ExpansionWeights] = None,
    *,
    expand_terms: bool = True,
    use_acronyms: bool = True,
) -> ExpandedQuery:
    """
    Build the weighted query of a topic.

    Args:
        topic: Query topic
        diseases: Disease KB from :func:`load_disease_kb`
        genes: Gene table from :func:`load_gene_aliases`
        mined: Output of :func:`mine_acronyms` for the topic disease; only
            the most frequent acronym is used
        weights: Clause weights, defaults to :class:`ExpansionWeights`
        expand_terms: Add preferred terms, synonyms and gene aliases
        use_acronyms: Add KB and mined disease acronyms

    With both switches off only the original disease and gene clauses are
    produced.
    """
    weights = weights or ExpansionWeights()
    collector = _ClauseCollector(weights)
    disease_surfaces: List[str] = []

    def add_disease(surface: str, origin: str) -> None:
        surface = surface.strip()
        if surface and surface.lower() not in {s.lower() for s in disease_surfaces}:
            disease_surfaces.append(surface)
        collector.add(surface, origin)

    add_disease(topic.disease, DISEASE_ORIGINAL)
    entry = lookup_disease(diseases, topic.disease)
    if entry is None:
        logger.debug("topic %d: disease '%s' not in KB", topic.number, topic.disease)
    if entry is not None and expand_terms:
        if entry.preferred:
            add_disease(entry.preferred, DISEASE_PREFERRED)
        for synonym in entry.synonyms:
            add_disease(synonym, DISEASE_SYNONYM)
    if use_acronyms:
        if entry is not None:
            for acronym in entry.acronyms:
                add_disease(acronym, DISEASE_ACRONYM)
        if mined:
            add_disease(mined[0][0], DISEASE_ACRONYM)

    mentions = parse_gene_field(topic.gene)
    for mention in mentions:
        collector.add(mention.text, GENE_ORIGINAL)
        for variant in mention.variants:
            collector.add(variant, GENE_ORIGINAL)
    if expand_terms:
        for mention in mentions:
            gene_entry = None
            for key in mention.lookup_keys:
                gene_entry = lookup_gene(genes, key)
                if gene_entry is not None:
                    break
            if gene_entry is None:
                logger.debug("topic %d: gene '%s' not in gene table", topic.number, mention.text)
                continue
            for alias in gene_entry.aliases:
                collector.add(alias, GENE_ALIAS)

    query = ExpandedQuery(topic.number, collector.clauses, tuple(disease_surfaces))
    logger.debug(
        "topic %d expanded to %d clauses: %s",
        topic.number, len(query.clauses),
        ", ".join(f"{c.surface}({c.weight:g})" for c in query.clauses),
    )
    return query
