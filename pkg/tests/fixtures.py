"""
Shared helpers for the pmsearch unit tests.

The files under tests/input/ form a tiny but complete experiment: an
11-document corpus (plus one duplicate and two broken records), two topics,
a disease KB, a gene alias table, qrels and a configuration file.
"""

import os
import sys
from pathlib import Path
from typing import Dict, Iterable, Optional

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pmsearch.corpus import CorpusStore, DocumentRecord, ingest_documents  # noqa: E402

INPUT_DIR = Path(__file__).resolve().parent / "input"

CORPUS_FILE = INPUT_DIR / "corpus.jsonl"
TOPICS_FILE = INPUT_DIR / "topics.xml"
DISEASE_KB_FILE = INPUT_DIR / "disease_kb.jsonl"
GENE_TABLE_FILE = INPUT_DIR / "gene_aliases.tsv"
QRELS_FILE = INPUT_DIR / "qrels.txt"
KEYWORDS_FILE = INPUT_DIR / "keywords.json"
EXPERIMENT_CFG = INPUT_DIR / "experiment.cfg"


def make_store(docs: Iterable[Dict]) -> CorpusStore:
    """Finalized store from ``{"id": ..., "title": ..., ...}`` dicts."""
    return ingest_documents(list(docs))


def doc(doc_id: str, title: str = "", abstract: str = "", pub_types=(), mesh=()) -> DocumentRecord:
    return DocumentRecord(doc_id, title, abstract, tuple(pub_types), tuple(mesh))


def write_experiment_cfg(
    workdir: Path,
    strategy: str = "expand+acronym",
    extra: Optional[Dict[str, Dict[str, str]]] = None,
) -> Path:
    """
    Write a configuration into ``workdir`` that reads the fixture inputs and
    writes every artifact below ``workdir``.
    """
    sections: Dict[str, Dict[str, str]] = {
        "paths": {
            "corpus": str(CORPUS_FILE),
            "topics": str(TOPICS_FILE),
            "disease_kb": str(DISEASE_KB_FILE),
            "gene_table": str(GENE_TABLE_FILE),
            "qrels": str(QRELS_FILE),
            "index_dir": "index",
            "model_file": "model.json",
            "run_file": f"runs/{strategy.replace('+', '_')}.run",
        },
        "tuning": {"weight_grid": "0.0, 0.5, 1.0", "top_k_grid": "2, 10"},
        "run": {"strategy": strategy, "run_tag": "fixture"},
        "logging": {"verbosity": "1", "log_file": "false"},
    }
    for section, values in (extra or {}).items():
        sections.setdefault(section, {}).update(values)
    lines = []
    for section, values in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in values.items())
        lines.append("")
    cfg_path = Path(workdir) / "experiment.cfg"
    cfg_path.write_text("\n".join(lines), encoding="utf-8")
    return cfg_path
