"""
pmsearch - precision-medicine literature search

BM25 over a fielded index, knowledge-base query expansion, a title
heuristic and a logistic-regression rerank, with TREC-style evaluation.

Main package initialization.
"""

from ._version import __version__
from .errors import PmSearchError
from .corpus import CorpusStore, DocumentRecord, Topic, get_document, load_corpus, load_topics, parse_topics
from .results import RankedList
from .index import Bm25Params, FieldedIndex, build_index, search, tokenize
from .expand import (
    DiseaseEntry,
    ExpandedQuery,
    ExpansionWeights,
    GeneEntry,
    WeightedClause,
    expand_topic,
    load_disease_kb,
    load_gene_aliases,
    mine_acronyms,
)
from .logistic import FeatureVector, LogisticModel, load_model, predict_prob, save_model, train_logistic
from .rerank import (
    KeywordLists,
    RerankConfig,
    apply_title_penalty,
    build_training_set,
    extract_features,
    min_max_scale,
    rerank_pipeline,
    rerank_top_k,
)
from .evaluation import (
    MetricsReport,
    Qrels,
    RunEntry,
    evaluate_run,
    parse_qrels,
    precision_at_k,
    r_precision,
    read_run,
    recall_at_k,
    write_run,
)
from .cfg_io import CfgIo, ConfigurationError, PipelineConfig

# I/O utilities
from . import io_util

# Logging utilities (optional, can be imported explicitly if needed)
from . import logging_util

__all__ = [
    '__version__',
    'PmSearchError',
    'CorpusStore',
    'DocumentRecord',
    'Topic',
    'get_document',
    'load_corpus',
    'load_topics',
    'parse_topics',
    'RankedList',
    'Bm25Params',
    'FieldedIndex',
    'build_index',
    'search',
    'tokenize',
    'DiseaseEntry',
    'ExpandedQuery',
    'ExpansionWeights',
    'GeneEntry',
    'WeightedClause',
    'expand_topic',
    'load_disease_kb',
    'load_gene_aliases',
    'mine_acronyms',
    'FeatureVector',
    'LogisticModel',
    'load_model',
    'predict_prob',
    'save_model',
    'train_logistic',
    'KeywordLists',
    'RerankConfig',
    'apply_title_penalty',
    'build_training_set',
    'extract_features',
    'min_max_scale',
    'rerank_pipeline',
    'rerank_top_k',
    'MetricsReport',
    'Qrels',
    'RunEntry',
    'evaluate_run',
    'parse_qrels',
    'precision_at_k',
    'r_precision',
    'read_run',
    'recall_at_k',
    'write_run',
    'CfgIo',
    'ConfigurationError',
    'PipelineConfig',
    'io_util',
    'logging_util',
]
