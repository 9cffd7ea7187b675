"""
End-to-end scenarios on small hand-built collections.

Each scenario checks one effect of the retrieval stack against numbers that
can be worked out by hand: an off-topic title pushed down by the penalty,
relevant documents lifted by the classifier, and a document that only gene
aliases can reach.
"""

import unittest
import os

import numpy as np

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pmsearch.cfg_io import PipelineConfig
from pmsearch.corpus import Topic, load_corpus
from pmsearch.evaluation import Qrels, parse_qrels, precision_at_k, recall_at_k
from pmsearch.expand import load_disease_kb, load_gene_aliases
from pmsearch.index import build_index
from pmsearch.logistic import LogisticModel
from pmsearch.rerank import apply_title_penalty, rerank_pipeline
from pmsearch.results import RankedList
from pmsearch.run_pmsearch import SearchPipeline
from fixtures import CORPUS_FILE, DISEASE_KB_FILE, GENE_TABLE_FILE, QRELS_FILE, make_store

TOPIC = 36
RELEVANT = ("a02", "a06", "a12", "a13", "a14")
OFF_TOPIC = "a04"

# weights on (pos_in_title, pos_in_abstract, neg_in_title, neg_in_abstract)
KEYWORD_MODEL = LogisticModel(weights=np.array([0, 1, 1, -1, -1, 0, 0], dtype=float), bias=0.0)


def lung_cancer_collection():
    """Twenty ranked documents for one lung cancer topic."""
    docs = []
    raw = {}
    for i in range(1, 21):
        doc_id = f"a{i:02d}"
        if doc_id in RELEVANT:
            title = "Prognostic survival in lung cancer"
            abstract = "Treatment outcome and survival therapy prognosis clinical"
        elif doc_id == "a01":
            title = "Lung cancer mouse model"
            abstract = "Tumor tissue staining development pathogenesis dna"
        elif doc_id == OFF_TOPIC:
            title = "HER-2/neu and topoisomerase IIalpha in breast cancer"
            abstract = "Lung cancer patients were enrolled in a registry."
        else:
            title = "Lung cancer cohort report"
            abstract = "Lung cancer patients were enrolled in a registry."
        docs.append({"id": doc_id, "title": title, "abstract": abstract})
        raw[doc_id] = {1: 70.0, 2: 68.0, 3: 66.0, 4: 61.8}.get(i, 60.0 - 2.0 * (i - 5))
    qrels = Qrels({(TOPIC, d): 1 for d in RELEVANT})
    return make_store(docs), RankedList.from_unsorted(TOPIC, raw.items()), qrels


class TestTitlePenaltyScenario(unittest.TestCase):
    """An off-topic title ranked fourth by BM25."""

    def setUp(self):
        self.store, self.raw, self.qrels = lung_cancer_collection()

    def test_raw_ranking(self):
        """BM25 alone puts two relevant documents in the top ten."""
        self.assertEqual(self.raw.rank_of(OFF_TOPIC), 4)
        self.assertAlmostEqual(precision_at_k(self.raw, self.qrels, TOPIC), 0.2)

    def test_off_topic_title_moves_down(self):
        """61.8 x 0.6 = 37.08 drops the document from rank 4 to rank 16."""
        penalized = apply_title_penalty(self.raw, self.store, ["lung cancer"], 0.6)
        self.assertAlmostEqual(penalized.score_of(OFF_TOPIC), 37.08)
        self.assertEqual(penalized.rank_of(OFF_TOPIC), 16)
        self.assertEqual(penalized.doc_ids[:3], ["a01", "a02", "a03"])
        self.assertAlmostEqual(precision_at_k(penalized, self.qrels, TOPIC), 0.2)
        self.assertEqual(recall_at_k(penalized, self.qrels, TOPIC), 1.0)


class TestClassifierScenario(unittest.TestCase):
    """Relevant documents lifted by the keyword classifier."""

    def setUp(self):
        self.store, self.raw, self.qrels = lung_cancer_collection()
        self.reranked = rerank_pipeline(self.raw, KEYWORD_MODEL, self.store, ["lung cancer"])

    def test_top_ten(self):
        """The fused ranking holds all five relevant documents in its top ten."""
        self.assertEqual(self.reranked.doc_ids[:10], [
            "a02", "a06", "a03", "a12", "a13", "a14", "a05", "a07", "a08", "a09",
        ])
        self.assertAlmostEqual(precision_at_k(self.reranked, self.qrels, TOPIC), 0.5)

    def test_negative_document_loses_its_lead(self):
        """The top BM25 document, full of negative keywords, falls to rank 11."""
        self.assertEqual(self.reranked.rank_of("a01"), 11)
        self.assertGreater(self.reranked.score_of("a01"), 1.0)
        self.assertLess(self.reranked.score_of("a01"), self.reranked.score_of("a09"))

    def test_fused_scores(self):
        """Each fused score is the scaled BM25 score plus the probability."""
        # scaled = (score - 30) / 40; a02 and a06 have z = 8
        p_relevant = 1.0 / (1.0 + np.exp(-8.0))
        self.assertAlmostEqual(self.reranked.score_of("a02"), 0.95 + p_relevant)
        self.assertAlmostEqual(self.reranked.score_of("a06"), 0.70 + p_relevant)
        self.assertAlmostEqual(self.reranked.score_of("a03"), 0.90 + 0.5)
        self.assertAlmostEqual(self.reranked.score_of(OFF_TOPIC), (37.08 - 30.0) / 40.0 + 0.5)


class TestAliasScenario(unittest.TestCase):
    """A document reachable only through a gene alias."""

    @classmethod
    def setUpClass(cls):
        store = load_corpus(CORPUS_FILE)
        cls.pipeline = SearchPipeline(
            build_index(store),
            load_disease_kb(DISEASE_KB_FILE),
            load_gene_aliases(GENE_TABLE_FILE),
            PipelineConfig(strategy="expand"),
        )
        cls.qrels = parse_qrels(QRELS_FILE)
        cls.topic = Topic(2, "lung cancer", "ERBB2")

    def test_alias_only_document(self):
        """'HER-2/neu' brings d06 in; the baseline never sees it."""
        baseline = self.pipeline.run_topic(self.topic, "baseline")
        expanded = self.pipeline.run_topic(self.topic, "expand")
        self.assertNotIn("d06", baseline.doc_ids)
        self.assertIn("d06", expanded.doc_ids)
        self.assertGreater(recall_at_k(expanded, self.qrels, 2), recall_at_k(baseline, self.qrels, 2))

    def test_mined_acronym_reaches_title(self):
        """With acronyms, NSCLC counts as a disease mention for the title penalty."""
        query = self.pipeline.expand(self.topic, "expand+acronym")
        self.assertIn("NSCLC", query.title_surfaces("all"))
        heuristic = self.pipeline.run_topic(self.topic, "heuristic")
        unpenalized = self.pipeline.run_topic(self.topic, "expand+acronym")
        self.assertEqual(heuristic.score_of("d06"), unpenalized.score_of("d06"))


if __name__ == '__main__':
    unittest.main()
