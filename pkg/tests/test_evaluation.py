"""
Unit tests for the evaluation module.

Qrels parsing, run file I/O and the P@10 / R@1000 / R-precision metrics,
checked by hand and against a brute-force computation.
"""

import unittest
import tempfile
import os
from pathlib import Path

import numpy as np

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pmsearch.evaluation import (
    EvaluationError,
    MetricsReport,
    Qrels,
    QrelsFormatError,
    RunEntry,
    RunFormatError,
    evaluate_ranking,
    evaluate_run,
    group_by_topic,
    parse_qrels,
    parse_qrels_lines,
    precision_at_k,
    r_precision,
    ranked_to_run,
    read_run,
    recall_at_k,
    write_run,
)
from pmsearch.results import RankedList
from fixtures import QRELS_FILE


def entries_for(topic, doc_ids, tag="t"):
    return [RunEntry(topic, d, rank, float(100 - rank), tag) for rank, d in enumerate(doc_ids, start=1)]


class TestQrels(unittest.TestCase):
    """Test qrels parsing."""

    def test_fixture(self):
        """Grades >= 1 are relevant; grade 0 is judged non-relevant."""
        qrels = parse_qrels(QRELS_FILE)
        self.assertEqual(len(qrels), 10)
        self.assertEqual(qrels.topics(), [1, 2])
        self.assertEqual(qrels.relevant(1), {"d01", "d02", "d04"})
        self.assertEqual(qrels.num_relevant(2), 4)
        self.assertEqual(qrels.grade(1, "d03"), 0)
        self.assertFalse(qrels.is_relevant(1, "d03"))
        self.assertIsNone(qrels.grade(1, "d05"))
        self.assertIn((2, "d99"), qrels)

    def test_blank_lines(self):
        """Blank lines are ignored."""
        qrels = parse_qrels_lines(["1 0 a 1", "", "   ", "1 0 b 0"])
        self.assertEqual(qrels.judged(1), {"a": 1, "b": 0})

    def test_errors_carry_line_number(self):
        """Malformed lines and duplicate keys name the offending line."""
        cases = [
            ["1 0 a 1", "1 0 b"],
            ["1 0 a 1", "x 0 b 1"],
            ["1 0 a 1", "1 0 a 2"],
            ["1 0 a 1", "1 0 b -1"],
            ["1 0 a 1", "1 0 b 1 extra"],
        ]
        for lines in cases:
            with self.subTest(lines=lines):
                with self.assertRaises(QrelsFormatError) as ctx:
                    parse_qrels_lines(lines, source="q")
                self.assertIn("q:2", str(ctx.exception))


class TestMetrics(unittest.TestCase):
    """Test the per-topic metrics."""

    def setUp(self):
        self.qrels = Qrels({(1, "a"): 1, (1, "b"): 2, (1, "c"): 1, (1, "d"): 0, (2, "e"): 0})
        self.ranking = ["x", "a", "d", "b", "y"]

    def test_hand_computed(self):
        """Two of three relevant documents retrieved, one in the top three."""
        self.assertAlmostEqual(precision_at_k(self.ranking, self.qrels, 1), 0.2)
        self.assertAlmostEqual(recall_at_k(self.ranking, self.qrels, 1), 2 / 3)
        self.assertAlmostEqual(r_precision(self.ranking, self.qrels, 1), 1 / 3)
        metrics = evaluate_ranking(self.ranking, self.qrels, 1)
        self.assertEqual((metrics.retrieved, metrics.judged, metrics.unjudged, metrics.relevant), (5, 3, 2, 3))

    def test_short_list_divides_by_k(self):
        """A single relevant document alone gives P@10 = 0.1."""
        self.assertAlmostEqual(precision_at_k(["a"], self.qrels, 1), 0.1)
        self.assertAlmostEqual(precision_at_k([], self.qrels, 1), 0.0)

    def test_topic_without_relevant_documents(self):
        """Recall and R-precision are 0 when nothing is relevant."""
        self.assertEqual(recall_at_k(["e"], self.qrels, 2), 0.0)
        self.assertEqual(r_precision(["e"], self.qrels, 2), 0.0)
        self.assertEqual(recall_at_k(["e"], self.qrels, 9), 0.0)

    def test_ranked_list_input(self):
        """RankedList and plain id lists give the same values."""
        ranked = RankedList(1, tuple((d, 10.0 - i) for i, d in enumerate(self.ranking)))
        self.assertEqual(evaluate_ranking(ranked, self.qrels, 1), evaluate_ranking(self.ranking, self.qrels, 1))

    def test_invalid_cutoff(self):
        """k must be positive."""
        with self.assertRaises(EvaluationError):
            precision_at_k(self.ranking, self.qrels, 1, k=0)
        with self.assertRaises(EvaluationError):
            recall_at_k(self.ranking, self.qrels, 1, k=-1)

    def test_against_brute_force(self):
        """Random rankings agree with a direct count."""
        rng = np.random.RandomState(2018)
        pool = [f"doc{i}" for i in range(60)]
        for trial in range(200):
            judged = rng.choice(pool, size=rng.randint(0, 40), replace=False)
            qrels = Qrels({(1, d): int(rng.randint(0, 3)) for d in judged})
            ranking = list(rng.choice(pool, size=rng.randint(0, 60), replace=False))
            relevant = {d for d in judged if qrels.grade(1, d) >= 1}
            n_rel = len(relevant)
            expected_p10 = len([d for d in ranking[:10] if d in relevant]) / 10
            expected_recall = len([d for d in ranking if d in relevant]) / n_rel if n_rel else 0.0
            expected_rprec = len([d for d in ranking[:n_rel] if d in relevant]) / n_rel if n_rel else 0.0
            with self.subTest(trial=trial):
                metrics = evaluate_ranking(ranking, qrels, 1)
                self.assertAlmostEqual(metrics.p_at_10, expected_p10)
                self.assertAlmostEqual(metrics.r_at_1000, expected_recall)
                self.assertAlmostEqual(metrics.r_prec, expected_rprec)


class TestRunFiles(unittest.TestCase):
    """Test run file writing and reading."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmpdir = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_line_format(self):
        """Six whitespace-separated columns with the literal Q0."""
        entry = RunEntry(3, "d01", 1, 12.5, "tag")
        self.assertEqual(entry.to_line(), "3 Q0 d01 1 12.5 tag")

    def test_round_trip(self):
        """Entries read back exactly as written."""
        ranked = RankedList(1, (("d2", 3.141592653589793), ("d1", 0.1 + 0.2), ("d3", 0.0)))
        entries = ranked_to_run(ranked, "exp") + entries_for(2, ["d5", "d4"], "exp")
        path = write_run(entries, self.tmpdir / "runs" / "a.run")
        self.assertEqual(read_run(path), entries)
        self.assertEqual([e.rank for e in entries[:3]], [1, 2, 3])

    def test_write_rejects_bad_runs(self):
        """Rank gaps, repeated documents and increasing scores are refused."""
        gap = [RunEntry(1, "a", 1, 2.0), RunEntry(1, "b", 3, 1.0)]
        repeated = [RunEntry(1, "a", 1, 2.0), RunEntry(1, "a", 2, 1.0)]
        increasing = [RunEntry(1, "a", 1, 1.0), RunEntry(1, "b", 2, 2.0)]
        for entries in (gap, repeated, increasing):
            with self.subTest(entries=entries):
                with self.assertRaises(RunFormatError):
                    write_run(entries, self.tmpdir / "bad.run")
        self.assertFalse((self.tmpdir / "bad.run").exists())

    def test_write_rejects_unsplittable_fields(self):
        """A doc_id or run tag that would not read back as one column is refused."""
        cases = {
            "space in doc_id": [RunEntry(1, "a b", 1, 1.0)],
            "tab in tag": [RunEntry(1, "a", 1, 1.0, "my\ttag")],
            "empty tag": [RunEntry(1, "a", 1, 1.0, "")],
        }
        for name, entries in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(RunFormatError):
                    write_run(entries, self.tmpdir / "split.run")
        self.assertFalse((self.tmpdir / "split.run").exists())

    def test_read_errors(self):
        """Malformed run files raise RunFormatError with the line number."""
        cases = {
            "columns": "1 Q0 a 1 2.0\n",
            "rank": "1 Q0 a 2 2.0 t\n",
            "repeat": "1 Q0 a 1 2.0 t\n1 Q0 a 2 1.0 t\n",
            "increase": "1 Q0 a 1 1.0 t\n1 Q0 b 2 2.0 t\n",
            "nan": "1 Q0 a 1 nan t\n",
            "topic": "one Q0 a 1 1.0 t\n",
        }
        for name, text in cases.items():
            with self.subTest(case=name):
                path = self.tmpdir / f"{name}.run"
                path.write_text(text, encoding="utf-8")
                with self.assertRaises(RunFormatError) as ctx:
                    read_run(path)
                self.assertIn(f"{name}.run:", str(ctx.exception))

    def test_interleaved_topics(self):
        """Topics may interleave as long as each one counts up from 1."""
        path = self.tmpdir / "mixed.run"
        path.write_text("1 Q0 a 1 2.0 t\n2 Q0 b 1 5.0 t\n1 Q0 c 2 1.0 t\n", encoding="utf-8")
        groups = group_by_topic(read_run(path))
        self.assertEqual([e.doc_id for e in groups[1]], ["a", "c"])


class TestEvaluateRun(unittest.TestCase):
    """Test evaluate_run and MetricsReport."""

    def setUp(self):
        self.qrels = parse_qrels(QRELS_FILE)
        self.run = entries_for(1, ["d01", "d03", "d02"]) + entries_for(3, ["d05"])

    def test_means_over_run_topics(self):
        """Topics missing from the run are reported and left out of the means."""
        with self.assertLogs("pmsearch.evaluation", level="WARNING") as logs:
            report = evaluate_run(self.run, self.qrels, name="demo")
        self.assertIn("absent from the run", logs.output[0])
        self.assertEqual(report.topics, [1, 3])
        self.assertEqual(report.missing_topics, (2,))
        self.assertAlmostEqual(report.per_topic[1].r_at_1000, 2 / 3)
        self.assertAlmostEqual(report.per_topic[1].r_prec, 2 / 3)
        self.assertAlmostEqual(report.means["r_at_1000"], 1 / 3)
        self.assertAlmostEqual(report.means["p_at_10"], 0.1)

    def test_invalid_run(self):
        """Entries with a rank gap cannot be evaluated."""
        bad = [RunEntry(1, "d01", 1, 2.0), RunEntry(1, "d02", 3, 1.0)]
        with self.assertRaises(EvaluationError):
            evaluate_run(bad, self.qrels)

    def test_empty_report(self):
        """An empty run gives zero means."""
        with self.assertLogs("pmsearch.evaluation", level="WARNING"):
            report = evaluate_run([], self.qrels)
        self.assertEqual(report.means, {"p_at_10": 0.0, "r_at_1000": 0.0, "r_prec": 0.0})

    def test_report_round_trip_and_table(self):
        """to_dict/from_dict round-trip; the table ends with the mean row."""
        with self.assertLogs("pmsearch.evaluation", level="WARNING"):
            report = evaluate_run(self.run, self.qrels, name="demo")
        self.assertEqual(MetricsReport.from_dict(report.to_dict()), report)
        rows = report.table_rows()
        self.assertEqual(rows[-1][0], "all")
        self.assertEqual(rows[-1][4], 4)
        table = report.format_table()
        self.assertIn("R-prec", table.splitlines()[0])
        self.assertEqual(len(table.splitlines()), 4)
        with self.assertRaises(EvaluationError):
            MetricsReport.from_dict({"name": "x"})


if __name__ == '__main__':
    unittest.main()
