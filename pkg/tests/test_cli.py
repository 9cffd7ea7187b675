"""
Tests for the command-line runner.

Every subcommand is driven through ``main`` against the fixture inputs, with
all artifacts written to a temporary working directory.
"""

import unittest
import tempfile
import contextlib
import io
import logging
import os
from pathlib import Path

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pmsearch.__main__ import main as package_main
from pmsearch.cfg_io import CfgIo
from pmsearch.evaluation import group_by_topic, read_run
from pmsearch.io_util import read_json
from pmsearch.logistic import load_model
from pmsearch.run_pmsearch import main
from fixtures import write_experiment_cfg


_saved_logging = {}


def setUpModule():
    # main() reconfigures the root logger; give the test runner its handlers back
    root = logging.getLogger()
    _saved_logging.update(handlers=root.handlers[:], level=root.level)


def tearDownModule():
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    for handler in _saved_logging["handlers"]:
        root.addHandler(handler)
    root.setLevel(_saved_logging["level"])


def run_cli(*argv, entry=main):
    """Run a command; returns (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = entry([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


class CliTestCase(unittest.TestCase):
    """Temporary workdir with a configuration and a built index."""

    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.workdir = Path(cls._tmp.name)
        cls.cfg = write_experiment_cfg(cls.workdir, extra={"training": {"seed": "7"}})
        code, cls.index_output, _ = run_cli("index", "-c", cls.cfg)
        assert code == 0, "index command failed"

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def run_strategy(self, strategy, name=None):
        run_file = self.workdir / "runs" / f"{name or strategy.replace('+', '_')}.run"
        code, out, err = run_cli("run", "-c", self.cfg, "-s", strategy, "--run-file", run_file)
        self.assertEqual(code, 0, err)
        return run_file


class TestIndexAndRun(CliTestCase):
    """index and run."""

    def test_index_counts(self):
        """The index command reports kept, discarded and rejected records."""
        self.assertIn("kept=11 discarded=1 rejected=2", self.index_output)
        self.assertTrue((self.workdir / "index").is_dir())

    def test_strategies_write_runs(self):
        """Each strategy without a model writes a valid run for both topics."""
        for strategy in ("baseline", "expand", "expand+acronym", "heuristic"):
            with self.subTest(strategy=strategy):
                entries = read_run(self.run_strategy(strategy))
                self.assertEqual(sorted(group_by_topic(entries)), [1, 2])
                self.assertEqual({e.run_tag for e in entries}, {"fixture"})

    def test_alias_document_needs_expansion(self):
        """d06 is only reachable through the HER-2/neu alias."""
        baseline = group_by_topic(read_run(self.run_strategy("baseline")))
        expanded = group_by_topic(read_run(self.run_strategy("expand")))
        self.assertNotIn("d06", [e.doc_id for e in baseline[2]])
        self.assertIn("d06", [e.doc_id for e in expanded[2]])

    def test_expansion_only_adds_candidates(self):
        """Per topic, baseline results are a subset of expand, which is a subset of expand+acronym."""
        runs = {
            strategy: group_by_topic(read_run(self.run_strategy(strategy, f"superset_{strategy.replace('+', '_')}")))
            for strategy in ("baseline", "expand", "expand+acronym")
        }
        for topic in sorted(runs["baseline"]):
            with self.subTest(topic=topic):
                baseline, expand, acronym = (
                    {e.doc_id for e in runs[s].get(topic, [])} for s in ("baseline", "expand", "expand+acronym")
                )
                self.assertLessEqual(baseline, expand)
                self.assertLessEqual(expand, acronym)
        self.assertEqual(sorted(runs["expand+acronym"]), [1, 2])

    def test_runs_are_reproducible(self):
        """Two runs with the same inputs are byte-identical."""
        first = self.run_strategy("expand+acronym", "repeat_a").read_bytes()
        second = self.run_strategy("expand+acronym", "repeat_b").read_bytes()
        self.assertEqual(first, second)

    def test_depth_limits_results(self):
        """--depth caps the entries per topic."""
        run_file = self.workdir / "runs" / "shallow.run"
        code, _, err = run_cli("run", "-c", self.cfg, "-s", "expand", "-d", "1", "--run-file", run_file)
        self.assertEqual(code, 0, err)
        self.assertEqual(len(read_run(run_file)), 2)


class TestTrainAndFullRun(CliTestCase):
    """train, run full, eval, compare and tune."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        code, cls.train_output, err = run_cli("train", "-c", cls.cfg)
        assert code == 0, err

    def test_model_file(self):
        """The model records its training data and keyword lists."""
        model = load_model(self.workdir / "model.json")
        self.assertEqual(model.metadata["seed"], 7)
        self.assertEqual(model.metadata["examples"], 9)
        self.assertEqual(model.metadata["topics"], 2)
        self.assertIn("survival", model.keywords["positive"])
        self.assertIn("model trained on 9 examples", self.train_output)

    def test_full_run_and_eval(self):
        """The full strategy reranks with the model; eval writes the report, plot and export."""
        run_file = self.run_strategy("full")
        self.assertEqual(sorted(group_by_topic(read_run(run_file))), [1, 2])
        export = self.workdir / "tables" / "full.csv"
        code, out, err = run_cli("eval", "-c", self.cfg, "--run-file", run_file, "--plot", "--export", export)
        self.assertEqual(code, 0, err)
        self.assertIn("R-prec", out.splitlines()[0])
        report = read_json(run_file.with_name("full.run.eval.json"))
        self.assertEqual(sorted(report["topics"]), ["1", "2"])
        self.assertEqual(report["name"], "full")
        self.assertTrue(run_file.with_name("full.run.metrics.png").is_file())
        self.assertTrue(export.read_text(encoding="utf-8").startswith("topic,P@10"))

    def test_compare(self):
        """compare prints one row per run and saves the ladder plot."""
        runs = [self.run_strategy("baseline", "cmp_baseline"), self.run_strategy("expand", "cmp_expand")]
        code, out, err = run_cli("compare", "-c", self.cfg, *runs, "--plot")
        self.assertEqual(code, 0, err)
        lines = out.splitlines()
        self.assertEqual(lines[0].split(), ["run", "R@1000", "P@10", "R-prec"])
        self.assertEqual([line.split()[0] for line in lines[1:]], ["cmp_baseline", "cmp_expand"])
        self.assertTrue((runs[0].parent / "comparison.png").is_file())

    def test_tune(self):
        """tune writes the tuned configuration and the search trace."""
        code, out, err = run_cli("tune", "-c", self.cfg)
        self.assertEqual(code, 0, err)
        runs = self.workdir / "runs"
        trace = read_json(runs / "expand_acronym.tune.json")
        self.assertEqual(len(trace["weight_search"]), 4 * 3)
        self.assertEqual([t["top_k"] for t in trace["top_k_search"]], [2, 10])
        self.assertIn(trace["best_top_k"], (2, 10))
        tuned = CfgIo(runs / "expand_acronym.tuned.cfg").read_pipeline()
        self.assertEqual(tuned.rerank.top_k, trace["best_top_k"])
        for origin in ("disease_preferred", "disease_synonym", "disease_acronym", "gene_alias"):
            self.assertIn(getattr(tuned.weights, origin), (0.0, 0.5, 1.0))
            self.assertEqual(getattr(tuned.weights, origin), trace["best_weights"][origin])
        self.assertIn("tuned weights:", out)


class TestReproducibility(unittest.TestCase):
    """Two complete pipelines over the same inputs."""

    def test_models_and_runs_are_byte_identical(self):
        """index, train and a full run in two workdirs give identical model and run files."""
        outputs = []
        for _ in range(2):
            with tempfile.TemporaryDirectory() as tmp:
                workdir = Path(tmp)
                cfg = write_experiment_cfg(workdir, strategy="full")
                for command in ("index", "train", "run"):
                    code, _, err = run_cli(command, "-c", cfg)
                    self.assertEqual(code, 0, err)
                outputs.append((
                    (workdir / "model.json").read_bytes(),
                    (workdir / "runs" / "full.run").read_bytes(),
                ))
        self.assertEqual(outputs[0][0], outputs[1][0])
        self.assertEqual(outputs[0][1], outputs[1][1])


class TestErrors(unittest.TestCase):
    """Exit codes and error messages."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.workdir = Path(self._tmp.name)
        self.cfg = write_experiment_cfg(self.workdir)

    def tearDown(self):
        self._tmp.cleanup()

    def test_usage_errors(self):
        """Missing or invalid arguments exit with code 2."""
        self.assertEqual(run_cli("run")[0], 2)
        self.assertEqual(run_cli("run", "-c", self.cfg, "-s", "fancy")[0], 2)
        self.assertEqual(run_cli("frobnicate", "-c", self.cfg)[0], 2)

    def test_run_before_index(self):
        """Running without an index is a runtime error."""
        code, _, err = run_cli("run", "-c", self.cfg)
        self.assertEqual(code, 1)
        self.assertIn("Error:", err)
        self.assertIn("pmsearch index", err)

    def test_full_without_model(self):
        """The full strategy needs a trained model."""
        self.assertEqual(run_cli("index", "-c", self.cfg)[0], 0)
        code, _, err = run_cli("run", "-c", self.cfg, "-s", "full")
        self.assertEqual(code, 1)
        self.assertIn("model file", err)

    def test_missing_config_and_run(self):
        """Missing files are reported, not raised."""
        self.assertEqual(run_cli("index", "-c", self.workdir / "none.cfg")[0], 1)
        code, _, err = run_cli("eval", "-c", self.cfg, "--run-file", self.workdir / "none.run")
        self.assertEqual(code, 1)
        self.assertIn("run file", err)

    def test_bad_export_extension(self):
        """An unsupported export format fails cleanly."""
        run_file = self.workdir / "one.run"
        run_file.write_text("1 Q0 d01 1 2.0 t\n", encoding="utf-8")
        code, _, err = run_cli("eval", "-c", self.cfg, "--run-file", run_file, "--export", self.workdir / "m.json")
        self.assertEqual(code, 1)
        self.assertIn("--export", err)

    def test_version(self):
        """--version prints the package version."""
        code, out, _ = run_cli("--version", entry=package_main)
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("pmsearch version "))


if __name__ == '__main__':
    unittest.main()
