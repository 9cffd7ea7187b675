#!/usr/bin/env python3
"""
Console runner for pmsearch.

Subcommands (all read one configuration file, see :mod:`pmsearch.cfg_io`):

- ``index``   ingest the corpus and persist the BM25 index
- ``run``     retrieve every topic with the configured strategy, write a run file
- ``train``   fit the rerank classifier on the training topics and qrels
- ``eval``    score a run file against qrels (table on stdout, JSON beside the run)
- ``tune``    coordinate search over the expansion weights and the rerank depth
- ``compare`` evaluate several run files side by side

It is designed to be imported safely and to expose a reusable `main(argv=None)`.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .cfg_io import (
    STRATEGIES,
    STRATEGY_BASELINE,
    STRATEGY_EXPAND,
    STRATEGY_EXPAND_ACRONYM,
    STRATEGY_FULL,
    STRATEGY_HEURISTIC,
    CfgIo,
    ConfigurationError,
    PipelineConfig,
)
from .corpus import Topic, load_corpus, load_topics
from .errors import PmSearchError
from .evaluation import (
    MetricsReport,
    Qrels,
    RunEntry,
    evaluate_run,
    parse_qrels,
    ranked_to_run,
    read_run,
    write_run,
)
from .expand import (
    EXPANSION_ORIGINS,
    DiseaseEntry,
    ExpandedQuery,
    ExpansionWeights,
    GeneEntry,
    expand_topic,
    load_disease_kb,
    load_gene_aliases,
    mine_acronyms,
)
from .index import FieldedIndex, build_index, search
from .io_util import export_table, write_json
from .logging_util import LogConfig, get_logger, log_section_header, log_stage, setup_logging
from .logistic import LogisticModel, load_model, save_model, train_logistic
from .rerank import KeywordLists, RerankConfig, apply_title_penalty, build_training_set, rerank_pipeline
from .results import RankedList

logger = get_logger(__name__)

TUNE_START_WEIGHT = 0.3


class SearchPipeline:
    """
    Retrieval strategies over a loaded index.

    Acronyms mined from the corpus are cached per disease.

    Example:
        >>> pipeline = SearchPipeline(index, diseases, genes, config)
        >>> ranked = pipeline.run_topic(topic, "expand+acronym")
    """

    def __init__(
        self,
        index: FieldedIndex,
        diseases: Mapping[str, DiseaseEntry],
        genes: Mapping[str, GeneEntry],
        config: PipelineConfig,
        keywords: Optional[KeywordLists] = None,
        model: Optional[LogisticModel] = None,
    ):
        self.index = index
        self.diseases = diseases
        self.genes = genes
        self.config = config
        self.keywords = keywords or KeywordLists()
        self.model = model
        self._mined: Dict[str, List[Tuple[str, int]]] = {}

    def mined_acronyms(self, disease: str) -> List[Tuple[str, int]]:
        key = disease.strip().lower()
        if key not in self._mined:
            self._mined[key] = mine_acronyms(self.index.store, disease)
        return self._mined[key]

    def expand(self, topic: Topic, strategy: str, weights: Optional[ExpansionWeights] = None) -> ExpandedQuery:
        expand_terms = strategy != STRATEGY_BASELINE
        use_acronyms = strategy not in (STRATEGY_BASELINE, STRATEGY_EXPAND)
        mined = self.mined_acronyms(topic.disease) if use_acronyms and self.config.mine_acronyms else None
        return expand_topic(
            topic, self.diseases, self.genes, mined, weights or self.config.weights,
            expand_terms=expand_terms, use_acronyms=use_acronyms,
        )

    def run_topic(
        self,
        topic: Topic,
        strategy: str,
        weights: Optional[ExpansionWeights] = None,
        rerank: Optional[RerankConfig] = None,
    ) -> RankedList:
        """Ranked list of one topic under ``strategy``."""
        if strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {strategy!r}")
        rerank = rerank or self.config.rerank
        query = self.expand(topic, strategy, weights)
        ranked = search(self.index, query, self.config.depth)
        surfaces = query.title_surfaces(rerank.title_match)
        if strategy == STRATEGY_HEURISTIC:
            ranked = apply_title_penalty(ranked, self.index.store, surfaces, rerank.penalty_factor)
        elif strategy == STRATEGY_FULL:
            if self.model is None:
                raise ConfigurationError("strategy 'full' needs a trained model")
            ranked = rerank_pipeline(ranked, self.model, self.index.store, surfaces, self.keywords, rerank)
        logger.info("topic %d: %d clauses, %d documents", topic.number, len(query.clauses), len(ranked))
        return ranked

    def run(
        self,
        topics: Sequence[Topic],
        strategy: str,
        weights: Optional[ExpansionWeights] = None,
        rerank: Optional[RerankConfig] = None,
    ) -> Dict[int, RankedList]:
        return {t.number: self.run_topic(t, strategy, weights, rerank) for t in topics}


def run_entries(results: Mapping[int, RankedList], run_tag: str) -> List[RunEntry]:
    """Run entries of all topics, topics in ascending order."""
    entries: List[RunEntry] = []
    for topic in sorted(results):
        entries.extend(ranked_to_run(results[topic], run_tag))
    return entries


# ============================================================================
# Loading helpers
# ============================================================================


def _existing(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigurationError(f"{what} '{path}' not found")
    return path


def _load_index(config: PipelineConfig) -> FieldedIndex:
    index_dir = config.paths.require("index_dir")
    _existing(index_dir, "index directory (run 'pmsearch index' first)")
    return FieldedIndex.load(index_dir)


def _load_knowledge(config: PipelineConfig, strategy: str) -> Tuple[Dict[str, DiseaseEntry], Dict[str, GeneEntry]]:
    if strategy == STRATEGY_BASELINE:
        return {}, {}
    diseases = load_disease_kb(_existing(config.paths.require("disease_kb"), "disease KB"))
    genes = load_gene_aliases(_existing(config.paths.require("gene_table"), "gene table"))
    return diseases, genes


def _load_keywords(config: PipelineConfig) -> KeywordLists:
    if config.paths.keyword_file is None:
        return KeywordLists()
    return KeywordLists.load(_existing(config.paths.keyword_file, "keyword file"))


def _load_model(config: PipelineConfig) -> LogisticModel:
    model_file = config.paths.require("model_file")
    _existing(model_file, "model file (run 'pmsearch train' first)")
    return load_model(model_file)


def _model_keywords(model: LogisticModel, fallback: KeywordLists) -> KeywordLists:
    return KeywordLists.from_dict(model.keywords) if model.keywords else fallback


def _build_pipeline(config: PipelineConfig, strategy: str, with_model: bool) -> SearchPipeline:
    index = _load_index(config)
    diseases, genes = _load_knowledge(config, strategy)
    keywords = _load_keywords(config)
    model = None
    if with_model:
        model = _load_model(config)
        keywords = _model_keywords(model, keywords)
    return SearchPipeline(index, diseases, genes, config, keywords, model)


def _evaluate_results(results: Mapping[int, RankedList], qrels: Qrels, name: str = "") -> MetricsReport:
    return evaluate_run(run_entries(results, "tune"), qrels, name=name)


# ============================================================================
# Commands
# ============================================================================


def cmd_index(config: PipelineConfig) -> FieldedIndex:
    """Ingest the corpus, build and persist the index; prints kept/discarded counts."""
    corpus = _existing(config.paths.require("corpus"), "corpus file")
    index_dir = config.paths.require("index_dir")
    with log_stage(logger, "index"):
        store = load_corpus(corpus)
        index = build_index(store, config.bm25, config.use_stopwords)
        index.save(index_dir)
    print(f"kept={store.kept} discarded={store.discarded} rejected={len(store.errors)}")
    return index


def cmd_run(config: PipelineConfig) -> Path:
    """Retrieve all topics with the configured strategy and write the run file."""
    strategy = config.strategy
    run_file = config.paths.require("run_file")
    topics = load_topics(_existing(config.paths.require("topics"), "topic file"))
    with log_stage(logger, f"run {strategy}"):
        pipeline = _build_pipeline(config, strategy, with_model=strategy == STRATEGY_FULL)
        results = pipeline.run(topics, strategy)
        write_run(run_entries(results, config.run_tag), run_file)
    print(f"{strategy}: {len(topics)} topics, "
          f"{sum(len(r) for r in results.values())} entries written to {run_file}")
    return run_file


def cmd_train(config: PipelineConfig) -> LogisticModel:
    """Fit the rerank classifier from expand+acronym retrieval on the training topics."""
    model_file = config.paths.require("model_file")
    topics = load_topics(_existing(config.paths.training_topics or config.paths.require("topics"),
                                   "training topic file"))
    qrels_path = config.paths.training_qrels
    if qrels_path is None:
        raise ConfigurationError("[paths] qrels (or train_qrels) is required for training")
    qrels = parse_qrels(_existing(qrels_path, "training qrels"))
    if len(qrels) == 0:
        raise PmSearchError(f"training qrels '{qrels_path}' contain no judgments")

    with log_stage(logger, "train"):
        pipeline = _build_pipeline(config, STRATEGY_EXPAND_ACRONYM, with_model=False)
        surfaces: Dict[int, Tuple[str, ...]] = {}
        results: Dict[int, RankedList] = {}
        for topic in topics:
            query = pipeline.expand(topic, STRATEGY_EXPAND_ACRONYM)
            surfaces[topic.number] = query.title_surfaces(config.rerank.title_match)
            results[topic.number] = search(pipeline.index, query, config.depth)
        examples = build_training_set(
            topics, qrels, pipeline.index.store, results, pipeline.keywords, surfaces,
            retrieved_only=config.training.retrieved_only,
        )
        t = config.training
        model = train_logistic(
            examples,
            regularization=t.regularization,
            tolerance=t.tolerance,
            max_iterations=t.max_iterations,
            standardize=t.standardize,
            keywords=pipeline.keywords.to_dict(),
            metadata={
                "examples": len(examples),
                "positives": sum(label for _, label in examples),
                "topics": len(topics),
                "seed": t.seed,
                "title_match": config.rerank.title_match,
            },
        )
        save_model(model, model_file)
    print(f"model trained on {len(examples)} examples "
          f"({model.iterations} iterations, loss {model.final_loss:.6g}) -> {model_file}")
    return model


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def cmd_eval(
    config: PipelineConfig,
    run_file: Optional[Path] = None,
    plot: bool = False,
    export: Optional[Path] = None,
) -> MetricsReport:
    """Evaluate a run file; prints the table and writes ``<run>.eval.json``."""
    run_path = _existing(run_file or config.paths.require("run_file"), "run file")
    qrels = parse_qrels(_existing(config.paths.require("qrels"), "qrels file"))
    report = evaluate_run(read_run(run_path), qrels, name=run_path.stem)
    print(report.format_table())
    write_json(_sibling(run_path, ".eval.json"), report.to_dict())
    if export is not None:
        try:
            export_table(header=report.table_header(), rows=report.table_rows(), output_path=export)
        except ValueError as exc:
            raise ConfigurationError(f"--export {export}: {exc}") from exc
    if plot:
        from .plot_util import plot_topic_metrics

        fig = plot_topic_metrics(report, savedir=run_path.parent, savename=run_path.name + ".metrics.png")
        import matplotlib.pyplot as plt

        plt.close(fig)
    return report


def cmd_compare(config: PipelineConfig, run_files: Sequence[Path], plot: bool = False) -> List[MetricsReport]:
    """Evaluate several run files against the same qrels and print one row per run."""
    if not run_files:
        raise ConfigurationError("compare needs at least one run file")
    qrels = parse_qrels(_existing(config.paths.require("qrels"), "qrels file"))
    reports = [
        evaluate_run(read_run(_existing(Path(p), "run file")), qrels, name=Path(p).stem)
        for p in run_files
    ]
    width = max(len(r.name) for r in reports)
    print(f"{'run':<{width}} {'R@1000':>8} {'P@10':>8} {'R-prec':>8}")
    for r in reports:
        m = r.means
        print(f"{r.name:<{width}} {m['r_at_1000']:>8.4f} {m['p_at_10']:>8.4f} {m['r_prec']:>8.4f}")
    if plot:
        from .plot_util import plot_strategy_comparison

        first = Path(run_files[0])
        fig = plot_strategy_comparison(reports, savedir=first.parent, savename="comparison.png")
        import matplotlib.pyplot as plt

        plt.close(fig)
    return reports


def cmd_tune(config: PipelineConfig) -> Dict[str, object]:
    """
    Coordinate search of the expansion weights (max mean R@1000), then of
    the rerank top_k (max mean P@10) when a model file exists. Ties go to
    the smaller value. Writes ``<run stem>.tuned.cfg`` and ``<run stem>.tune.json``.
    """
    run_file = config.paths.require("run_file")
    topics = load_topics(_existing(config.paths.training_topics or config.paths.require("topics"),
                                   "training topic file"))
    qrels_path = config.paths.training_qrels
    if qrels_path is None:
        raise ConfigurationError("[paths] qrels (or train_qrels) is required for tuning")
    qrels = parse_qrels(_existing(qrels_path, "training qrels"))

    model_file = config.paths.model_file
    with_model = model_file is not None and model_file.exists()
    pipeline = _build_pipeline(config, STRATEGY_EXPAND_ACRONYM, with_model=with_model)

    weights = replace(config.weights, **{origin: TUNE_START_WEIGHT for origin in EXPANSION_ORIGINS})
    weight_trials: List[Dict[str, object]] = []
    with log_stage(logger, "tune weights"):
        for origin in EXPANSION_ORIGINS:
            best: Optional[Tuple[float, float]] = None
            for value in sorted(config.tuning.weight_grid):
                candidate = replace(weights, **{origin: value})
                results = pipeline.run(topics, STRATEGY_EXPAND_ACRONYM, weights=candidate)
                recall = _evaluate_results(results, qrels).means["r_at_1000"]
                weight_trials.append({"origin": origin, "weight": value, "r_at_1000": recall})
                if best is None or recall > best[1]:
                    best = (value, recall)
            weights = replace(weights, **{origin: best[0]})
            logger.info("tuned %s = %g (R@1000 %.4f)", origin, best[0], best[1])

    tuned = replace(config, weights=weights)
    top_k_trials: List[Dict[str, object]] = []
    if with_model:
        tuned_pipeline = SearchPipeline(pipeline.index, pipeline.diseases, pipeline.genes, tuned,
                                        pipeline.keywords, pipeline.model)
        with log_stage(logger, "tune top_k"):
            best_k: Optional[Tuple[int, float]] = None
            for k in sorted(config.tuning.top_k_grid):
                rerank = replace(config.rerank, top_k=k)
                results = tuned_pipeline.run(topics, STRATEGY_FULL, rerank=rerank)
                precision = _evaluate_results(results, qrels).means["p_at_10"]
                top_k_trials.append({"top_k": k, "p_at_10": precision})
                if best_k is None or precision > best_k[1]:
                    best_k = (k, precision)
        tuned = replace(tuned, rerank=replace(config.rerank, top_k=best_k[0]))
    else:
        logger.warning("no model file, rerank top_k left at %d", config.rerank.top_k)

    cfg = CfgIo()
    cfg.save_pipeline(tuned)
    cfg_path = cfg.write_cfg(run_file.with_name(run_file.stem + ".tuned.cfg"))
    report: Dict[str, object] = {
        "weight_search": weight_trials,
        "best_weights": weights.to_dict(),
        "top_k_search": top_k_trials,
        "best_top_k": tuned.rerank.top_k,
    }
    write_json(run_file.with_name(run_file.stem + ".tune.json"), report)
    print("tuned weights: " + ", ".join(f"{o}={getattr(weights, o):g}" for o in EXPANSION_ORIGINS))
    print(f"tuned top_k: {tuned.rerank.top_k} -> {cfg_path}")
    return report


# ============================================================================
# Command line
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmsearch",
        description="Precision-medicine literature search: index, run, train, evaluate",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", required=True, type=Path, help="configuration file")
    common.add_argument("--verbosity", "-v", type=int, choices=(1, 2, 3),
                        help="1=WARNING 2=INFO 3=DEBUG (overrides [logging] verbosity)")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    sub.add_parser("index", parents=[common], help="build and persist the index")

    p_run = sub.add_parser("run", parents=[common], help="retrieve all topics, write a run file")
    p_run.add_argument("--strategy", "-s", choices=STRATEGIES, help="overrides [run] strategy")
    p_run.add_argument("--depth", "-d", type=int, help="overrides [run] depth")
    p_run.add_argument("--run-file", type=Path, help="overrides [paths] run_file")

    p_train = sub.add_parser("train", parents=[common], help="train the rerank classifier")
    p_train.add_argument("--depth", "-d", type=int, help="overrides [run] depth")

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a run file")
    p_eval.add_argument("--run-file", type=Path, help="overrides [paths] run_file")
    p_eval.add_argument("--plot", action="store_true", help="save a per-topic bar chart")
    p_eval.add_argument("--export", type=Path, help="also export the table (.txt/.csv/.xlsx)")

    p_tune = sub.add_parser("tune", parents=[common], help="tune expansion weights and top_k")
    p_tune.add_argument("--depth", "-d", type=int, help="overrides [run] depth")

    p_cmp = sub.add_parser("compare", parents=[common], help="compare several run files")
    p_cmp.add_argument("run_files", nargs="+", type=Path)
    p_cmp.add_argument("--plot", action="store_true", help="save a comparison bar chart")
    return parser


def _configure(args: argparse.Namespace) -> PipelineConfig:
    config = CfgIo(args.config).read_pipeline()
    config = config.with_overrides(
        strategy=getattr(args, "strategy", None),
        depth=getattr(args, "depth", None),
    )
    run_file = getattr(args, "run_file", None)
    if run_file is not None:
        config = replace(config, paths=replace(config.paths, run_file=run_file))
    verbosity = args.verbosity if args.verbosity is not None else config.logging.verbosity
    setup_logging(LogConfig(
        log_dir=config.logging.log_dir,
        verbosity=verbosity,
        console_output=True,
        file_output=config.logging.log_file,
    ))
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point for the console runner.

    Parameters
    ----------
    argv:
        CLI arguments excluding program name. If None, uses sys.argv[1:].

    Returns
    -------
    int
        Exit code.
    """
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        config = _configure(args)
        log_section_header(logger, f"pmsearch {args.command}")
        if args.command == "index":
            cmd_index(config)
        elif args.command == "run":
            cmd_run(config)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(config, plot=args.plot, export=args.export)
        elif args.command == "tune":
            cmd_tune(config)
        elif args.command == "compare":
            cmd_compare(config, args.run_files, plot=args.plot)
    except (PmSearchError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"Error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
