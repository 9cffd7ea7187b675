"""
Configuration I/O for the pmsearch package.

This module reads and writes the INI-style configuration file that pins an
experiment: input paths, BM25 parameters, expansion weights, rerank and
training settings, the retrieval strategy and logging.

Example configuration::

    [path_info]
    main_path = /data/pm2018

    [paths]
    corpus = corpus.jsonl
    topics = topics2018.xml
    disease_kb = disease_kb.jsonl
    gene_table = gene_aliases.tsv
    qrels = qrels2018.txt
    index_dir = index
    model_file = model.json
    run_file = runs/full.run

    [run]
    strategy = full
    depth = 1000

Relative paths are resolved against ``main_path``, which defaults to the
directory of the configuration file.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from .errors import PmSearchError
from .expand import ExpansionError, ExpansionWeights
from .index import DEFAULT_DEPTH, Bm25Params, IndexBuildError
from .io_util import atomic_write_text
from .rerank import RerankConfig, RerankError

# Retrieval strategies, from plain BM25 up to the full rerank stack.
STRATEGY_BASELINE = "baseline"
STRATEGY_EXPAND = "expand"
STRATEGY_EXPAND_ACRONYM = "expand+acronym"
STRATEGY_HEURISTIC = "heuristic"
STRATEGY_FULL = "full"
STRATEGIES = (
    STRATEGY_BASELINE,
    STRATEGY_EXPAND,
    STRATEGY_EXPAND_ACRONYM,
    STRATEGY_HEURISTIC,
    STRATEGY_FULL,
)

DEFAULT_WEIGHT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_TOP_K_GRID = (10, 20, 30, 50, 100)

PATH_KEYS = (
    "corpus", "topics", "disease_kb", "gene_table", "qrels", "index_dir",
    "model_file", "keyword_file", "run_file", "train_topics", "train_qrels",
)


class ConfigurationError(PmSearchError):
    """Exception raised for configuration-related errors."""
    pass


@dataclass(frozen=True)
class PipelinePaths:
    """Resolved file locations; None when not configured."""

    corpus: Optional[Path] = None
    topics: Optional[Path] = None
    disease_kb: Optional[Path] = None
    gene_table: Optional[Path] = None
    qrels: Optional[Path] = None
    index_dir: Optional[Path] = None
    model_file: Optional[Path] = None
    keyword_file: Optional[Path] = None
    run_file: Optional[Path] = None
    train_topics: Optional[Path] = None
    train_qrels: Optional[Path] = None

    @property
    def training_topics(self) -> Optional[Path]:
        return self.train_topics or self.topics

    @property
    def training_qrels(self) -> Optional[Path]:
        return self.train_qrels or self.qrels

    def require(self, key: str) -> Path:
        """
        Return a configured path.

        Raises:
            ConfigurationError: If the path is not configured
        """
        value = getattr(self, key)
        if value is None:
            raise ConfigurationError(f"[paths] {key} is required for this command")
        return value


@dataclass(frozen=True)
class TrainingSettings:
    regularization: float = 1.0
    tolerance: float = 1e-6
    max_iterations: int = 1000
    standardize: bool = True
    seed: int = 0
    retrieved_only: bool = False


@dataclass(frozen=True)
class TuningSettings:
    weight_grid: Tuple[float, ...] = DEFAULT_WEIGHT_GRID
    top_k_grid: Tuple[int, ...] = DEFAULT_TOP_K_GRID


@dataclass(frozen=True)
class LoggingSettings:
    verbosity: int = 2
    log_dir: Path = Path("./logs/")
    log_file: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a command needs, validated."""

    paths: PipelinePaths = field(default_factory=PipelinePaths)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    use_stopwords: bool = True
    weights: ExpansionWeights = field(default_factory=ExpansionWeights)
    mine_acronyms: bool = True
    rerank: RerankConfig = field(default_factory=RerankConfig)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    tuning: TuningSettings = field(default_factory=TuningSettings)
    strategy: str = STRATEGY_FULL
    depth: int = DEFAULT_DEPTH
    run_tag: str = "pmsearch"
    logging: LoggingSettings = field(default_factory=LoggingSettings)

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"[run] strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.depth < 1:
            raise ConfigurationError(f"[run] depth must be >= 1, got {self.depth}")
        if not self.run_tag or any(c.isspace() for c in self.run_tag):
            raise ConfigurationError(f"[run] run_tag must be a non-empty word, got {self.run_tag!r}")

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        """Copy with the non-None ``changes`` applied (command-line flags)."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


class CfgIo:
    """
    Configuration I/O handler for pmsearch.

    Attributes:
        config: ConfigParser object containing the configuration
        cfg_path: Path of the file that was read, if any

    Example:
        >>> cfg = CfgIo('experiment.cfg')
        >>> pipeline = cfg.read_pipeline()
        >>> pipeline.rerank.top_k
        50
    """

    def __init__(self, cfg_file: Optional[Union[str, Path]] = None):
        # Allow both '=' and ':' as delimiters for compatibility
        self.config = configparser.ConfigParser(delimiters=("=", ":"), interpolation=None)
        self.cfg_path: Optional[Path] = None
        if cfg_file is not None:
            self.read_cfg(cfg_file)

    # =========================================================================
    # Path Resolution
    # =========================================================================

    @property
    def main_path(self) -> Optional[Path]:
        """Base directory for relative paths: [path_info] main_path, else the file's directory."""
        if self.config.has_section("path_info"):
            path_str = self.config.get("path_info", "main_path", fallback="").strip()
            if path_str:
                base = Path(path_str).expanduser()
                if not base.is_absolute() and self.cfg_path is not None:
                    base = self.cfg_path.parent / base
                return base
        if self.cfg_path is not None:
            return self.cfg_path.parent
        return None

    def resolve_path(self, filename: Union[str, Path]) -> Path:
        """Absolute paths are returned as-is, relative ones are joined to main_path."""
        file_path = Path(filename).expanduser()
        if file_path.is_absolute() or self.main_path is None:
            return file_path
        return self.main_path / file_path

    # =========================================================================
    # Core I/O Methods
    # =========================================================================

    def read_cfg(self, cfg_file: Union[str, Path]) -> None:
        """
        Read configuration from INI file.

        Raises:
            ConfigurationError: If the file doesn't exist or is not valid INI
        """
        cfg_path = Path(cfg_file)
        if not cfg_path.exists():
            raise ConfigurationError(f"Configuration file '{cfg_file}' does not exist")
        try:
            self.config.read(cfg_path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"Configuration file '{cfg_file}' is malformed: {exc}") from exc
        self.cfg_path = cfg_path.resolve()

    def write_cfg(self, filename: Union[str, Path]) -> Path:
        """Write the configuration to ``filename`` (atomic)."""
        buffer = io.StringIO()
        self.config.write(buffer)
        return atomic_write_text(filename, buffer.getvalue())

    # =========================================================================
    # Typed getters
    # =========================================================================

    def _get(self, section: str, key: str, convert: Callable[[str], Any], default: Any) -> Any:
        if not self.config.has_option(section, key):
            return default
        raw = self.config.get(section, key).strip()
        try:
            return convert(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key}: invalid value {raw!r} ({exc})") from None

    def _get_bool(self, section: str, key: str, default: bool) -> bool:
        if not self.config.has_option(section, key):
            return default
        try:
            return self.config.getboolean(section, key)
        except ValueError:
            raise ConfigurationError(
                f"[{section}] {key}: expected a boolean, got {self.config.get(section, key)!r}"
            ) from None

    @staticmethod
    def _float_list(raw: str) -> Tuple[float, ...]:
        values = tuple(float(v) for v in raw.split(",") if v.strip())
        if not values:
            raise ValueError("empty list")
        return values

    @staticmethod
    def _int_list(raw: str) -> Tuple[int, ...]:
        values = tuple(int(v) for v in raw.split(",") if v.strip())
        if not values:
            raise ValueError("empty list")
        return values

    # =========================================================================
    # Section readers
    # =========================================================================

    def read_paths(self) -> PipelinePaths:
        values: Dict[str, Optional[Path]] = {}
        for key in PATH_KEYS:
            raw = self.config.get("paths", key, fallback="").strip() if self.config.has_section("paths") else ""
            values[key] = self.resolve_path(raw) if raw else None
        return PipelinePaths(**values)

    def read_bm25(self) -> Tuple[Bm25Params, bool]:
        try:
            params = Bm25Params(
                k1=self._get("bm25", "k1", float, 1.25),
                b=self._get("bm25", "b", float, 0.75),
                clamp_idf=self._get_bool("bm25", "clamp_idf", True),
            )
        except IndexBuildError as exc:
            raise ConfigurationError(f"[bm25] {exc}") from None
        return params, self._get_bool("bm25", "stopwords", True)

    def read_expansion(self) -> Tuple[ExpansionWeights, bool]:
        defaults = ExpansionWeights()
        values = {
            f.name: self._get("expansion", f.name, float, getattr(defaults, f.name))
            for f in fields(ExpansionWeights)
        }
        try:
            weights = ExpansionWeights(**values)
        except ExpansionError as exc:
            raise ConfigurationError(f"[expansion] {exc}") from None
        return weights, self._get_bool("expansion", "mine_acronyms", True)

    def read_rerank(self) -> RerankConfig:
        try:
            return RerankConfig(
                penalty_factor=self._get("rerank", "penalty_factor", float, 0.6),
                top_k=self._get("rerank", "top_k", int, 50),
                title_match=self._get("rerank", "title_match", str, "all"),
            )
        except RerankError as exc:
            raise ConfigurationError(f"[rerank] {exc}") from None

    def read_training(self) -> TrainingSettings:
        settings = TrainingSettings(
            regularization=self._get("training", "lambda", float, 1.0),
            tolerance=self._get("training", "tolerance", float, 1e-6),
            max_iterations=self._get("training", "max_iterations", int, 1000),
            standardize=self._get_bool("training", "standardize", True),
            seed=self._get("training", "seed", int, 0),
            retrieved_only=self._get_bool("training", "retrieved_only", False),
        )
        if settings.regularization < 0:
            raise ConfigurationError(f"[training] lambda must be >= 0, got {settings.regularization}")
        if settings.tolerance <= 0:
            raise ConfigurationError(f"[training] tolerance must be > 0, got {settings.tolerance}")
        if settings.max_iterations < 1:
            raise ConfigurationError(f"[training] max_iterations must be >= 1, got {settings.max_iterations}")
        return settings

    def read_tuning(self) -> TuningSettings:
        settings = TuningSettings(
            weight_grid=self._get("tuning", "weight_grid", self._float_list, DEFAULT_WEIGHT_GRID),
            top_k_grid=self._get("tuning", "top_k_grid", self._int_list, DEFAULT_TOP_K_GRID),
        )
        if any(not 0.0 <= w <= 1.0 for w in settings.weight_grid):
            raise ConfigurationError("[tuning] weight_grid values must be in [0, 1]")
        if any(k < 1 for k in settings.top_k_grid):
            raise ConfigurationError("[tuning] top_k_grid values must be >= 1")
        return settings

    def read_logging(self) -> LoggingSettings:
        log_dir = self.config.get("logging", "log_dir", fallback="./logs/").strip() \
            if self.config.has_section("logging") else "./logs/"
        return LoggingSettings(
            verbosity=self._get("logging", "verbosity", int, 2),
            log_dir=self.resolve_path(log_dir),
            log_file=self._get_bool("logging", "log_file", False),
        )

    def read_pipeline(self, cfg_file: Optional[Union[str, Path]] = None) -> PipelineConfig:
        """
        Read every section into a validated :class:`PipelineConfig`.

        Missing sections and keys take their defaults.

        Raises:
            ConfigurationError: Invalid value, naming section and key
        """
        if cfg_file is not None:
            self.read_cfg(cfg_file)
        bm25, use_stopwords = self.read_bm25()
        weights, mine = self.read_expansion()
        return PipelineConfig(
            paths=self.read_paths(),
            bm25=bm25,
            use_stopwords=use_stopwords,
            weights=weights,
            mine_acronyms=mine,
            rerank=self.read_rerank(),
            training=self.read_training(),
            tuning=self.read_tuning(),
            strategy=self._get("run", "strategy", str, STRATEGY_FULL),
            depth=self._get("run", "depth", int, DEFAULT_DEPTH),
            run_tag=self._get("run", "run_tag", str, "pmsearch"),
            logging=self.read_logging(),
        )

    # =========================================================================
    # Writing
    # =========================================================================

    def _set_section(self, section: str, values: Dict[str, Any]) -> None:
        if not self.config.has_section(section):
            self.config.add_section(section)
        for key, value in values.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            elif isinstance(value, (tuple, list)):
                text = ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            else:
                text = str(value)
            self.config.set(section, key, text)

    def save_pipeline(self, pipeline: PipelineConfig) -> None:
        """Store ``pipeline`` into the config object; paths are written absolute."""
        self._set_section("paths", {
            key: str(Path(getattr(pipeline.paths, key)).resolve())
            for key in PATH_KEYS if getattr(pipeline.paths, key) is not None
        })
        if self.config.has_section("path_info"):
            self.config.remove_section("path_info")
        self._set_section("bm25", {
            "k1": float(pipeline.bm25.k1),
            "b": float(pipeline.bm25.b),
            "clamp_idf": pipeline.bm25.clamp_idf,
            "stopwords": pipeline.use_stopwords,
        })
        expansion: Dict[str, Any] = dict(pipeline.weights.to_dict())
        expansion["mine_acronyms"] = pipeline.mine_acronyms
        self._set_section("expansion", expansion)
        self._set_section("rerank", {
            "penalty_factor": float(pipeline.rerank.penalty_factor),
            "top_k": pipeline.rerank.top_k,
            "title_match": pipeline.rerank.title_match,
        })
        t = pipeline.training
        self._set_section("training", {
            "lambda": float(t.regularization),
            "tolerance": float(t.tolerance),
            "max_iterations": t.max_iterations,
            "standardize": t.standardize,
            "seed": t.seed,
            "retrieved_only": t.retrieved_only,
        })
        self._set_section("tuning", {
            "weight_grid": tuple(float(w) for w in pipeline.tuning.weight_grid),
            "top_k_grid": pipeline.tuning.top_k_grid,
        })
        self._set_section("run", {
            "strategy": pipeline.strategy,
            "depth": pipeline.depth,
            "run_tag": pipeline.run_tag,
        })
        self._set_section("logging", {
            "verbosity": pipeline.logging.verbosity,
            "log_dir": str(Path(pipeline.logging.log_dir).resolve()),
            "log_file": pipeline.logging.log_file,
        })

    def __repr__(self) -> str:
        return f"CfgIo(sections={list(self.config.sections())})"
