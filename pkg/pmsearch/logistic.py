"""
Pointwise relevance classifier: L2-regularized logistic regression.

The model scores the 7-feature vector of a (topic, document) pair and
returns the probability that the document is relevant. Training minimizes

    sum_i log(1 + exp(-y_i * (w . x_i + b))) + lambda / 2 * ||w||^2

with y_i in {-1, +1} and an unregularized bias, using the L-BFGS-B solver
from scipy.optimize with the analytic gradient. Features are standardized
to zero mean and unit variance before training unless disabled; the
transform is part of the model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import PmSearchError
from .io_util import read_json, write_json
from .logging_util import get_logger

logger = get_logger(__name__)

FEATURE_NAMES: Tuple[str, ...] = (
    "disease_in_title",
    "pos_in_title",
    "pos_in_abstract",
    "neg_in_title",
    "neg_in_abstract",
    "is_clinical_trial",
    "heading_hits",
)
N_FEATURES = len(FEATURE_NAMES)
_BINARY_FEATURES = ("disease_in_title", "is_clinical_trial")

MODEL_FORMAT_VERSION = 1

_PROB_EPS = np.finfo(float).eps


class FeatureError(PmSearchError, ValueError):
    """Exception raised for invalid feature values."""
    pass


class TrainingError(PmSearchError, ValueError):
    """Exception raised when a model cannot be trained from the given examples."""
    pass


class ModelFormatError(PmSearchError):
    """Exception raised for unreadable or inconsistent model files."""
    pass


@dataclass(frozen=True)
class FeatureVector:
    """Reranking features of one document for one topic, in fixed order."""

    disease_in_title: int = 0
    pos_in_title: int = 0
    pos_in_abstract: int = 0
    neg_in_title: int = 0
    neg_in_abstract: int = 0
    is_clinical_trial: int = 0
    heading_hits: int = 0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise FeatureError(f"feature '{name}' must be a finite count >= 0, got {value}")
        for name in _BINARY_FEATURES:
            if getattr(self, name) not in (0, 1):
                raise FeatureError(f"feature '{name}' must be 0 or 1, got {getattr(self, name)}")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)

    @staticmethod
    def feature_names() -> List[str]:
        return list(FEATURE_NAMES)


FeatureInput = Union[FeatureVector, Sequence[float], np.ndarray]


def _as_matrix(features: Sequence[FeatureInput]) -> np.ndarray:
    rows = [f.to_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
            for f in features]
    if not rows:
        return np.zeros((0, N_FEATURES))
    matrix = np.vstack(rows)
    if matrix.shape[1] != N_FEATURES:
        raise FeatureError(f"expected {N_FEATURES} features, got {matrix.shape[1]}")
    if not np.all(np.isfinite(matrix)):
        raise FeatureError("non-finite feature value")
    return matrix


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """
    Trained classifier.

    Attributes:
        weights: One weight per entry of FEATURE_NAMES
        bias: Intercept
        regularization: L2 strength lambda used in training
        mean, std: Standardization transform applied before ``weights``
        standardize: Whether the transform was estimated from data
        iterations: Solver iterations
        final_loss: Objective value at the solution
        converged: Gradient max-norm reached the tolerance
        objective_history: Objective at the start and after every iteration
        keywords: Keyword lists the features were extracted with
        metadata: Free-form training details written to the model file
    """

    weights: np.ndarray
    bias: float = 0.0
    regularization: float = 0.0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    std: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))
    standardize: bool = False
    iterations: int = 0
    final_loss: float = float("nan")
    converged: bool = False
    objective_history: Tuple[float, ...] = ()
    keywords: Optional[Dict[str, List[str]]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("weights", "mean", "std"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.size != N_FEATURES:
                raise ModelFormatError(f"'{name}' must have {N_FEATURES} entries, got {arr.size}")
            if not np.all(np.isfinite(arr)):
                raise ModelFormatError(f"'{name}' contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.std <= 0):
            raise ModelFormatError("standardization std must be positive")
        if not math.isfinite(self.bias):
            raise ModelFormatError("bias is not finite")
        object.__setattr__(self, "objective_history", tuple(float(v) for v in self.objective_history))

    def decision_function(self, features: Sequence[FeatureInput]) -> np.ndarray:
        x = (_as_matrix(features) - self.mean) / self.std
        return x @ self.weights + self.bias

    def predict_proba(self, features: Sequence[FeatureInput]) -> np.ndarray:
        """Relevance probabilities, clipped into the open interval (0, 1)."""
        return np.clip(expit(self.decision_function(features)), _PROB_EPS, 1.0 - _PROB_EPS)


def logistic_objective(
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    regularization: float,
) -> Tuple[float, np.ndarray]:
    """
    Regularized negative log-likelihood and its gradient.

    Args:
        params: Weights followed by the bias, shape (n_features + 1,)
        x: Feature matrix, shape (n_samples, n_features)
        y: Labels in {-1, +1}
        regularization: L2 strength (bias not penalized)

    Returns:
        (objective value, gradient with the layout of ``params``)
    """
    w, b = params[:-1], params[-1]
    margins = y * (x @ w + b)
    value = float(np.logaddexp(0.0, -margins).sum() + 0.5 * regularization * (w @ w))
    dz = -y * expit(-margins)
    grad = np.empty_like(params)
    grad[:-1] = x.T @ dz + regularization * w
    grad[-1] = dz.sum()
    return value, grad


def train_logistic(
    examples: Sequence[Tuple[FeatureInput, int]],
    regularization: float = 1.0,
    tolerance: float = 1e-6,
    max_iterations: int = 1000,
    standardize: bool = True,
    keywords: Optional[Dict[str, List[str]]] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> LogisticModel:
    """
    Fit the relevance classifier.

    Args:
        examples: (features, label) pairs with label 0 or 1
        regularization: L2 strength lambda >= 0
        tolerance: Stop when the gradient max-norm is below this value
        max_iterations: Solver iteration cap
        standardize: Estimate a zero-mean/unit-variance transform first
        keywords: Keyword lists stored with the model
        metadata: Extra training details stored with the model

    Raises:
        TrainingError: Empty or single-class data, bad labels, non-finite
            features or solver failure

    Example:
        >>> model = train_logistic([([0] * 7, 0), ([1] * 7, 1)])
        >>> model.predict_proba([[1] * 7])[0] > 0.5
        True
    """
    if regularization < 0 or not math.isfinite(regularization):
        raise TrainingError(f"regularization must be a finite value >= 0, got {regularization}")
    if tolerance <= 0:
        raise TrainingError(f"tolerance must be positive, got {tolerance}")
    if max_iterations < 1:
        raise TrainingError(f"max_iterations must be >= 1, got {max_iterations}")
    if not examples:
        raise TrainingError("no training examples")

    try:
        x = _as_matrix([f for f, _ in examples])
    except FeatureError as exc:
        raise TrainingError(str(exc)) from exc
    labels = np.array([label for _, label in examples])
    if not np.all(np.isin(labels, (0, 1))):
        raise TrainingError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise TrainingError(
            f"training data has a single class ({n_pos} positive / {labels.size - n_pos} negative)"
        )

    if standardize:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0] = 1.0
    else:
        mean = np.zeros(N_FEATURES)
        std = np.ones(N_FEATURES)
    xs = (x - mean) / std
    y = np.where(labels == 1, 1.0, -1.0)

    def fun(params: np.ndarray) -> Tuple[float, np.ndarray]:
        return logistic_objective(params, xs, y, regularization)

    x0 = np.zeros(N_FEATURES + 1)
    history: List[float] = [fun(x0)[0]]

    def record(xk: np.ndarray) -> None:
        history.append(fun(xk)[0])

    # ftol=0: only the gradient tolerance or the iteration cap ends the fit
    result = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"ftol": 0.0, "gtol": tolerance, "maxiter": max_iterations},
    )
    params = np.asarray(result.x, dtype=float)
    if not np.all(np.isfinite(params)):
        raise TrainingError(f"solver returned non-finite parameters ({result.message})")

    final_loss, grad = fun(params)
    converged = bool(np.max(np.abs(grad)) <= tolerance)
    logger.info(
        "logistic model trained on %d examples (%d positive): %d iterations, loss %.6g, converged=%s",
        labels.size, n_pos, int(result.nit), final_loss, converged,
    )
    if not converged:
        logger.debug("solver stopped: %s", result.message)

    return LogisticModel(
        weights=params[:-1],
        bias=float(params[-1]),
        regularization=float(regularization),
        mean=mean,
        std=std,
        standardize=standardize,
        iterations=int(result.nit),
        final_loss=float(final_loss),
        converged=converged,
        objective_history=tuple(history),
        keywords=keywords,
        metadata=dict(metadata or {}),
    )


def predict_prob(model: LogisticModel, features: FeatureInput) -> float:
    """Probability in (0, 1) that a document with ``features`` is relevant."""
    return float(model.predict_proba([features])[0])


# ============================================================================
# Persistence
# ============================================================================


def model_to_dict(model: LogisticModel) -> Dict[str, Any]:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "weights": [float(v) for v in model.weights],
        "bias": float(model.bias),
        "lambda": float(model.regularization),
        "mean": [float(v) for v in model.mean],
        "std": [float(v) for v in model.std],
        "standardize": bool(model.standardize),
        "training": {
            "iterations": int(model.iterations),
            "final_loss": float(model.final_loss),
            "converged": bool(model.converged),
            "objective_history": list(model.objective_history),
        },
        "keywords": model.keywords,
        "metadata": model.metadata,
    }


def model_from_dict(payload: Dict[str, Any]) -> LogisticModel:
    """Inverse of :func:`model_to_dict`."""
    try:
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format {payload.get('format_version')!r}")
        if list(payload["feature_names"]) != list(FEATURE_NAMES):
            raise ModelFormatError(f"feature order {payload['feature_names']} does not match")
        training = payload.get("training", {})
        return LogisticModel(
            weights=np.asarray(payload["weights"], dtype=float),
            bias=float(payload["bias"]),
            regularization=float(payload["lambda"]),
            mean=np.asarray(payload["mean"], dtype=float),
            std=np.asarray(payload["std"], dtype=float),
            standardize=bool(payload.get("standardize", False)),
            iterations=int(training.get("iterations", 0)),
            final_loss=float(training.get("final_loss", float("nan"))),
            converged=bool(training.get("converged", False)),
            objective_history=tuple(training.get("objective_history", ())),
            keywords=payload.get("keywords"),
            metadata=dict(payload.get("metadata") or {}),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ModelFormatError(f"malformed model description: {exc}") from exc


def save_model(model: LogisticModel, filepath: Union[str, Path]) -> Path:
    """Write the model as canonical JSON (atomic)."""
    path = write_json(filepath, model_to_dict(model))
    logger.info("model saved to %s", path)
    return path


def load_model(filepath: Union[str, Path]) -> LogisticModel:
    """
    Read a model file written by :func:`save_model`.

    Raises:
        ModelFormatError: Invalid JSON or content
    """
    path = Path(filepath)
    try:
        payload = read_json(path)
    except ValueError as exc:
        raise ModelFormatError(f"{path.name}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ModelFormatError(f"{path.name}: expected a JSON object")
    return model_from_dict(payload)
