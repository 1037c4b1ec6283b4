"""
Soft-margin RBF support vector machine trained by SMO

Labels follow the association convention: +1 for MBS-served (mu = 1),
-1 for offloaded (mu = 0).
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import cdist

from hetnet.errors import ConfigError, DegenerateError
from hetnet.records import csv_text, read_csv, write_text
from hetnet.scenario import FEATURE_NAMES, FeatureVector
from hetnet.settings import parallel_map

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-12
# curvature below this is treated as a flat pair
TAU = 1e-12
LABEL_COLUMN = "label"
FEATURE_COLUMNS = tuple(f"u_{name}" for name in FEATURE_NAMES)

Features = Union[FeatureVector, Sequence[float], np.ndarray]


def _as_array(u: Features) -> np.ndarray:
    if isinstance(u, FeatureVector):
        return u.as_array()
    return np.asarray(u, dtype=float)


def label_of(mu: int) -> int:
    return 1 if mu == 1 else -1


def mu_of(label: float) -> int:
    return 1 if label > 0 else 0


class ScalingParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mean: List[float]
    std: List[float]

    @classmethod
    def fit(cls, X: np.ndarray) -> "ScalingParams":
        std = np.maximum(X.std(axis=0), STD_FLOOR)
        return cls(mean=X.mean(axis=0).tolist(), std=std.tolist())

    @classmethod
    def identity(cls, dim: int = len(FEATURE_NAMES)) -> "ScalingParams":
        return cls(mean=[0.0] * dim, std=[1.0] * dim)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - np.array(self.mean)) / np.array(self.std)


class SvmModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    support_vectors: List[List[float]]  # scaled
    alphas: List[float]  # signed by label
    bias: float
    kernel_gamma: float = Field(gt=0)
    c: float = Field(gt=0)
    scaling: ScalingParams

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        """f(u) = sum_i alpha_i K(sv_i, u) + b for each raw feature row"""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.alphas:
            return np.full(len(X), self.bias)
        K = gram_matrix(self.scaling.apply(X), np.array(self.support_vectors), self.kernel_gamma)
        alphas = np.array(self.alphas)
        # exact summation keeps f independent of support-vector order
        return np.array([math.fsum(list(row * alphas) + [self.bias]) for row in K])

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_values(X) >= 0).astype(int)

    def to_json(self) -> str:
        return self.model_dump_json(indent=1)

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> "SvmModel":
        return cls.model_validate_json(text)

    def save(self, path: Path) -> Path:
        return write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path: Path) -> "SvmModel":
        return cls.from_json(Path(path).read_text())


@dataclass
class TrainingSet:
    X: np.ndarray  # raw features, FEATURE_NAMES order
    y: np.ndarray  # +1 / -1

    def __post_init__(self) -> None:
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float)).reshape(-1, len(FEATURE_NAMES))
        self.y = np.asarray(self.y, dtype=int).reshape(-1)
        if len(self.X) != len(self.y):
            raise ConfigError(f"{len(self.X)} feature rows but {len(self.y)} labels")
        if not np.all(np.isin(self.y, (-1, 1))):
            raise ConfigError("labels must be +1 or -1")
        if not np.all(np.isfinite(self.X)):
            raise ConfigError("features must be finite")

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_rows(cls, rows: Iterable[Tuple[FeatureVector, int]]) -> "TrainingSet":
        rows = list(rows)
        if not rows:
            return cls(np.zeros((0, len(FEATURE_NAMES))), np.zeros(0, dtype=int))
        return cls(np.vstack([fv.as_array() for fv, _ in rows]), np.array([lab for _, lab in rows]))

    @classmethod
    def concat(cls, parts: Sequence["TrainingSet"]) -> "TrainingSet":
        if not parts:
            return cls.from_rows([])
        return cls(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]))

    def subset(self, idx: np.ndarray) -> "TrainingSet":
        return TrainingSet(self.X[idx], self.y[idx])

    def label_counts(self) -> Tuple[int, int]:
        return int(np.sum(self.y == 1)), int(np.sum(self.y == -1))

    def to_csv_text(self) -> str:
        rows = [tuple(float(v) for v in x) + (int(lab),) for x, lab in zip(self.X, self.y)]
        return csv_text(FEATURE_COLUMNS + (LABEL_COLUMN,), rows)

    def save(self, path: Path) -> Path:
        return write_text(path, self.to_csv_text())

    @classmethod
    def load(cls, path: Path) -> "TrainingSet":
        rows = read_csv(path)
        missing = [c for c in FEATURE_COLUMNS + (LABEL_COLUMN,) if rows and c not in rows[0]]
        if missing:
            raise ConfigError(f"{path}: missing columns {', '.join(missing)}")
        X = np.array([[float(r[c]) for c in FEATURE_COLUMNS] for r in rows]).reshape(-1, len(FEATURE_NAMES))
        y = np.array([int(r[LABEL_COLUMN]) for r in rows], dtype=int)
        return cls(X, y)


def kernel(u: Features, v: Features, kernel_gamma: float) -> float:
    """exp(-gamma ||u - v||^2) on already scaled features"""
    if not kernel_gamma > 0:
        raise ConfigError("kernel_gamma must be positive")
    d = _as_array(u) - _as_array(v)
    return math.exp(-kernel_gamma * float(d @ d))


def gram_matrix(A: np.ndarray, B: np.ndarray, kernel_gamma: float) -> np.ndarray:
    return np.exp(-kernel_gamma * cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean"))


def dual_objective(alphas: np.ndarray, y: np.ndarray, gram: np.ndarray) -> float:
    """sum alpha - 1/2 (alpha y)^T K (alpha y) for unsigned alphas"""
    a = np.asarray(alphas) * np.asarray(y)
    return float(np.sum(alphas) - 0.5 * a @ gram @ a)


def _check_params(c: float, kernel_gamma: float) -> None:
    if not c > 0:
        raise ConfigError(f"c must be positive, got {c}")
    if not kernel_gamma > 0:
        raise ConfigError(f"kernel_gamma must be positive, got {kernel_gamma}")


def _smo(K: np.ndarray, y: np.ndarray, c: float, tol: float, max_iter: int, rng: np.random.Generator):
    """
    SMO with maximal-violating-pair selection.

    Works on the minimisation form 1/2 a^T Q a - e^T a with Q = y y^T * K
    and keeps the gradient G = Q a - e up to date.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    yf = y.astype(float)
    iterations = 0
    m = M = 0.0
    while iterations < max_iter:
        score = -yf * G
        up = ((y == 1) & (alpha < c)) | ((y == -1) & (alpha > 0))
        low = ((y == 1) & (alpha > 0)) | ((y == -1) & (alpha < c))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        m, M = score[i], score[j]
        if m - M < tol:
            break
        eta = K[i, i] + K[j, j] - 2 * K[i, j]
        if eta <= TAU:
            # flat pair: retry with a random violating partner
            candidates = np.flatnonzero(low & (score < m) & (K[i, i] + np.diag(K) - 2 * K[i] > TAU))
            if candidates.size:
                j = int(rng.choice(candidates))
                M = score[j]
                eta = K[i, i] + K[j, j] - 2 * K[i, j]
            else:
                eta = TAU
        d = (m - M) / eta
        d = min(d, c - alpha[i] if y[i] == 1 else alpha[i])
        d = min(d, alpha[j] if y[j] == 1 else c - alpha[j])
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        # clip rounding at the box edges
        alpha[i] = min(max(alpha[i], 0.0), c)
        alpha[j] = min(max(alpha[j], 0.0), c)
        G += d * yf * (K[:, i] - K[:, j])
        iterations += 1

    score = -yf * G
    free = (alpha > 0) & (alpha < c)
    if free.any():
        bias = float(np.mean(score[free]))
    else:
        up = ((y == 1) & (alpha < c)) | ((y == -1) & (alpha > 0))
        low = ((y == 1) & (alpha > 0)) | ((y == -1) & (alpha < c))
        m = float(np.max(score[up])) if up.any() else 0.0
        M = float(np.min(score[low])) if low.any() else 0.0
        bias = (m + M) / 2
    return alpha, bias, iterations


def train(
    data: TrainingSet,
    c: float = 10.0,
    kernel_gamma: float = 0.1,
    tol: float = 1e-3,
    max_passes: int = 50,
    seed: int = 0,
) -> SvmModel:
    """Fit on z-scored features; iteration budget is max_passes * len(data)"""
    _check_params(c, kernel_gamma)
    if len(data) == 0 or len(set(data.y.tolist())) < 2:
        raise DegenerateError("training data needs both labels")
    scaling = ScalingParams.fit(data.X)
    Xs = scaling.apply(data.X)
    K = gram_matrix(Xs, Xs, kernel_gamma)
    budget = max_passes * len(data)
    alpha, bias, iterations = _smo(K, data.y, c, tol, budget, np.random.default_rng(seed))
    if iterations >= budget:
        logger.warning("[SVM] iteration budget %d reached before KKT tolerance", budget)

    keep = alpha > 0
    model = SvmModel(
        support_vectors=Xs[keep].tolist(),
        alphas=(alpha[keep] * data.y[keep]).tolist(),
        bias=bias,
        kernel_gamma=kernel_gamma,
        c=c,
        scaling=scaling,
    )
    logger.info("[SVM] %d rows, %d support vectors, %d SMO steps", len(data), int(keep.sum()), iterations)
    return model


def decision_value(model: SvmModel, u: Features) -> float:
    return float(model.decision_values(_as_array(u))[0])


def predict(model: SvmModel, u: Features) -> int:
    # the boundary itself belongs to the MBS class
    return 1 if decision_value(model, u) >= 0 else 0


def accuracy(model: SvmModel, data: TrainingSet) -> float:
    if len(data) == 0:
        return 1.0
    predicted = np.where(model.predict_many(data.X) == 1, 1, -1)
    return float(np.mean(predicted == data.y))


class CvResult(NamedTuple):
    best: Tuple[float, float]
    accuracy: float
    table: List[Tuple[float, float, float]]  # (c, kernel_gamma, mean validation accuracy)


def fold_indices(n: int, folds: int, seed: int) -> List[np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def _score_point(job: Tuple[TrainingSet, List[np.ndarray], float, float, float, int, int]) -> float:
    data, parts, c, g, tol, max_passes, seed = job
    scores = []
    for k, held in enumerate(parts):
        if held.size == 0:
            continue
        train_idx = np.concatenate([p for j, p in enumerate(parts) if j != k])
        fit, val = data.subset(train_idx), data.subset(held)
        if len(set(fit.y.tolist())) < 2:
            # single-label fold: predict that label
            scores.append(float(np.mean(val.y == fit.y[0])) if len(fit) else 0.0)
            continue
        model = train(fit, c, g, tol, max_passes, seed)
        scores.append(accuracy(model, val))
    return float(np.mean(scores)) if scores else 0.0


def cross_validate(
    data: TrainingSet,
    grid: Iterable[Tuple[float, float]],
    folds: int = 5,
    seed: int = 0,
    tol: float = 1e-3,
    max_passes: int = 50,
    workers: Optional[int] = None,
) -> CvResult:
    """
    k-fold grid search over (c, kernel_gamma).

    The split is a seeded shuffle; the best mean validation accuracy wins,
    ties going to the smaller c and then the smaller kernel_gamma.
    """
    if folds < 2:
        raise ConfigError(f"cross-validation needs at least 2 folds, got {folds}")
    grid = [(float(c), float(g)) for c, g in grid]
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    for c, g in grid:
        _check_params(c, g)
    if len(set(data.y.tolist())) < 2:
        raise DegenerateError("training data needs both labels")
    parts = fold_indices(len(data), min(folds, len(data)), seed)
    jobs = [(data, parts, c, g, tol, max_passes, seed) for c, g in grid]
    scores = parallel_map(_score_point, jobs, workers)
    table = [(c, g, s) for (c, g), s in zip(grid, scores)]
    best = max(table, key=lambda row: (row[2], -row[0], -row[1]))
    logger.info("[SVM] cross-validation picked c=%g gamma=%g (accuracy %.4f)", best[0], best[1], best[2])
    return CvResult((best[0], best[1]), best[2], table)
