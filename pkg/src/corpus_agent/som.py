"""Self-organizing map over segment descriptor vectors.

Classic online Kohonen training on a rectangular grid: seeded shuffled
presentation, best-matching unit by Euclidean distance, Gaussian
neighborhood in Chebyshev grid distance, learning rate and radius decaying
geometrically across the total step count. Training is a pure function of
(vectors, dims, schedule, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusAgentError, UntrainedModelError

NORM_EPS = 1e-12


@dataclass
class Normalization:
    """Per-dimension affine map of [min, max] onto [-1, 1].

    Constant dimensions map to 0 and invert back to their original value.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise CorpusAgentError("normalization lo/hi must be matching vectors")

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def constant(self) -> np.ndarray:
        return self.span <= NORM_EPS

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        x = np.asarray(vectors, dtype=np.float64)
        span = np.where(self.constant, 1.0, self.span)
        out = 2.0 * (x - self.lo) / span - 1.0
        return np.where(self.constant, 0.0, out)

    def invert(self, vectors: np.ndarray) -> np.ndarray:
        y = np.asarray(vectors, dtype=np.float64)
        out = self.lo + (y + 1.0) * self.span / 2.0
        return np.where(self.constant, self.lo, out)

    @classmethod
    def fit(cls, vectors: np.ndarray) -> "Normalization":
        x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if x.shape[0] < 1:
            raise CorpusAgentError("cannot fit normalization to empty input")
        return cls(lo=x.min(axis=0), hi=x.max(axis=0))


def normalize(vectors: np.ndarray) -> tuple[np.ndarray, Normalization]:
    norm = Normalization.fit(vectors)
    return norm.apply(vectors), norm


@dataclass
class SomTrainingSchedule:
    epochs: int
    alpha_start: float = 0.5
    alpha_end: float = 0.01
    sigma_start: float = 1.0
    # the final radius must leave neighbors essentially uncoupled, otherwise
    # prototypes shrink toward the data mean and quantization error can end
    # up above its initialization value on small grids
    sigma_end: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise CorpusAgentError("schedule needs at least one epoch")
        if not (self.alpha_start > self.alpha_end > 0):
            raise CorpusAgentError("learning rate must strictly decrease to a positive value")
        if not (self.sigma_start > self.sigma_end > 0):
            raise CorpusAgentError("neighborhood radius must strictly decrease to a positive value")


def default_schedule(num_vectors: int, rows: int, cols: int, epochs: int | None = None) -> SomTrainingSchedule:
    nodes = rows * cols
    if epochs is None:
        epochs = max(100, int(10 * num_vectors / max(nodes, 1)))
    sigma_start = max(max(rows, cols) / 2.0, 0.25)
    return SomTrainingSchedule(epochs=epochs, sigma_start=sigma_start)


def default_grid_dims(num_vectors: int) -> tuple[int, int]:
    """Smallest square grid whose node count reaches sqrt(numData)."""
    target = math.sqrt(max(num_vectors, 1))
    side = 1
    while side * side < target:
        side += 1
    return side, side


@dataclass
class SOM:
    rows: int
    cols: int
    prototypes: np.ndarray  # (rows*cols, dim)
    normalization: Normalization | None = None
    trained: bool = False
    rng_seed: int = 0
    _grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.prototypes.shape[0] != self.rows * self.cols:
            raise CorpusAgentError("prototype count must equal rows*cols")
        if not np.all(np.isfinite(self.prototypes)):
            raise CorpusAgentError("prototypes must be finite")
        r, c = np.divmod(np.arange(self.rows * self.cols), self.cols)
        self._grid = np.stack([r, c], axis=1).astype(np.float64)

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def node_coords(self, node: int) -> tuple[int, int]:
        return divmod(node, self.cols)

    def grid_distance(self, a: int, b: int) -> int:
        ar, ac = self.node_coords(a)
        br, bc = self.node_coords(b)
        return max(abs(ar - br), abs(ac - bc))


def initial_prototypes(vectors: np.ndarray, dims: tuple[int, int], seed: int, rng=None) -> np.ndarray:
    """Seeded draw of initial prototypes from the training vectors."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n = x.shape[0]
    if n < 1:
        raise CorpusAgentError("cannot initialize a SOM from empty input")
    rows, cols = dims
    if rows < 1 or cols < 1:
        raise CorpusAgentError("SOM dims must be positive")
    nodes = rows * cols
    rng = rng if rng is not None else np.random.default_rng(seed)
    init_idx = rng.choice(n, size=nodes, replace=n < nodes)
    return x[init_idx].copy()


def train_som(
    vectors: np.ndarray,
    dims: tuple[int, int],
    schedule: SomTrainingSchedule | None = None,
    seed: int = 0,
) -> SOM:
    """Online SOM training; deterministic for a given seed."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n, dim = x.shape
    if n < 1:
        raise CorpusAgentError("cannot train a SOM on empty input")
    rows, cols = dims
    nodes = rows * cols
    schedule = schedule or default_schedule(n, rows, cols)

    rng = np.random.default_rng(seed)
    weights = initial_prototypes(x, dims, seed, rng=rng)

    som = SOM(rows=rows, cols=cols, prototypes=weights, trained=False, rng_seed=seed)
    grid = som._grid
    total = schedule.epochs * n
    alpha_ratio = schedule.alpha_end / schedule.alpha_start
    sigma_ratio = schedule.sigma_end / schedule.sigma_start
    denom = max(total - 1, 1)

    step = 0
    for _ in range(schedule.epochs):
        order = rng.permutation(n)
        for i in order:
            frac = step / denom
            alpha = schedule.alpha_start * alpha_ratio**frac
            sigma = schedule.sigma_start * sigma_ratio**frac
            v = x[i]
            d2 = ((weights - v) ** 2).sum(axis=1)
            winner = int(np.argmin(d2))
            gd = np.abs(grid - grid[winner]).max(axis=1)  # Chebyshev
            h = np.exp(-(gd**2) / (2.0 * sigma * sigma))
            weights += alpha * h[:, None] * (v - weights)
            step += 1

    som.trained = True
    return som


def bmu(som: SOM, vector: np.ndarray) -> int:
    """Best matching unit; ties break toward the lowest node id."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (som.prototypes.shape[1],):
        raise CorpusAgentError(
            f"vector dimension {v.shape} does not match SOM dimension {som.prototypes.shape[1]}"
        )
    d2 = ((som.prototypes - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def bmu_batch(som: SOM, vectors: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    d2 = ((x[:, None, :] - som.prototypes[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def assign_clusters(som: SOM, vectors: np.ndarray) -> dict[int, list[int]]:
    """Map every node id to the (possibly empty) list of its member vectors."""
    if not som.trained:
        raise UntrainedModelError("assign_clusters requires a trained SOM")
    labels = bmu_batch(som, vectors)
    clusters: dict[int, list[int]] = {node: [] for node in range(som.n_nodes)}
    for i, node in enumerate(labels):
        clusters[int(node)].append(i)
    return clusters


def node_sequence(som: SOM, vectors: np.ndarray) -> list[int]:
    """BMU labels in corpus temporal order."""
    return [int(n) for n in bmu_batch(som, vectors)]


def node_grid_values(som: SOM, dimension: int) -> np.ndarray:
    """Prototype values of one dimension as a rows x cols grid in [-1, 1]."""
    if not som.trained:
        raise UntrainedModelError("node_grid_values requires a trained SOM")
    if not 0 <= dimension < som.prototypes.shape[1]:
        raise CorpusAgentError(f"dimension {dimension} out of range")
    values = np.clip(som.prototypes[:, dimension], -1.0, 1.0)
    return values.reshape(som.rows, som.cols)


def quantization_error(som: SOM, vectors: np.ndarray) -> float:
    """Mean Euclidean distance of each vector to its BMU."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    d2 = ((x[:, None, :] - som.prototypes[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).mean())
