"""Comparison-query selection from a candidate pool of bundles.

Every selector takes the ensemble's per-member utilities on the pool (rows =
members, columns = pool bundles, in Bradley-Terry units), the pool itself,
the query history and a numpy Generator, and returns two pool indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .domain import CourseCatalog, bundle_matrix, sample_bundles

ACQUISITIONS = ("doublets", "infomax", "boltzmann", "random")


class AcquisitionError(RuntimeError):
    """No admissible query could be formed from the pool."""


def _key(row) -> bytes:
    return np.asarray(row, dtype=np.int8).tobytes()


@dataclass
class QueryHistory:
    """Unordered pairs already asked."""

    pairs: set = field(default_factory=set)

    def add(self, a, b) -> None:
        self.pairs.add(frozenset((_key(a), _key(b))))

    def __contains__(self, pair) -> bool:
        a, b = pair
        return frozenset((_key(a), _key(b))) in self.pairs

    def __len__(self):
        return len(self.pairs)


@dataclass
class CandidatePool:
    X: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        keys = {_key(r) for r in self.X}
        if len(keys) != len(self.X):
            raise ValueError("candidate pool contains duplicate bundles")

    @classmethod
    def sample(cls, catalog: CourseCatalog, size: int, rng) -> "CandidatePool":
        return cls(sample_bundles(catalog, size, rng))

    @classmethod
    def full(cls, catalog: CourseCatalog) -> "CandidatePool":
        """Every valid bundle; for small catalogs and oracle checks."""
        return cls(bundle_matrix(catalog))

    def __len__(self):
        return len(self.X)


def _admissible(pool: CandidatePool, history: QueryHistory, i: int, j: int) -> bool:
    return i != j and (pool.X[i], pool.X[j]) not in history


def random_pair(pool: CandidatePool, history: QueryHistory, rng) -> tuple[int, int]:
    """Uniformly random distinct pair that has not been asked yet."""
    n = len(pool)
    if n < 2:
        raise AcquisitionError("pool needs at least two bundles")
    for _ in range(64):
        i, j = rng.choice(n, size=2, replace=False)
        if _admissible(pool, history, i, j):
            return int(i), int(j)
    # dense history: enumerate what is left
    left = [(i, j) for i, j in combinations(range(n), 2) if _admissible(pool, history, i, j)]
    if not left:
        raise AcquisitionError("every pair in the pool has already been asked")
    i, j = left[rng.integers(len(left))]
    if rng.random() < 0.5:
        i, j = j, i
    return i, j


def double_thompson_sample(utilities: np.ndarray, pool: CandidatePool, history: QueryHistory,
                           rng, max_redraws: int = 10) -> tuple[int, int]:
    """Each side of the query is the argmax of a uniformly drawn ensemble member.

    If both draws pick the same bundle the second member is redrawn up to
    ``max_redraws`` times, after which its runner-up is used. Falls back to
    :func:`random_pair` when the result was already asked.
    """
    M, n = utilities.shape
    if n < 2:
        raise AcquisitionError("pool needs at least two bundles")
    j1 = rng.integers(M)
    a = int(np.argmax(utilities[j1]))
    b = a
    for _ in range(max_redraws + 1):
        j2 = rng.integers(M)
        b = int(np.argmax(utilities[j2]))
        if b != a:
            break
    if b == a:
        # first index among the maxima after removing a
        row = utilities[j2].copy()
        row[a] = -np.inf
        b = int(np.argmax(row))
    if _admissible(pool, history, a, b):
        return a, b
    return random_pair(pool, history, rng)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def infomax(utilities: np.ndarray, pool: CandidatePool, history: QueryHistory, rng,
            n_pairs: int = 2000) -> tuple[int, int]:
    """Pair maximising the ensemble variance of the Bradley-Terry win probability."""
    n = len(pool)
    if n < 2:
        raise AcquisitionError("pool needs at least two bundles")
    total = n * (n - 1) // 2
    if total <= n_pairs:
        I, J = np.array(list(combinations(range(n), 2))).T
    else:
        I = rng.integers(n, size=n_pairs)
        J = rng.integers(n - 1, size=n_pairs)
        J = J + (J >= I)
    ok = np.array([_admissible(pool, history, i, j) for i, j in zip(I, J)], dtype=bool)
    if not ok.any():
        return random_pair(pool, history, rng)
    I, J = I[ok], J[ok]
    probs = _sigmoid(utilities[:, I] - utilities[:, J])
    k = int(np.argmax(probs.var(axis=0)))
    return int(I[k]), int(J[k])


def boltzmann(utilities: np.ndarray, pool: CandidatePool, history: QueryHistory, rng,
              temperature: float | None = None, max_tries: int = 10) -> tuple[int, int]:
    """Two distinct bundles drawn without replacement, ``P ∝ exp(mean / tau)``.

    ``tau`` defaults to the standard deviation of the mean utility over the
    pool.
    """
    n = len(pool)
    if n < 2:
        raise AcquisitionError("pool needs at least two bundles")
    mean = utilities.mean(axis=0)
    tau = float(np.std(mean)) if temperature is None else float(temperature)
    if tau <= 0 or not np.isfinite(tau):
        w = np.ones(n)
    else:
        z = (mean - mean.max()) / tau
        w = np.exp(z)
        if w.sum() <= 0 or not np.isfinite(w.sum()):
            w = (mean == mean.max()).astype(float)
    for _ in range(max_tries):
        p = w / w.sum()
        # sequential draw without replacement, robust to near-degenerate weights
        i = int(rng.choice(n, p=p))
        w2 = w.copy()
        w2[i] = 0.0
        if w2.sum() <= 0:
            w2 = np.ones(n)
            w2[i] = 0.0
        j = int(rng.choice(n, p=w2 / w2.sum()))
        if _admissible(pool, history, i, j):
            return i, j
    return random_pair(pool, history, rng)


SELECTORS: dict[str, Callable] = {
    "doublets": double_thompson_sample,
    "infomax": infomax,
    "boltzmann": boltzmann,
}


def select_query(kind: str, utility_fn: Callable[[np.ndarray], np.ndarray],
                 sample_pool: Callable[[np.random.Generator], CandidatePool],
                 history: QueryHistory, rng, max_retries: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Draw a pool, apply the named selector, and return the two bundles.

    ``utility_fn`` maps a bundle matrix to per-member utilities. The pool is
    redrawn when a selector cannot avoid the history.
    """
    if kind not in ACQUISITIONS:
        raise ValueError(f"unknown acquisition {kind!r}; choose from {ACQUISITIONS}")
    last_err = None
    for _ in range(max_retries + 1):
        pool = sample_pool(rng)
        try:
            if kind == "random":
                i, j = random_pair(pool, history, rng)
            else:
                i, j = SELECTORS[kind](utility_fn(pool.X), pool, history, rng)
        except AcquisitionError as err:
            last_err = err
            continue
        return pool.X[i].copy(), pool.X[j].copy()
    raise AcquisitionError(f"no admissible query after {max_retries} pool redraws: {last_err}")
