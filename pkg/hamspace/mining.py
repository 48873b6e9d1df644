"""
Weak supervision: approximate top-K neighbour lists and the training triplets and pairs
drawn from them.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .bitcode import CodeArray
from .errors import UsageError


logger = logging.getLogger(__name__)

MINING_METRICS = ('cosine', 'hamming')

_CHUNK = 512


@dataclass
class TripletSet:
    """
    Rows of ``(query, similar, dissimilar)`` document ids.
    """
    triplets: np.ndarray

    def __len__(self):
        return len(self.triplets)


@dataclass
class PairSet:
    """
    Rows of ``(query, similar)`` document ids.
    """
    pairs: np.ndarray

    def __len__(self):
        return len(self.pairs)


def _check_k(k: int, n: int) -> None:
    if not 1 <= k < n:
        raise UsageError(f"K must be within [1, {n - 1}] for {n} documents (given: {k})")


def _top_k(scores: np.ndarray, offset: int, k: int) -> np.ndarray:
    """
    Indices of the ``k`` smallest scores per row, ties to the lower index;
    row ``i`` of the chunk is document ``offset + i`` and excludes itself.
    """
    rows = np.arange(scores.shape[0])
    scores[rows, rows + offset] = np.inf
    return np.argsort(scores, axis=1, kind='stable')[:, :k]


def mine_neighbors(data: Union[sp.spmatrix, np.ndarray, CodeArray], k: int) -> np.ndarray:
    """
    ``(N, k)`` array with the ``k`` nearest other documents of every document:
    by cosine similarity for tf-idf rows, by Hamming distance for codes
    (e.g. those of a first-pass ``vae`` model). Ties go to the lower id.
    """
    if isinstance(data, CodeArray):
        return _mine_hamming(data, k)

    matrix = sp.csr_matrix(data, dtype=np.float64)
    n = matrix.shape[0]
    _check_k(k, n)

    norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
    inverse = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    normalized = sp.diags(inverse) @ matrix

    neighbors = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _CHUNK):
        block = normalized[start:start + _CHUNK]
        similarity = (block @ normalized.T).toarray()
        neighbors[start:start + block.shape[0]] = _top_k(-similarity, start, k)
    logger.debug("Mined %d cosine neighbours for %d documents", k, n)
    return neighbors


def _mine_hamming(codes: CodeArray, k: int) -> np.ndarray:
    n = len(codes)
    _check_k(k, n)
    bits = codes.to_bits().astype(np.int64)
    neighbors = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, _CHUNK):
        block = bits[start:start + _CHUNK]
        distances = (block @ (1 - bits).T + (1 - block) @ bits.T).astype(np.float64)
        neighbors[start:start + block.shape[0]] = _top_k(distances, start, k)
    logger.debug("Mined %d Hamming neighbours for %d documents", k, n)
    return neighbors


def _outside_pool(neighbors: np.ndarray, query: int, n: int) -> np.ndarray:
    excluded = np.append(neighbors[query], query)
    return np.setdiff1d(np.arange(n), excluded, assume_unique=True)


def make_triplets(neighbors: np.ndarray, per_query: int, rng: np.random.Generator) -> TripletSet:
    """
    For every query, ``per_query`` triplets with the similar document drawn uniformly
    from its top-K and the dissimilar one uniformly from the rest (itself excluded).
    """
    n, k = neighbors.shape
    if n < k + 2:
        raise UsageError(f"Need at least K + 2 = {k + 2} documents for triplets (given: {n})")
    triplets = np.empty((n * per_query, 3), dtype=np.int64)
    row = 0
    for query in range(n):
        pool = _outside_pool(neighbors, query, n)
        for _ in range(per_query):
            similar = neighbors[query, rng.integers(k)]
            dissimilar = pool[rng.integers(len(pool))]
            triplets[row] = (query, similar, dissimilar)
            row += 1
    return TripletSet(triplets)


def make_pairs(neighbors: np.ndarray, per_query: int, rng: np.random.Generator) -> PairSet:
    """
    For every query, ``per_query`` pairs with a similar document drawn uniformly from its top-K.
    """
    n, k = neighbors.shape
    queries = np.repeat(np.arange(n), per_query)
    similar = neighbors[queries, rng.integers(k, size=len(queries))]
    return PairSet(np.stack([queries, similar], axis=1).astype(np.int64))
