"""
Exact radius and k-nearest-neighbour search in Hamming space with multi-index hashing.

Every code is split into ``m`` disjoint substrings and each substring slot gets its own
hash table. By the pigeonhole principle, a code within distance ``r`` of the query
matches the query within ``r // m`` in at least one slot, so probing every table with
all substring perturbations up to that threshold yields a candidate set that contains
every answer. Candidates are then verified against the full codes.
"""

import logging
from dataclasses import dataclass
from math import comb
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .bitcode import (
    CodeArray, HashCode, flip_masks, pigeonhole_threshold, popcount_rows,
    split_substrings, substring_length,
    )
from .codefile import PathLike, read_codes, write_codes
from .errors import FormatError, UsageError


logger = logging.getLogger(__name__)

Codes = Union[CodeArray, Sequence[HashCode]]


@dataclass
class SearchResult:
    """
    Hits as ``(id, distance)`` pairs sorted by distance, then id.
    ``radius_used`` is the final search radius of a kNN search;
    ``truncated`` is set when fewer than the requested ``k`` codes exist.
    """
    hits: List[Tuple[int, int]]
    radius_used: Optional[int] = None
    truncated: bool = False

    @property
    def ids(self) -> List[int]:
        return [id_ for id_, _ in self.hits]

    @property
    def distances(self) -> List[int]:
        return [d for _, d in self.hits]

    def to_dict(self) -> Dict[str, Any]:
        return dict(hits=[[id_, d] for id_, d in self.hits],
                    radius_used=self.radius_used,
                    truncated=self.truncated)


@dataclass
class CandidateStats:
    lookups: int = 0
    raw_candidates: int = 0
    unique_candidates: int = 0
    verified: int = 0

    def __iadd__(self, other: 'CandidateStats') -> 'CandidateStats':
        self.lookups += other.lookups
        self.raw_candidates += other.raw_candidates
        self.unique_candidates += other.unique_candidates
        self.verified += other.verified
        return self

    def to_dict(self) -> Dict[str, int]:
        return dict(lookups=self.lookups,
                    raw_candidates=self.raw_candidates,
                    unique_candidates=self.unique_candidates,
                    verified=self.verified)


def _as_code_array(codes: Codes, width: Optional[int] = None) -> CodeArray:
    if isinstance(codes, CodeArray):
        if width is not None and width != codes.width:
            raise UsageError(f"Code widths differ: {codes.width} != {width}")
        return codes
    return CodeArray.from_codes(list(codes), width)


def rank_by_distance(ids: np.ndarray, distances: np.ndarray, limit: Optional[int] = None,
                     ) -> List[Tuple[int, int]]:
    if len(ids) == 0:
        return []
    if limit is not None and limit < len(ids):
        # Distance-major composite key, unique because ids are below the stride
        stride = int(ids.max()) + 1
        composite = distances.astype(np.int64) * stride + ids
        part = np.argpartition(composite, limit - 1)[:limit]
        ids, distances = ids[part], distances[part]
    order = np.lexsort((ids, distances))
    return [(int(ids[i]), int(distances[i])) for i in order]


class SubstringTable:
    """
    Maps substring values to the ascending ids of the codes holding them.
    Stored as sorted distinct keys with ``(start, count)`` ranges into one id array.
    """

    def __init__(self, keys: np.ndarray):
        order = np.argsort(keys, kind='stable')
        self.keys, self.starts, self.counts = np.unique(
            keys[order], return_index=True, return_counts=True)
        self.ids = order.astype(np.int64)

    def __len__(self):
        return len(self.ids)

    def bucket(self, key: int) -> np.ndarray:
        pos = int(np.searchsorted(self.keys, np.uint64(key)))
        if pos == len(self.keys) or int(self.keys[pos]) != key:
            return np.empty(0, dtype=np.int64)
        start = self.starts[pos]
        return self.ids[start:start + self.counts[pos]]

    def as_dict(self) -> Dict[int, List[int]]:
        return {int(key): self.ids[start:start + count].tolist()
                for key, start, count in zip(self.keys, self.starts, self.counts)}

    def _gather(self, positions: np.ndarray) -> np.ndarray:
        starts = self.starts[positions]
        counts = self.counts[positions]
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        offsets = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(total)
        return self.ids[offsets]

    def probe(self, probes: np.ndarray) -> np.ndarray:
        """
        Ids of all codes whose key is one of ``probes``.
        """
        if len(self.keys) == 0 or len(probes) == 0:
            return np.empty(0, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.keys, probes), len(self.keys) - 1)
        found = self.keys[pos] == probes
        return self._gather(pos[found])

    def scan(self, key: int, flips: int) -> np.ndarray:
        """
        Ids of all codes whose key is at exactly ``flips`` from ``key``,
        found by comparing against every distinct key.
        """
        diff = np.bitwise_xor(self.keys, np.uint64(key))
        dist = popcount_rows(diff.view(np.uint8).reshape(-1, 8))
        return self._gather(np.flatnonzero(dist == flips))


class MihIndex:
    """
    Multi-index hash tables over a fixed collection of codes.
    Immutable once built; searches only read it.
    """

    def __init__(self, codes: CodeArray, m: int):
        self.codes = codes
        self.width = codes.width
        self.m = m
        self.substring_length = substring_length(codes.width, m)
        if self.substring_length > 64:
            raise UsageError(f"Substrings of {self.substring_length} bits are too long; "
                             f"use m >= {codes.width // 64}")
        keys = codes.substring_keys(m)
        self.tables = [SubstringTable(keys[j]) for j in range(m)]
        logger.debug("Built MIH index: N=%d, B=%d, m=%d", len(codes), self.width, m)

    def __len__(self):
        return len(self.codes)

    def _check_query(self, query: HashCode) -> None:
        if query.width != self.width:
            raise UsageError(f"Code widths differ: {query.width} != {self.width}")

    def _probe(self,
               query_keys: List[int],
               flips: int,
               seen: np.ndarray,
               stats: CandidateStats,
               ) -> np.ndarray:
        """
        Probes every table with the query substrings perturbed by exactly ``flips`` bits
        and returns the ids not seen before (marking them as seen).
        """
        n_perturbations = comb(self.substring_length, flips)
        new = []
        for table, key in zip(self.tables, query_keys):
            if n_perturbations > len(table.keys):
                # Fewer buckets than perturbations: compare against the buckets instead
                stats.lookups += len(table.keys)
                ids = table.scan(key, flips)
            else:
                probes = np.bitwise_xor(flip_masks(self.substring_length, flips), np.uint64(key))
                stats.lookups += len(probes)
                ids = table.probe(probes)
            stats.raw_candidates += len(ids)
            ids = ids[~seen[ids]]
            seen[ids] = True
            new.append(ids)
        if not new:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(new)

    def radius_search(self, query: HashCode, radius: int) -> Tuple[SearchResult, CandidateStats]:
        self._check_query(query)
        if not 0 <= radius <= self.width:
            raise UsageError(f"Radius must be within [0, {self.width}] (given: {radius})")

        stats = CandidateStats()
        threshold = pigeonhole_threshold(radius, self.m)
        query_keys = [sub.value for sub in split_substrings(query, self.m)]
        seen = np.zeros(len(self), dtype=bool)

        candidates = np.concatenate(
            [np.empty(0, dtype=np.int64)] +
            [self._probe(query_keys, flips, seen, stats) for flips in range(threshold + 1)])
        distances = self.codes.distances_to(query, rows=candidates)
        stats.unique_candidates = stats.verified = len(candidates)

        within = distances <= radius
        return SearchResult(rank_by_distance(candidates[within], distances[within])), stats

    def knn_search(self, query: HashCode, k: int) -> Tuple[SearchResult, CandidateStats]:
        """
        Grows the radius from 0 until at least ``k`` verified codes lie within it.
        The per-substring threshold only changes every ``m`` radii; when it does,
        only the perturbations at the new flip count are probed.
        """
        self._check_query(query)
        if k < 1:
            raise UsageError(f"k must be positive (given: {k})")

        stats = CandidateStats()
        n = len(self)
        truncated = k > n
        wanted = min(k, n)
        if n == 0:
            return SearchResult([], radius_used=0, truncated=truncated), stats

        query_keys = [sub.value for sub in split_substrings(query, self.m)]
        seen = np.zeros(n, dtype=bool)
        candidates: List[np.ndarray] = []
        distances: List[np.ndarray] = []
        probed = -1

        for radius in range(self.width + 1):
            threshold = pigeonhole_threshold(radius, self.m)
            while probed < threshold:
                probed += 1
                new = self._probe(query_keys, probed, seen, stats)
                candidates.append(new)
                distances.append(self.codes.distances_to(query, rows=new))
                stats.unique_candidates += len(new)
                stats.verified += len(new)
            all_distances = np.concatenate(distances)
            if np.count_nonzero(all_distances <= radius) >= wanted:
                break

        all_candidates = np.concatenate(candidates)
        within = all_distances <= radius
        hits = rank_by_distance(all_candidates[within], all_distances[within], limit=wanted)
        return SearchResult(hits, radius_used=radius, truncated=truncated), stats

    def save(self, path: PathLike, metadata: Optional[Dict[str, Any]] = None,
             force: bool = False) -> Dict[str, Any]:
        """
        Stores the codes and ``m``; the tables are rebuilt on load.
        """
        meta = dict(metadata or {})
        meta['m'] = self.m
        return write_codes(path, self.codes, role='index', metadata=meta, force=force)

    @classmethod
    def load(cls, path: PathLike) -> Tuple['MihIndex', Dict[str, Any]]:
        codes, meta = read_codes(path)
        if 'm' not in meta:
            raise FormatError(f"Index sidecar for {path} has no substring count 'm'")
        return cls(codes, int(meta['m'])), meta


class HashTableIndex(MihIndex):
    """
    A single hash table keyed by the full code: radius search enumerates every
    perturbation of the whole query, so the number of lookups grows as
    ``sum(C(B, d) for d <= r)``. Limited to codes of at most 64 bits.
    """

    def __init__(self, codes: CodeArray):
        super().__init__(codes, 1)


def build(codes: Codes, m: int, width: Optional[int] = None) -> MihIndex:
    """
    Builds a multi-index over ``codes``; ``width`` is required only for an empty list.
    """
    code_array = _as_code_array(codes, width)
    substring_length(code_array.width, m)
    return MihIndex(code_array, m)


def radius_search(index: MihIndex, query: HashCode, radius: int,
                  ) -> Tuple[SearchResult, CandidateStats]:
    return index.radius_search(query, radius)


def knn_search(index: MihIndex, query: HashCode, k: int) -> Tuple[SearchResult, CandidateStats]:
    return index.knn_search(query, k)


def linear_scan_radius(codes: Codes, query: HashCode, radius: int) -> SearchResult:
    code_array = _as_code_array(codes, query.width)
    distances = code_array.distances_to(query)
    ids = np.flatnonzero(distances <= radius)
    return SearchResult(rank_by_distance(ids, distances[ids]))


def linear_scan_knn(codes: Codes, query: HashCode, k: int) -> SearchResult:
    if k < 1:
        raise UsageError(f"k must be positive (given: {k})")
    code_array = _as_code_array(codes, query.width)
    n = len(code_array)
    if n == 0:
        return SearchResult([], radius_used=0, truncated=True)
    distances = code_array.distances_to(query)
    hits = rank_by_distance(np.arange(n), distances, limit=min(k, n))
    return SearchResult(hits, radius_used=hits[-1][1], truncated=k > n)
