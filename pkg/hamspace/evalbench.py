"""
Effectiveness metrics and efficiency instrumentation, emitted as JSON (or CSV) reports.
"""

import csv
import logging
import math
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Set

import numpy as np
import torch

from .bitcode import CodeArray, HashCode
from .cfhash import RatingTriple, recommend
from .codefile import PathLike, check_writable, write_json
from .errors import ContractViolation, UsageError
from .mih import CandidateStats, MihIndex, SearchResult, linear_scan_knn, linear_scan_radius


logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

# Fields that vary between otherwise identical runs
TIMING_FIELDS = ('mih_ns_per_query', 'linear_ns_per_query', 'speedup', 'hardware')


def _check_k(k: int) -> None:
    if k <= 0:
        raise UsageError(f"k must be positive (given: {k})")


def precision_at_k(ranked: Sequence[int], relevant: Set[int], k: int) -> float:
    """
    ``|top-k ∩ relevant| / k``. A ranking shorter than ``k`` counts the missing ranks as misses.
    """
    _check_k(k)
    return sum(1 for id_ in ranked[:k] if id_ in relevant) / k


def dcg_at_k(ranked: Sequence[int], gains: Mapping[int, float], k: int) -> float:
    return sum(gains.get(id_, 0.0) / math.log2(rank + 2)
               for rank, id_ in enumerate(ranked[:k]))


def ndcg_at_k(ranked: Sequence[int], gains: Mapping[int, float], k: int) -> float:
    """
    DCG with ``gain / log2(rank + 1)`` (ranks from 1), normalized by the DCG of the
    ideal ordering of ``gains``. Zero when no gain is positive.
    """
    _check_k(k)
    ideal_order = sorted(gains, key=lambda id_: (-gains[id_], id_))
    ideal = dcg_at_k(ideal_order, gains, k)
    if ideal <= 0:
        return 0.0
    return dcg_at_k(ranked, gains, k) / ideal


def hardware_metadata() -> Dict[str, str]:
    return dict(python=platform.python_version(),
                platform=platform.platform(),
                processor=platform.processor(),
                numpy=np.__version__,
                torch=torch.__version__)


@dataclass
class MetricReport:
    metric: str
    k: int
    per_query: List[float]
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_query)) if self.per_query else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return dict(schema_version=REPORT_SCHEMA_VERSION,
                    kind='metric',
                    metric=self.metric,
                    k=self.k,
                    mean=self.mean,
                    queries=len(self.per_query),
                    per_query=self.per_query,
                    config=self.config,
                    seed=self.seed)

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [dict(metric=self.metric, k=self.k, query=i, value=value)
                for i, value in enumerate(self.per_query)]


@dataclass
class EfficiencyReport:
    n: int
    width: int
    m: int
    k: Optional[int]
    radius: Optional[int]
    queries: int
    repetitions: int
    mean_unique_candidates: float
    median_unique_candidates: float
    mean_lookups: float
    total: CandidateStats
    mih_ns_per_query: float
    linear_ns_per_query: float
    hardware: Dict[str, str] = field(default_factory=hardware_metadata)

    @property
    def speedup(self) -> float:
        if self.mih_ns_per_query <= 0:
            return math.inf
        return self.linear_ns_per_query / self.mih_ns_per_query

    def to_dict(self, timings: bool = True) -> Dict[str, Any]:
        report = asdict(self)
        report['total'] = self.total.to_dict()
        report.update(schema_version=REPORT_SCHEMA_VERSION, kind='efficiency',
                      speedup=self.speedup)
        if not timings:
            for name in TIMING_FIELDS:
                report.pop(name)
        return report

    def csv_rows(self) -> List[Dict[str, Any]]:
        row = {k: v for k, v in self.to_dict().items() if not isinstance(v, dict)}
        row.update({f"total_{k}": v for k, v in self.total.to_dict().items()})
        return [row]


def _median_ns(run: Callable[[], Any], repetitions: int, warmup: int) -> float:
    for _ in range(warmup):
        run()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        run()
        samples.append(time.perf_counter_ns() - start)
    return float(statistics.median(samples))


def run_benchmark(index: MihIndex,
                  queries: Sequence[HashCode],
                  k: Optional[int] = None,
                  radius: Optional[int] = None,
                  repetitions: int = 5,
                  warmup: int = 1,
                  ) -> EfficiencyReport:
    """
    Verifies every query against the linear-scan oracle, then times both.
    Exactly one of ``k`` and ``radius`` must be given.
    """
    if (k is None) == (radius is None):
        raise UsageError("Exactly one of k and radius must be given")
    if repetitions < 1:
        raise UsageError(f"repetitions must be positive (given: {repetitions})")
    if not queries:
        raise UsageError("At least one query is needed")

    def mih_search(query: HashCode):
        if k is not None:
            return index.knn_search(query, k)
        return index.radius_search(query, radius)

    def oracle(query: HashCode) -> SearchResult:
        if k is not None:
            return linear_scan_knn(index.codes, query, k)
        return linear_scan_radius(index.codes, query, radius)

    total = CandidateStats()
    unique = []
    lookups = []
    for position, query in enumerate(queries):
        result, stats = mih_search(query)
        expected = oracle(query)
        if result.hits != expected.hits:
            raise ContractViolation(f"Query {position}: index returned {result.hits[:5]}..., "
                                    f"linear scan {expected.hits[:5]}...")
        total += stats
        unique.append(stats.unique_candidates)
        lookups.append(stats.lookups)

    # Timings are taken single-threaded so runs stay comparable
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        mih_ns = _median_ns(lambda: [mih_search(q) for q in queries], repetitions, warmup)
        linear_ns = _median_ns(lambda: [oracle(q) for q in queries], repetitions, warmup)
    finally:
        torch.set_num_threads(threads)

    report = EfficiencyReport(n=len(index), width=index.width, m=index.m, k=k, radius=radius,
                              queries=len(queries), repetitions=repetitions,
                              mean_unique_candidates=float(np.mean(unique)),
                              median_unique_candidates=float(np.median(unique)),
                              mean_lookups=float(np.mean(lookups)),
                              total=total,
                              mih_ns_per_query=mih_ns / len(queries),
                              linear_ns_per_query=linear_ns / len(queries))
    logger.info("Benchmark N=%d B=%d m=%d: %.0f candidates/query, speedup %.2f",
                report.n, report.width, report.m, report.mean_unique_candidates, report.speedup)
    return report


def evaluate_retrieval(index: MihIndex,
                       labels: Sequence[Optional[str]],
                       k: int,
                       query_ids: Optional[Sequence[int]] = None,
                       ) -> MetricReport:
    """
    Leave-one-out precision@k: every query is a stored code, its own entry is excluded
    from the ranking, and relevant documents share its label. Unlabelled queries are skipped.
    """
    _check_k(k)
    if len(labels) != len(index):
        raise UsageError(f"Expected {len(index)} labels, got {len(labels)}")
    by_label: Dict[str, Set[int]] = {}
    for id_, label in enumerate(labels):
        if label is not None:
            by_label.setdefault(label, set()).add(id_)

    ids = range(len(index)) if query_ids is None else query_ids
    per_query = []
    for q in ids:
        label = labels[q]
        if label is None:
            continue
        result, _ = index.knn_search(index.codes[q], k + 1)
        ranked = [id_ for id_ in result.ids if id_ != q][:k]
        per_query.append(precision_at_k(ranked, by_label[label] - {q}, k))
    return MetricReport('precision', k, per_query)


def evaluate_recommendations(user_codes: CodeArray,
                             item_codes: CodeArray,
                             test: Sequence[RatingTriple],
                             k: int,
                             measure: str,
                             candidates: Optional[Sequence[int]] = None,
                             ) -> MetricReport:
    """
    NDCG@k per user over their held-out ratings (the gains). Items are ranked among
    ``candidates`` (all items when not given), e.g. the cold-start items only.
    """
    _check_k(k)
    gains: Dict[int, Dict[int, float]] = {}
    for triple in test:
        gains.setdefault(triple.user, {})[triple.item] = triple.rating

    per_user = []
    for user in sorted(gains):
        ranked = recommend(user_codes[user], item_codes, k, measure, candidates=candidates)
        per_user.append(ndcg_at_k(ranked, gains[user], k))
    return MetricReport('ndcg', k, per_user)


def write_report(path: PathLike, report: Any, force: bool = False) -> Dict[str, Any]:
    payload = report.to_dict()
    write_json(path, payload, force=force)
    return payload


def write_csv(path: PathLike, rows: List[Dict[str, Any]], force: bool = False) -> None:
    check_writable(path, force)
    if not rows:
        raise UsageError("Nothing to write")
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
