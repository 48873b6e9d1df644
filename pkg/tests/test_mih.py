import numpy as np
import pytest

from hamspace import mih
from hamspace.bitcode import CodeArray, HashCode, perturbation_count, split_substrings
from hamspace.codefile import write_codes
from hamspace.errors import FormatError, UsageError
from hamspace.mih import (
    HashTableIndex, MihIndex, SubstringTable, linear_scan_knn, linear_scan_radius,
    rank_by_distance,
)
from hamspace.synthetic import random_codes


def test_build_tables():
    codes = [HashCode.from_string(s) for s in ('10110100', '10111111', '00000100')]
    index = mih.build(codes, 2)
    assert len(index.tables) == 2
    assert all(len(table) == 3 for table in index.tables)
    # Codes 0 and 1 share their first substring
    assert index.tables[0].as_dict() == {0b1101: [0, 1], 0: [2]}
    assert index.tables[1].as_dict() == {0b0010: [0, 2], 0b1111: [1]}


def test_tables_match_brute_force(random_codes_32):
    codes = random_codes_32[:300]
    index = mih.build(codes, 4)
    for j, table in enumerate(index.tables):
        expected = {}
        for id_, code in enumerate(codes):
            expected.setdefault(split_substrings(code, 4)[j].value, []).append(id_)
        assert table.as_dict() == expected


def test_empty_index():
    index = mih.build([], 2, width=32)
    query = HashCode.zeros(32)
    result, stats = index.radius_search(query, 32)
    assert result.hits == []
    result, _ = index.knn_search(query, 3)
    assert result.hits == [] and result.truncated
    assert linear_scan_radius(CodeArray.empty(32), query, 5).hits == []


def test_duplicates_share_a_bucket():
    code = HashCode.from_string('1100' * 4)
    index = mih.build([code, HashCode.zeros(16), code], 4)
    assert index.tables[0].bucket(split_substrings(code, 4)[0].value).tolist() == [0, 2]
    result, _ = index.radius_search(code, 0)
    assert result.hits == [(0, 0), (2, 0)]


def test_build_errors():
    with pytest.raises(UsageError):
        mih.build([HashCode.zeros(32)], 3)
    with pytest.raises(UsageError):
        mih.build([HashCode.zeros(32), HashCode.zeros(16)], 2)
    with pytest.raises(UsageError):
        mih.build([HashCode.zeros(128)], 1)
    with pytest.raises(UsageError):
        mih.build([], 2)


def test_search_errors(random_codes_32):
    index = mih.build(random_codes_32, 4)
    with pytest.raises(UsageError):
        index.radius_search(HashCode.zeros(64), 1)
    with pytest.raises(UsageError):
        index.radius_search(HashCode.zeros(32), 33)
    with pytest.raises(UsageError):
        index.knn_search(HashCode.zeros(32), 0)
    with pytest.raises(UsageError):
        linear_scan_knn(random_codes_32, HashCode.zeros(32), 0)


def test_full_radius_returns_everything(random_codes_32):
    codes = random_codes_32[:200]
    index = mih.build(codes, 4)
    result, _ = index.radius_search(HashCode.zeros(32), 32)
    assert sorted(result.ids) == list(range(200))
    assert result.hits == linear_scan_radius(codes, HashCode.zeros(32), 32).hits


def test_exact_match(random_codes_64):
    index = mih.build(random_codes_64, 4)
    query = random_codes_64[17]
    result, _ = index.radius_search(query, 0)
    assert result.hits == [(17, 0)]
    result, _ = index.knn_search(query, 1)
    assert result.hits == [(17, 0)]
    assert result.radius_used == 0


@pytest.mark.parametrize('m', [1, 2, 4, 8])
def test_radius_search_matches_linear_scan(m, random_codes_32, rng):
    codes = random_codes_32
    index = mih.build(codes, m)
    for _ in range(10):
        query = HashCode(int(rng.integers(2**32)), 32)
        previous = set()
        for r in range(0, 9):
            result, stats = index.radius_search(query, r)
            assert result.hits == linear_scan_radius(codes, query, r).hits
            assert previous <= set(result.hits)
            previous = set(result.hits)
            assert stats.unique_candidates >= len(result.hits)
            assert stats.verified == stats.unique_candidates <= stats.raw_candidates


@pytest.mark.parametrize('m', [2, 4])
def test_knn_search_matches_linear_scan(m, random_codes_64, rng):
    codes = random_codes_64
    index = mih.build(codes, m)
    for _ in range(10):
        query = HashCode(int(rng.integers(2**63)), 64)
        previous = None
        for k in (1, 2, 10, 11, 50):
            result, stats = index.knn_search(query, k)
            expected = linear_scan_knn(codes, query, k)
            assert result.hits == expected.hits
            assert result.distances[-1] <= result.radius_used
            if previous is not None:
                assert result.hits[:len(previous)] == previous
            previous = result.hits


def test_knn_all_and_more(random_codes_32):
    codes = random_codes_32[:100]
    index = mih.build(codes, 4)
    query = HashCode(12345, 32)
    result, _ = index.knn_search(query, 100)
    assert result.hits == linear_scan_knn(codes, query, 100).hits
    assert not result.truncated

    result, _ = index.knn_search(query, 150)
    assert len(result.hits) == 100
    assert result.truncated


def test_single_code_linear_scan():
    code = HashCode.from_string('11110000')
    assert linear_scan_radius([code], HashCode.zeros(8), 4).hits == [(0, 4)]
    assert linear_scan_radius([code], HashCode.zeros(8), 3).hits == []
    assert linear_scan_knn([code], HashCode.zeros(8), 1).hits == [(0, 4)]


def test_zero_radius_lookups(random_codes_64):
    index = mih.build(random_codes_64, 4)
    _, stats = index.radius_search(HashCode.zeros(64), 0)
    assert stats.lookups == 4


def test_hash_table_lookups_grow_with_radius(random_codes_64):
    index = HashTableIndex(random_codes_64)
    assert index.m == 1
    _, stats = index.radius_search(HashCode.zeros(64), 1)
    assert stats.lookups == perturbation_count(64, 1) == 65
    result, _ = index.radius_search(random_codes_64[5], 3)
    assert result.hits == linear_scan_radius(random_codes_64, random_codes_64[5], 3).hits


def test_substring_table_scan_equals_probe():
    keys = np.array([0, 1, 3, 7, 3, 8], dtype=np.uint64)
    table = SubstringTable(keys)
    probes = np.array([1, 2, 4, 8], dtype=np.uint64)  # one flip away from 0
    assert sorted(table.probe(probes).tolist()) == sorted(table.scan(0, 1).tolist()) == [1, 5]


def test_rank_by_distance_tie_break():
    ids = np.array([5, 3, 9, 1])
    distances = np.array([2, 1, 1, 2])
    assert rank_by_distance(ids, distances) == [(3, 1), (9, 1), (1, 2), (5, 2)]
    assert rank_by_distance(ids, distances, limit=3) == [(3, 1), (9, 1), (1, 2)]


def test_save_load(tmp_path, random_codes_32):
    index = mih.build(random_codes_32, 4)
    path = tmp_path / 'index.bin'
    index.save(path, metadata=dict(seed=9))
    loaded, meta = MihIndex.load(path)
    assert loaded.m == 4 and meta['seed'] == 9 and meta['role'] == 'index'
    query = random_codes_32[0]
    assert loaded.knn_search(query, 10)[0].hits == index.knn_search(query, 10)[0].hits


def test_load_without_m(tmp_path, random_codes_32):
    path = tmp_path / 'codes.bin'
    write_codes(path, random_codes_32, role='documents')
    with pytest.raises(FormatError):
        MihIndex.load(path)


@pytest.mark.slow
@pytest.mark.parametrize('width', [32, 64])
@pytest.mark.parametrize('m', [2, 4, 8])
def test_exactness_at_scale(width, m):
    codes = random_codes(10000, width, seed=width + m)
    queries = random_codes(200, width, seed=1000 + width + m)
    index = mih.build(codes, m)
    for query in queries:
        distances = codes.distances_to(query)
        for r in range(11):
            ids = np.flatnonzero(distances <= r)
            assert index.radius_search(query, r)[0].hits == rank_by_distance(ids, distances[ids])
        for k in (1, 10, 100):
            expected = rank_by_distance(np.arange(len(codes)), distances, limit=k)
            assert index.knn_search(query, k)[0].hits == expected
