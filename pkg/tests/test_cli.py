import json

import pytest

from hamspace.cli import main
from hamspace.codefile import read_codes
from hamspace.corpus import write_documents, write_ratings
from hamspace.synthetic import block_ratings, topic_corpus


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture
def workspace(tmp_path):
    docs = topic_corpus(topics=4, docs_per_topic=20, terms_per_topic=10, tokens_per_doc=12,
                        seed=3)
    write_documents(tmp_path / 'docs.jsonl', docs)
    (tmp_path / 'config.json').write_text(json.dumps({
        'train.hidden': 16, 'train.batch_size': 16, 'train.neighbors': 5,
        'cf.hidden': 8, 'cf.batch_size': 32,
    }))
    return tmp_path


def _build_index(capsys, root, name='run'):
    corpus, ckpt = root / f'{name}-corpus', root / f'{name}.ckpt'
    codes, index = root / f'{name}-codes.bin', root / f'{name}-index.bin'
    config = root / 'config.json'
    assert _run(capsys, 'corpus', 'build', '--input', root / 'docs.jsonl', '--out', corpus)[0] == 0
    assert _run(capsys, 'train', '--corpus', corpus, '--out', ckpt, '--bits', 8, '--epochs', 1,
                '--config', config, '--seed', 11)[0] == 0
    assert _run(capsys, 'encode', '--ckpt', ckpt, '--corpus', corpus, '--out', codes)[0] == 0
    assert _run(capsys, 'index', 'build', '--codes', codes, '--m', 2, '--out', index)[0] == 0
    return corpus, ckpt, codes, index


def test_pipeline(workspace, capsys):
    corpus, ckpt, codes, index = _build_index(capsys, workspace)

    loaded, meta = read_codes(codes)
    assert (len(loaded), loaded.width) == (80, 8)
    assert meta['role'] == 'documents' and meta['ids'][0] == 'doc00000'
    assert meta['config']['objective'] == 'vae'
    assert json.loads((workspace / 'run.ckpt.json').read_text())['seed'] == 11

    code, result = _run(capsys, 'search', '--index', index, '--query-id', 3, '--knn', 5,
                        '--oracle')
    assert code == 0
    assert result['oracle_diff'] == []
    assert len(result['result']['hits']) == 5
    assert [3, 0] in result['result']['hits']

    code, result = _run(capsys, 'search', '--index', index, '--query-id', 3, '--radius', 2,
                        '--oracle')
    assert code == 0 and result['oracle_diff'] == []

    report = workspace / 'bench.json'
    code, summary = _run(capsys, 'bench', '--index', index, '--queries', 10, '--knn', 3,
                         '--reps', 1, '--out', report, '--csv', workspace / 'bench.csv')
    assert code == 0 and summary['queries'] == 10
    assert json.loads(report.read_text())['kind'] == 'efficiency'

    code, summary = _run(capsys, 'eval', '--index', index, '--corpus', corpus, '--k', 5)
    assert code == 0
    assert summary['queries'] == 8
    assert 0 <= summary['mean'] <= 1


def test_runs_are_reproducible(workspace, capsys):
    first = _build_index(capsys, workspace, 'first')
    second = _build_index(capsys, workspace, 'second')
    for a, b in zip(first[1:], second[1:]):
        assert a.read_bytes() == b.read_bytes()
    for name in ('vocab.jsonl', 'corpus.json'):
        assert (first[0] / name).read_bytes() == (second[0] / name).read_bytes()


def test_exit_codes(workspace, capsys):
    corpus, ckpt, codes, index = _build_index(capsys, workspace)

    # Refuses to overwrite without --force
    assert _run(capsys, 'index', 'build', '--codes', codes, '--m', 2, '--out', index)[0] == 4
    assert _run(capsys, 'index', 'build', '--codes', codes, '--m', 2, '--out', index,
                '--force')[0] == 0

    assert _run(capsys, 'search', '--index', workspace / 'missing.bin', '--query-id', 0,
                '--knn', 1)[0] == 3
    assert _run(capsys, 'search', '--index', index, '--query-id', 80, '--knn', 1)[0] == 2
    assert _run(capsys, 'index', 'build', '--codes', codes, '--m', 3, '--out',
                workspace / 'bad.bin')[0] == 2

    (workspace / 'bad.json').write_text('{"train.layers": 3}')
    assert _run(capsys, 'train', '--corpus', corpus, '--out', workspace / 'other.ckpt',
                '--config', workspace / 'bad.json')[0] == 2

    with pytest.raises(SystemExit) as e:
        main(['search', '--index', str(index), '--query-id', '0'])
    assert e.value.code == 2


def test_damaged_code_file(workspace, capsys):
    _, _, codes, _ = _build_index(capsys, workspace)
    data = bytearray(codes.read_bytes())
    data[-1] ^= 0xFF
    codes.write_bytes(bytes(data))
    assert _run(capsys, 'index', 'build', '--codes', codes, '--m', 2, '--out',
                workspace / 'again.bin')[0] == 3


def test_collaborative_filtering(workspace, capsys):
    data = block_ratings(users=20, items=15, blocks=3, ratings_per_user=6, terms_per_block=8,
                         tokens_per_item=10, seed=4)
    write_documents(workspace / 'items.jsonl', data.items)
    write_ratings(workspace / 'ratings.tsv', data.ratings)
    common = ('--ratings', workspace / 'ratings.tsv', '--items', workspace / 'items.jsonl',
              '--bits', 8, '--epochs', 2, '--config', workspace / 'config.json')

    out = workspace / 'cf'
    code, summary = _run(capsys, 'cf', 'train', *common, '--measure', 'phd', '--out', out)
    assert code == 0
    assert summary == dict(users=20, items=15, ratings=120,
                           observed_mse=summary['observed_mse'])
    users, meta = read_codes(out / 'users.bin')
    assert (len(users), users.width, meta['role'], meta['measure']) == (20, 8, 'users', 'phd')
    assert len(read_codes(out / 'items.bin')[0]) == 15
    assert json.loads((out / 'cf.json').read_text())['normalization'] == dict(low=1.0, high=5.0)

    report = workspace / 'cf-eval.json'
    code, summary = _run(capsys, 'cf', 'eval', *common, '--coldstart', '--k', 3, '--out', report)
    assert code == 0
    payload = json.loads(report.read_text())
    assert payload['metric'] == 'ndcg' and payload['held_out_items'] == 3
    assert 0 <= payload['mean'] <= 1 and 0 <= payload['baseline_mean'] <= 1

    code, _ = _run(capsys, 'cf', 'eval', *common, '--k', 3)
    assert code == 0


def test_paths_from_config(workspace, capsys):
    corpus = workspace / 'corpus'
    assert _run(capsys, 'corpus', 'build', '--input', workspace / 'docs.jsonl',
                '--out', corpus)[0] == 0
    data = block_ratings(users=20, items=15, blocks=3, ratings_per_user=6, terms_per_block=8,
                         tokens_per_item=10, seed=4)
    write_documents(workspace / 'items.jsonl', data.items)
    write_ratings(workspace / 'ratings.tsv', data.ratings)
    config = workspace / 'paths.json'
    config.write_text(json.dumps({
        'train.hidden': 16, 'train.batch_size': 16, 'train.neighbors': 5, 'train.epochs': 1,
        'train.bits': 8, 'cf.hidden': 8, 'cf.batch_size': 32, 'cf.bits': 8, 'cf.epochs': 1,
        'paths.corpus': str(corpus), 'paths.ratings': str(workspace / 'ratings.tsv'),
        'paths.items': str(workspace / 'items.jsonl'), 'paths.out': str(workspace / 'cf'),
    }))

    ckpt, codes = workspace / 'vae.ckpt', workspace / 'codes.bin'
    assert _run(capsys, 'train', '--objective', 'vae', '--config', config, '--out', ckpt)[0] == 0
    code, summary = _run(capsys, 'encode', '--ckpt', ckpt, '--input', workspace / 'docs.jsonl',
                         '--out', codes, '--config', config)
    assert code == 0 and summary['codes'] == 80

    code, _ = _run(capsys, 'cf', 'train', '--measure', 'phd', '--config', config)
    assert code == 0
    assert len(read_codes(workspace / 'cf' / 'users.bin')[0]) == 20

    code, summary = _run(capsys, 'cf', 'eval', '--coldstart', '--fraction', 0.2, '--k', 3,
                         '--config', config)
    assert code == 0 and 0 <= summary['mean'] <= 1

    # Neither a flag nor a configured path
    assert _run(capsys, 'cf', 'eval', '--coldstart', '--k', 3)[0] == 2
    assert _run(capsys, 'train', '--out', workspace / 'other.ckpt',
                '--config', workspace / 'config.json')[0] == 2


def test_cf_log_is_rewritten(workspace, capsys):
    data = block_ratings(users=20, items=15, blocks=3, ratings_per_user=6, terms_per_block=8,
                         tokens_per_item=10, seed=4)
    write_documents(workspace / 'items.jsonl', data.items)
    write_ratings(workspace / 'ratings.tsv', data.ratings)
    log = workspace / 'cf.log'
    argv = ('cf', 'train', '--ratings', workspace / 'ratings.tsv',
            '--items', workspace / 'items.jsonl',
            '--bits', 8, '--epochs', 2, '--config', workspace / 'config.json',
            '--out', workspace / 'cf', '--log', log)

    assert _run(capsys, *argv, '--force')[0] == 0
    first = log.read_bytes()
    assert len(first.splitlines()) == 2
    assert _run(capsys, *argv, '--force')[0] == 0
    assert log.read_bytes() == first

    # An existing log is an output like any other
    (workspace / 'cf' / 'users.bin').unlink()
    (workspace / 'cf' / 'items.bin').unlink()
    (workspace / 'cf' / 'cf.json').unlink()
    assert _run(capsys, *argv)[0] == 4
    assert log.read_bytes() == first
