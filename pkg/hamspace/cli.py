"""
The ``hamspace`` command-line tool.

Exit codes: 0 success, 2 usage error, 3 malformed or missing file, 4 contract violation
(oracle mismatch, overwrite without ``--force``), 5 numeric failure during training.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import mih
from .__about__ import __version__
from .cfhash import (
    CFModel, coldstart_split, normalize_ratings, observed_mse, rating_split, train_cf,
    )
from .codefile import SCHEMA_VERSION, check_writable, read_codes, read_json, write_codes, write_json
from .config import RunConfig
from .corpus import (
    Vocabulary, build_vocabulary, read_documents, read_ratings, split, tfidf_matrix,
    )
from .errors import ContractViolation, FormatError, HamspaceError, UsageError
from .evalbench import evaluate_recommendations, evaluate_retrieval, run_benchmark, write_csv
from .hashing import derive_seed, fingerprint
from .hashtrain import encode_corpus, load_checkpoint, save_checkpoint, train
from .synthetic import random_codes


logger = logging.getLogger(__name__)

VOCAB_FILE = 'vocab.jsonl'
CORPUS_FILE = 'corpus.json'
TFIDF_FILE = 'tfidf.npz'


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger('hamspace').setLevel(level)


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


#
# Corpus directories
#

def matrix_fingerprint(matrix: sp.csr_matrix) -> str:
    return fingerprint(b"TFIDF",
                       np.asarray(matrix.shape, dtype='<i8').tobytes(),
                       matrix.indptr.astype('<i8').tobytes(),
                       matrix.indices.astype('<i8').tobytes(),
                       matrix.data.astype('<f8').tobytes())


def load_corpus_dir(directory: str) -> Tuple[Vocabulary, sp.csr_matrix, Dict[str, Any]]:
    root = Path(directory)
    meta = read_json(root / CORPUS_FILE)
    vocab = Vocabulary.load(root / VOCAB_FILE)
    try:
        matrix = sp.load_npz(root / TFIDF_FILE).tocsr()
    except (OSError, ValueError) as e:
        raise FormatError(f"Cannot read tf-idf matrix from {root / TFIDF_FILE}: {e}") from e
    if meta.get('tfidf_fingerprint') != matrix_fingerprint(matrix):
        raise FormatError(f"{root / TFIDF_FILE} does not match {root / CORPUS_FILE}")
    return vocab, matrix, meta


def split_rows(meta: Dict[str, Any], part: str) -> np.ndarray:
    """
    Row positions of the documents in one split part (all rows if the part is empty).
    """
    position = {doc_id: i for i, doc_id in enumerate(meta['ids'])}
    ids = meta['split'][part]
    if not ids:
        return np.arange(len(position))
    return np.array([position[doc_id] for doc_id in ids], dtype=np.int64)


#
# Commands
#

def cmd_corpus_build(args: argparse.Namespace, config: RunConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in (VOCAB_FILE, CORPUS_FILE, TFIDF_FILE):
        check_writable(out / name, args.force)

    docs = read_documents(args.input)
    vocab = build_vocabulary(docs, config.corpus.vocab_size, config.corpus.tf_mode)
    matrix = tfidf_matrix(docs, vocab)
    ids = [doc.id for doc in docs]
    train_ids, val_ids, test_ids = split(ids, config.corpus.split,
                                         derive_seed(config.seed, b"SPLIT"))

    vocab.save(out / VOCAB_FILE, force=args.force)
    sp.save_npz(out / TFIDF_FILE, matrix, compressed=False)
    write_json(out / CORPUS_FILE, dict(schema_version=SCHEMA_VERSION,
                                       config=config.to_dict(),
                                       seed=config.seed,
                                       ids=ids,
                                       labels=[doc.label for doc in docs],
                                       split=dict(train=train_ids, val=val_ids, test=test_ids),
                                       vocabulary=vocab.header(),
                                       tfidf_fingerprint=matrix_fingerprint(matrix)))
    _emit(dict(documents=len(docs), terms=len(vocab),
               train=len(train_ids), val=len(val_ids), test=len(test_ids)))


def fresh_log(path: Optional[str], force: bool) -> Optional[Path]:
    """
    The training log path, emptied so a rerun writes the same file instead of appending.
    """
    if not path:
        return None
    check_writable(path, force)
    log_path = Path(path)
    if log_path.exists():
        log_path.unlink()
    return log_path


def cmd_train(args: argparse.Namespace, config: RunConfig) -> None:
    check_writable(args.out, args.force)
    log_path = fresh_log(args.log, args.force)

    _, matrix, meta = load_corpus_dir(args.corpus)
    rows = split_rows(meta, 'train')
    state, _ = train(matrix[rows], config.train, log_path)
    save_checkpoint(state, args.out, force=args.force)
    write_json(Path(args.out).with_name(Path(args.out).name + '.json'),
               dict(schema_version=SCHEMA_VERSION,
                    config=config.to_dict(),
                    seed=config.seed,
                    corpus=meta['tfidf_fingerprint'],
                    checkpoint=fingerprint(b"CHECKPOINT", Path(args.out).read_bytes())))
    _emit(dict(objective=state.config.objective, bits=state.config.bits,
               epochs=state.epoch, documents=len(rows), final=state.history[-1]))


def cmd_encode(args: argparse.Namespace, config: RunConfig) -> None:
    check_writable(args.out, args.force)
    state = load_checkpoint(args.ckpt)
    vocab, matrix, meta = load_corpus_dir(args.corpus)
    if args.input:
        docs = read_documents(args.input)
        x, ids = tfidf_matrix(docs, vocab), [doc.id for doc in docs]
    else:
        x, ids = matrix, meta['ids']
    if x.shape[1] != state.vocab_size:
        raise UsageError(f"Corpus vocabulary has {x.shape[1]} terms, "
                         f"checkpoint expects {state.vocab_size}")

    codes = encode_corpus(state, x, median=args.median)
    sidecar = write_codes(args.out, codes, role='documents', force=args.force, metadata=dict(
        config=state.config.to_dict(),
        seed=state.config.seed,
        quantization='median' if args.median else 'threshold',
        checkpoint=fingerprint(b"CHECKPOINT", Path(args.ckpt).read_bytes()),
        ids=ids))
    _emit(dict(codes=len(codes), width=codes.width, fingerprint=sidecar['fingerprint']))


def cmd_index_build(args: argparse.Namespace, config: RunConfig) -> None:
    codes, meta = read_codes(args.codes)
    index = mih.build(codes, args.m)
    sidecar = index.save(args.out, force=args.force, metadata=dict(
        source=meta.get('fingerprint'),
        config=meta.get('config', config.to_dict()),
        seed=meta.get('seed', config.seed),
        ids=meta.get('ids')))
    _emit(dict(codes=len(index), width=index.width, m=index.m,
               substring_length=index.substring_length, fingerprint=sidecar['fingerprint']))


def cmd_search(args: argparse.Namespace, config: RunConfig) -> None:
    index, _ = mih.MihIndex.load(args.index)
    if not 0 <= args.query_id < len(index):
        raise UsageError(f"Query id must be within [0, {len(index)}) (given: {args.query_id})")
    query = index.codes[args.query_id]

    if args.knn is not None:
        result, stats = index.knn_search(query, args.knn)
    else:
        result, stats = index.radius_search(query, args.radius)
    output: Dict[str, Any] = dict(query_id=args.query_id, result=result.to_dict(),
                                  stats=stats.to_dict())

    if args.oracle:
        if args.knn is not None:
            expected = mih.linear_scan_knn(index.codes, query, args.knn)
        else:
            expected = mih.linear_scan_radius(index.codes, query, args.radius)
        diff = sorted(set(result.hits) ^ set(expected.hits))
        output['oracle_diff'] = [list(hit) for hit in diff]
        if diff or result.hits != expected.hits:
            _emit(output)
            raise ContractViolation(f"Index and linear scan disagree on query {args.query_id}")
    _emit(output)


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> None:
    index, meta = mih.MihIndex.load(args.index)
    if args.query_codes:
        queries = list(read_codes(args.query_codes)[0])
    else:
        queries = list(random_codes(args.queries, index.width, seed=config.seed))
    report = run_benchmark(index, queries, k=args.knn, radius=args.radius, repetitions=args.reps)

    payload = report.to_dict()
    payload.update(config=config.to_dict(), seed=config.seed, index=meta.get('fingerprint'))
    if args.out:
        write_json(args.out, payload, force=args.force)
    if args.csv:
        write_csv(args.csv, report.csv_rows(), force=args.force)
    _emit(dict(queries=report.queries, mean_unique_candidates=report.mean_unique_candidates,
               mean_lookups=report.mean_lookups, speedup=report.speedup))


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> None:
    index, _ = mih.MihIndex.load(args.index)
    meta = read_json(Path(args.corpus) / CORPUS_FILE)
    if len(meta['labels']) != len(index):
        raise UsageError(f"Corpus has {len(meta['labels'])} documents, index {len(index)} codes")
    report = evaluate_retrieval(index, meta['labels'], args.k,
                                query_ids=split_rows(meta, args.split).tolist())
    report.config, report.seed = config.to_dict(), config.seed
    if args.out:
        write_json(args.out, report.to_dict(), force=args.force)
    _emit(dict(metric=report.metric, k=report.k, queries=len(report.per_query), mean=report.mean))


def _cf_data(args: argparse.Namespace, config: RunConfig):
    docs = read_documents(args.items)
    vocab = build_vocabulary(docs, config.corpus.vocab_size, config.corpus.tf_mode)
    content = tfidf_matrix(docs, vocab)
    triples, users, normalization = normalize_ratings(read_ratings(args.ratings),
                                                      [doc.id for doc in docs])
    return docs, content, triples, users, normalization


def cmd_cf_train(args: argparse.Namespace, config: RunConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ('users.bin', 'items.bin', 'cf.json'):
        check_writable(out / name, args.force)
    log_path = fresh_log(args.log, args.force)

    docs, content, triples, users, normalization = _cf_data(args, config)
    model = train_cf(triples, content, len(users), config.cf, args.measure,
                     log_path=log_path)
    common = dict(config=config.to_dict(), seed=config.seed, measure=args.measure)
    write_codes(out / 'users.bin', model.user_codes(), role='users', force=args.force,
                metadata=dict(common, ids=users))
    write_codes(out / 'items.bin', model.item_codes(content), role='items', force=args.force,
                metadata=dict(common, ids=[doc.id for doc in docs]))
    summary = dict(common,
                   schema_version=SCHEMA_VERSION,
                   scale=model.scale.to_dict(),
                   normalization=normalization,
                   history=model.history,
                   observed_mse=observed_mse(model, triples, content))
    write_json(out / 'cf.json', summary, force=args.force)
    _emit(dict(users=len(users), items=len(docs), ratings=len(triples),
               observed_mse=summary['observed_mse']))


def cmd_cf_eval(args: argparse.Namespace, config: RunConfig) -> None:
    if args.out:
        check_writable(args.out, args.force)
    docs, content, triples, users, _ = _cf_data(args, config)
    candidates: Optional[List[int]] = None
    if args.coldstart:
        train_triples, candidates, test = coldstart_split(triples, args.fraction, config.seed)
    else:
        train_triples, test = rating_split(triples, args.fraction, config.seed)

    model: CFModel = train_cf(train_triples, content, len(users), config.cf, args.measure)
    report = evaluate_recommendations(model.user_codes(), model.item_codes(content), test,
                                      args.k, args.measure, candidates)
    baseline = evaluate_recommendations(
        random_codes(len(users), config.cf.bits, seed=derive_seed(config.seed, b"BASELINE_USERS")),
        random_codes(len(docs), config.cf.bits, seed=derive_seed(config.seed, b"BASELINE_ITEMS")),
        test, args.k, args.measure, candidates)

    report.config, report.seed = config.to_dict(), config.seed
    payload = report.to_dict()
    payload.update(measure=args.measure,
                   coldstart=args.coldstart,
                   fraction=args.fraction,
                   held_out_items=len(candidates) if candidates is not None else 0,
                   train_mse=observed_mse(model, train_triples, content),
                   baseline_mean=baseline.mean)
    if args.out:
        write_json(args.out, payload, force=args.force)
    _emit(dict(metric=report.metric, k=report.k, mean=report.mean,
               baseline_mean=baseline.mean, users=len(report.per_query)))


#
# Parser
#

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON file of flat dotted configuration keys")
    common.add_argument('--seed', type=int, help="master seed (overrides the config file)")
    common.add_argument('--force', action='store_true', help="overwrite existing outputs")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog='hamspace',
                                     description="Learned hash codes and exact Hamming search.")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    corpus = commands.add_parser('corpus', help="corpus preparation")
    corpus_commands = corpus.add_subparsers(dest='corpus_command', required=True)
    p = corpus_commands.add_parser('build', parents=[common],
                                   help="vocabulary, tf-idf matrix and split")
    p.add_argument('--input', required=True, help="documents as JSON lines")
    p.add_argument('--vocab-size', type=int)
    p.add_argument('--tf-mode', choices=('raw', 'log'))
    p.add_argument('--out', required=True, help="output directory")
    p.set_defaults(handler=cmd_corpus_build,
                   overrides=(('vocab_size', 'corpus.vocab_size'), ('tf_mode', 'corpus.tf_mode')))

    p = commands.add_parser('train', parents=[common], help="train a document hashing model")
    p.add_argument('--objective', choices=('vae', 'rbsh', 'pairrec', 'mish'))
    p.add_argument('--bits', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--corpus', help="directory written by 'corpus build' (default: paths.corpus)")
    p.add_argument('--out', help="checkpoint file (default: paths.out)")
    p.add_argument('--log', help="JSON-lines training log")
    p.set_defaults(handler=cmd_train, config_paths=('corpus', 'out'),
                   overrides=(('objective', 'train.objective'), ('bits', 'train.bits'),
                              ('epochs', 'train.epochs')))

    p = commands.add_parser('encode', parents=[common], help="hash documents with a checkpoint")
    p.add_argument('--ckpt', required=True)
    p.add_argument('--corpus', help="directory written by 'corpus build' (default: paths.corpus)")
    p.add_argument('--input', help="other documents to encode with the corpus vocabulary")
    p.add_argument('--median', action='store_true',
                   help="threshold each bit at its median instead of 0.5")
    p.add_argument('--out', required=True, help="code file")
    p.set_defaults(handler=cmd_encode, config_paths=('corpus',))

    index = commands.add_parser('index', help="multi-index hashing")
    index_commands = index.add_subparsers(dest='index_command', required=True)
    p = index_commands.add_parser('build', parents=[common], help="index a code file")
    p.add_argument('--codes', required=True)
    p.add_argument('--m', type=int, required=True, help="number of substrings")
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_index_build)

    p = commands.add_parser('search', parents=[common], help="search an index with a stored code")
    p.add_argument('--index', required=True)
    p.add_argument('--query-id', type=int, required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument('--knn', type=int)
    mode.add_argument('--radius', type=int)
    p.add_argument('--oracle', action='store_true', help="check against a linear scan")
    p.set_defaults(handler=cmd_search)

    p = commands.add_parser('bench', parents=[common], help="time the index against a linear scan")
    p.add_argument('--index', required=True)
    queries = p.add_mutually_exclusive_group()
    queries.add_argument('--queries', type=int, default=100, help="number of random queries")
    queries.add_argument('--query-codes', help="code file of queries")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument('--knn', type=int)
    mode.add_argument('--radius', type=int)
    p.add_argument('--reps', type=int, default=5)
    p.add_argument('--out', help="JSON report")
    p.add_argument('--csv', help="CSV report")
    p.set_defaults(handler=cmd_bench)

    p = commands.add_parser('eval', parents=[common], help="precision@k with label relevance")
    p.add_argument('--index', required=True)
    p.add_argument('--corpus', help="default: paths.corpus")
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--split', choices=('train', 'val', 'test'), default='test',
                   help="queries (all documents if the part is empty)")
    p.add_argument('--out', help="JSON report")
    p.set_defaults(handler=cmd_eval, config_paths=('corpus',))

    cf = commands.add_parser('cf', help="collaborative filtering")
    cf_commands = cf.add_subparsers(dest='cf_command', required=True)
    cf_overrides = (('bits', 'cf.bits'), ('epochs', 'cf.epochs'))
    for name, handler, description in (('train', cmd_cf_train, "train user and item codes"),
                                       ('eval', cmd_cf_eval, "NDCG@k on held-out ratings")):
        p = cf_commands.add_parser(name, parents=[common], help=description)
        p.add_argument('--measure', choices=('hamming', 'phd'), default='hamming')
        p.add_argument('--ratings', help="user<TAB>item<TAB>rating lines (default: paths.ratings)")
        p.add_argument('--items', help="item descriptions as JSON lines (default: paths.items)")
        p.add_argument('--bits', type=int)
        p.add_argument('--epochs', type=int)
        p.set_defaults(handler=handler, overrides=cf_overrides, config_paths=('ratings', 'items'))
    p = cf_commands.choices['train']
    p.add_argument('--out', help="output directory (default: paths.out)")
    p.set_defaults(config_paths=('ratings', 'items', 'out'))
    p.add_argument('--log', help="JSON-lines training log")
    p = cf_commands.choices['eval']
    p.add_argument('--coldstart', action='store_true', help="hold out whole items")
    p.add_argument('--fraction', type=float, default=0.2)
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--out', help="JSON report")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, name) for name, key in getattr(args, 'overrides', ())}
    overrides['seed'] = args.seed
    return RunConfig.load(args.config).with_overrides(overrides)


def resolve_paths(args: argparse.Namespace, config: RunConfig) -> None:
    """
    Fills the path flags left unset from the ``paths.*`` keys of the configuration.
    """
    for name in getattr(args, 'config_paths', ()):
        if getattr(args, name) is not None:
            continue
        if name not in config.paths:
            raise UsageError(f"Give --{name} or set paths.{name} in the configuration")
        setattr(args, name, config.paths[name])


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = run_config(args)
        resolve_paths(args, config)
        args.handler(args, config)
    except HamspaceError as e:
        logger.error("%s", e)
        return e.exit_code
    return 0
