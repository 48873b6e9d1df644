"""
Document ingestion: tokenization, vocabularies, tf-idf vectors and dataset splits.
"""

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .codefile import PathLike, check_writable, read_json, sidecar_path, write_json
from .errors import FormatError, UsageError


logger = logging.getLogger(__name__)

DEFAULT_VOCAB_SIZE = 10000

TF_MODES = ('raw', 'log')

_TOKEN = re.compile(r'[^\W_]+')


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    # Used for evaluation-time relevance only
    label: Optional[str] = None


def tokenize(text: str) -> List[str]:
    """
    Lowercases and splits on every non-alphanumeric character.
    """
    return _TOKEN.findall(text.lower())


class Vocabulary:
    """
    Term to id mapping with document frequencies; ids are dense in ``[0, len(vocab))``.
    """

    def __init__(self,
                 terms: Sequence[str],
                 df: Sequence[int],
                 n_docs: int,
                 max_size: int = DEFAULT_VOCAB_SIZE,
                 tf_mode: str = 'raw',
                 ):
        if len(terms) != len(df):
            raise UsageError("Every term needs a document frequency")
        if tf_mode not in TF_MODES:
            raise UsageError(f"tf_mode must be one of {TF_MODES} (given: {tf_mode!r})")
        self.terms = list(terms)
        self.df = np.asarray(df, dtype=np.int64)
        self.n_docs = n_docs
        self.max_size = max_size
        self.tf_mode = tf_mode
        self.term_ids = {term: i for i, term in enumerate(self.terms)}
        self.idf = np.log(n_docs / self.df) if len(self.df) else np.zeros(0)

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term: str):
        return term in self.term_ids

    def __eq__(self, other):
        return (isinstance(other, Vocabulary)
                and self.terms == other.terms
                and np.array_equal(self.df, other.df)
                and self.n_docs == other.n_docs
                and self.tf_mode == other.tf_mode)

    def header(self) -> Dict[str, object]:
        return dict(n_docs=self.n_docs, vocab_size=self.max_size, tf_mode=self.tf_mode,
                    terms=len(self))

    def save(self, path: PathLike, force: bool = False) -> None:
        """
        One ``{term, id, df}`` object per line; corpus size and tf mode go to the sidecar.
        """
        check_writable(path, force)
        with open(path, 'w') as f:
            for i, (term, df) in enumerate(zip(self.terms, self.df)):
                f.write(json.dumps(dict(term=term, id=i, df=int(df)), sort_keys=True) + '\n')
        write_json(sidecar_path(path), self.header())

    @classmethod
    def load(cls, path: PathLike) -> 'Vocabulary':
        header = read_json(sidecar_path(path))
        terms, dfs = [], []
        for lineno, record in _read_jsonl(path):
            if record.get('id') != len(terms):
                raise FormatError(f"{path}:{lineno}: term ids must be dense and in order")
            terms.append(record['term'])
            dfs.append(record['df'])
        return cls(terms, dfs, header['n_docs'], header['vocab_size'], header['tf_mode'])


class TfIdfVector:
    """
    Sparse non-negative term weights, L2-normalized unless all-zero.
    Only non-zero weights are stored.
    """

    def __init__(self, entries: Dict[int, float], dim: int):
        for term_id, weight in entries.items():
            if not 0 <= term_id < dim:
                raise UsageError(f"Term id {term_id} outside vocabulary of size {dim}")
            if weight < 0:
                raise UsageError(f"Negative weight for term id {term_id}")
        self.entries = {t: w for t, w in sorted(entries.items()) if w != 0}
        self.dim = dim

    @property
    def indices(self) -> np.ndarray:
        return np.fromiter(self.entries.keys(), dtype=np.int64, count=len(self.entries))

    @property
    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=np.float64, count=len(self.entries))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense

    def __getitem__(self, term_id: int) -> float:
        return self.entries.get(term_id, 0.0)

    def __len__(self):
        return len(self.entries)


def build_vocabulary(docs: Iterable[Union[Document, str]],
                     max_size: int = DEFAULT_VOCAB_SIZE,
                     tf_mode: str = 'raw',
                     ) -> Vocabulary:
    """
    Keeps the ``max_size`` most frequent terms of the corpus, ties broken lexicographically.
    """
    if max_size < 1:
        raise UsageError(f"Vocabulary size must be positive (given: {max_size})")

    frequency: Counter = Counter()
    df: Counter = Counter()
    n_docs = 0
    for doc in docs:
        tokens = tokenize(_text(doc))
        frequency.update(tokens)
        df.update(set(tokens))
        n_docs += 1

    if n_docs == 0:
        raise UsageError("Cannot build a vocabulary from an empty corpus")

    ranked = sorted(frequency.items(), key=lambda item: (-item[1], item[0]))[:max_size]
    terms = [term for term, _ in ranked]
    logger.info("Vocabulary: %d of %d distinct terms over %d documents",
                len(terms), len(frequency), n_docs)
    return Vocabulary(terms, [df[t] for t in terms], n_docs, max_size, tf_mode)


def _text(doc: Union[Document, str]) -> str:
    return doc.text if isinstance(doc, Document) else doc


def _weights(doc: Union[Document, str], vocab: Vocabulary) -> Dict[int, float]:
    counts = Counter(t for t in tokenize(_text(doc)) if t in vocab)
    weights = {}
    for term, count in counts.items():
        term_id = vocab.term_ids[term]
        tf = count if vocab.tf_mode == 'raw' else 1.0 + math.log(count)
        weight = tf * float(vocab.idf[term_id])
        if weight > 0:
            weights[term_id] = weight
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return {t: w / norm for t, w in weights.items()} if norm > 0 else {}


def tfidf(doc: Union[Document, str], vocab: Vocabulary) -> TfIdfVector:
    """
    ``tf(t) * ln(N_docs / df(t))``, L2-normalized; out-of-vocabulary terms are dropped.
    """
    return TfIdfVector(_weights(doc, vocab), len(vocab))


def tfidf_matrix(docs: Sequence[Union[Document, str]], vocab: Vocabulary) -> sp.csr_matrix:
    """
    The tf-idf vectors of ``docs`` as rows of a CSR matrix.
    """
    indptr = [0]
    indices: List[int] = []
    data: List[float] = []
    for doc in docs:
        weights = _weights(doc, vocab)
        for term_id in sorted(weights):
            indices.append(term_id)
            data.append(weights[term_id])
        indptr.append(len(indices))
    return sp.csr_matrix((np.array(data, dtype=np.float64),
                          np.array(indices, dtype=np.int64),
                          np.array(indptr, dtype=np.int64)),
                         shape=(len(docs), len(vocab)))


def split(doc_ids: Sequence[str],
          ratios: Tuple[float, float, float],
          seed: int,
          ) -> Tuple[List[str], List[str], List[str]]:
    """
    Seeded train/validation/test split. Validation and test sizes are rounded down;
    the remainder goes to train. Each part keeps the input order.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"Split ratios must be three non-negative numbers summing to 1 "
                         f"(given: {tuple(ratios)})")
    if len(set(doc_ids)) != len(doc_ids):
        raise UsageError("Document ids must be unique")

    n = len(doc_ids)
    n_val = math.floor(n * ratios[1])
    n_test = math.floor(n * ratios[2])

    permutation = np.random.default_rng(seed).permutation(n)
    val_pos = set(permutation[:n_val].tolist())
    test_pos = set(permutation[n_val:n_val + n_test].tolist())

    train, val, test = [], [], []
    for pos, doc_id in enumerate(doc_ids):
        if pos in val_pos:
            val.append(doc_id)
        elif pos in test_pos:
            test.append(doc_id)
        else:
            train.append(doc_id)
    return train, val, test


def _read_jsonl(path: PathLike) -> Iterable[Tuple[int, dict]]:
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise FormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from e
                if not isinstance(record, dict):
                    raise FormatError(f"{path}:{lineno}: expected a JSON object")
                yield lineno, record
    except FileNotFoundError as e:
        raise FormatError(f"Missing file: {path}") from e


def read_documents(path: PathLike) -> List[Document]:
    """
    Reads ``{"id": ..., "text": ..., "label": ...}`` objects, one per line.
    """
    docs = []
    seen = set()
    for lineno, record in _read_jsonl(path):
        doc_id, text = record.get('id'), record.get('text')
        if not isinstance(doc_id, str) or not isinstance(text, str):
            raise FormatError(f"{path}:{lineno}: 'id' and 'text' must be strings")
        if doc_id in seen:
            raise FormatError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        label = record.get('label')
        if label is not None and not isinstance(label, str):
            raise FormatError(f"{path}:{lineno}: 'label' must be a string")
        seen.add(doc_id)
        docs.append(Document(doc_id, text, label))
    return docs


def write_documents(path: PathLike, docs: Iterable[Document], force: bool = False) -> None:
    check_writable(path, force)
    with open(path, 'w') as f:
        for doc in docs:
            record = dict(id=doc.id, text=doc.text)
            if doc.label is not None:
                record['label'] = doc.label
            f.write(json.dumps(record, sort_keys=True) + '\n')


def read_ratings(path: PathLike) -> List[Tuple[str, str, float]]:
    """
    Reads ``user<TAB>item<TAB>rating`` lines.
    """
    ratings = []
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip('\n')
                if not line.strip():
                    continue
                fields = line.split('\t')
                if len(fields) != 3:
                    raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields, "
                                      f"got {len(fields)}")
                user, item, rating = fields
                try:
                    value = float(rating)
                except ValueError as e:
                    raise FormatError(f"{path}:{lineno}: rating {rating!r} is not a number") from e
                if not math.isfinite(value):
                    raise FormatError(f"{path}:{lineno}: rating must be finite")
                ratings.append((user, item, value))
    except FileNotFoundError as e:
        raise FormatError(f"Missing file: {path}") from e
    return ratings


def write_ratings(path: PathLike, ratings: Iterable[Tuple[str, str, float]],
                  force: bool = False) -> None:
    check_writable(path, force)
    with open(path, 'w') as f:
        for user, item, rating in ratings:
            f.write(f"{user}\t{item}\t{rating!r}\n")
