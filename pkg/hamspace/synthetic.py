"""
Seeded synthetic data: topic-structured corpora, block-structured ratings and the
random / random-hyperplane baseline codes.
"""

from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .bitcode import CodeArray, check_width, num_bytes
from .corpus import Document
from .errors import UsageError
from .hashing import derive_seed


def topic_term(topic: int, j: int) -> str:
    return f"topic{topic}term{j}"


def topic_corpus(topics: int = 10,
                 docs_per_topic: int = 200,
                 terms_per_topic: int = 50,
                 tokens_per_doc: int = 20,
                 seed: int = 0,
                 ) -> List[Document]:
    """
    Every topic owns a disjoint vocabulary; a document draws its tokens uniformly from its
    topic's terms and is labelled with the topic. Documents are interleaved across topics.
    """
    if min(topics, docs_per_topic, terms_per_topic, tokens_per_doc) < 1:
        raise UsageError("Every corpus dimension must be positive")
    rng = np.random.default_rng(derive_seed(seed, b"TOPIC_CORPUS"))
    docs = []
    for i in range(topics * docs_per_topic):
        topic = i % topics
        words = rng.integers(terms_per_topic, size=tokens_per_doc)
        text = " ".join(topic_term(topic, int(j)) for j in words)
        docs.append(Document(f"doc{i:05d}", text, f"topic{topic}"))
    return docs


@dataclass
class BlockRatings:
    ratings: List[Tuple[str, str, float]]
    items: List[Document]
    user_blocks: np.ndarray
    item_blocks: np.ndarray


def block_ratings(users: int = 500,
                  items: int = 300,
                  blocks: int = 10,
                  ratings_per_user: int = 30,
                  terms_per_block: int = 50,
                  tokens_per_item: int = 20,
                  seed: int = 0,
                  ) -> BlockRatings:
    """
    Users and items belong to latent blocks (round robin). Half of each user's ratings go
    to items of their own block, rated 4 or 5; the rest go to other items, rated 1 or 2.
    Item descriptions draw their tokens from their block's vocabulary.
    """
    if items < blocks or users < 1:
        raise UsageError(f"Need at least one user and {blocks} items")
    if ratings_per_user > items:
        raise UsageError(f"Users cannot rate {ratings_per_user} of only {items} items")
    rng = np.random.default_rng(derive_seed(seed, b"BLOCK_RATINGS"))
    user_blocks = np.arange(users) % blocks
    item_blocks = np.arange(items) % blocks

    item_docs = []
    for i in range(items):
        words = rng.integers(terms_per_block, size=tokens_per_item)
        text = " ".join(f"block{item_blocks[i]}term{j}" for j in words)
        item_docs.append(Document(f"item{i:04d}", text, f"block{item_blocks[i]}"))

    ratings = []
    for u in range(users):
        own = np.flatnonzero(item_blocks == user_blocks[u])
        other = np.flatnonzero(item_blocks != user_blocks[u])
        n_own = min(ratings_per_user // 2, len(own))
        liked = rng.choice(own, size=n_own, replace=False)
        disliked = rng.choice(other, size=ratings_per_user - n_own, replace=False)
        for item in liked:
            ratings.append((f"user{u:04d}", item_docs[item].id, float(rng.integers(4, 6))))
        for item in disliked:
            ratings.append((f"user{u:04d}", item_docs[item].id, float(rng.integers(1, 3))))
    return BlockRatings(ratings, item_docs, user_blocks, item_blocks)


def random_codes(n: int, width: int, seed: int = 0) -> CodeArray:
    """
    Codes with independent uniform bits.
    """
    check_width(width)
    rng = np.random.default_rng(derive_seed(seed, b"RANDOM_CODES"))
    packed = rng.integers(0, 256, size=(n, num_bytes(width)), dtype=np.uint8)
    return CodeArray(packed, width)


def hyperplane_codes(x: Union[sp.spmatrix, np.ndarray], width: int, seed: int = 0) -> CodeArray:
    """
    Random-hyperplane codes: bit ``j`` is 1 iff the row lies on the non-negative side
    of the ``j``-th Gaussian hyperplane through the origin.
    """
    check_width(width)
    rng = np.random.default_rng(derive_seed(seed, b"HYPERPLANES"))
    planes = rng.normal(size=(x.shape[1], width))
    projections = x @ planes
    return CodeArray.from_bits(np.asarray(projections) >= 0)
