import numpy as np
import pytest
import torch

from hamspace import TrainConfig, build_vocabulary, tfidf_matrix
from hamspace.cfhash import CFConfig, normalize_ratings
from hamspace.synthetic import block_ratings, random_codes, topic_corpus


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", help="run the acceptance-scale tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale runs (enable with --run-slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def random_codes_64():
    return random_codes(2000, 64, seed=1)


@pytest.fixture(scope='session')
def random_codes_32():
    return random_codes(1000, 32, seed=2)


@pytest.fixture(scope='session')
def small_topic_docs():
    return topic_corpus(topics=4, docs_per_topic=20, terms_per_topic=10, tokens_per_doc=12, seed=3)


@pytest.fixture(scope='session')
def small_topic_corpus(small_topic_docs):
    vocab = build_vocabulary(small_topic_docs)
    return vocab, tfidf_matrix(small_topic_docs, vocab)


@pytest.fixture(scope='session')
def small_block_data():
    data = block_ratings(users=40, items=30, blocks=3, ratings_per_user=10,
                         terms_per_block=8, tokens_per_item=10, seed=4)
    vocab = build_vocabulary(data.items)
    content = tfidf_matrix(data.items, vocab)
    triples, users, _ = normalize_ratings(data.ratings, [doc.id for doc in data.items])
    return data, content, triples, users


@pytest.fixture
def tiny_config():
    return TrainConfig(bits=8, hidden=6, epochs=0, batch_size=8, neighbors=3,
                       mish_substrings=2, mish_k=2, dtype='float64', seed=5)


@pytest.fixture
def tiny_cf_config():
    return CFConfig(bits=8, hidden=6, epochs=0, batch_size=16, dtype='float64', seed=6)


@pytest.fixture
def torch_generator():
    return torch.Generator().manual_seed(7)
