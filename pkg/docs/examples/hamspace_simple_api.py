from hamspace import (
    TrainConfig, build, build_vocabulary, linear_scan_knn, tfidf_matrix, train)
from hamspace.evalbench import evaluate_retrieval, run_benchmark
from hamspace.synthetic import topic_corpus

# A labelled corpus
# -----------------
# Ten topics with disjoint vocabularies; every document is labelled with its topic.

docs = topic_corpus(topics=10, docs_per_topic=100, seed=0)
vocab = build_vocabulary(docs)
matrix = tfidf_matrix(docs, vocab)
labels = [doc.label for doc in docs]

# Learn 32-bit codes
# ------------------
# The 'mish' objective spreads unrelated documents over different substrings,
# so a 4-substring index verifies fewer candidates per query.

config = TrainConfig(objective='mish', bits=32, hidden=200, epochs=5, mish_substrings=4, seed=0)
state, codes = train(matrix, config)

# Search the codes
# ----------------

index = build(codes, 4)
result, stats = index.knn_search(codes[0], 10)
assert result.hits == linear_scan_knn(codes, codes[0], 10).hits
print(result.ids, stats.to_dict())

# Evaluate
# --------

print("precision@10:", evaluate_retrieval(index, labels, 10).mean)
report = run_benchmark(index, list(codes)[:100], k=10, repetitions=3)
print(report.to_dict())
