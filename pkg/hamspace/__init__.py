from .__about__ import (
    __author__,  __license__, __summary__, __title__, __version__, __copyright__
)

from .bitcode import (
    HashCode, CodeArray, Substring, hamming_distance, projected_hamming_dissimilarity,
    split_substrings, concat_substrings, pigeonhole_threshold, enumerate_perturbations,
)
from .cfhash import (
    CFConfig, RatingTriple, ScaleParams, predict_rating, encode_item, train_cf,
    coldstart_split, recommend,
)
from .codefile import read_codes, write_codes
from .corpus import Document, Vocabulary, TfIdfVector, build_vocabulary, tfidf, tfidf_matrix, split
from .errors import HamspaceError, UsageError, FormatError, ContractViolation, NumericError
from .evalbench import (
    MetricReport, EfficiencyReport, precision_at_k, ndcg_at_k, run_benchmark,
)
from .hashtrain import TrainConfig, train, encode_corpus, save_checkpoint, load_checkpoint
from .mih import (
    MihIndex, HashTableIndex, SearchResult, CandidateStats, build, radius_search, knn_search,
    linear_scan_radius, linear_scan_knn,
)
from .model import sample_bits, quantize_median

__all__ = [
    "HashCode",
    "CodeArray",
    "Substring",
    "hamming_distance",
    "projected_hamming_dissimilarity",
    "split_substrings",
    "concat_substrings",
    "pigeonhole_threshold",
    "enumerate_perturbations",
    "read_codes",
    "write_codes",
    "MihIndex",
    "HashTableIndex",
    "SearchResult",
    "CandidateStats",
    "build",
    "radius_search",
    "knn_search",
    "linear_scan_radius",
    "linear_scan_knn",
    "Document",
    "Vocabulary",
    "TfIdfVector",
    "build_vocabulary",
    "tfidf",
    "tfidf_matrix",
    "split",
    "TrainConfig",
    "train",
    "encode_corpus",
    "save_checkpoint",
    "load_checkpoint",
    "sample_bits",
    "quantize_median",
    "CFConfig",
    "RatingTriple",
    "ScaleParams",
    "predict_rating",
    "encode_item",
    "train_cf",
    "coldstart_split",
    "recommend",
    "MetricReport",
    "EfficiencyReport",
    "precision_at_k",
    "ndcg_at_k",
    "run_benchmark",
    "HamspaceError",
    "UsageError",
    "FormatError",
    "ContractViolation",
    "NumericError",
]
